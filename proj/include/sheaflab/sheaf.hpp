#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "sheaflab/poset.hpp"

namespace sheaflab {

// A sheaf on a finite poset: a real vector space ("stalk") per element and a
// linear restriction map per covering relation, functorial under composition.
// Restrictions are stored on coverings only; composites along longer chains
// are derived on demand and cached.
struct Sheaf {
    std::shared_ptr<const Poset> base;
    std::vector<int> stalk_dim;
    std::map<std::pair<int, int>, Eigen::MatrixXd> restriction; // covering -> matrix

    const Poset& poset() const { return *base; }
    int dim(int s) const { return stalk_dim[s]; }
    int total_dim() const;

    // Restriction attached to the covering s < t. Throws if not a covering.
    const Eigen::MatrixXd& covering_restriction(int s, int t) const;

    // Composite restriction for any s <= t, composed along one covering path
    // (any path gives the same matrix when the sheaf is functorial). Cached.
    Eigen::MatrixXd restriction_between(int s, int t) const;

  private:
    struct Cache {
        std::mutex mutex;
        std::map<std::pair<int, int>, Eigen::MatrixXd> map;
    };
    std::shared_ptr<Cache> cache = std::make_shared<Cache>();
};

struct SheafReport {
    bool ok = true;
    std::vector<std::string> issues;
};

// Shape checks plus functoriality: every pair of covering paths with the same
// endpoints must compose to the same matrix entrywise within tol.
SheafReport validate_sheaf(const Sheaf& F, double tol = 1e-10);

// Optional per-stalk inner products (symmetric positive definite); identity
// when absent.
struct EuclideanStructure {
    std::vector<Eigen::MatrixXd> inner; // one SPD matrix per element
};
void validate_euclidean(const EuclideanStructure& E, const Sheaf& F);

// --- constructions -----------------------------------------------------------

// All stalks R^d, all restrictions the identity.
Sheaf constant_sheaf(std::shared_ptr<const Poset> base, int d);

// Graph poset, 1-dim stalks, F(v<e) = F(u<e) = sqrt(w_e). Missing edges get
// weight 1. Weights must be positive.
Sheaf symmetric_weight_sheaf(std::shared_ptr<const Poset> base,
                             const std::map<std::string, double>& edge_weights);

// 1-dim stalks on ranks 0 and 1, zero stalks above: F(v<e) = -1 for v in A,
// +1 otherwise. The harmonic space of a connected 2-class poset is then
// spanned by the class-membership sign vector 1_A - 1_B.
Sheaf lying_sheaf(std::shared_ptr<const Poset> base, const std::set<std::string>& A);

// Direct sum over classes of per-class sign sheaves at rank 0: block i is the
// sign sheaf of A_i against its complement.
Sheaf class_sum_sheaf(std::shared_ptr<const Poset> base,
                      const std::vector<std::set<std::string>>& classes);

// Rank-k analogue on a simplicial complex (k >= 1): direct sum over classes of
// sheaves whose degree-k harmonic space is spanned by s^i = 1_{A_i} - 1_{A_i^c}
// on k-simplices. Classes are sets of k-simplex indices.
Sheaf class_sum_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                      const std::vector<std::set<int>>& classes);

// Sheaf with 1-dim stalks on ranks <= k whose degree-k Laplacian kernel is
// span(s) for a given nowhere-zero vector s on k-simplices: the image of
// d^{k-1} is built as span-perp(s) from pairwise generators along a spanning
// forest of the k-simplex adjacency graph, and d^k = 0 via zero higher stalks.
Sheaf sign_vector_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                        const Eigen::VectorXd& s);

enum class SelectorMode { up, down, mask };

// 1-dim stalks on a complex of rank <= 2. up: F(v<e)=0, F(e<t)=1 (Laplacian
// becomes the up-Laplacian); down: F(v<e)=1, F(e<t)=0; mask: F(v<e)=1 and
// F(e<t)=1 exactly for triangles t in T_plus.
Sheaf selector_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base,
                     SelectorMode mode, const std::set<int>& T_plus = {});

// Prescribed-gradient-space sheaf: given stalks V(tau) = R^{v_dims[tau]} on
// k-simplices and a decomposed subspace W = direct sum of W_tau (basis columns
// in W[tau], W_tau inside V(tau)), builds a sheaf with im d^{k-1} = W and
// d^k = 0. Each W_tau is attached to the lexicographically smallest
// (k-1)-face of tau.
Sheaf gradient_space_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                           const std::vector<int>& v_dims,
                           const std::vector<Eigen::MatrixXd>& W);

enum class BundleGroup { orthogonal, invertible };

// Discrete vector bundle: every restriction an isomorphism. Built from random
// per-element gauges g_s (orthogonal via QR with positive-diagonal fix, or
// invertible Gaussian with condition number <= 1e6), with F(s<t) = g_t g_s^-1,
// so functoriality holds by construction.
Sheaf random_bundle(std::shared_ptr<const Poset> base, int d, BundleGroup group,
                    unsigned long seed);

// Stalkwise direct sum with block-diagonal restrictions. Bases must agree.
Sheaf direct_sum(const Sheaf& F, const Sheaf& G);

} // namespace sheaflab
