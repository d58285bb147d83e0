#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "sheaflab/sheaf.hpp"

namespace sheaflab {

// A classification task on the rank-k stratum of a poset: every rank-k element
// carries a label in [0, num_classes).
struct ClassTask {
    int k = 0;
    int num_classes = 0;
    std::map<std::string, int> labels; // element id -> class
};

struct SeparationVerdict {
    bool separable = false;
    bool degenerate = false; // diffusion limit vanished (initial condition
                             // orthogonal to the harmonic space)
    // Limit embedding per classified element (rows align with element_ids).
    Eigen::MatrixXd embeddings;
    std::vector<std::string> element_ids;
    std::vector<int> labels;
    // One affine functional per class, rows [w | b]: w.x + b > 0 exactly on
    // that class, with geometric margin >= 1e-9. Empty when not separable.
    Eigen::MatrixXd witnesses;
    std::string note;
};

// Exact one-vs-rest hard linear separation. Each class is tested against the
// union of the others by finding the minimum-norm point of the convex hull of
// pairwise difference vectors (Wolfe's algorithm); the classes are separable
// iff that point is nonzero for every class, and it then provides the witness.
// Throws DegenerateInput when identical points appear in different classes.
SeparationVerdict linearly_separable(const Eigen::MatrixXd& points,
                                     const std::vector<int>& labels);

// The five sheaf families of the rank-0 expressivity hierarchy.
enum class HierarchyFamily {
    unnormalized,   // constant sheaf, plain Laplacian
    normalized_sym, // symmetric positive weights (within-class weight N swept
                    // upward), normalized Laplacian
    asym_positive,  // positive but asymmetric restrictions, normalized Laplacian
    lying_1d,       // one-dimensional sign sheaf for the first class
    lying_ld        // direct sum of per-class sign sheaves
};

// Builds the family's sheaf on the rank-0/1 skeleton of the poset, computes
// the exact diffusion limit of a Gaussian initial condition (or x0 when
// given), and applies linearly_separable to the per-node limit embeddings.
// Throws HypothesisViolated when the poset's node-edge graph is disconnected.
SeparationVerdict run_hierarchy(std::shared_ptr<const Poset> base, const ClassTask& task,
                                HierarchyFamily family, std::uint64_t seed = 0,
                                const Eigen::VectorXd* x0 = nullptr);

// Rank-k analogue for k >= 1 on a simplicial complex: builds the per-class
// sign-sheaf direct sum, diffuses an independent Gaussian cochain per class
// block to its exact limit, rescales each block by the sign of its harmonic
// coefficient, and checks linear separation of the per-simplex rows.
SeparationVerdict higher_order_separation(const SimplicialComplex& X,
                                          std::shared_ptr<const Poset> base, int k,
                                          const ClassTask& task, std::uint64_t seed = 0);

struct BundleTrial {
    int kernel_dim = 0;
    double limit_norm = 0;
    bool trivial = false; // kernel_dim == 0 and limit_norm <= 1e-8
};

struct ContractibilityReport {
    int trials = 0;
    std::vector<BundleTrial> results;
    bool all_trivial = true;     // every degree-k (k >= 1) bundle kernel vanished
    int degree0_kernel_dim = -1; // shared kernel dimension at degree 0 (= d)
};

// On a contractible complex (verified: betti = (1, 0, 0, ...)), every random
// vector bundle must have trivial degree-k cohomology for k >= 1, so diffusion
// kills every k-cochain; at degree 0 the kernel has dimension d. Throws
// NotContractible when the Betti check fails.
ContractibilityReport dvb_contractibility_check(const SimplicialComplex& X,
                                                std::shared_ptr<const Poset> base, int k,
                                                int trials, int d, BundleGroup group,
                                                std::uint64_t seed = 0);

} // namespace sheaflab
