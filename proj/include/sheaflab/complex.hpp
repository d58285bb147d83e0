#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "sheaflab/sheaf.hpp"

namespace sheaflab {

// One direct summand of a cochain space: a stalk together with its coordinate
// slice [offset, offset + dim) in the stacked vector.
struct Summand {
    int element; // poset element carrying the stalk (chain maximum for Roos)
    Chain chain; // the indexing chain (Roos); single element for cellular
    int offset;
    int dim;
};

// Graded cochain spaces C^0, C^1, ... with coboundary matrices d^k of shape
// dim C^{k+1} x dim C^k. Roos flavor: C^j sums F(tau_max) over chains tau of
// dimension j. Cellular flavor: C^j sums F(tau) over elements of rank j.
struct CochainComplex {
    enum class Flavor { roos, cellular };
    Flavor flavor;
    std::shared_ptr<const Sheaf> sheaf;
    std::vector<std::vector<Summand>> summands; // per grading
    std::vector<int> dims;                      // dim C^k
    std::vector<Eigen::MatrixXd> d;             // d[k], with d[max] having 0 rows

    int gradings() const { return static_cast<int>(dims.size()); }
    int dim_at(int k) const { return (k >= 0 && k < gradings()) ? dims[k] : 0; }
    // Coboundary d^k; an empty-shaped matrix outside the graded range.
    Eigen::MatrixXd coboundary(int k) const;
};

CochainComplex roos_complex(std::shared_ptr<const Sheaf> F);

// Requires a cell poset: a face poset of a simplicial complex (incidence signs
// from the vertex orders) or a graph poset (each edge covering exactly two
// nodes, oriented from the lower to the higher element index).
CochainComplex cellular_complex(std::shared_ptr<const Sheaf> F);

enum class LaplacianKind { full, up, down, normalized };

// Hodge Laplacian at grading k: up = d*^k d^k, down = d^{k-1} d*^{k-1},
// full = up + down. Adjoints are transposes under the identity inner products;
// a Euclidean structure replaces them by M-adjoints (the result is then
// self-adjoint w.r.t. M rather than symmetric). normalized (identity inner
// products only) conjugates the full Laplacian by the inverse square root of
// its block diagonal, with pseudo-inversion of eigenvalues <= 1e-12.
Eigen::MatrixXd laplacian(const CochainComplex& cx, int k,
                          LaplacianKind kind = LaplacianKind::full,
                          const EuclideanStructure* E = nullptr);

// Node-space hypergraph Laplacian: for a bipartite rank-0/1 poset,
// (L x)_a = sum_{b > a} 1/|{a' < b}| F_ab^T sum_{a' < b, a' != a}
//           (F_ab x_a - F_a'b x_a'), acting on the stacked node stalks.
// Its kernel is isomorphic to the space of global sections.
Eigen::MatrixXd duta_laplacian(const Sheaf& F);

struct DirichletEnergy {
    double total = 0, down = 0, up = 0; // total = <x, Laplacian x> = down + up
};
DirichletEnergy dirichlet_energy(const CochainComplex& cx, int k, const Eigen::VectorXd& x);

// Discrete vector calculus of a constant-sheaf cellular complex of rank <= 2:
// grad = d^0 (potential differences), curl = d^1 (triangle circulation),
// div = transpose of grad (net outward flux), cocurl = transpose of curl.
struct VectorCalculus {
    Eigen::MatrixXd grad, curl, div, cocurl;
};
VectorCalculus vector_calculus(const CochainComplex& cx);

} // namespace sheaflab
