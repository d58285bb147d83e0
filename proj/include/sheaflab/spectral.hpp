#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sheaflab/complex.hpp"

namespace sheaflab {

struct EigSym {
    Eigen::VectorXd values;  // ascending
    Eigen::MatrixXd vectors; // orthonormal columns, sign-normalized
};

// Symmetric eigendecomposition with a deterministic sign convention: each
// eigenvector's first coordinate of magnitude > 1e-12 is made positive.
EigSym eig_sym(const Eigen::MatrixXd& M);

// Rank-decision tolerance: eigenvalues <= max(m,n) * machine-eps * lambda_max
// count as zero. Pass tol < 0 anywhere below to use this default.
double default_kernel_tol(const Eigen::MatrixXd& M, const Eigen::VectorXd& eigenvalues);

// Orthogonal projector onto the harmonic space ker Laplacian^k.
Eigen::MatrixXd harmonic_projector(const CochainComplex& cx, int k, double tol = -1);

// Dimension of the degree-k harmonic space (the k-th Betti number for the
// constant sheaf).
int betti(const CochainComplex& cx, int k, double tol = -1);

struct HodgeReport {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    Eigen::MatrixXd projector; // onto the harmonic space
    int betti = 0;
    // x = harmonic + gradient + curl, pairwise orthogonal:
    Eigen::VectorXd harmonic; // in ker Laplacian^k
    Eigen::VectorXd gradient; // in im d^{k-1}
    Eigen::VectorXd curl;     // in im (d^k)^T
};
HodgeReport hodge_decompose(const CochainComplex& cx, int k, const Eigen::VectorXd& x,
                            double tol = -1);

struct DiffusionTrace {
    std::vector<double> times; // step indices for the Euler schedule
    std::vector<Eigen::VectorXd> snapshots;
    std::vector<double> energies; // Dirichlet energy per snapshot
    Eigen::VectorXd limit;        // harmonic projection of x(0)
};

// Exact heat flow x(t) = U exp(-Lambda t) U^T x(0) sampled at the given times.
DiffusionTrace heat_flow_exact(const CochainComplex& cx, int k, const Eigen::VectorXd& x0,
                               const std::vector<double>& times, double tol = -1);

// Repeated diffusion steps x <- x - 2 eta Laplacian x. eta <= 0 selects the
// default 0.9 / lambda_max; eta * lambda_max >= 1 throws StepTooLarge.
DiffusionTrace heat_flow_euler(const CochainComplex& cx, int k, const Eigen::VectorXd& x0,
                               double eta, int steps, double tol = -1);

// Orthonormal basis (columns) of the global sections: stalkwise assignments
// with F(x <= y) s_x = s_y for every comparable pair, computed as the kernel
// of the stacked constraint matrix over the concatenated stalks.
Eigen::MatrixXd global_sections(const Sheaf& F);

struct HoleAttribution {
    Eigen::MatrixXd alphas;       // dual harmonic basis, alpha_i(z_j) = delta_ij
    Eigen::VectorXd coefficients; // phi(z_i) = z_i . phi
};

// Given cycles z_1..z_b spanning degree-k homology, builds the dual harmonic
// basis by minimum-norm least squares inside ker Laplacian^k; the harmonic
// part of phi is then sum_i phi(z_i) alpha_i.
HoleAttribution hole_attribution(const CochainComplex& cx, int k, const Eigen::MatrixXd& cycles,
                                 const Eigen::VectorXd& phi, double tol = -1);

} // namespace sheaflab
