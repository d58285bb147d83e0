#include "sheaflab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sheaflab {

EigSym eig_sym(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw NotSymmetric("matrix is not square");
    if (M.size() && (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-8)
        throw NotSymmetric("matrix deviates from its transpose by more than 1e-8");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (M + M.transpose())); // exact symmetry for the solver
    EigSym out;
    out.values = es.eigenvalues();
    out.vectors = es.eigenvectors();
    for (int j = 0; j < out.vectors.cols(); ++j)
        for (int i = 0; i < out.vectors.rows(); ++i)
            if (std::abs(out.vectors(i, j)) > 1e-12) {
                if (out.vectors(i, j) < 0) out.vectors.col(j) *= -1.0;
                break;
            }
    return out;
}

double default_kernel_tol(const Eigen::MatrixXd& M, const Eigen::VectorXd& eigenvalues) {
    double lmax = eigenvalues.size() ? eigenvalues.cwiseAbs().maxCoeff() : 0.0;
    double dim = static_cast<double>(std::max(M.rows(), M.cols()));
    return std::max(dim * std::numeric_limits<double>::epsilon() * lmax, 1e-12);
}

static EigSym laplacian_eig(const CochainComplex& cx, int k, double& tol) {
    Eigen::MatrixXd L = laplacian(cx, k);
    EigSym eig = eig_sym(L);
    if (tol < 0) tol = default_kernel_tol(L, eig.values);
    return eig;
}

Eigen::MatrixXd harmonic_projector(const CochainComplex& cx, int k, double tol) {
    EigSym eig = laplacian_eig(cx, k, tol);
    int n = cx.dim_at(k);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) P += eig.vectors.col(i) * eig.vectors.col(i).transpose();
    return P;
}

int betti(const CochainComplex& cx, int k, double tol) {
    EigSym eig = laplacian_eig(cx, k, tol);
    int b = 0;
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) ++b;
    return b;
}

// Orthonormal basis of the column space, rank decided by column-pivoted QR.
static Eigen::MatrixXd column_space(const Eigen::MatrixXd& A) {
    if (A.size() == 0 || A.norm() == 0) return Eigen::MatrixXd::Zero(A.rows(), 0);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    long r = qr.rank();
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), r);
    return Q;
}

HodgeReport hodge_decompose(const CochainComplex& cx, int k, const Eigen::VectorXd& x,
                            double tol) {
    if (x.size() != cx.dim_at(k)) throw ShapeError("cochain length does not match grading");
    HodgeReport rep;
    EigSym eig = laplacian_eig(cx, k, tol);
    rep.eigenvalues = eig.values;
    rep.eigenvectors = eig.vectors;
    rep.projector = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) {
            rep.projector += eig.vectors.col(i) * eig.vectors.col(i).transpose();
            ++rep.betti;
        }
    Eigen::MatrixXd Qg = column_space(cx.coboundary(k - 1));
    Eigen::MatrixXd Qc = column_space(cx.coboundary(k).transpose());
    rep.gradient = Qg.cols() ? Eigen::VectorXd(Qg * (Qg.transpose() * x))
                             : Eigen::VectorXd::Zero(x.size());
    rep.curl = Qc.cols() ? Eigen::VectorXd(Qc * (Qc.transpose() * x))
                         : Eigen::VectorXd::Zero(x.size());
    // The two image spaces are orthogonal (d compose d = 0), and the harmonic
    // space is exactly their orthogonal complement; taking the remainder keeps
    // the reconstruction exact even when a near-zero singular value makes the
    // rank decisions of the eigen and QR factorizations disagree.
    rep.harmonic = x - rep.gradient - rep.curl;
    return rep;
}

DiffusionTrace heat_flow_exact(const CochainComplex& cx, int k, const Eigen::VectorXd& x0,
                               const std::vector<double>& times, double tol) {
    if (x0.size() != cx.dim_at(k)) throw ShapeError("cochain length does not match grading");
    DiffusionTrace trace;
    EigSym eig = laplacian_eig(cx, k, tol);
    Eigen::VectorXd xhat = eig.vectors.transpose() * x0;
    for (double t : times) {
        Eigen::VectorXd decayed = (-eig.values.array() * t).exp() * xhat.array();
        Eigen::VectorXd xt = eig.vectors * decayed;
        trace.times.push_back(t);
        trace.energies.push_back(dirichlet_energy(cx, k, xt).total);
        trace.snapshots.push_back(std::move(xt));
    }
    Eigen::VectorXd kept = Eigen::VectorXd::Zero(x0.size());
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) kept += xhat[i] * eig.vectors.col(i);
    trace.limit = kept;
    return trace;
}

DiffusionTrace heat_flow_euler(const CochainComplex& cx, int k, const Eigen::VectorXd& x0,
                               double eta, int steps, double tol) {
    if (x0.size() != cx.dim_at(k)) throw ShapeError("cochain length does not match grading");
    Eigen::MatrixXd L = laplacian(cx, k);
    EigSym eig = eig_sym(L);
    if (tol < 0) tol = default_kernel_tol(L, eig.values);
    double lmax = eig.values.size() ? eig.values.maxCoeff() : 0.0;
    if (eta <= 0) eta = lmax > 0 ? 0.9 / lmax : 1.0;
    if (eta * lmax >= 1.0)
        throw StepTooLarge("step eta must satisfy 2 eta lambda_max < 2");

    DiffusionTrace trace;
    Eigen::VectorXd x = x0;
    trace.times.push_back(0);
    trace.energies.push_back(dirichlet_energy(cx, k, x).total);
    trace.snapshots.push_back(x);
    for (int s = 1; s <= steps; ++s) {
        x -= 2.0 * eta * (L * x);
        trace.times.push_back(s);
        trace.energies.push_back(dirichlet_energy(cx, k, x).total);
        trace.snapshots.push_back(x);
    }
    Eigen::VectorXd xhat = eig.vectors.transpose() * x0;
    Eigen::VectorXd kept = Eigen::VectorXd::Zero(x0.size());
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) kept += xhat[i] * eig.vectors.col(i);
    trace.limit = kept;
    return trace;
}

Eigen::MatrixXd global_sections(const Sheaf& F) {
    const Poset& p = F.poset();
    std::vector<int> offset(p.n());
    int total = 0;
    for (int i = 0; i < p.n(); ++i) {
        offset[i] = total;
        total += F.dim(i);
    }
    int rows = 0;
    for (int s = 0; s < p.n(); ++s)
        for (int t = 0; t < p.n(); ++t)
            if (p.less(s, t)) rows += F.dim(t);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(rows, total);
    int r = 0;
    for (int s = 0; s < p.n(); ++s)
        for (int t = 0; t < p.n(); ++t) {
            if (!p.less(s, t)) continue;
            C.block(r, offset[s], F.dim(t), F.dim(s)) = F.restriction_between(s, t);
            C.block(r, offset[t], F.dim(t), F.dim(t)) -=
                Eigen::MatrixXd::Identity(F.dim(t), F.dim(t));
            r += F.dim(t);
        }
    if (total == 0) return Eigen::MatrixXd::Zero(0, 0);
    if (rows == 0) return Eigen::MatrixXd::Identity(total, total);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
    Eigen::MatrixXd K = lu.kernel();
    if (lu.dimensionOfKernel() == 0) return Eigen::MatrixXd::Zero(total, 0);
    // FullPivLU::kernel returns a (non-orthonormal) spanning set.
    return column_space(K);
}

HoleAttribution hole_attribution(const CochainComplex& cx, int k, const Eigen::MatrixXd& cycles,
                                 const Eigen::VectorXd& phi, double tol) {
    if (cycles.rows() != cx.dim_at(k)) throw ShapeError("cycle length does not match grading");
    Eigen::MatrixXd boundary = cx.coboundary(k - 1).transpose(); // C_k -> C_{k-1}
    for (int j = 0; j < cycles.cols(); ++j) {
        double res = boundary.rows() ? (boundary * cycles.col(j)).norm() : 0.0;
        if (res > 1e-8 * std::max(1.0, cycles.col(j).norm()))
            throw NotCycles("column " + std::to_string(j) + " is not a cycle");
    }
    EigSym eig = laplacian_eig(cx, k, tol);
    std::vector<int> kernel_cols;
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) kernel_cols.push_back(i);
    int b = static_cast<int>(kernel_cols.size());
    if (b != cycles.cols())
        throw RankDeficient("need exactly betti = " + std::to_string(b) + " cycles");

    HoleAttribution out;
    out.coefficients = cycles.transpose() * phi;
    if (b == 0) {
        out.alphas = Eigen::MatrixXd::Zero(cx.dim_at(k), 0);
        return out;
    }
    Eigen::MatrixXd H(cx.dim_at(k), b);
    for (int i = 0; i < b; ++i) H.col(i) = eig.vectors.col(kernel_cols[i]);
    // alpha_i = H c_i with (Z^T H) c_i = e_i; minimum-norm via a complete
    // orthogonal decomposition, with an explicit rank check.
    Eigen::MatrixXd G = cycles.transpose() * H;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
    if (cod.rank() < b) throw RankDeficient("cycle pairing matrix is singular");
    out.alphas = H * cod.solve(Eigen::MatrixXd::Identity(b, b));
    return out;
}

} // namespace sheaflab
