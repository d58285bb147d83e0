#include "sheaflab/complex.hpp"

#include <algorithm>
#include <map>

namespace sheaflab {

Eigen::MatrixXd CochainComplex::coboundary(int k) const {
    if (k >= 0 && k + 1 < gradings()) return d[k];
    int rows = dim_at(k + 1), cols = dim_at(k);
    return Eigen::MatrixXd::Zero(rows, cols);
}

static void finish_grading(CochainComplex& cx) {
    cx.dims.clear();
    for (auto& level : cx.summands) {
        int total = 0;
        for (auto& s : level) total += s.dim;
        cx.dims.push_back(total);
    }
}

CochainComplex roos_complex(std::shared_ptr<const Sheaf> F) {
    CochainComplex cx;
    cx.flavor = CochainComplex::Flavor::roos;
    cx.sheaf = F;
    const Poset& p = F->poset();

    auto chains = chains_by_dim(p);
    cx.summands.resize(chains.size());
    std::vector<std::map<Chain, int>> index(chains.size()); // chain -> summand
    for (size_t j = 0; j < chains.size(); ++j) {
        int offset = 0;
        for (auto& c : chains[j]) {
            index[j][c] = static_cast<int>(cx.summands[j].size());
            cx.summands[j].push_back({c.back(), c, offset, F->dim(c.back())});
            offset += F->dim(c.back());
        }
    }
    finish_grading(cx);

    cx.d.resize(cx.summands.size());
    for (size_t j = 0; j + 1 < cx.summands.size(); ++j) {
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(cx.dims[j + 1], cx.dims[j]);
        for (auto& row : cx.summands[j + 1]) {
            // (d x)_sigma sums [sigma:tau] F(tau_max <= sigma_max) x_tau over
            // the codimension-1 subchains tau of sigma.
            const Chain& sigma = row.chain;
            for (size_t k = 0; k < sigma.size(); ++k) {
                Chain tau = sigma;
                tau.erase(tau.begin() + static_cast<long>(k));
                const Summand& col = cx.summands[j][index[j].at(tau)];
                if (row.dim == 0 || col.dim == 0) continue;
                double sign = (k % 2 == 0) ? 1.0 : -1.0;
                D.block(row.offset, col.offset, row.dim, col.dim) =
                    sign * F->restriction_between(tau.back(), sigma.back());
            }
        }
        cx.d[j] = std::move(D);
    }
    cx.d.back() = Eigen::MatrixXd::Zero(0, cx.dims.back());
    return cx;
}

CochainComplex cellular_complex(std::shared_ptr<const Sheaf> F) {
    const Poset& p = F->poset();
    if (!p.graded()) throw NotCellPoset("cellular complex needs a graded poset");
    bool simplicial = p.has_simplex_structure();
    if (!simplicial && p.max_rank() > 1)
        throw NotCellPoset("only simplicial face posets and graph posets are supported");

    CochainComplex cx;
    cx.flavor = CochainComplex::Flavor::cellular;
    cx.sheaf = F;
    cx.summands.resize(static_cast<size_t>(p.max_rank()) + 1);
    std::vector<int> summand_of(p.n(), -1);
    for (int r = 0; r <= p.max_rank(); ++r) {
        int offset = 0;
        for (int e : p.elements_of_rank(r)) {
            summand_of[e] = static_cast<int>(cx.summands[r].size());
            cx.summands[r].push_back({e, {e}, offset, F->dim(e)});
            offset += F->dim(e);
        }
    }
    finish_grading(cx);

    // Incidence sign [sigma : tau] for a covering tau < sigma.
    auto sign_of = [&](int tau, int sigma) -> int {
        if (simplicial) return incidence_number(p.simplex_vertices[sigma], p.simplex_vertices[tau]);
        // Graph convention: an edge covering {u, v} with u before v in the
        // element order is oriented u -> v, so d^0 x = x_v - x_u restricted.
        const std::vector<int>& ends = p.down[sigma];
        if (ends.size() != 2) throw NotCellPoset("graph edge must cover exactly two nodes");
        return tau == *std::min_element(ends.begin(), ends.end()) ? -1 : 1;
    };

    cx.d.resize(cx.summands.size());
    for (size_t j = 0; j + 1 < cx.summands.size(); ++j) {
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(cx.dims[j + 1], cx.dims[j]);
        for (auto& row : cx.summands[j + 1])
            for (int tau : p.down[row.element]) {
                const Summand& col = cx.summands[j][summand_of[tau]];
                if (row.dim == 0 || col.dim == 0) continue;
                D.block(row.offset, col.offset, row.dim, col.dim) =
                    static_cast<double>(sign_of(tau, row.element)) *
                    F->covering_restriction(tau, row.element);
            }
        cx.d[j] = std::move(D);
    }
    cx.d.back() = Eigen::MatrixXd::Zero(0, cx.dims.back());
    return cx;
}

// Block-diagonal inner product matrix at grading k (identity when E absent).
static Eigen::MatrixXd inner_at(const CochainComplex& cx, int k, const EuclideanStructure* E) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(cx.dim_at(k), cx.dim_at(k));
    if (!E || k < 0 || k >= cx.gradings()) return M;
    for (auto& s : cx.summands[k])
        M.block(s.offset, s.offset, s.dim, s.dim) = E->inner[s.element];
    return M;
}

Eigen::MatrixXd laplacian(const CochainComplex& cx, int k, LaplacianKind kind,
                          const EuclideanStructure* E) {
    int n = cx.dim_at(k);
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(n, n), down = Eigen::MatrixXd::Zero(n, n);
    if (kind != LaplacianKind::down && cx.dim_at(k + 1) > 0) {
        Eigen::MatrixXd dk = cx.coboundary(k);
        if (E) {
            up = inner_at(cx, k, E).ldlt().solve(dk.transpose() * inner_at(cx, k + 1, E) * dk);
        } else {
            up = dk.transpose() * dk;
        }
    }
    if (kind != LaplacianKind::up && k > 0 && cx.dim_at(k - 1) > 0) {
        Eigen::MatrixXd dkm = cx.coboundary(k - 1);
        if (E) {
            down = dkm * inner_at(cx, k - 1, E).ldlt().solve(dkm.transpose()) *
                   inner_at(cx, k, E);
        } else {
            down = dkm * dkm.transpose();
        }
    }
    if (kind == LaplacianKind::up) return up;
    if (kind == LaplacianKind::down) return down;
    Eigen::MatrixXd full = up + down;
    if (kind == LaplacianKind::full) return full;

    // Normalized: conjugate by the pseudo-inverse square root of the summand
    // block diagonal of the full Laplacian.
    Eigen::MatrixXd Dhalf = Eigen::MatrixXd::Zero(n, n);
    for (auto& s : cx.summands[k]) {
        if (s.dim == 0) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            full.block(s.offset, s.offset, s.dim, s.dim));
        Eigen::VectorXd inv = es.eigenvalues();
        for (int i = 0; i < inv.size(); ++i)
            inv[i] = (inv[i] > 1e-12) ? 1.0 / std::sqrt(inv[i]) : 0.0;
        Dhalf.block(s.offset, s.offset, s.dim, s.dim) =
            es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }
    return Dhalf * full * Dhalf;
}

Eigen::MatrixXd duta_laplacian(const Sheaf& F) {
    const Poset& p = F.poset();
    if (!p.graded() || p.max_rank() > 1)
        throw RankError("hypergraph Laplacian needs a bipartite rank-0/1 poset");
    std::vector<int> offset(p.n(), -1);
    int total = 0;
    for (int a : p.elements_of_rank(0)) {
        offset[a] = total;
        total += F.dim(a);
    }
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(total, total);
    for (int b : p.elements_of_rank(1)) {
        const std::vector<int>& nodes = p.down[b];
        double w = 1.0 / static_cast<double>(nodes.size());
        for (int a : nodes) {
            const Eigen::MatrixXd& Fa = F.covering_restriction(a, b);
            L.block(offset[a], offset[a], F.dim(a), F.dim(a)) +=
                w * static_cast<double>(nodes.size() - 1) * Fa.transpose() * Fa;
            for (int a2 : nodes) {
                if (a2 == a) continue;
                L.block(offset[a], offset[a2], F.dim(a), F.dim(a2)) -=
                    w * Fa.transpose() * F.covering_restriction(a2, b);
            }
        }
    }
    return L;
}

DirichletEnergy dirichlet_energy(const CochainComplex& cx, int k, const Eigen::VectorXd& x) {
    if (x.size() != cx.dim_at(k)) throw ShapeError("cochain length does not match grading");
    DirichletEnergy q;
    q.up = cx.coboundary(k).size() ? (cx.coboundary(k) * x).squaredNorm() : 0.0;
    if (k > 0 && cx.dim_at(k - 1) > 0)
        q.down = (cx.coboundary(k - 1).transpose() * x).squaredNorm();
    q.total = q.up + q.down;
    return q;
}

VectorCalculus vector_calculus(const CochainComplex& cx) {
    if (cx.flavor != CochainComplex::Flavor::cellular)
        throw RankError("vector calculus needs a cellular complex");
    if (cx.gradings() > 3) throw RankError("vector calculus needs rank <= 2");
    for (int e = 0; e < cx.sheaf->poset().n(); ++e)
        if (cx.sheaf->dim(e) != 1) throw RankError("vector calculus needs 1-dim stalks");
    for (auto& [cov, M] : cx.sheaf->restriction)
        if (M(0, 0) != 1.0) throw RankError("vector calculus needs the constant sheaf");
    VectorCalculus ops;
    ops.grad = cx.coboundary(0);
    ops.curl = cx.coboundary(1);
    ops.div = ops.grad.transpose();
    ops.cocurl = ops.curl.transpose();
    return ops;
}

} // namespace sheaflab
