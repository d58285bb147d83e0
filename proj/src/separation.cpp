#include "sheaflab/separation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "sheaflab/complex.hpp"
#include "sheaflab/errors.hpp"
#include "sheaflab/spectral.hpp"

namespace sheaflab {

namespace {

// Minimum-norm point of the convex hull of the columns of P (Wolfe's
// algorithm: major cycles add the most violating vertex, minor cycles move to
// the affine minimizer of the current corral, dropping vertices whose convex
// weight would turn nonpositive).
Eigen::VectorXd min_norm_point(const Eigen::MatrixXd& P) {
    const int m = static_cast<int>(P.cols());
    const int dim = static_cast<int>(P.rows());
    if (m == 0) return Eigen::VectorXd::Zero(dim);
    double scale2 = 0;
    int j0 = 0;
    double best0 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
        double n2 = P.col(j).squaredNorm();
        scale2 = std::max(scale2, n2);
        if (n2 < best0) {
            best0 = n2;
            j0 = j;
        }
    }
    const double eps = 1e-12 * std::max(1.0, scale2);
    std::vector<int> corral = {j0};
    Eigen::VectorXd lambda = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd x = P.col(j0);

    auto corral_matrix = [&] {
        Eigen::MatrixXd B(dim, corral.size());
        for (size_t i = 0; i < corral.size(); ++i) B.col(static_cast<int>(i)) = P.col(corral[i]);
        return B;
    };

    int guard = 16 * (m + dim) + 100;
    while (guard-- > 0) {
        int jbest = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j) {
            double v = x.dot(P.col(j));
            if (v < best) {
                best = v;
                jbest = j;
            }
        }
        if (best > x.squaredNorm() - eps) break; // optimality condition
        if (std::find(corral.begin(), corral.end(), jbest) != corral.end()) break;
        corral.push_back(jbest);
        lambda.conservativeResize(lambda.size() + 1);
        lambda[lambda.size() - 1] = 0;

        while (true) {
            const int s = static_cast<int>(corral.size());
            Eigen::MatrixXd B = corral_matrix();
            // affine minimizer: minimize |B a|^2 subject to sum(a) = 1
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(s + 1, s + 1);
            K.topLeftCorner(s, s) = B.transpose() * B;
            K.topRightCorner(s, 1).setOnes();
            K.bottomLeftCorner(1, s).setOnes();
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
            rhs[s] = 1;
            Eigen::VectorXd a = K.fullPivLu().solve(rhs).head(s);
            if ((a.array() > 1e-11).all()) {
                lambda = a;
                x = B * a;
                break;
            }
            double theta = 1.0;
            for (int i = 0; i < s; ++i)
                if (a[i] <= 1e-11 && lambda[i] - a[i] > 0)
                    theta = std::min(theta, lambda[i] / (lambda[i] - a[i]));
            lambda += theta * (a - lambda);
            std::vector<int> keep_idx;
            for (int i = 0; i < s; ++i)
                if (lambda[i] > 1e-11) keep_idx.push_back(i);
            if (keep_idx.empty()) keep_idx.push_back(0);
            std::vector<int> new_corral;
            Eigen::VectorXd new_lambda(keep_idx.size());
            for (size_t i = 0; i < keep_idx.size(); ++i) {
                new_corral.push_back(corral[keep_idx[i]]);
                new_lambda[static_cast<int>(i)] = lambda[keep_idx[i]];
            }
            corral = std::move(new_corral);
            lambda = new_lambda / new_lambda.sum();
            x = corral_matrix() * lambda;
        }
    }
    return x;
}

struct TwoClassSplit {
    bool separable = false;
    Eigen::VectorXd w; // unit normal, w.x + b > 0 on the positive side
    double b = 0;
    double margin = 0;
};

// Hard separation of point rows in `pos` from rows in `neg` via the
// minimum-norm point of the pairwise difference hull.
TwoClassSplit separate_two(const Eigen::MatrixXd& pos, const Eigen::MatrixXd& neg) {
    const int dim = static_cast<int>(pos.cols());
    Eigen::MatrixXd diffs(dim, pos.rows() * neg.rows());
    int c = 0;
    double scale = 1.0;
    for (int i = 0; i < pos.rows(); ++i)
        for (int j = 0; j < neg.rows(); ++j) {
            diffs.col(c) = (pos.row(i) - neg.row(j)).transpose();
            scale = std::max({scale, pos.row(i).norm(), neg.row(j).norm()});
            ++c;
        }
    Eigen::VectorXd star = min_norm_point(diffs);
    TwoClassSplit out;
    if (star.norm() <= 1e-9 * scale) return out;
    out.w = star.normalized();
    double pos_min = (pos * out.w).minCoeff();
    double neg_max = (neg * out.w).maxCoeff();
    out.margin = (pos_min - neg_max) / 2;
    out.b = -(pos_min + neg_max) / 2;
    out.separable = out.margin >= 1e-9;
    return out;
}

std::mt19937_64 seeded_rng(std::uint64_t seed) {
    return std::mt19937_64(0x5eaf1abULL ^ (seed * 0x9e3779b97f4a7c15ULL + 1));
}

Eigen::VectorXd gaussian_vector(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = gauss(rng);
    return x;
}

// Exact diffusion limit: orthogonal projection onto ker L for symmetric PSD L.
Eigen::VectorXd diffusion_limit(const Eigen::MatrixXd& L, const Eigen::VectorXd& x0) {
    EigSym eig = eig_sym(L);
    double tol = default_kernel_tol(L, eig.values);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x0.size());
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) out += eig.vectors.col(i).dot(x0) * eig.vectors.col(i);
    return out;
}

// Node-space Laplacian of a 1-dim-stalk sheaf on the rank-0/1 skeleton:
// cellular when every rank-1 element covers exactly two nodes, hypergraph
// (Duta) otherwise. Returns the matrix acting on stacked node stalks in
// rank-0 element order.
Eigen::MatrixXd node_laplacian(const std::shared_ptr<const Sheaf>& F, bool normalized) {
    const Poset& p = F->poset();
    bool graph = true;
    for (int e : p.elements_of_rank(1))
        if (p.down[e].size() != 2) graph = false;
    if (graph) {
        auto cx = cellular_complex(F);
        return laplacian(cx, 0, normalized ? LaplacianKind::normalized : LaplacianKind::full);
    }
    if (normalized)
        throw HypothesisViolated("normalized families require a graph poset");
    // restrict to the rank-0/1 skeleton for the hypergraph Laplacian
    std::vector<std::string> elements;
    std::vector<std::pair<std::string, std::string>> cov;
    for (int a : p.elements_of_rank(0)) elements.push_back(p.ids[a]);
    for (int b : p.elements_of_rank(1)) {
        elements.push_back(p.ids[b]);
        for (int a : p.down[b]) cov.push_back({p.ids[a], p.ids[b]});
    }
    auto skeleton = std::make_shared<Poset>(build_poset(elements, cov));
    Sheaf G;
    G.base = skeleton;
    G.stalk_dim.assign(skeleton->n(), 0);
    for (int i = 0; i < skeleton->n(); ++i) {
        int orig = p.index(skeleton->ids[i]);
        G.stalk_dim[i] = F->dim(orig);
    }
    for (auto& [s, t] : skeleton->coverings)
        G.restriction[{s, t}] =
            F->covering_restriction(p.index(skeleton->ids[s]), p.index(skeleton->ids[t]));
    return duta_laplacian(G);
}

// Per-node class labels in rank-0 element order; validates the partition.
std::vector<int> node_labels(const Poset& p, const ClassTask& task) {
    if (task.k != 0) throw RankError("hierarchy families classify rank-0 elements");
    std::vector<int> labels;
    for (int v : p.elements_of_rank(0)) {
        auto it = task.labels.find(p.ids[v]);
        if (it == task.labels.end() || it->second < 0 || it->second >= task.num_classes)
            throw NotPartition("every rank-0 element needs a label in range");
        labels.push_back(it->second);
    }
    return labels;
}

void require_connected(const Poset& p) {
    std::vector<int> nodes = p.elements_of_rank(0);
    if (nodes.empty()) throw HypothesisViolated("no rank-0 elements");
    std::vector<int> parent(p.n());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (int e : p.elements_of_rank(1))
        for (int v : p.down[e]) parent[find(v)] = find(e);
    int root = find(nodes[0]);
    for (int v : nodes)
        if (find(v) != root) throw HypothesisViolated("graph must be connected");
}

// 1-dim sheaf on the rank-0/1 skeleton with prescribed incidence weights.
Sheaf incidence_weight_sheaf(std::shared_ptr<const Poset> base,
                             const std::function<double(int, int)>& weight) {
    Sheaf F = lying_sheaf(base, {});
    for (auto& [key, mat] : F.restriction)
        if (mat.size() == 1) mat(0, 0) = weight(key.first, key.second);
    return F;
}

SeparationVerdict finish_verdict(SeparationVerdict v) {
    double scale = std::max(1.0, v.embeddings.cwiseAbs().maxCoeff());
    if (v.embeddings.norm() <= 1e-9 * scale * std::sqrt(double(v.embeddings.size()))) {
        v.degenerate = true;
        v.separable = false;
        v.note = "degenerate: diffusion limit vanished";
        return v;
    }
    try {
        SeparationVerdict lin = linearly_separable(v.embeddings, v.labels);
        v.separable = lin.separable;
        v.witnesses = lin.witnesses;
        if (!lin.note.empty()) v.note = lin.note;
    } catch (const DegenerateInput&) {
        v.separable = false;
        v.note = "identical limit embeddings across classes";
    }
    return v;
}

} // namespace

SeparationVerdict linearly_separable(const Eigen::MatrixXd& points,
                                     const std::vector<int>& labels) {
    if (points.rows() != static_cast<long>(labels.size()))
        throw ShapeError("one label per point required");
    const int n = static_cast<int>(points.rows());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (labels[i] != labels[j] && (points.row(i) - points.row(j)).norm() == 0)
                throw DegenerateInput("identical points in different classes");

    std::set<int> classes(labels.begin(), labels.end());
    SeparationVerdict v;
    v.embeddings = points;
    v.labels = labels;
    v.witnesses = Eigen::MatrixXd::Zero(static_cast<int>(classes.size()), points.cols() + 1);
    v.separable = true;
    int row = 0;
    for (int c : classes) {
        std::vector<int> in, out;
        for (int i = 0; i < n; ++i) (labels[i] == c ? in : out).push_back(i);
        if (out.empty()) { // a lone class is vacuously separated
            v.witnesses(row, points.cols()) = 1.0;
            ++row;
            continue;
        }
        Eigen::MatrixXd pos(in.size(), points.cols()), neg(out.size(), points.cols());
        for (size_t i = 0; i < in.size(); ++i) pos.row(static_cast<int>(i)) = points.row(in[i]);
        for (size_t i = 0; i < out.size(); ++i) neg.row(static_cast<int>(i)) = points.row(out[i]);
        TwoClassSplit split = separate_two(pos, neg);
        if (!split.separable) {
            v.separable = false;
            v.witnesses.resize(0, 0);
            v.note = "class " + std::to_string(c) + " meets the hull of the rest";
            return v;
        }
        v.witnesses.row(row).head(points.cols()) = split.w.transpose();
        v.witnesses(row, points.cols()) = split.b;
        ++row;
    }
    return v;
}

SeparationVerdict run_hierarchy(std::shared_ptr<const Poset> base, const ClassTask& task,
                                HierarchyFamily family, std::uint64_t seed,
                                const Eigen::VectorXd* x0) {
    const Poset& p = *base;
    std::vector<int> labels = node_labels(p, task);
    require_connected(p);
    std::vector<int> nodes = p.elements_of_rank(0);
    const int nv = static_cast<int>(nodes.size());

    SeparationVerdict v;
    for (int i = 0; i < nv; ++i) v.element_ids.push_back(p.ids[nodes[i]]);
    v.labels = labels;

    std::set<std::string> first_class;
    std::vector<std::set<std::string>> classes(task.num_classes);
    for (int i = 0; i < nv; ++i) {
        classes[labels[i]].insert(p.ids[nodes[i]]);
        if (labels[i] == 0) first_class.insert(p.ids[nodes[i]]);
    }
    std::mt19937_64 rng = seeded_rng(seed);

    auto scalar_limit = [&](const std::shared_ptr<const Sheaf>& F, bool normalized) {
        Eigen::MatrixXd L = node_laplacian(F, normalized);
        Eigen::VectorXd init = x0 ? *x0 : gaussian_vector(static_cast<int>(L.rows()), rng);
        if (init.size() != L.rows()) throw ShapeError("initial condition length mismatch");
        return diffusion_limit(L, init);
    };

    if (family == HierarchyFamily::unnormalized) {
        auto F = std::make_shared<Sheaf>(constant_sheaf(base, 1));
        v.embeddings = scalar_limit(F, false);
        return finish_verdict(std::move(v));
    }

    if (family == HierarchyFamily::normalized_sym || family == HierarchyFamily::asym_positive) {
        // weight sweep: within-first-class incidences carry sqrt(N), doubling N
        // until separation or the cap
        int max_deg = 1;
        for (int i = 0; i < nv; ++i)
            max_deg = std::max(max_deg, static_cast<int>(p.up[nodes[i]].size()));
        Eigen::VectorXd init = x0 ? *x0 : gaussian_vector(nv, rng);
        bool symmetric = family == HierarchyFamily::normalized_sym;
        SeparationVerdict last;
        for (double N = 4.0 * max_deg; N <= double(1 << 20); N *= 2) {
            auto weight = [&](int s, int t) -> double {
                bool s_in = first_class.count(p.ids[s]) > 0;
                if (!symmetric) return s_in ? std::sqrt(N) : 1.0;
                for (int u : p.down[t])
                    if (!first_class.count(p.ids[u])) return 1.0;
                return std::sqrt(N);
            };
            auto F = std::make_shared<Sheaf>(incidence_weight_sheaf(base, weight));
            SeparationVerdict trial = v;
            // the same initial condition is re-fed at every N
            trial.embeddings = diffusion_limit(node_laplacian(F, true), init);
            last = finish_verdict(std::move(trial));
            if (last.separable) {
                last.note = "separated at N = " + std::to_string(static_cast<long>(N));
                return last;
            }
        }
        if (last.note.empty()) last.note = "not separable up to the N cap";
        return last;
    }

    if (family == HierarchyFamily::lying_1d) {
        auto F = std::make_shared<Sheaf>(lying_sheaf(base, first_class));
        v.embeddings = scalar_limit(F, false);
        return finish_verdict(std::move(v));
    }

    // lying_ld: direct sum of per-class sign sheaves, limit row per node in R^l
    auto F = std::make_shared<Sheaf>(class_sum_sheaf(base, classes));
    Eigen::MatrixXd L = node_laplacian(F, false);
    Eigen::VectorXd init = x0 ? *x0 : gaussian_vector(static_cast<int>(L.rows()), rng);
    Eigen::VectorXd limit = diffusion_limit(L, init);
    const int ell = task.num_classes;
    Eigen::MatrixXd emb(nv, ell);
    for (int i = 0; i < nv; ++i) emb.row(i) = limit.segment(i * ell, ell).transpose();
    // rescale each class block by the sign of its harmonic coefficient
    for (int c = 0; c < ell; ++c) {
        double coeff = 0;
        for (int i = 0; i < nv; ++i)
            coeff += emb(i, c) * (classes[c].count(p.ids[nodes[i]]) ? 1.0 : -1.0);
        if (coeff < 0) emb.col(c) *= -1.0;
    }
    v.embeddings = emb;
    return finish_verdict(std::move(v));
}

SeparationVerdict higher_order_separation(const SimplicialComplex& X,
                                          std::shared_ptr<const Poset> base, int k,
                                          const ClassTask& task, std::uint64_t seed) {
    if (k < 1) throw RankError("positive grading required");
    const int nk = X.count(k);
    std::vector<std::set<int>> classes(task.num_classes);
    SeparationVerdict v;
    for (int i = 0; i < nk; ++i) {
        std::string id = X.simplex_id(X.simplices[k][i]);
        auto it = task.labels.find(id);
        if (it == task.labels.end() || it->second < 0 || it->second >= task.num_classes)
            throw NotPartition("every rank-k simplex needs a label in range");
        classes[it->second].insert(i);
        v.element_ids.push_back(id);
        v.labels.push_back(it->second);
    }

    auto F = std::make_shared<Sheaf>(class_sum_sheaf(X, base, k, classes));
    auto cx = cellular_complex(F);
    std::mt19937_64 rng = seeded_rng(seed);
    Eigen::VectorXd init = gaussian_vector(cx.dim_at(k), rng);
    Eigen::VectorXd limit = diffusion_limit(laplacian(cx, k), init);

    const int ell = task.num_classes;
    // each rank-k summand stacks one coordinate per class block
    Eigen::MatrixXd emb(nk, ell);
    std::map<int, int> simplex_row;
    for (int i = 0; i < nk; ++i) simplex_row[base->index(X.simplex_id(X.simplices[k][i]))] = i;
    for (const Summand& s : cx.summands[k]) {
        int row = simplex_row.at(s.element);
        for (int c = 0; c < ell; ++c) emb(row, c) = limit[s.offset + c];
    }
    std::vector<bool> block_degenerate(ell, false);
    for (int c = 0; c < ell; ++c) {
        double coeff = 0;
        for (int i = 0; i < nk; ++i) coeff += emb(i, c) * (classes[c].count(i) ? 1.0 : -1.0);
        if (std::abs(coeff) / nk < 1e-12) block_degenerate[c] = true;
        if (coeff < 0) emb.col(c) *= -1.0;
    }
    v.embeddings = emb;
    SeparationVerdict out = finish_verdict(std::move(v));
    for (int c = 0; c < ell; ++c)
        if (block_degenerate[c]) out.note += " block " + std::to_string(c) + " degenerate;";
    return out;
}

ContractibilityReport dvb_contractibility_check(const SimplicialComplex& X,
                                                std::shared_ptr<const Poset> base, int k,
                                                int trials, int d, BundleGroup group,
                                                std::uint64_t seed) {
    auto constant_cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    for (int j = 0; j < constant_cx.gradings(); ++j)
        if (betti(constant_cx, j) != (j == 0 ? 1 : 0))
            throw NotContractible("Betti numbers are not (1, 0, 0, ...)");

    ContractibilityReport report;
    report.trials = trials;
    std::mt19937_64 rng = seeded_rng(seed);
    for (int t = 0; t < trials; ++t) {
        auto F = std::make_shared<Sheaf>(
            random_bundle(base, d, group, static_cast<unsigned long>(seed * 1000 + t + 1)));
        auto cx = cellular_complex(F);
        BundleTrial trial;
        trial.kernel_dim = betti(cx, k);
        Eigen::VectorXd x0 = gaussian_vector(cx.dim_at(k), rng);
        trial.limit_norm = diffusion_limit(laplacian(cx, k), x0).norm();
        trial.trivial = trial.kernel_dim == 0 && trial.limit_norm <= 1e-8;
        if (k >= 1 && !trial.trivial) report.all_trivial = false;
        int b0 = betti(cx, 0);
        if (report.degree0_kernel_dim < 0) report.degree0_kernel_dim = b0;
        if (report.degree0_kernel_dim != b0) report.all_trivial = false;
        report.results.push_back(trial);
    }
    return report;
}

} // namespace sheaflab
