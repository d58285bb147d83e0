#include "sheaflab/sheaf.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace sheaflab {

int Sheaf::total_dim() const {
    return std::accumulate(stalk_dim.begin(), stalk_dim.end(), 0);
}

const Eigen::MatrixXd& Sheaf::covering_restriction(int s, int t) const {
    auto it = restriction.find({s, t});
    if (it == restriction.end())
        throw UnknownElement("no covering " + base->ids[s] + " < " + base->ids[t]);
    return it->second;
}

// One covering path from s up to t (DFS); empty when s == t.
static bool find_path(const Poset& p, int s, int t, std::vector<int>& path) {
    if (s == t) return true;
    for (int u : p.up[s]) {
        if (!p.leq(u, t)) continue;
        path.push_back(u);
        if (find_path(p, u, t, path)) return true;
        path.pop_back();
    }
    return false;
}

Eigen::MatrixXd Sheaf::restriction_between(int s, int t) const {
    if (s == t) return Eigen::MatrixXd::Identity(stalk_dim[s], stalk_dim[s]);
    if (!base->less(s, t))
        throw UnknownElement("elements not comparable: " + base->ids[s] + ", " + base->ids[t]);
    {
        std::lock_guard<std::mutex> lock(cache->mutex);
        auto it = cache->map.find({s, t});
        if (it != cache->map.end()) return it->second;
    }
    std::vector<int> path{s};
    if (!find_path(*base, s, t, path))
        throw UnknownElement("no covering path between comparable elements");
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(stalk_dim[s], stalk_dim[s]);
    for (size_t i = 0; i + 1 < path.size(); ++i)
        M = covering_restriction(path[i], path[i + 1]) * M;
    std::lock_guard<std::mutex> lock(cache->mutex);
    cache->map.insert({{s, t}, M});
    return M;
}

// All covering paths s -> t, capped to keep validation cheap on dense posets.
static void all_paths(const Poset& p, int s, int t, std::vector<int>& cur,
                      std::vector<std::vector<int>>& out, size_t cap) {
    if (out.size() >= cap) return;
    if (s == t) {
        out.push_back(cur);
        return;
    }
    for (int u : p.up[s]) {
        if (u != t && !p.less(u, t)) continue;
        cur.push_back(u);
        all_paths(p, u, t, cur, out, cap);
        cur.pop_back();
    }
}

SheafReport validate_sheaf(const Sheaf& F, double tol) {
    SheafReport report;
    const Poset& p = F.poset();
    if (static_cast<int>(F.stalk_dim.size()) != p.n()) {
        report.ok = false;
        report.issues.push_back("stalk dimension list does not match element count");
        return report;
    }
    for (auto& [cov, M] : F.restriction) {
        auto [s, t] = cov;
        if (M.rows() != F.stalk_dim[t] || M.cols() != F.stalk_dim[s]) {
            report.ok = false;
            std::ostringstream os;
            os << "restriction " << p.ids[s] << " < " << p.ids[t] << " has shape " << M.rows()
               << "x" << M.cols() << ", expected " << F.stalk_dim[t] << "x" << F.stalk_dim[s];
            report.issues.push_back(os.str());
        }
    }
    for (auto& [s, t] : p.coverings)
        if (!F.restriction.count({s, t})) {
            report.ok = false;
            report.issues.push_back("missing restriction for covering " + p.ids[s] + " < " +
                                    p.ids[t]);
        }
    if (!report.ok) return report;

    // Functoriality: for each comparable pair, all covering paths must compose
    // to the same matrix.
    for (int s = 0; s < p.n(); ++s)
        for (int t = 0; t < p.n(); ++t) {
            if (!p.less(s, t)) continue;
            std::vector<std::vector<int>> paths;
            std::vector<int> cur{s};
            all_paths(p, s, t, cur, paths, 64);
            if (paths.size() < 2) continue;
            auto compose = [&](const std::vector<int>& path) {
                Eigen::MatrixXd M = Eigen::MatrixXd::Identity(F.stalk_dim[s], F.stalk_dim[s]);
                for (size_t i = 0; i + 1 < path.size(); ++i)
                    M = F.covering_restriction(path[i], path[i + 1]) * M;
                return M;
            };
            Eigen::MatrixXd first = compose(paths[0]);
            for (size_t i = 1; i < paths.size(); ++i) {
                Eigen::MatrixXd other = compose(paths[i]);
                double err = first.size() ? (first - other).cwiseAbs().maxCoeff() : 0.0;
                if (err > tol) {
                    report.ok = false;
                    std::ostringstream os;
                    os << "functoriality violated between " << p.ids[s] << " and " << p.ids[t]
                       << " (path pair 0," << i << ", max deviation " << err << ")";
                    report.issues.push_back(os.str());
                }
            }
        }
    return report;
}

void validate_euclidean(const EuclideanStructure& E, const Sheaf& F) {
    if (static_cast<int>(E.inner.size()) != F.poset().n())
        throw ShapeError("inner product count does not match element count");
    for (int s = 0; s < F.poset().n(); ++s) {
        const Eigen::MatrixXd& M = E.inner[s];
        if (M.rows() != F.stalk_dim[s] || M.cols() != F.stalk_dim[s])
            throw ShapeError("inner product shape mismatch at " + F.poset().ids[s]);
        if (M.size() == 0) continue;
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10)
            throw ShapeError("inner product not symmetric at " + F.poset().ids[s]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        if (es.eigenvalues().minCoeff() <= 0)
            throw ShapeError("inner product not positive definite at " + F.poset().ids[s]);
    }
}

// --- constructions -----------------------------------------------------------

static Sheaf empty_on(std::shared_ptr<const Poset> base) {
    Sheaf F;
    F.base = std::move(base);
    F.stalk_dim.assign(F.base->n(), 0);
    return F;
}

// Fill every covering with the right-shaped matrix from a callback.
template <typename Fn> static void fill_restrictions(Sheaf& F, Fn&& entry) {
    for (auto& [s, t] : F.base->coverings) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(F.stalk_dim[t], F.stalk_dim[s]);
        entry(s, t, M);
        F.restriction[{s, t}] = std::move(M);
    }
}

Sheaf constant_sheaf(std::shared_ptr<const Poset> base, int d) {
    if (d < 0) throw ShapeError("negative stalk width");
    Sheaf F = empty_on(std::move(base));
    F.stalk_dim.assign(F.base->n(), d);
    fill_restrictions(F, [&](int, int, Eigen::MatrixXd& M) { M.setIdentity(); });
    return F;
}

Sheaf symmetric_weight_sheaf(std::shared_ptr<const Poset> base,
                             const std::map<std::string, double>& edge_weights) {
    Sheaf F = empty_on(std::move(base));
    const Poset& p = F.poset();
    if (!p.graded() || p.max_rank() > 1)
        throw RankError("symmetric weight sheaf needs a graph poset (rank <= 1)");
    for (auto& [id, w] : edge_weights) {
        if (w <= 0) throw NonpositiveWeight("edge '" + id + "' has weight <= 0");
        (void)p.index(id);
    }
    F.stalk_dim.assign(p.n(), 1);
    fill_restrictions(F, [&](int, int t, Eigen::MatrixXd& M) {
        auto it = edge_weights.find(p.ids[t]);
        M(0, 0) = std::sqrt(it == edge_weights.end() ? 1.0 : it->second);
    });
    return F;
}

Sheaf lying_sheaf(std::shared_ptr<const Poset> base, const std::set<std::string>& A) {
    Sheaf F = empty_on(std::move(base));
    const Poset& p = F.poset();
    if (!p.graded()) throw NotGradable("lying sheaf needs a graded poset");
    for (auto& id : A)
        if (p.rank[p.index(id)] != 0)
            throw NotPartition("class element '" + id + "' is not of rank 0");
    for (int i = 0; i < p.n(); ++i) F.stalk_dim[i] = (p.rank[i] <= 1) ? 1 : 0;
    fill_restrictions(F, [&](int s, int t, Eigen::MatrixXd& M) {
        if (p.rank[t] != 1) return; // zero into zero stalks
        M(0, 0) = A.count(p.ids[s]) ? -1.0 : 1.0;
    });
    return F;
}

static void check_partition(const Poset& p, int k, const std::vector<std::set<std::string>>& classes) {
    std::set<std::string> seen;
    size_t total = 0;
    for (auto& cls : classes) {
        for (auto& id : cls) {
            if (p.rank[p.index(id)] != k)
                throw NotPartition("class element '" + id + "' is not of rank " +
                                   std::to_string(k));
            seen.insert(id);
        }
        total += cls.size();
    }
    if (seen.size() != total || total != p.elements_of_rank(k).size())
        throw NotPartition("classes do not partition the rank-" + std::to_string(k) +
                           " elements");
}

Sheaf class_sum_sheaf(std::shared_ptr<const Poset> base,
                      const std::vector<std::set<std::string>>& classes) {
    if (classes.empty()) throw NotPartition("no classes given");
    if (!base->graded()) throw NotGradable("class sum sheaf needs a graded poset");
    check_partition(*base, 0, classes);
    Sheaf F = lying_sheaf(base, classes[0]);
    for (size_t i = 1; i < classes.size(); ++i) F = direct_sum(F, lying_sheaf(base, classes[i]));
    return F;
}

Sheaf sign_vector_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                        const Eigen::VectorXd& s) {
    if (k < 1 || k > X.dim()) throw RankError("sign vector sheaf needs 1 <= k <= dim X");
    int nk = X.count(k);
    if (s.size() != nk) throw ShapeError("sign vector length mismatch");
    for (int i = 0; i < nk; ++i)
        if (s[i] == 0) throw DegenerateInput("sign vector has a zero entry");

    const Poset& p = *base;
    Sheaf F = empty_on(base);
    std::vector<int> k_index(p.n(), -1); // poset element -> k-simplex index
    for (int i = 0; i < nk; ++i) {
        int e = p.index(X.simplex_id(X.simplices[k][i]));
        k_index[e] = i;
        F.stalk_dim[e] = 1;
    }

    // Spanning forest of the k-simplex adjacency graph (shared (k-1)-face);
    // each forest edge contributes one generator s_{t'} e_t - s_t e_{t'} to
    // im d^{k-1}, which together span the orthogonal complement of s on each
    // adjacency component.
    struct Generator {
        int tau, tau_prime;   // k-simplex indices
        int sign, sign_prime; // incidence numbers against the shared face
    };
    std::vector<int> parent(nk);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> root = [&](int a) {
        return parent[a] == a ? a : parent[a] = root(parent[a]);
    };
    std::map<int, std::vector<Generator>> gens; // (k-1)-face poset element -> generators
    for (int fi = 0; fi < X.count(k - 1); ++fi) {
        const std::vector<int>& face = X.simplices[k - 1][fi];
        int sigma = p.index(X.simplex_id(face));
        std::vector<int> cofaces;
        for (int t : p.up[sigma])
            if (k_index[t] >= 0) cofaces.push_back(k_index[t]);
        for (size_t a = 0; a + 1 < cofaces.size(); ++a)
            for (size_t b = a + 1; b < cofaces.size(); ++b) {
                int ra = root(cofaces[a]), rb = root(cofaces[b]);
                if (ra == rb) continue;
                parent[ra] = rb;
                gens[sigma].push_back({cofaces[a], cofaces[b],
                                       incidence_number(X.simplices[k][cofaces[a]], face),
                                       incidence_number(X.simplices[k][cofaces[b]], face)});
            }
    }
    for (auto& [sigma, g] : gens) F.stalk_dim[sigma] = static_cast<int>(g.size());

    fill_restrictions(F, [&](int sg, int t, Eigen::MatrixXd& M) {
        auto it = gens.find(sg);
        if (it == gens.end() || k_index[t] < 0) return;
        int ti = k_index[t];
        for (size_t j = 0; j < it->second.size(); ++j) {
            const Generator& g = it->second[j];
            if (ti == g.tau) M(0, static_cast<long>(j)) = g.sign * s[g.tau_prime];
            if (ti == g.tau_prime) M(0, static_cast<long>(j)) = -g.sign_prime * s[g.tau];
        }
    });
    return F;
}

Sheaf class_sum_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                      const std::vector<std::set<int>>& classes) {
    if (classes.empty()) throw NotPartition("no classes given");
    int nk = X.count(k);
    size_t total = 0;
    for (auto& cls : classes) {
        for (int t : cls)
            if (t < 0 || t >= nk) throw NotPartition("class simplex index out of range");
        total += cls.size();
    }
    std::set<int> all;
    for (auto& cls : classes) all.insert(cls.begin(), cls.end());
    if (all.size() != total || static_cast<int>(total) != nk)
        throw NotPartition("classes do not partition the k-simplices");

    Sheaf F;
    for (size_t i = 0; i < classes.size(); ++i) {
        Eigen::VectorXd s(nk);
        for (int t = 0; t < nk; ++t) s[t] = classes[i].count(t) ? 1.0 : -1.0;
        Sheaf block = sign_vector_sheaf(X, base, k, s);
        F = (i == 0) ? std::move(block) : direct_sum(F, block);
    }
    return F;
}

Sheaf selector_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base,
                     SelectorMode mode, const std::set<int>& T_plus) {
    if (X.dim() > 2) throw RankError("selector sheaf needs a complex of rank <= 2");
    Sheaf F = constant_sheaf(base, 1);
    const Poset& p = F.poset();
    for (auto& [cov, M] : F.restriction) {
        auto [s, t] = cov;
        (void)s;
        int rk = p.rank[t];
        double value = 1.0;
        if (rk == 1) value = (mode == SelectorMode::up) ? 0.0 : 1.0;
        if (rk == 2) {
            if (mode == SelectorMode::down) value = 0.0;
            if (mode == SelectorMode::up) value = 1.0;
            if (mode == SelectorMode::mask) {
                int ti = X.find(p.simplex_vertices[t]);
                value = T_plus.count(ti) ? 1.0 : 0.0;
            }
        }
        M(0, 0) = value;
    }
    return F;
}

Sheaf gradient_space_sheaf(const SimplicialComplex& X, std::shared_ptr<const Poset> base, int k,
                           const std::vector<int>& v_dims,
                           const std::vector<Eigen::MatrixXd>& W) {
    if (k < 1 || k > X.dim()) throw RankError("gradient space sheaf needs 1 <= k <= dim X");
    int nk = X.count(k);
    if (static_cast<int>(v_dims.size()) != nk || static_cast<int>(W.size()) != nk)
        throw ShapeError("need one stalk dimension and one W block per k-simplex");
    for (int t = 0; t < nk; ++t)
        if (W[t].rows() != v_dims[t] || W[t].cols() > v_dims[t])
            throw DecompositionError("W block " + std::to_string(t) +
                                     " is not a subspace of its stalk");

    const Poset& p = *base;
    Sheaf F = empty_on(base);
    std::vector<int> k_index(p.n(), -1);
    for (int t = 0; t < nk; ++t) {
        int e = p.index(X.simplex_id(X.simplices[k][t]));
        k_index[e] = t;
        F.stalk_dim[e] = v_dims[t];
    }

    // Chosen face f(tau): lexicographically smallest (k-1)-face, i.e. tau with
    // its last vertex dropped. F(f(tau)) stacks the W blocks of its preimage.
    struct Attached {
        int tau;    // k-simplex index
        int sign;   // incidence number [tau : f(tau)]
        int offset; // column offset inside the face stalk
    };
    std::map<int, std::vector<Attached>> attach; // face poset element -> blocks
    for (int t = 0; t < nk; ++t) {
        std::vector<int> face = X.simplices[k][t];
        face.pop_back();
        int sigma = p.index(X.simplex_id(face));
        int sign = incidence_number(X.simplices[k][t], face);
        auto& list = attach[sigma];
        int offset = list.empty() ? 0 : list.back().offset +
                                            static_cast<int>(W[list.back().tau].cols());
        list.push_back({t, sign, offset});
    }
    for (auto& [sigma, list] : attach) {
        int width = 0;
        for (auto& a : list) width += static_cast<int>(W[a.tau].cols());
        F.stalk_dim[sigma] = width;
    }

    fill_restrictions(F, [&](int sg, int t, Eigen::MatrixXd& M) {
        auto it = attach.find(sg);
        if (it == attach.end() || k_index[t] < 0) return;
        for (auto& a : it->second)
            if (a.tau == k_index[t])
                M.block(0, a.offset, v_dims[a.tau], W[a.tau].cols()) =
                    static_cast<double>(a.sign) * W[a.tau];
    });
    return F;
}

Sheaf random_bundle(std::shared_ptr<const Poset> base, int d, BundleGroup group,
                    unsigned long seed) {
    if (d < 1) throw ShapeError("bundle stalk width must be >= 1");
    Sheaf F = empty_on(std::move(base));
    const Poset& p = F.poset();
    F.stalk_dim.assign(p.n(), d);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto sample = [&]() {
        for (;;) {
            Eigen::MatrixXd A(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) A(i, j) = gauss(rng);
            if (group == BundleGroup::orthogonal) {
                Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
                Eigen::MatrixXd Q = qr.householderQ();
                Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
                // Positive-diagonal fix makes Q Haar-distributed and unique.
                for (int j = 0; j < d; ++j)
                    if (R(j, j) < 0) Q.col(j) *= -1.0;
                return Q;
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
            double cond = svd.singularValues()(0) / svd.singularValues()(d - 1);
            if (std::isfinite(cond) && cond <= 1e6) return A;
        }
    };

    // Random gauge per element; F(s<t) = g_t g_s^-1 is then automatically
    // functorial and every restriction is an isomorphism in the group.
    std::vector<Eigen::MatrixXd> gauge(p.n());
    for (int i = 0; i < p.n(); ++i) gauge[i] = sample();
    fill_restrictions(F, [&](int s, int t, Eigen::MatrixXd& M) {
        if (group == BundleGroup::orthogonal)
            M = gauge[t] * gauge[s].transpose();
        else
            M = gauge[t] * gauge[s].inverse();
    });
    return F;
}

static bool same_base(const Poset& a, const Poset& b) {
    return a.ids == b.ids && a.coverings == b.coverings;
}

Sheaf direct_sum(const Sheaf& F, const Sheaf& G) {
    if (F.base != G.base && !same_base(F.poset(), G.poset()))
        throw BaseMismatch("direct sum of sheaves on different posets");
    Sheaf H = empty_on(F.base);
    for (int i = 0; i < H.base->n(); ++i) H.stalk_dim[i] = F.stalk_dim[i] + G.stalk_dim[i];
    fill_restrictions(H, [&](int s, int t, Eigen::MatrixXd& M) {
        M.topLeftCorner(F.stalk_dim[t], F.stalk_dim[s]) = F.covering_restriction(s, t);
        M.bottomRightCorner(G.stalk_dim[t], G.stalk_dim[s]) = G.covering_restriction(s, t);
    });
    return H;
}

} // namespace sheaflab
