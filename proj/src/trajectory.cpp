#include "sheaflab/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "sheaflab/errors.hpp"
#include "sheaflab/spectral.hpp"

namespace sheaflab {

namespace {

std::string vertex_id(int x, int y) {
    std::ostringstream os;
    os << "v";
    if (x < 10) os << "0";
    os << x << "_";
    if (y < 10) os << "0";
    os << y;
    return os.str();
}

Eigen::Vector2d quarter_turn(const Eigen::Vector2d& v) { return {-v.y(), v.x()}; }

// Projector onto the numerical kernel of a symmetric PSD matrix.
Eigen::MatrixXd kernel_projector(const Eigen::MatrixXd& L) {
    EigSym eig = eig_sym(L);
    double tol = default_kernel_tol(L, eig.values);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(L.rows(), L.cols());
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= tol) P += eig.vectors.col(i) * eig.vectors.col(i).transpose();
    return P;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(seed * 0x9e3779b97f4a7c15ULL + (index + 1) * 0x2545f4914f6cdd1dULL);
}

int pick(std::mt19937_64& rng, int n) {
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

// One attempted walk of `steps` nodes; empty on a dead end.
std::vector<int> try_walk(const PuncturedGrid& g, int region, int steps,
                          double p_curl, std::mt19937_64& rng) {
    std::vector<int> pool;
    for (int v = 0; v < static_cast<int>(g.coords.size()); ++v)
        if (g.node_region[v] == region) pool.push_back(v);
    if (pool.empty()) return {};
    std::vector<int> walk = {pool[pick(rng, static_cast<int>(pool.size()))]};
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (static_cast<int>(walk.size()) < steps) {
        int u = walk.back();
        int prev = walk.size() >= 2 ? walk[walk.size() - 2] : -1;
        if (region == 0) {
            // circle the hole: best quarter-turn alignment, no backtracking
            // a move must make strictly positive circulation progress; a node
            // with no such neighbor is a dead end and the walk is resampled
            Eigen::Vector2d dir = quarter_turn(g.coords[u] - g.hole_center);
            int best = -1;
            double best_dot = 0.0;
            for (int w : g.neighbors[u]) {
                if (w == prev || g.node_region[w] != 0) continue;
                double dot = dir.dot(g.coords[w] - g.hole_center);
                if (dot > best_dot) {
                    best_dot = dot;
                    best = w;
                }
            }
            if (best < 0) return {};
            walk.push_back(best);
        } else {
            int next = -1;
            if (prev >= 0 && unif(rng) < p_curl && g.complex.dim() >= 2) {
                // shared triangles of the last two nodes
                std::vector<int> third;
                for (const auto& tri : g.complex.simplices[2]) {
                    bool has_u = false, has_p = false;
                    int other = -1;
                    for (int v : tri) {
                        if (v == u) has_u = true;
                        else if (v == prev) has_p = true;
                        else other = v;
                    }
                    if (has_u && has_p) third.push_back(other);
                }
                if (!third.empty()) {
                    int w = third[pick(rng, static_cast<int>(third.size()))];
                    if (g.node_region[w] == 1) next = w;
                }
            }
            if (next < 0) {
                std::vector<int> cand;
                for (int w : g.neighbors[u])
                    if (g.node_region[w] == 1) cand.push_back(w);
                if (cand.empty()) return {};
                next = cand[pick(rng, static_cast<int>(cand.size()))];
            }
            walk.push_back(next);
        }
    }
    return walk;
}

} // namespace

int PuncturedGrid::edge_index(int a, int b) const {
    if (a > b) std::swap(a, b);
    return complex.find({a, b});
}

PuncturedGrid gen_punctured_grid(int n, double hole_radius) {
    if (n < 6) throw ShapeError("side length must be at least 6");
    if (hole_radius < 0) throw ShapeError("negative hole radius");
    Eigen::Vector2d center((n - 1) / 2.0, (n - 1) / 2.0);
    auto inside = [&](int x, int y) {
        return (Eigen::Vector2d(x, y) - center).norm() < hole_radius;
    };
    std::vector<std::vector<std::string>> facets;
    bool removed_any = false;
    for (int x = 0; x + 1 < n; ++x)
        for (int y = 0; y + 1 < n; ++y) {
            std::vector<std::array<int, 6>> tris;
            if ((x + y) % 2 == 0) {
                tris.push_back({x, y, x + 1, y, x + 1, y + 1});
                tris.push_back({x, y, x + 1, y + 1, x, y + 1});
            } else {
                tris.push_back({x, y, x + 1, y, x, y + 1});
                tris.push_back({x + 1, y, x + 1, y + 1, x, y + 1});
            }
            for (const auto& t : tris) {
                bool drop = false;
                for (int c = 0; c < 3; ++c) {
                    if (inside(t[2 * c], t[2 * c + 1])) {
                        drop = true;
                        bool boundary = t[2 * c] == 0 || t[2 * c] == n - 1 ||
                                        t[2 * c + 1] == 0 || t[2 * c + 1] == n - 1;
                        if (boundary) throw HoleTooLarge("hole reaches the grid boundary");
                    }
                }
                if (drop) {
                    removed_any = true;
                    continue;
                }
                facets.push_back({vertex_id(t[0], t[1]), vertex_id(t[2], t[3]),
                                  vertex_id(t[4], t[5])});
            }
        }
    (void)removed_any;

    PuncturedGrid g;
    g.complex = simplicial_from_facets(facets);
    g.base = std::make_shared<const Poset>(g.complex.face_poset());
    g.hole_center = center;
    g.hole_radius = hole_radius;

    const int nv = static_cast<int>(g.complex.vertex_ids.size());
    g.coords.resize(nv);
    g.node_region.resize(nv);
    for (int v = 0; v < nv; ++v) {
        const std::string& id = g.complex.vertex_ids[v];
        int x = std::stoi(id.substr(1, 2)), y = std::stoi(id.substr(4, 2));
        g.coords[v] = Eigen::Vector2d(x, y);
        g.node_region[v] = x < center.x() ? 0 : 1;
    }
    for (const auto& tri : g.complex.simplices.size() > 2 ? g.complex.simplices[2]
                                                           : std::vector<std::vector<int>>{}) {
        Eigen::Vector2d centroid =
            (g.coords[tri[0]] + g.coords[tri[1]] + g.coords[tri[2]]) / 3.0;
        g.triangle_region.push_back(centroid.x() < center.x() ? 0 : 1);
    }

    g.neighbors.resize(nv);
    for (const auto& e : g.complex.simplices.size() > 1 ? g.complex.simplices[1]
                                                         : std::vector<std::vector<int>>{}) {
        g.neighbors[e[0]].push_back(e[1]);
        g.neighbors[e[1]].push_back(e[0]);
    }
    for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());

    // connectivity (the hole must not sever the plane)
    std::vector<char> seen(nv, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int w : g.neighbors[u])
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                q.push(w);
            }
    }
    if (reached != nv) throw HoleTooLarge("hole disconnects the grid");

    // cochain row maps against the face poset's rank ordering
    const Poset& p = *g.base;
    g.node_row.assign(nv, -1);
    {
        std::vector<int> rank0 = p.elements_of_rank(0);
        for (size_t pos = 0; pos < rank0.size(); ++pos) {
            // vertex ids coincide with poset ids at rank 0
            for (int w = 0; w < nv; ++w)
                if (g.complex.vertex_ids[w] == p.ids[rank0[pos]]) {
                    g.node_row[w] = static_cast<int>(pos);
                    break;
                }
        }
    }
    const int ne = g.complex.count(1);
    g.edge_row.assign(ne, -1);
    {
        std::vector<int> rank1 = p.elements_of_rank(1);
        for (size_t pos = 0; pos < rank1.size(); ++pos) {
            // match by simplex id
            for (int e = 0; e < ne; ++e)
                if (g.complex.simplex_id(g.complex.simplices[1][e]) == p.ids[rank1[pos]]) {
                    g.edge_row[e] = static_cast<int>(pos);
                    break;
                }
        }
    }
    return g;
}

Eigen::VectorXd encode_trajectory(const PuncturedGrid& grid, const std::vector<int>& nodes) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(grid.complex.count(1));
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        int a = nodes[i], b = nodes[i + 1];
        int e = grid.edge_index(a, b);
        if (e < 0) throw ShapeError("non-adjacent consecutive nodes");
        x[grid.edge_row[e]] += a < b ? 1.0 : -1.0;
    }
    return x;
}

TrajectoryDataset gen_trajectories(const PuncturedGrid& grid, int count_per_region,
                                   int length, double p_curl, std::uint64_t seed) {
    if (length < 2) throw ShapeError("length must be at least 2");
    TrajectoryDataset data;
    data.count_per_region = count_per_region;
    data.length = length;
    data.p_curl = p_curl;
    data.seed = seed;
    const int total = 2 * count_per_region;
    data.trajectories.resize(total);
    for (int t = 0; t < total; ++t) {
        int region = t < count_per_region ? 0 : 1;
        std::mt19937_64 rng = stream_rng(seed, static_cast<std::uint64_t>(t));
        std::vector<int> walk;
        for (int attempt = 0; attempt < 200 && walk.empty(); ++attempt)
            walk = try_walk(grid, region, length + 1, p_curl, rng);
        if (walk.empty()) throw StuckWalk("no legal walk after bounded resampling");
        Trajectory traj;
        traj.region = region;
        traj.label = walk.back();
        walk.pop_back();
        traj.nodes = std::move(walk);
        data.trajectories[t] = std::move(traj);
    }
    return data;
}

Sheaf handcrafted_sheaf(const PuncturedGrid& grid) {
    Sheaf F = constant_sheaf(grid.base, 1);
    if (grid.complex.dim() < 2) return F;
    const Poset& p = *grid.base;
    for (size_t t = 0; t < grid.complex.simplices[2].size(); ++t) {
        if (grid.triangle_region[t] != 1) continue;
        int el = p.index(grid.complex.simplex_id(grid.complex.simplices[2][t]));
        F.stalk_dim[el] = 0;
        for (int s : p.down[el]) F.restriction[{s, el}] = Eigen::MatrixXd::Zero(0, 1);
    }
    return F;
}

std::string method_name(TrajMethod m) {
    switch (m) {
        case TrajMethod::constant_nsd: return "constant-nsd";
        case TrajMethod::handcrafted_nsd: return "handcrafted-nsd";
        case TrajMethod::learned_nsd: return "learned-nsd";
        case TrajMethod::ker_handcrafted: return "ker-handcrafted";
        case TrajMethod::ker_constant: return "ker-constant";
        case TrajMethod::ker_up: return "ker-up";
        case TrajMethod::ker_down: return "ker-down";
    }
    return "unknown";
}

TrajPredictor make_predictor(std::shared_ptr<const PuncturedGrid> grid, TrajMethod method,
                             int layers, int hidden, std::uint64_t seed) {
    TrajPredictor pred;
    pred.method = method;
    pred.grid = grid;
    std::vector<int> widths = {1};
    for (int l = 0; l < layers - 1; ++l) widths.push_back(hidden);
    widths.push_back(1);

    switch (method) {
        case TrajMethod::constant_nsd: {
            auto F = std::make_shared<Sheaf>(constant_sheaf(grid->base, 1));
            pred.model = make_nsd_model(F, 1, widths, 0.5, Nonlinearity::odd_tanh,
                                        Nonlinearity::identity, seed);
            pred.model->readout = Readout::divergence;
            break;
        }
        case TrajMethod::handcrafted_nsd: {
            auto F = std::make_shared<Sheaf>(handcrafted_sheaf(*grid));
            pred.model = make_nsd_model(F, 1, widths, 0.5, Nonlinearity::odd_tanh,
                                        Nonlinearity::identity, seed);
            pred.model->readout = Readout::divergence;
            break;
        }
        case TrajMethod::learned_nsd: {
            pred.model = make_learned_nsd_model(grid->base, 1, 1, widths, 0.5,
                                                LearnerMode::general, Nonlinearity::odd_tanh,
                                                Nonlinearity::identity, seed);
            pred.model->readout = Readout::divergence;
            break;
        }
        case TrajMethod::ker_handcrafted: {
            auto F = std::make_shared<Sheaf>(handcrafted_sheaf(*grid));
            pred.kernel_projector = kernel_projector(laplacian(cellular_complex(F), 1));
            break;
        }
        case TrajMethod::ker_constant:
        case TrajMethod::ker_up:
        case TrajMethod::ker_down: {
            auto F = std::make_shared<Sheaf>(constant_sheaf(grid->base, 1));
            LaplacianKind kind = method == TrajMethod::ker_up     ? LaplacianKind::up
                                 : method == TrajMethod::ker_down ? LaplacianKind::down
                                                                  : LaplacianKind::full;
            pred.kernel_projector = kernel_projector(laplacian(cellular_complex(F), 1, kind));
            break;
        }
    }
    return pred;
}

NsdDataset to_nsd_dataset(const PuncturedGrid& grid, const TrajectoryDataset& data) {
    NsdDataset out;
    for (const Trajectory& traj : data.trajectories) {
        out.inputs.push_back(encode_trajectory(grid, traj.nodes));
        int terminal = traj.nodes.back();
        const std::vector<int>& nb = grid.neighbors[terminal];
        if (nb.empty()) throw IsolatedTerminal("terminal node has no neighbors");
        std::vector<int> rows;
        int target = -1;
        for (size_t i = 0; i < nb.size(); ++i) {
            rows.push_back(grid.node_row[nb[i]]);
            if (nb[i] == traj.label) target = static_cast<int>(i);
        }
        if (target < 0) throw ShapeError("label is not a neighbor of the terminal node");
        out.candidates.push_back(rows);
        out.targets.push_back(target);
    }
    return out;
}

TrainLog fit_predictor(TrajPredictor& pred, const TrajectoryDataset& data,
                       const std::vector<int>& train_indices, const TrainConfig& config) {
    if (!pred.model) return {};
    NsdDataset full = to_nsd_dataset(*pred.grid, data);
    NsdDataset sub;
    for (int i : train_indices) {
        sub.inputs.push_back(full.inputs[i]);
        sub.candidates.push_back(full.candidates[i]);
        sub.targets.push_back(full.targets[i]);
    }
    return train(*pred.model, sub, config);
}

Eigen::VectorXd predict_next(const TrajPredictor& pred, const Trajectory& traj) {
    const PuncturedGrid& g = *pred.grid;
    int terminal = traj.nodes.back();
    const std::vector<int>& nb = g.neighbors[terminal];
    if (nb.empty()) throw IsolatedTerminal("terminal node has no neighbors");
    Eigen::VectorXd x = encode_trajectory(g, traj.nodes);
    Eigen::VectorXd z(nb.size());
    if (pred.model) {
        std::vector<int> rows;
        for (int v : nb) rows.push_back(g.node_row[v]);
        z = nsd_scores(*pred.model, x, rows);
    } else {
        Eigen::VectorXd proj = pred.kernel_projector * x;
        for (size_t i = 0; i < nb.size(); ++i) {
            int e = g.edge_index(terminal, nb[i]);
            double orient = terminal < nb[i] ? 1.0 : -1.0;
            z[static_cast<long>(i)] = orient * proj[g.edge_row[e]];
        }
    }
    Eigen::VectorXd probs = (z.array() - z.maxCoeff()).exp();
    return probs / probs.sum();
}

void split_dataset(const TrajectoryDataset& data, std::uint64_t split_seed,
                   std::vector<int>& train, std::vector<int>& test) {
    train.clear();
    test.clear();
    for (int region = 0; region < 2; ++region) {
        std::vector<int> idx;
        for (size_t i = 0; i < data.trajectories.size(); ++i)
            if (data.trajectories[i].region == region) idx.push_back(static_cast<int>(i));
        std::mt19937_64 rng = stream_rng(split_seed, 0xb007 + static_cast<unsigned>(region));
        std::shuffle(idx.begin(), idx.end(), rng);
        size_t n_train = idx.size() - idx.size() / 5;
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train : test).push_back(idx[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
}

EvalReport evaluate(std::shared_ptr<const PuncturedGrid> grid, const TrajectoryDataset& data,
                    const std::vector<TrajMethod>& methods, std::uint64_t split_seed,
                    const TrainConfig& config) {
    EvalReport report;
    split_dataset(data, split_seed, report.train_indices, report.test_indices);
    for (size_t mi = 0; mi < methods.size(); ++mi) {
        TrajPredictor pred =
            make_predictor(grid, methods[mi], 4, 32, config.seed + 17 * mi);
        fit_predictor(pred, data, report.train_indices, config);
        int correct[2] = {0, 0}, total[2] = {0, 0};
        for (int i : report.test_indices) {
            const Trajectory& traj = data.trajectories[i];
            Eigen::VectorXd probs = predict_next(pred, traj);
            int arg = 0;
            probs.maxCoeff(&arg);
            const std::vector<int>& nb = grid->neighbors[traj.nodes.back()];
            ++total[traj.region];
            if (nb[arg] == traj.label) ++correct[traj.region];
        }
        EvalRow row;
        row.method = method_name(methods[mi]);
        row.harmonic = total[0] ? static_cast<double>(correct[0]) / total[0] : 0;
        row.curl = total[1] ? static_cast<double>(correct[1]) / total[1] : 0;
        int tot = total[0] + total[1];
        row.overall = tot ? static_cast<double>(correct[0] + correct[1]) / tot : 0;
        report.rows.push_back(row);
    }
    return report;
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "method,overall,harmonic,curl\n";
    os.precision(6);
    os << std::fixed;
    for (const EvalRow& r : report.rows)
        os << r.method << "," << r.overall << "," << r.harmonic << "," << r.curl << "\n";
    return os.str();
}

} // namespace sheaflab
