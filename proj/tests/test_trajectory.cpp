#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sheaflab/errors.hpp"
#include "sheaflab/spectral.hpp"
#include "sheaflab/trajectory.hpp"
#include "test_support.hpp"

using namespace sheaflab;
using namespace sheaflab::testing;

namespace {

int grid_betti(const PuncturedGrid& g, int k) {
    auto F = std::make_shared<Sheaf>(constant_sheaf(g.base, 1));
    return betti(cellular_complex(F), k);
}

// Minimal hand-built grid over a path v0 - v1 - v2 for edge-case predictions.
PuncturedGrid path_grid() {
    PuncturedGrid g;
    g.complex = simplicial_from_facets({{"v00_00", "v01_00"}, {"v01_00", "v02_00"}});
    g.base = std::make_shared<const Poset>(g.complex.face_poset());
    const int nv = 3;
    g.coords = {{0, 0}, {1, 0}, {2, 0}};
    g.hole_center = {1, 0};
    g.node_region.assign(nv, 0);
    g.neighbors = {{1}, {0, 2}, {1}};
    const Poset& p = *g.base;
    g.node_row.assign(nv, -1);
    std::vector<int> rank0 = p.elements_of_rank(0);
    for (size_t pos = 0; pos < rank0.size(); ++pos)
        for (int w = 0; w < nv; ++w)
            if (g.complex.vertex_ids[w] == p.ids[rank0[pos]])
                g.node_row[w] = static_cast<int>(pos);
    std::vector<int> rank1 = p.elements_of_rank(1);
    g.edge_row.assign(g.complex.count(1), -1);
    for (size_t pos = 0; pos < rank1.size(); ++pos)
        for (int e = 0; e < g.complex.count(1); ++e)
            if (g.complex.simplex_id(g.complex.simplices[1][e]) == p.ids[rank1[pos]])
                g.edge_row[e] = static_cast<int>(pos);
    return g;
}

double walk_winding(const PuncturedGrid& g, const std::vector<int>& nodes) {
    double total = 0;
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        Eigen::Vector2d a = g.coords[nodes[i]] - g.hole_center;
        Eigen::Vector2d b = g.coords[nodes[i + 1]] - g.hole_center;
        total += std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b));
    }
    return total;
}

} // namespace

TEST_CASE("punctured grid has one component and one hole") {
    PuncturedGrid g = gen_punctured_grid(12, 1.5);
    CHECK(grid_betti(g, 0) == 1);
    CHECK(grid_betti(g, 1) == 1);
    // regions partition triangles and nodes
    int h = 0, c = 0;
    for (int r : g.triangle_region) (r == 0 ? h : c)++;
    CHECK(h > 0);
    CHECK(c > 0);
    CHECK(h + c == g.complex.count(2));
    CHECK(g.triangle_region.size() == static_cast<size_t>(g.complex.count(2)));
    for (size_t t = 0; t < g.triangle_region.size(); ++t) {
        const auto& tri = g.complex.simplices[2][t];
        Eigen::Vector2d centroid =
            (g.coords[tri[0]] + g.coords[tri[1]] + g.coords[tri[2]]) / 3.0;
        CHECK(g.triangle_region[t] == (centroid.x() < g.hole_center.x() ? 0 : 1));
    }
    // every surviving triangle avoids the hole
    for (const auto& tri : g.complex.simplices[2])
        for (int v : tri) CHECK((g.coords[v] - g.hole_center).norm() >= g.hole_radius);
}

TEST_CASE("zero radius keeps the grid contractible") {
    PuncturedGrid g = gen_punctured_grid(8, 0.0);
    CHECK(grid_betti(g, 0) == 1);
    CHECK(grid_betti(g, 1) == 0);
    CHECK(g.complex.count(2) == 2 * 7 * 7);
    CHECK(g.complex.count(0) == 64);
}

TEST_CASE("oversized or boundary-reaching holes are rejected") {
    CHECK_THROWS_AS(gen_punctured_grid(8, 4.0), HoleTooLarge);
    CHECK_THROWS_AS(gen_punctured_grid(5, 1.0), ShapeError);
}

TEST_CASE("trajectory encoding sums oriented edges and negates on reversal") {
    PuncturedGrid g = gen_punctured_grid(12, 1.5);
    std::vector<int> walk = {g.neighbors[0][0], 0, g.neighbors[0][1]};
    Eigen::VectorXd x = encode_trajectory(g, walk);
    CHECK(x.cwiseAbs().sum() == doctest::Approx(2.0)); // two distinct edges
    for (int i = 0; i < x.size(); ++i)
        CHECK((x[i] == 0.0 || std::abs(x[i]) == 1.0));
    std::vector<int> rev(walk.rbegin(), walk.rend());
    CHECK((encode_trajectory(g, rev) + x).norm() == 0.0);
    CHECK_THROWS_AS(encode_trajectory(g, {0, g.complex.count(0) - 1}), ShapeError);
}

TEST_CASE("generated dataset matches the configured size and adjacency rules") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajectoryDataset data = gen_trajectories(*grid, 250, 10, 0.8, 7);
    REQUIRE(data.trajectories.size() == 500);
    for (const Trajectory& t : data.trajectories) {
        CHECK(t.nodes.size() == 10);
        for (size_t i = 0; i + 1 < t.nodes.size(); ++i)
            CHECK(grid->edge_index(t.nodes[i], t.nodes[i + 1]) >= 0);
        // region confinement of the walk itself
        for (int v : t.nodes) CHECK(grid->node_region[v] == t.region);
        // label is a neighbor of the terminal
        const auto& nb = grid->neighbors[t.nodes.back()];
        CHECK(std::find(nb.begin(), nb.end(), t.label) != nb.end());
        if (t.region == 0) {
            // no immediate backtracking in circling walks
            for (size_t i = 0; i + 2 < t.nodes.size(); ++i)
                CHECK(t.nodes[i] != t.nodes[i + 2]);
        }
    }
    // first 250 harmonic, last 250 curl
    for (int i = 0; i < 250; ++i) CHECK(data.trajectories[i].region == 0);
    for (int i = 250; i < 500; ++i) CHECK(data.trajectories[i].region == 1);
}

TEST_CASE("circling walks wind positively around the hole on average") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajectoryDataset data = gen_trajectories(*grid, 250, 10, 0.8, 11);
    double total = 0;
    for (int i = 0; i < 250; ++i)
        total += walk_winding(*grid, data.trajectories[i].nodes);
    CHECK(total / 250 > 0.0);
}

TEST_CASE("generation is reproducible and degenerates gracefully") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajectoryDataset a = gen_trajectories(*grid, 20, 10, 0.8, 3);
    TrajectoryDataset b = gen_trajectories(*grid, 20, 10, 0.8, 3);
    for (size_t i = 0; i < a.trajectories.size(); ++i) {
        CHECK(a.trajectories[i].nodes == b.trajectories[i].nodes);
        CHECK(a.trajectories[i].label == b.trajectories[i].label);
    }
    // p_curl = 0: plain region-confined random walks still work
    TrajectoryDataset c = gen_trajectories(*grid, 5, 10, 0.0, 3);
    CHECK(c.trajectories.size() == 10);
    CHECK_THROWS_AS(gen_trajectories(*grid, 1, 1, 0.8, 3), ShapeError);
}

TEST_CASE("handcrafted sheaf emulates the down Laplacian over the curl region") {
    PuncturedGrid g = gen_punctured_grid(12, 1.5);
    auto Fh = std::make_shared<Sheaf>(handcrafted_sheaf(g));
    auto Fc = std::make_shared<Sheaf>(constant_sheaf(g.base, 1));
    auto cxh = cellular_complex(Fh);
    auto cxc = cellular_complex(Fc);
    Eigen::MatrixXd lap_h = laplacian(cxh, 1, LaplacianKind::full);
    Eigen::MatrixXd down = laplacian(cxc, 1, LaplacianKind::down);
    Eigen::MatrixXd up_c = laplacian(cxc, 1, LaplacianKind::up);

    // down parts agree exactly; the up part only sees harmonic triangles
    CHECK((laplacian(cxh, 1, LaplacianKind::down) - down).norm() == 0.0);
    Eigen::MatrixXd up_h = lap_h - down;

    // an edge all of whose incident triangles are in the curl region is
    // untouched by the up term; edges of harmonic triangles keep the full one
    std::vector<int> edge_tri_region(g.complex.count(1), -1); // -1 none, 0/1/2 mix
    for (size_t t = 0; t < g.triangle_region.size(); ++t) {
        const auto& tri = g.complex.simplices[2][t];
        std::vector<std::vector<int>> edges = {
            {tri[0], tri[1]}, {tri[0], tri[2]}, {tri[1], tri[2]}};
        for (auto& e : edges) {
            int ei = g.complex.find(e);
            int& r = edge_tri_region[ei];
            if (r == -1) r = g.triangle_region[t];
            else if (r != g.triangle_region[t]) r = 2;
        }
    }
    int pure_curl = 0, pure_harm = 0;
    for (int e = 0; e < g.complex.count(1); ++e) {
        int row = g.edge_row[e];
        if (edge_tri_region[e] == 1) {
            ++pure_curl;
            CHECK(up_h.row(row).norm() == 0.0);
            CHECK(up_h.col(row).norm() == 0.0);
        }
        if (edge_tri_region[e] == 0) {
            ++pure_harm;
            CHECK((up_h.row(row) - up_c.row(row)).norm() == 0.0);
        }
    }
    CHECK(pure_curl > 0);
    CHECK(pure_harm > 0);
}

TEST_CASE("single-neighbor terminals get all the probability mass") {
    auto g = std::make_shared<const PuncturedGrid>(path_grid());
    TrajPredictor pred = make_predictor(g, TrajMethod::ker_constant);
    Trajectory traj;
    traj.nodes = {1, 0};
    Eigen::VectorXd probs = predict_next(pred, traj);
    REQUIRE(probs.size() == 1);
    CHECK(probs[0] == doctest::Approx(1.0));

    PuncturedGrid isolated = path_grid();
    isolated.neighbors[0].clear();
    TrajPredictor pred2 =
        make_predictor(std::make_shared<const PuncturedGrid>(isolated), TrajMethod::ker_constant);
    CHECK_THROWS_AS(predict_next(pred2, traj), IsolatedTerminal);
}

TEST_CASE("kernel projection through a trivial harmonic space is uniform") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(8, 0.0));
    TrajPredictor pred = make_predictor(grid, TrajMethod::ker_constant);
    CHECK(pred.kernel_projector.norm() < 1e-9); // contractible: no harmonic 1-forms
    TrajectoryDataset data = gen_trajectories(*grid, 5, 6, 0.8, 5);
    for (const Trajectory& t : data.trajectories) {
        Eigen::VectorXd probs = predict_next(pred, t);
        CHECK((probs.array() - 1.0 / probs.size()).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("handcrafted kernel keeps circulation signal from curly walks") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajPredictor hand = make_predictor(grid, TrajMethod::ker_handcrafted);
    TrajPredictor full = make_predictor(grid, TrajMethod::ker_constant);
    TrajectoryDataset data = gen_trajectories(*grid, 30, 10, 0.8, 13);
    double hand_norm = 0, full_norm = 0;
    for (int i = 30; i < 60; ++i) {
        Eigen::VectorXd x = encode_trajectory(*grid, data.trajectories[i].nodes);
        hand_norm += (hand.kernel_projector * x).norm();
        full_norm += (full.kernel_projector * x).norm();
    }
    CHECK(hand_norm / 30 > 0.1);       // circulation survives
    CHECK(hand_norm > 2 * full_norm);  // far more than the plain harmonic part
}

TEST_CASE("train test split is stratified, disjoint, and deterministic") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajectoryDataset data = gen_trajectories(*grid, 25, 8, 0.8, 17);
    std::vector<int> train, test;
    split_dataset(data, 5, train, test);
    CHECK(train.size() == 40);
    CHECK(test.size() == 10);
    int test_h = 0;
    for (int i : test)
        if (data.trajectories[i].region == 0) ++test_h;
    CHECK(test_h == 5);
    std::set<int> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 50);
    std::vector<int> train2, test2;
    split_dataset(data, 5, train2, test2);
    CHECK(train == train2);
    CHECK(test == test2);
}

TEST_CASE("small evaluation runs every method reproducibly") {
    auto grid = std::make_shared<const PuncturedGrid>(gen_punctured_grid(12, 1.5));
    TrajectoryDataset data = gen_trajectories(*grid, 15, 10, 0.8, 19);
    std::vector<TrajMethod> methods = {
        TrajMethod::constant_nsd, TrajMethod::handcrafted_nsd, TrajMethod::learned_nsd,
        TrajMethod::ker_handcrafted, TrajMethod::ker_constant, TrajMethod::ker_up,
        TrajMethod::ker_down};
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 1e-2;
    cfg.batch = 8;
    cfg.seed = 21;
    EvalReport rep = evaluate(grid, data, methods, 23, cfg);
    REQUIRE(rep.rows.size() == methods.size());
    for (size_t i = 0; i < methods.size(); ++i) {
        CHECK(rep.rows[i].method == method_name(methods[i]));
        for (double a : {rep.rows[i].overall, rep.rows[i].harmonic, rep.rows[i].curl}) {
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
        }
    }
    std::string csv = report_csv(rep);
    CHECK(csv.rfind("method,overall,harmonic,curl\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(methods.size()));

    EvalReport rep2 = evaluate(grid, data, methods, 23, cfg);
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].overall == rep2.rows[i].overall);
        CHECK(rep.rows[i].harmonic == rep2.rows[i].harmonic);
        CHECK(rep.rows[i].curl == rep2.rows[i].curl);
    }
}
