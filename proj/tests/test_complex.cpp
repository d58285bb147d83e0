#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sheaflab/complex.hpp"
#include "sheaflab/spectral.hpp"
#include "test_support.hpp"

using namespace sheaflab;
using namespace sheaflab::testing;

// Single edge with 1-dim stalks and restrictions 2 (from u) and 3 (from v).
static std::shared_ptr<Sheaf> weighted_edge_sheaf() {
    auto base = graph_poset(2, {{0, 1}});
    auto F = std::make_shared<Sheaf>(constant_sheaf(base, 1));
    F->restriction[{base->index(node_id(0)), base->index(edge_id(0, 1))}](0, 0) = 2.0;
    F->restriction[{base->index(node_id(1)), base->index(edge_id(0, 1))}](0, 0) = 3.0;
    return F;
}

TEST_CASE("Roos complex of the single edge") {
    auto F = weighted_edge_sheaf();
    CochainComplex cx = roos_complex(F);
    CHECK(cx.dim_at(0) == 3); // u, v, e stalks
    CHECK(cx.dim_at(1) == 2); // chains u<e and v<e
    // columns ordered by sorted element id: e, u, v
    const Poset& p = F->poset();
    int ce = cx.summands[0][0].offset; // element "e..." sorts first
    CHECK(p.ids[cx.summands[0][0].element] == edge_id(0, 1));
    Eigen::MatrixXd d0 = cx.coboundary(0);
    // rows: chains (u<e), (v<e); d x = (x_e - 2 x_u, x_e - 3 x_v)
    Eigen::MatrixXd expect(2, 3);
    expect << 1, -2, 0, 1, 0, -3;
    (void)ce;
    CHECK((d0 - expect).norm() == 0);
}

TEST_CASE("Roos complex of an antichain has zero coboundary") {
    auto base = graph_poset(4, {});
    auto F = std::make_shared<Sheaf>(constant_sheaf(base, 2));
    CochainComplex cx = roos_complex(F);
    CHECK(cx.gradings() == 1);
    CHECK(cx.dim_at(0) == 8);
    CHECK(cx.coboundary(0).rows() == 0);
}

TEST_CASE("Roos complex of a hypergraph stacks edge stalks per incidence") {
    // one 3-node hyperedge and one 2-node hyperedge
    Poset p = build_poset({"a0", "a1", "a2", "b0", "b1"},
                          {{"a0", "b0"}, {"a1", "b0"}, {"a2", "b0"}, {"a1", "b1"}, {"a2", "b1"}});
    auto F = std::make_shared<Sheaf>(constant_sheaf(std::make_shared<Poset>(p), 2));
    CochainComplex cx = roos_complex(F);
    CHECK(cx.dim_at(0) == 10);    // 5 stalks of width 2
    CHECK(cx.dim_at(1) == 5 * 2); // one F(b) summand per incidence pair
}

TEST_CASE("cellular complex of the single edge") {
    auto F = weighted_edge_sheaf();
    CochainComplex cx = cellular_complex(F);
    CHECK(cx.dim_at(0) == 2);
    CHECK(cx.dim_at(1) == 1);
    Eigen::MatrixXd d0 = cx.coboundary(0);
    // d x = F(v<e) x_v - F(u<e) x_u with the edge oriented u -> v
    Eigen::MatrixXd expect(1, 2);
    expect << -2, 3;
    CHECK((d0 - expect).norm() == 0);
}

TEST_CASE("constant sheaf coboundary is the signed incidence matrix") {
    std::mt19937_64 rng(2);
    auto edges = random_connected_edges(7, 5, rng);
    auto base = graph_poset(7, edges);
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    // Laplacian = D - A exactly
    Eigen::MatrixXd L = laplacian(cx, 0);
    Eigen::MatrixXd DA = Eigen::MatrixXd::Zero(7, 7);
    for (auto& [i, j] : edges) {
        DA(i, i) += 1;
        DA(j, j) += 1;
        DA(i, j) -= 1;
        DA(j, i) -= 1;
    }
    CHECK((L - DA).norm() == 0);
}

TEST_CASE("hollow triangle has a one-dimensional degree-1 kernel") {
    auto base =
        std::make_shared<Poset>(simplicial_from_facets({{"0", "1"}, {"1", "2"}, {"0", "2"}})
                                    .face_poset());
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    CHECK(betti(cx, 1) == 1);
}

TEST_CASE("hypergraph posets are rejected by the cellular flavor") {
    Poset p = build_poset({"a0", "a1", "a2", "b0"}, {{"a0", "b0"}, {"a1", "b0"}, {"a2", "b0"}});
    auto F = std::make_shared<Sheaf>(constant_sheaf(std::make_shared<Poset>(p), 1));
    CHECK_THROWS_AS(cellular_complex(F), NotCellPoset);
}

TEST_CASE("Laplacian flavors: full = up + down, k=0 down vanishes") {
    auto base = std::make_shared<Poset>(
        simplicial_from_facets({{"0", "1", "2"}, {"1", "2", "3"}}).face_poset());
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    for (int k = 0; k < cx.gradings(); ++k) {
        Eigen::MatrixXd full = laplacian(cx, k);
        Eigen::MatrixXd up = laplacian(cx, k, LaplacianKind::up);
        Eigen::MatrixXd down = laplacian(cx, k, LaplacianKind::down);
        CHECK((full - up - down).norm() < 1e-14);
        EigSym eig = eig_sym(full);
        CHECK(eig.values.minCoeff() > -1e-9);
    }
    CHECK(laplacian(cx, 0, LaplacianKind::down).norm() == 0);
}

TEST_CASE("P2 constant sheaf Laplacian and normalized range") {
    auto base = graph_poset(2, {{0, 1}});
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    Eigen::MatrixXd L = laplacian(cx, 0);
    Eigen::MatrixXd expect(2, 2);
    expect << 1, -1, -1, 1;
    CHECK((L - expect).norm() == 0);

    std::mt19937_64 rng(9);
    auto big = graph_poset(8, random_connected_edges(8, 6, rng));
    auto bigcx = cellular_complex(std::make_shared<Sheaf>(random_graph_sheaf(big, 3, rng)));
    // the [0,2] range is a degree-0 statement (Laplacian dominated by twice
    // its block diagonal)
    EigSym eig = eig_sym(laplacian(bigcx, 0, LaplacianKind::normalized));
    CHECK(eig.values.minCoeff() > -1e-9);
    CHECK(eig.values.maxCoeff() < 2.0 + 1e-9);
}

TEST_CASE("Euclidean structure gives M-self-adjoint Laplacians") {
    std::mt19937_64 rng(21);
    auto base = graph_poset(5, random_connected_edges(5, 3, rng));
    auto F = std::make_shared<Sheaf>(random_graph_sheaf(base, 2, rng));
    EuclideanStructure E;
    for (int i = 0; i < base->n(); ++i) {
        Eigen::MatrixXd A = random_matrix(F->dim(i), F->dim(i), rng);
        E.inner.push_back(A * A.transpose() +
                          Eigen::MatrixXd::Identity(F->dim(i), F->dim(i)));
    }
    validate_euclidean(E, *F);
    auto cx = cellular_complex(F);
    for (int k = 0; k <= 1; ++k) {
        Eigen::MatrixXd L = laplacian(cx, k, LaplacianKind::full, &E);
        // assemble the grading-k inner product to check M-self-adjointness
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(cx.dim_at(k), cx.dim_at(k));
        for (auto& s : cx.summands[k])
            M.block(s.offset, s.offset, s.dim, s.dim) = E.inner[s.element];
        CHECK((M * L - (M * L).transpose()).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("hypergraph Laplacian halves the cellular graph Laplacian") {
    std::mt19937_64 rng(4);
    auto base = graph_poset(6, random_connected_edges(6, 4, rng));
    auto F = std::make_shared<Sheaf>(random_graph_sheaf(base, 2, rng));
    Eigen::MatrixXd L_duta = duta_laplacian(*F);
    auto cx = cellular_complex(F);
    Eigen::MatrixXd L_cell = laplacian(cx, 0);
    CHECK((L_duta - 0.5 * L_cell).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hypergraph Laplacian kernel = global sections") {
    // two overlapping hyperedges with random restrictions
    Poset p = build_poset({"a0", "a1", "a2", "a3", "b0", "b1"},
                          {{"a0", "b0"}, {"a1", "b0"}, {"a2", "b0"},
                           {"a1", "b1"}, {"a2", "b1"}, {"a3", "b1"}});
    auto base = std::make_shared<Poset>(p);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        Sheaf F = random_graph_sheaf(base, 2, rng);
        Eigen::MatrixXd L = duta_laplacian(F);
        EigSym eig = eig_sym(L);
        double tol = default_kernel_tol(L, eig.values);
        int kdim = 0;
        for (int i = 0; i < eig.values.size(); ++i)
            if (eig.values[i] <= tol) ++kdim;
        CHECK(kdim == global_sections(F).cols());
    }
}

TEST_CASE("single constant hyperedge keeps constants in the kernel") {
    Poset p = build_poset({"a0", "a1", "a2", "b0"}, {{"a0", "b0"}, {"a1", "b0"}, {"a2", "b0"}});
    auto F = constant_sheaf(std::make_shared<Poset>(p), 1);
    Eigen::MatrixXd L = duta_laplacian(F);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    CHECK((L * ones).norm() < 1e-12);
    EigSym eig = eig_sym(L);
    int kdim = 0;
    for (int i = 0; i < eig.values.size(); ++i)
        if (eig.values[i] <= 1e-10) ++kdim;
    CHECK(kdim == 1);
}

TEST_CASE("Dirichlet energy: constants, eigenvectors, split terms") {
    auto base = std::make_shared<Poset>(
        simplicial_from_facets({{"0", "1", "2"}}).face_poset());
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(cx.dim_at(0));
    CHECK(dirichlet_energy(cx, 0, ones).total == doctest::Approx(0.0));

    // two triangles sharing an edge: the degree-1 spectrum has simple
    // non-harmonic eigenvalues, exercising the split-term statement
    auto base2 = std::make_shared<Poset>(
        simplicial_from_facets({{"0", "1", "2"}, {"1", "2", "3"}}).face_poset());
    cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base2, 1)));
    for (int k = 0; k < cx.gradings(); ++k) {
        EigSym eig = eig_sym(laplacian(cx, k));
        for (int i = 0; i < eig.values.size(); ++i) {
            DirichletEnergy q = dirichlet_energy(cx, k, eig.vectors.col(i));
            CHECK(q.total == doctest::Approx(eig.values[i]).epsilon(1e-9));
            bool simple = (i == 0 || eig.values[i] - eig.values[i - 1] > 1e-8) &&
                          (i + 1 == eig.values.size() ||
                           eig.values[i + 1] - eig.values[i] > 1e-8);
            if (eig.values[i] > 1e-8 && simple) {
                // a simple non-harmonic eigenvector is pure up or pure down
                CHECK(std::min(q.up, q.down) < 1e-10 * std::max(1.0, q.total));
            }
        }
    }
}

TEST_CASE("vector calculus operators on the full triangle") {
    auto base = std::make_shared<Poset>(
        simplicial_from_facets({{"0", "1", "2"}}).face_poset());
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    VectorCalculus ops = vector_calculus(cx);

    // locally constant node signal has zero gradient
    CHECK((ops.grad * Eigen::VectorXd::Ones(3)).norm() == 0);

    // the oriented boundary flow is divergence-free with unit circulation
    Eigen::VectorXd z(3); // edges sorted: [0,1], [0,2], [1,2]
    z << 1, -1, 1;
    CHECK((ops.div * z).norm() == 0);
    CHECK((ops.curl * (z / 3.0))(0) == doctest::Approx(1.0));

    // curl of a gradient vanishes
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd x = random_vector(3, rng);
        CHECK((ops.curl * ops.grad * x).norm() < 1e-14);
    }
}

TEST_CASE("Roos and cellular Betti numbers agree on cell posets") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        auto base = graph_poset(5, random_connected_edges(5, 3, rng));
        auto F = std::make_shared<Sheaf>(random_graph_sheaf(base, 2, rng));
        auto roos = roos_complex(F);
        auto cell = cellular_complex(F);
        for (int k = 0; k <= 1; ++k) CHECK(betti(roos, k) == betti(cell, k));
        // d o d = 0 in both flavors
        for (int k = 0; k + 1 < roos.gradings(); ++k) {
            Eigen::MatrixXd dd = roos.coboundary(k + 1) * roos.coboundary(k);
            if (dd.size()) CHECK(dd.cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}
