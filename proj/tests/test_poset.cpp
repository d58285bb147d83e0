#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sheaflab/poset.hpp"

using namespace sheaflab;

TEST_CASE("single-edge poset: elements, coverings, closure") {
    Poset p = build_poset({"u", "v", "e"}, {{"u", "e"}, {"v", "e"}});
    CHECK(p.n() == 3);
    CHECK(p.coverings.size() == 2);
    CHECK(p.less(p.index("u"), p.index("e")));
    CHECK(p.less(p.index("v"), p.index("e")));
    CHECK(!p.less(p.index("u"), p.index("v")));
    CHECK(p.graded());
    CHECK(p.rank[p.index("u")] == 0);
    CHECK(p.rank[p.index("v")] == 0);
    CHECK(p.rank[p.index("e")] == 1);
}

TEST_CASE("trivial one-element poset") {
    Poset p = build_poset({"a"}, {});
    CHECK(p.n() == 1);
    CHECK(p.coverings.empty());
    CHECK(p.rank[0] == 0);
}

TEST_CASE("two-cycle raises CycleError") {
    CHECK_THROWS_AS(build_poset({"a", "b"}, {{"a", "b"}, {"b", "a"}}), CycleError);
}

TEST_CASE("inconsistent chain lengths are not gradable") {
    Poset p = build_poset({"a", "b", "c"}, {{"a", "c"}, {"a", "b"}, {"b", "c"}});
    CHECK(!p.graded());
    CHECK_THROWS_AS(grade(p), NotGradable);
}

TEST_CASE("triangle face poset is graded by dimension") {
    SimplicialComplex X = simplicial_from_facets({{"0", "1", "2"}});
    CHECK(X.count(0) == 3);
    CHECK(X.count(1) == 3);
    CHECK(X.count(2) == 1);
    Poset p = X.face_poset();
    CHECK(p.n() == 7);
    for (int i = 0; i < p.n(); ++i)
        CHECK(p.rank[i] == static_cast<int>(p.simplex_vertices[i].size()) - 1);
}

TEST_CASE("hollow triangle has six simplices and no 2-simplex") {
    SimplicialComplex X = simplicial_from_facets({{"0", "1"}, {"1", "2"}, {"0", "2"}});
    CHECK(X.dim() == 1);
    CHECK(X.count(0) == 3);
    CHECK(X.count(1) == 3);
}

TEST_CASE("order complex of the single-edge poset") {
    Poset p = build_poset({"u", "v", "e"}, {{"u", "e"}, {"v", "e"}});
    SimplicialComplex oc = order_complex(p);
    CHECK(oc.count(0) == 3);
    CHECK(oc.count(1) == 2); // {u<e}, {v<e}
    CHECK(oc.dim() == 1);
}

TEST_CASE("order complex of an antichain has n faces") {
    Poset p = build_poset({"a", "b", "c", "d"}, {});
    SimplicialComplex oc = order_complex(p);
    CHECK(oc.dim() == 0);
    CHECK(oc.count(0) == 4);
}

TEST_CASE("order complex of a 3-chain is the full 2-simplex") {
    Poset p = build_poset({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}});
    SimplicialComplex oc = order_complex(p);
    CHECK(oc.count(0) + oc.count(1) + oc.count(2) == 7);
}

TEST_CASE("incidence numbers follow the alternating-sum convention") {
    // chain {u < e} against its codimension-1 subchains
    CHECK(incidence_number({0, 2}, {0}) == -1); // remove position 1
    CHECK(incidence_number({0, 2}, {2}) == 1);  // remove position 0
    // middle vertex of a triangle
    CHECK(incidence_number({0, 1, 2}, {0, 2}) == -1);
    CHECK(incidence_number({0, 1, 2}, {1, 2}) == 1);
    CHECK(incidence_number({0, 1, 2}, {0, 1}) == 1);
    // unrelated tuple
    CHECK(incidence_number({0, 1, 2}, {0, 3}) == 0);
    CHECK_THROWS_AS(incidence_number({0, 1}, {0, 1}), DimensionError);
}

TEST_CASE("boundary-of-boundary sign identity on small complexes") {
    SimplicialComplex X = simplicial_from_facets({{"0", "1", "2", "3"}, {"2", "3", "4"}});
    for (int d = 2; d <= X.dim(); ++d)
        for (auto& sigma : X.simplices[d])
            for (auto& tau : X.simplices[d - 2]) {
                int total = 0;
                for (auto& rho : X.simplices[d - 1])
                    total += incidence_number(sigma, rho) * incidence_number(rho, tau);
                CHECK(total == 0);
            }
}

TEST_CASE("every maximal descending chain has length rank") {
    SimplicialComplex X = simplicial_from_facets({{"0", "1", "2"}, {"1", "2", "3"}});
    Poset p = X.face_poset();
    auto chains = chains_by_dim(p);
    for (auto& level : chains)
        for (auto& c : level) {
            // a chain of coverings is maximal iff successive ranks differ by 1
            bool covering_chain = true;
            for (size_t i = 0; i + 1 < c.size(); ++i)
                if (p.rank[c[i + 1]] != p.rank[c[i]] + 1) covering_chain = false;
            if (covering_chain && p.rank[c.front()] == 0)
                CHECK(static_cast<int>(c.size()) - 1 == p.rank[c.back()] - p.rank[c.front()]);
        }
}
