#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sheaflab/errors.hpp"

namespace sheaflab {

// A chain s_0 < s_1 < ... < s_j, stored as element indices in ascending poset
// order. Its dimension is j and its maximal element is chain.back().
using Chain = std::vector<int>;

// Finite poset stored as covering relations plus the transitive closure.
// Element ids are strings; the dense integer index of an element is its
// position in the sorted id list, so matrix layouts are reproducible.
struct Poset {
    std::vector<std::string> ids; // sorted ascending; index = position
    std::unordered_map<std::string, int> index_of;
    std::vector<std::pair<int, int>> coverings; // (lower, upper), sorted
    std::vector<std::vector<int>> up;           // up[s]   = { t : s covered-by t }
    std::vector<std::vector<int>> down;         // down[t] = { s : s covered-by t }
    std::vector<std::vector<bool>> lt;          // lt[a][b] iff a < b strictly
    std::vector<int> rank;                      // empty until graded

    // When the poset is the face poset of a simplicial complex, each element
    // carries its ordered vertex list (used for incidence signs); else empty.
    std::vector<std::vector<int>> simplex_vertices;

    int n() const { return static_cast<int>(ids.size()); }
    bool less(int a, int b) const { return lt[a][b]; }
    bool leq(int a, int b) const { return a == b || lt[a][b]; }
    int index(const std::string& id) const;
    bool graded() const { return !rank.empty(); }
    int max_rank() const;
    std::vector<int> elements_of_rank(int r) const;
    bool has_simplex_structure() const { return !simplex_vertices.empty(); }
};

// Builds the poset from declared covering relations: computes the transitive
// closure, verifies antisymmetry, and grades the poset when a consistent rank
// function exists (rank is left empty otherwise; call grade() to get the
// reason).
Poset build_poset(const std::vector<std::string>& elements,
                  const std::vector<std::pair<std::string, std::string>>& coverings);

// Rank function per the maximal-descending-chain rule: minimal elements have
// rank 0 and every covering raises rank by exactly 1. Throws NotGradable when
// the declared coverings force inconsistent ranks.
std::vector<int> grade(const Poset& p);

// All chains of the poset, grouped by dimension (chain length - 1).
// Deterministic order: lexicographic in element indices within each dimension.
std::vector<std::vector<Chain>> chains_by_dim(const Poset& p);

// Abstract simplicial complex. Simplices are ordered vertex-index lists into
// vertex_ids; the stored order fixes the orientation. For complexes built from
// facets the order is ascending vertex index (lexicographic in ids); for order
// complexes it is the chain order.
struct SimplicialComplex {
    std::vector<std::string> vertex_ids;
    std::vector<std::vector<std::vector<int>>> simplices; // [dim][i] = vertex list

    int dim() const { return static_cast<int>(simplices.size()) - 1; }
    int count(int d) const;
    std::string simplex_id(const std::vector<int>& verts) const;
    // Index of a simplex within its dimension, or -1 if absent.
    int find(const std::vector<int>& verts) const;
    // The face poset: one element per simplex, coverings = codimension-1
    // containment, graded by dimension, simplex vertex lists attached.
    Poset face_poset() const;
};

// Downward closure of the given facets (vertex id lists).
SimplicialComplex simplicial_from_facets(const std::vector<std::vector<std::string>>& facets);

// The order complex: vertices are the poset's elements, simplices its chains.
SimplicialComplex order_complex(const Poset& p);

// Incidence number [sigma : tau] for ordered tuples with dim sigma =
// dim tau + 1: (-1)^k when tau = sigma with its k-th entry removed, else 0.
// The same alternating-sum convention serves chains and oriented simplices.
int incidence_number(const std::vector<int>& sigma, const std::vector<int>& tau);

} // namespace sheaflab
