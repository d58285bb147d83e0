#pragma once

// Shared generators and oracles for the test suites.

#include <Eigen/Dense>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "sheaflab/complex.hpp"
#include "sheaflab/poset.hpp"
#include "sheaflab/sheaf.hpp"

namespace sheaflab::testing {

inline std::string node_id(int i) {
    std::ostringstream os;
    os << "n";
    if (i < 10) os << "0";
    os << i;
    return os.str();
}

inline std::string edge_id(int i, int j) {
    if (i > j) std::swap(i, j);
    return "e_" + node_id(i) + "_" + node_id(j);
}

// Graph poset: nodes n00.., edges e_n.._n.. covering their endpoints.
inline std::shared_ptr<const Poset> graph_poset(int n,
                                                const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::string> elements;
    std::vector<std::pair<std::string, std::string>> cov;
    for (int i = 0; i < n; ++i) elements.push_back(node_id(i));
    std::set<std::string> seen;
    for (auto& [i, j] : edges) {
        std::string e = edge_id(i, j);
        if (!seen.insert(e).second) continue;
        elements.push_back(e);
        cov.push_back({node_id(i), e});
        cov.push_back({node_id(j), e});
    }
    return std::make_shared<Poset>(build_poset(elements, cov));
}

// Random connected graph: a random spanning tree plus `extra` random edges.
inline std::vector<std::pair<int, int>> random_connected_edges(int n, int extra,
                                                               std::mt19937_64& rng) {
    std::vector<std::pair<int, int>> edges;
    std::set<std::pair<int, int>> used;
    for (int i = 1; i < n; ++i) {
        int j = static_cast<int>(rng() % static_cast<unsigned long>(i));
        edges.push_back({j, i});
        used.insert({j, i});
    }
    for (int t = 0; t < extra && n > 1; ++t) {
        int a = static_cast<int>(rng() % static_cast<unsigned long>(n));
        int b = static_cast<int>(rng() % static_cast<unsigned long>(n));
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (used.insert({a, b}).second) edges.push_back({a, b});
    }
    return edges;
}

// Orthogonal projector onto the column space of A.
inline Eigen::MatrixXd column_projector(const Eigen::MatrixXd& A) {
    if (A.size() == 0 || A.norm() == 0) return Eigen::MatrixXd::Zero(A.rows(), A.rows());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q =
        qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), qr.rank());
    return Q * Q.transpose();
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = gauss(rng);
    return x;
}

inline Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) M(i, j) = gauss(rng);
    return M;
}

// A random sheaf with arbitrary restrictions on a rank <= 1 poset
// (functoriality is vacuous there).
inline Sheaf random_graph_sheaf(std::shared_ptr<const Poset> base, int max_dim,
                                std::mt19937_64& rng) {
    Sheaf F;
    F.base = std::move(base);
    F.stalk_dim.resize(F.base->n());
    for (int i = 0; i < F.base->n(); ++i)
        F.stalk_dim[i] = 1 + static_cast<int>(rng() % static_cast<unsigned long>(max_dim));
    for (auto& [s, t] : F.base->coverings)
        F.restriction[{s, t}] = random_matrix(F.stalk_dim[t], F.stalk_dim[s], rng);
    return F;
}

} // namespace sheaflab::testing
