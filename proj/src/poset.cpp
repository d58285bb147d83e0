#include "sheaflab/poset.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

namespace sheaflab {

int Poset::index(const std::string& id) const {
    auto it = index_of.find(id);
    if (it == index_of.end()) throw UnknownElement("no element '" + id + "'");
    return it->second;
}

int Poset::max_rank() const {
    if (!graded()) throw NotGradable("poset has no rank function");
    int m = 0;
    for (int r : rank) m = std::max(m, r);
    return m;
}

std::vector<int> Poset::elements_of_rank(int r) const {
    if (!graded()) throw NotGradable("poset has no rank function");
    std::vector<int> out;
    for (int i = 0; i < n(); ++i)
        if (rank[i] == r) out.push_back(i);
    return out;
}

// Kahn topological order over the covering digraph; throws CycleError when a
// directed cycle (antisymmetry violation after closure) exists.
static std::vector<int> topo_order(const Poset& p) {
    std::vector<int> indeg(p.n(), 0);
    for (auto& [s, t] : p.coverings) {
        (void)s;
        ++indeg[t];
    }
    std::deque<int> q;
    for (int i = 0; i < p.n(); ++i)
        if (indeg[i] == 0) q.push_back(i);
    std::vector<int> order;
    while (!q.empty()) {
        int s = q.front();
        q.pop_front();
        order.push_back(s);
        for (int t : p.up[s])
            if (--indeg[t] == 0) q.push_back(t);
    }
    if (static_cast<int>(order.size()) != p.n())
        throw CycleError("covering relations contain a directed cycle");
    return order;
}

Poset build_poset(const std::vector<std::string>& elements,
                  const std::vector<std::pair<std::string, std::string>>& coverings) {
    Poset p;
    p.ids = elements;
    std::sort(p.ids.begin(), p.ids.end());
    if (std::adjacent_find(p.ids.begin(), p.ids.end()) != p.ids.end())
        throw ValidationError("duplicate element id");
    for (int i = 0; i < p.n(); ++i) p.index_of[p.ids[i]] = i;

    std::set<std::pair<int, int>> cov;
    for (auto& [a, b] : coverings) {
        int s = p.index(a), t = p.index(b);
        if (s == t) throw CycleError("element '" + a + "' covers itself");
        cov.insert({s, t});
    }
    p.coverings.assign(cov.begin(), cov.end());
    p.up.assign(p.n(), {});
    p.down.assign(p.n(), {});
    for (auto& [s, t] : p.coverings) {
        p.up[s].push_back(t);
        p.down[t].push_back(s);
    }

    // Transitive closure in reverse topological order: lt[s] accumulates every
    // element reachable through coverings. Antisymmetry then holds by the
    // acyclicity already established.
    std::vector<int> order = topo_order(p);
    p.lt.assign(p.n(), std::vector<bool>(p.n(), false));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int s = *it;
        for (int t : p.up[s]) {
            p.lt[s][t] = true;
            for (int u = 0; u < p.n(); ++u)
                if (p.lt[t][u]) p.lt[s][u] = true;
        }
    }

    try {
        p.rank = grade(p);
    } catch (const NotGradable&) {
        // Poset is valid but ungradable; callers needing ranks call grade().
    }
    return p;
}

std::vector<int> grade(const Poset& p) {
    std::vector<int> rank(p.n(), 0);
    for (int s : topo_order(p)) {
        if (p.down[s].empty()) {
            rank[s] = 0;
            continue;
        }
        int r = rank[p.down[s][0]] + 1;
        for (int t : p.down[s])
            if (rank[t] + 1 != r)
                throw NotGradable("element '" + p.ids[s] +
                                  "' is reached by maximal chains of different lengths");
        rank[s] = r;
    }
    return rank;
}

std::vector<std::vector<Chain>> chains_by_dim(const Poset& p) {
    std::vector<std::vector<Chain>> out(1);
    for (int i = 0; i < p.n(); ++i) out[0].push_back({i});
    // Extend chains one element at a time; every strict upper bound of the
    // current maximum keeps the tuple a chain.
    while (!out.back().empty()) {
        std::vector<Chain> next;
        for (const Chain& c : out.back())
            for (int t = 0; t < p.n(); ++t)
                if (p.less(c.back(), t)) {
                    Chain d = c;
                    d.push_back(t);
                    next.push_back(d);
                }
        if (next.empty()) break;
        std::sort(next.begin(), next.end());
        out.push_back(std::move(next));
    }
    return out;
}

int SimplicialComplex::count(int d) const {
    if (d < 0 || d > dim()) return 0;
    return static_cast<int>(simplices[d].size());
}

std::string SimplicialComplex::simplex_id(const std::vector<int>& verts) const {
    std::ostringstream os;
    for (size_t i = 0; i < verts.size(); ++i) {
        if (i) os << '|';
        os << vertex_ids[verts[i]];
    }
    return os.str();
}

int SimplicialComplex::find(const std::vector<int>& verts) const {
    int d = static_cast<int>(verts.size()) - 1;
    if (d < 0 || d > dim()) return -1;
    auto& level = simplices[d];
    auto it = std::lower_bound(level.begin(), level.end(), verts);
    if (it != level.end() && *it == verts) return static_cast<int>(it - level.begin());
    return -1;
}

Poset SimplicialComplex::face_poset() const {
    std::vector<std::string> elements;
    std::vector<std::pair<std::string, std::string>> cov;
    for (int d = 0; d <= dim(); ++d)
        for (auto& s : simplices[d]) {
            elements.push_back(simplex_id(s));
            if (d == 0) continue;
            // Codimension-1 faces: drop one vertex at a time.
            for (size_t k = 0; k < s.size(); ++k) {
                std::vector<int> f = s;
                f.erase(f.begin() + static_cast<long>(k));
                cov.push_back({simplex_id(f), simplex_id(s)});
            }
        }
    Poset p = build_poset(elements, cov);
    p.simplex_vertices.assign(p.n(), {});
    for (int d = 0; d <= dim(); ++d)
        for (auto& s : simplices[d]) p.simplex_vertices[p.index(simplex_id(s))] = s;
    return p;
}

SimplicialComplex simplicial_from_facets(const std::vector<std::vector<std::string>>& facets) {
    SimplicialComplex X;
    std::set<std::string> vset;
    for (auto& f : facets) vset.insert(f.begin(), f.end());
    X.vertex_ids.assign(vset.begin(), vset.end());
    std::unordered_map<std::string, int> vindex;
    for (int i = 0; i < static_cast<int>(X.vertex_ids.size()); ++i) vindex[X.vertex_ids[i]] = i;

    // Downward closure: every subset of a facet is a simplex.
    std::set<std::vector<int>> all;
    for (auto& f : facets) {
        std::vector<int> verts;
        for (auto& v : f) verts.push_back(vindex[v]);
        std::sort(verts.begin(), verts.end());
        verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
        int m = static_cast<int>(verts.size());
        for (unsigned mask = 1; mask < (1u << m); ++mask) {
            std::vector<int> sub;
            for (int i = 0; i < m; ++i)
                if (mask & (1u << i)) sub.push_back(verts[i]);
            all.insert(sub);
        }
    }
    int maxd = 0;
    for (auto& s : all) maxd = std::max(maxd, static_cast<int>(s.size()) - 1);
    X.simplices.assign(static_cast<size_t>(maxd) + 1, {});
    for (auto& s : all) X.simplices[s.size() - 1].push_back(s);
    return X;
}

SimplicialComplex order_complex(const Poset& p) {
    SimplicialComplex X;
    X.vertex_ids = p.ids;
    auto chains = chains_by_dim(p);
    X.simplices.assign(chains.size(), {});
    for (size_t d = 0; d < chains.size(); ++d)
        for (auto& c : chains[d]) X.simplices[d].push_back(c);
    return X;
}

int incidence_number(const std::vector<int>& sigma, const std::vector<int>& tau) {
    if (sigma.size() != tau.size() + 1)
        throw DimensionError("incidence number needs dim sigma = dim tau + 1");
    // Locate the unique removed position, if any.
    int removed = -1;
    size_t j = 0;
    for (size_t i = 0; i < sigma.size(); ++i) {
        if (j < tau.size() && sigma[i] == tau[j]) {
            ++j;
        } else if (removed == -1) {
            removed = static_cast<int>(i);
        } else {
            return 0;
        }
    }
    if (j != tau.size()) return 0;
    return (removed % 2 == 0) ? 1 : -1;
}

} // namespace sheaflab
