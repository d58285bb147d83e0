#include "sheaflab/io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <vector>

#include "sheaflab/errors.hpp"
#include "sheaflab/nsd.hpp"

namespace sheaflab {
namespace {

using nlohmann::json;

// nlohmann's object type keeps keys sorted and its double serializer emits the
// shortest decimal text that round-trips exactly, so dumping a canonically
// built document is byte-stable.

json parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

json parse_line(const std::string& line, const std::string& ctx) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(ctx + ": " + e.what());
    }
}

void check_schema(const json& doc, const std::string& path) {
    if (!doc.is_object() || !doc.contains("schema") || !doc.at("schema").is_string() ||
        doc.at("schema").get<std::string>() != kSchemaVersion)
        throw SchemaVersionMismatch(path + ": expected schema \"" +
                                    std::string(kSchemaVersion) + "\"");
}

void check_kind(const json& doc, const std::string& kind, const std::string& path) {
    if (!doc.contains("kind") || !doc.at("kind").is_string() ||
        doc.at("kind").get<std::string>() != kind)
        throw ValidationError(path + ": expected a \"" + kind + "\" document");
}

template <class T>
T field(const json& o, const char* name, const std::string& ctx) {
    if (!o.is_object() || !o.contains(name))
        throw ValidationError(ctx + ": missing field \"" + name + "\"");
    try {
        return o.at(name).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(ctx + ": field \"" + name + "\" has the wrong type");
    }
}

void write_file(const std::string& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

json flatten_row_major(const Eigen::MatrixXd& M) {
    json a = json::array();
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j) a.push_back(M(i, j));
    return a;
}

Eigen::MatrixXd unflatten_row_major(const json& a, int rows, int cols,
                                    const std::string& ctx) {
    if (!a.is_array() || static_cast<int>(a.size()) != rows * cols) {
        std::ostringstream os;
        os << ctx << ": expected " << rows << " x " << cols << " = " << rows * cols
           << " values, got " << (a.is_array() ? std::to_string(a.size()) : "a non-array");
        throw ValidationError(os.str());
    }
    Eigen::MatrixXd M(rows, cols);
    int k = 0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j, ++k) {
            if (!a[static_cast<size_t>(k)].is_number())
                throw ValidationError(ctx + ": non-numeric matrix entry");
            M(i, j) = a[static_cast<size_t>(k)].get<double>();
        }
    return M;
}

} // namespace

// --- complexes ---------------------------------------------------------------

void save_complex(const Poset& p, const std::string& path) {
    json doc;
    doc["schema"] = kSchemaVersion;
    doc["kind"] = p.has_simplex_structure() ? "simplicial" : "poset";
    json elements = json::array();
    for (int i = 0; i < p.n(); ++i) {
        json e;
        e["id"] = p.ids[static_cast<size_t>(i)];
        if (p.graded())
            e["rank"] = p.rank[static_cast<size_t>(i)];
        else
            e["rank"] = nullptr;
        elements.push_back(e);
    }
    doc["elements"] = elements;
    json coverings = json::array();
    for (auto& [s, t] : p.coverings) {
        json c;
        c["from"] = p.ids[static_cast<size_t>(s)];
        c["to"] = p.ids[static_cast<size_t>(t)];
        coverings.push_back(c);
    }
    doc["coverings"] = coverings;
    if (p.has_simplex_structure()) {
        json order;
        for (int i = 0; i < p.n(); ++i)
            order[p.ids[static_cast<size_t>(i)]] = p.simplex_vertices[static_cast<size_t>(i)];
        doc["vertex_order"] = order;
    }
    write_file(path, doc);
}

Poset load_complex(const std::string& path) {
    json doc = parse_file(path);
    check_schema(doc, path);
    std::string kind = field<std::string>(doc, "kind", path);
    if (kind != "poset" && kind != "simplicial" && kind != "hypergraph")
        throw ValidationError(path + ": unknown complex kind \"" + kind + "\"");

    std::vector<std::string> elements;
    std::map<std::string, long> declared_rank; // -1 = null
    json els = field<json>(doc, "elements", path);
    if (!els.is_array()) throw ValidationError(path + ": \"elements\" must be an array");
    for (const json& e : els) {
        std::string id = field<std::string>(e, "id", path + ": element");
        if (declared_rank.count(id))
            throw ValidationError(path + ": duplicate element id \"" + id + "\"");
        long r = -1;
        if (e.contains("rank") && !e.at("rank").is_null())
            r = field<long>(e, "rank", path + ": element \"" + id + "\"");
        declared_rank[id] = r;
        elements.push_back(id);
    }
    std::vector<std::pair<std::string, std::string>> coverings;
    json covs = field<json>(doc, "coverings", path);
    if (!covs.is_array()) throw ValidationError(path + ": \"coverings\" must be an array");
    for (const json& c : covs) {
        std::string from = field<std::string>(c, "from", path + ": covering");
        std::string to = field<std::string>(c, "to", path + ": covering");
        if (!declared_rank.count(from) || !declared_rank.count(to))
            throw ValidationError(path + ": covering \"" + from + "\" < \"" + to +
                                  "\" references an undeclared element");
        coverings.push_back({from, to});
        // an optional "sign" is allowed; incidence signs are derived, not stored
    }

    Poset p;
    try {
        p = build_poset(elements, coverings);
    } catch (const Error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    for (auto& [id, r] : declared_rank) {
        if (r < 0) continue;
        if (!p.graded())
            throw ValidationError(path + ": element \"" + id +
                                  "\" declares a rank but the coverings admit no rank function");
        if (p.rank[static_cast<size_t>(p.index(id))] != static_cast<int>(r))
            throw ValidationError(path + ": element \"" + id +
                                  "\" declares rank " + std::to_string(r) +
                                  " but the coverings imply rank " +
                                  std::to_string(p.rank[static_cast<size_t>(p.index(id))]));
    }
    if (kind == "simplicial") {
        json order = field<json>(doc, "vertex_order", path);
        if (!order.is_object())
            throw ValidationError(path + ": \"vertex_order\" must be an object");
        if (!p.graded())
            throw ValidationError(path + ": a simplicial complex must be graded");
        p.simplex_vertices.resize(static_cast<size_t>(p.n()));
        for (int i = 0; i < p.n(); ++i) {
            const std::string& id = p.ids[static_cast<size_t>(i)];
            if (!order.contains(id))
                throw ValidationError(path + ": vertex_order is missing element \"" + id + "\"");
            auto verts = field<std::vector<int>>(order, id.c_str(), path + ": vertex_order");
            if (static_cast<int>(verts.size()) != p.rank[static_cast<size_t>(i)] + 1)
                throw ValidationError(path + ": element \"" + id + "\" of rank " +
                                      std::to_string(p.rank[static_cast<size_t>(i)]) +
                                      " must list exactly " +
                                      std::to_string(p.rank[static_cast<size_t>(i)] + 1) +
                                      " vertices");
            p.simplex_vertices[static_cast<size_t>(i)] = std::move(verts);
        }
    }
    return p;
}

// --- sheaves -----------------------------------------------------------------

void save_sheaf(const Sheaf& F, const std::string& path, const std::string& base_ref,
                const EuclideanStructure* E) {
    const Poset& p = F.poset();
    json doc;
    doc["schema"] = kSchemaVersion;
    doc["kind"] = "sheaf";
    doc["base_ref"] = base_ref;
    json stalks;
    for (int i = 0; i < p.n(); ++i) stalks[p.ids[static_cast<size_t>(i)]] = F.dim(i);
    doc["stalks"] = stalks;
    json restrictions = json::array();
    for (auto& [cov, R] : F.restriction) {
        json r;
        r["from"] = p.ids[static_cast<size_t>(cov.first)];
        r["to"] = p.ids[static_cast<size_t>(cov.second)];
        r["matrix"] = flatten_row_major(R);
        restrictions.push_back(r);
    }
    doc["restrictions"] = restrictions;
    if (E) {
        json inner;
        for (int i = 0; i < p.n(); ++i)
            inner[p.ids[static_cast<size_t>(i)]] =
                flatten_row_major(E->inner[static_cast<size_t>(i)]);
        doc["inner_products"] = inner;
    }
    write_file(path, doc);
}

Sheaf load_sheaf(const std::string& path, std::shared_ptr<const Poset> base,
                 EuclideanStructure* E, std::string* base_ref) {
    json doc = parse_file(path);
    check_schema(doc, path);
    check_kind(doc, "sheaf", path);
    const Poset& p = *base;
    if (base_ref) *base_ref = field<std::string>(doc, "base_ref", path);

    Sheaf F;
    F.base = base;
    F.stalk_dim.assign(static_cast<size_t>(p.n()), 0);
    json stalks = field<json>(doc, "stalks", path);
    if (!stalks.is_object()) throw ValidationError(path + ": \"stalks\" must be an object");
    for (auto& [id, dim] : stalks.items()) {
        if (!p.index_of.count(id))
            throw ValidationError(path + ": stalk for unknown element \"" + id + "\"");
        if (!dim.is_number_integer() || dim.get<long>() < 0)
            throw ValidationError(path + ": stalk dimension of \"" + id +
                                  "\" must be a nonnegative integer");
        F.stalk_dim[static_cast<size_t>(p.index(id))] = dim.get<int>();
    }
    for (int i = 0; i < p.n(); ++i)
        if (!stalks.contains(p.ids[static_cast<size_t>(i)]))
            throw ValidationError(path + ": missing stalk for element \"" +
                                  p.ids[static_cast<size_t>(i)] + "\"");

    json restrictions = field<json>(doc, "restrictions", path);
    if (!restrictions.is_array())
        throw ValidationError(path + ": \"restrictions\" must be an array");
    for (const json& r : restrictions) {
        std::string from = field<std::string>(r, "from", path + ": restriction");
        std::string to = field<std::string>(r, "to", path + ": restriction");
        std::string ctx = path + ": restriction \"" + from + "\" < \"" + to + "\"";
        if (!p.index_of.count(from) || !p.index_of.count(to))
            throw ValidationError(ctx + " references an undeclared element");
        int s = p.index(from), t = p.index(to);
        auto cov = std::make_pair(s, t);
        bool is_covering = false;
        for (int u : p.up[static_cast<size_t>(s)]) is_covering |= (u == t);
        if (!is_covering) throw ValidationError(ctx + " is not a covering relation");
        if (F.restriction.count(cov)) throw ValidationError(ctx + " appears twice");
        if (!r.contains("matrix")) throw ValidationError(ctx + ": missing field \"matrix\"");
        F.restriction[cov] = unflatten_row_major(r.at("matrix"), F.dim(t), F.dim(s), ctx);
    }
    for (auto& [s, t] : p.coverings)
        if (!F.restriction.count({s, t}))
            throw ValidationError(path + ": missing restriction for covering \"" +
                                  p.ids[static_cast<size_t>(s)] + "\" < \"" +
                                  p.ids[static_cast<size_t>(t)] + "\"");

    if (E) {
        E->inner.clear();
        for (int i = 0; i < p.n(); ++i)
            E->inner.push_back(Eigen::MatrixXd::Identity(F.dim(i), F.dim(i)));
        if (doc.contains("inner_products")) {
            json inner = doc.at("inner_products");
            if (!inner.is_object())
                throw ValidationError(path + ": \"inner_products\" must be an object");
            for (auto& [id, mat] : inner.items()) {
                if (!p.index_of.count(id))
                    throw ValidationError(path + ": inner product for unknown element \"" +
                                          id + "\"");
                int i = p.index(id);
                E->inner[static_cast<size_t>(i)] = unflatten_row_major(
                    mat, F.dim(i), F.dim(i), path + ": inner product of \"" + id + "\"");
            }
        }
    }
    return F;
}

// --- cochains ----------------------------------------------------------------

void save_cochain(const Eigen::VectorXd& x, int grading, const std::string& path) {
    json doc;
    doc["schema"] = kSchemaVersion;
    doc["kind"] = "cochain";
    doc["grading"] = grading;
    json values = json::array();
    for (int i = 0; i < x.size(); ++i) values.push_back(x[i]);
    doc["values"] = values;
    write_file(path, doc);
}

Eigen::VectorXd load_cochain(const std::string& path, int* grading) {
    json doc = parse_file(path);
    check_schema(doc, path);
    check_kind(doc, "cochain", path);
    if (grading) *grading = field<int>(doc, "grading", path);
    auto values = field<std::vector<double>>(doc, "values", path);
    Eigen::VectorXd x(static_cast<long>(values.size()));
    for (size_t i = 0; i < values.size(); ++i) x[static_cast<long>(i)] = values[i];
    return x;
}

// --- trajectory datasets -----------------------------------------------------

void save_dataset(const TrajectoryDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    json header;
    header["schema"] = kSchemaVersion;
    header["kind"] = "trajectory-dataset";
    header["count_per_region"] = data.count_per_region;
    header["length"] = data.length;
    header["p_curl"] = data.p_curl;
    header["seed"] = data.seed;
    out << header.dump() << '\n';
    for (const Trajectory& t : data.trajectories) {
        json line;
        line["nodes"] = t.nodes;
        line["region"] = t.region;
        line["label"] = t.label;
        out << line.dump() << '\n';
    }
}

TrajectoryDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    json header = parse_line(line, path + ": header");
    check_schema(header, path);
    check_kind(header, "trajectory-dataset", path);
    TrajectoryDataset data;
    data.count_per_region = field<int>(header, "count_per_region", path + ": header");
    data.length = field<int>(header, "length", path + ": header");
    data.p_curl = field<double>(header, "p_curl", path + ": header");
    data.seed = field<std::uint64_t>(header, "seed", path + ": header");
    int n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++n;
        std::string ctx = path + ": trajectory " + std::to_string(n);
        json t = parse_line(line, ctx);
        Trajectory traj;
        traj.nodes = field<std::vector<int>>(t, "nodes", ctx);
        traj.region = field<int>(t, "region", ctx);
        traj.label = field<int>(t, "label", ctx);
        data.trajectories.push_back(std::move(traj));
    }
    return data;
}

// --- evaluation results ------------------------------------------------------

void save_results(const EvalReport& report, const std::string& path) {
    json doc;
    doc["schema"] = kSchemaVersion;
    doc["kind"] = "results";
    json rows = json::array();
    for (const EvalRow& r : report.rows) {
        json row;
        row["method"] = r.method;
        row["overall"] = r.overall;
        row["harmonic"] = r.harmonic;
        row["curl"] = r.curl;
        rows.push_back(row);
    }
    doc["rows"] = rows;
    doc["train_indices"] = report.train_indices;
    doc["test_indices"] = report.test_indices;
    write_file(path, doc);
}

EvalReport load_results(const std::string& path) {
    json doc = parse_file(path);
    check_schema(doc, path);
    check_kind(doc, "results", path);
    EvalReport report;
    json rows = field<json>(doc, "rows", path);
    if (!rows.is_array()) throw ValidationError(path + ": \"rows\" must be an array");
    for (const json& r : rows) {
        EvalRow row;
        row.method = field<std::string>(r, "method", path + ": row");
        row.overall = field<double>(r, "overall", path + ": row");
        row.harmonic = field<double>(r, "harmonic", path + ": row");
        row.curl = field<double>(r, "curl", path + ": row");
        report.rows.push_back(std::move(row));
    }
    report.train_indices = field<std::vector<int>>(doc, "train_indices", path);
    report.test_indices = field<std::vector<int>>(doc, "test_indices", path);
    return report;
}

// --- model checkpoints -------------------------------------------------------

namespace {

void write_f64_le(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

} // namespace

void save_checkpoint(NsdModel& model, const std::string& path, std::uint64_t seed) {
    std::vector<Eigen::MatrixXd*> params = nsd_parameters(model);
    json sidecar;
    sidecar["schema"] = kSchemaVersion;
    sidecar["kind"] = "checkpoint";
    sidecar["seed"] = seed;
    json shapes = json::array();
    for (Eigen::MatrixXd* p : params)
        shapes.push_back({static_cast<long>(p->rows()), static_cast<long>(p->cols())});
    sidecar["shapes"] = shapes;
    write_file(path + ".json", sidecar);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (Eigen::MatrixXd* p : params)
        for (int i = 0; i < p->rows(); ++i)
            for (int j = 0; j < p->cols(); ++j) write_f64_le(out, (*p)(i, j));
}

std::uint64_t load_checkpoint(NsdModel& model, const std::string& path) {
    json sidecar = parse_file(path + ".json");
    check_schema(sidecar, path + ".json");
    check_kind(sidecar, "checkpoint", path + ".json");
    std::uint64_t seed = field<std::uint64_t>(sidecar, "seed", path + ".json");
    auto shapes = field<std::vector<std::vector<long>>>(sidecar, "shapes", path + ".json");

    std::vector<Eigen::MatrixXd*> params = nsd_parameters(model);
    if (shapes.size() != params.size())
        throw ValidationError(path + ".json: checkpoint has " + std::to_string(shapes.size()) +
                              " parameter matrices, the model has " +
                              std::to_string(params.size()));
    std::size_t total = 0;
    for (size_t k = 0; k < params.size(); ++k) {
        if (shapes[k].size() != 2 || shapes[k][0] != params[k]->rows() ||
            shapes[k][1] != params[k]->cols())
            throw ValidationError(path + ".json: parameter " + std::to_string(k) +
                                  " shape does not match the model");
        total += static_cast<std::size_t>(params[k]->size());
    }

    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() != total * 8)
        throw ValidationError(path + ": expected " + std::to_string(total * 8) +
                              " bytes, got " + std::to_string(bytes.size()));
    const unsigned char* p = bytes.data();
    for (Eigen::MatrixXd* m : params)
        for (int i = 0; i < m->rows(); ++i)
            for (int j = 0; j < m->cols(); ++j, p += 8) (*m)(i, j) = read_f64_le(p);
    return seed;
}

} // namespace sheaflab
