#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "sheaflab/errors.hpp"
#include "sheaflab/io.hpp"
#include "sheaflab/trajectory.hpp"
#include "test_support.hpp"

using namespace sheaflab;
using namespace sheaflab::testing;

namespace {

std::string tmp(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

void check_equal_posets(const Poset& a, const Poset& b) {
    CHECK(a.ids == b.ids);
    CHECK(a.coverings == b.coverings);
    CHECK(a.rank == b.rank);
    CHECK(a.simplex_vertices == b.simplex_vertices);
}

void check_equal_sheaves(const Sheaf& a, const Sheaf& b) {
    CHECK(a.stalk_dim == b.stalk_dim);
    REQUIRE(a.restriction.size() == b.restriction.size());
    for (auto& [cov, R] : a.restriction) {
        REQUIRE(b.restriction.count(cov) == 1);
        const Eigen::MatrixXd& S = b.restriction.at(cov);
        REQUIRE(R.rows() == S.rows());
        REQUIRE(R.cols() == S.cols());
        CHECK((R - S).norm() == 0.0); // shortest round-trip decimals are exact
    }
}

nlohmann::json parse(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return nlohmann::json::parse(in);
}

void rewrite(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    out << doc.dump(2) << '\n';
}

} // namespace

TEST_CASE("graph poset round trips through the complex file") {
    auto base = graph_poset(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
    std::string path = tmp("io_complex_graph.json");
    save_complex(*base, path);
    Poset loaded = load_complex(path);
    check_equal_posets(*base, loaded);
    CHECK(loaded.graded());
    CHECK(parse(path).at("kind") == "poset");
}

TEST_CASE("simplicial face poset round trips with its vertex orders") {
    SimplicialComplex X = simplicial_from_facets(
        {{node_id(0), node_id(1), node_id(2)}, {node_id(1), node_id(2), node_id(3)}});
    Poset p = X.face_poset();
    std::string path = tmp("io_complex_simplicial.json");
    save_complex(p, path);
    Poset loaded = load_complex(path);
    check_equal_posets(p, loaded);
    CHECK(loaded.has_simplex_structure());
    CHECK(parse(path).at("kind") == "simplicial");
}

TEST_CASE("ungraded posets save a null rank and round trip") {
    // a < c is declared a covering yet a < b < c also holds: no rank function
    Poset p = build_poset({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}, {"a", "c"}});
    REQUIRE(!p.graded());
    std::string path = tmp("io_complex_ungraded.json");
    save_complex(p, path);
    Poset loaded = load_complex(path);
    check_equal_posets(p, loaded);
    CHECK(parse(path).at("elements").at(0).at("rank").is_null());
}

TEST_CASE("random posets round trip and files are byte-stable") {
    std::mt19937_64 rng(401);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 3 + static_cast<int>(rng() % 8);
        auto base = graph_poset(n, random_connected_edges(n, 4, rng));
        std::string a = tmp("io_complex_rand_a.json"), b = tmp("io_complex_rand_b.json");
        save_complex(*base, a);
        Poset loaded = load_complex(a);
        check_equal_posets(*base, loaded);
        // saving the loaded value reproduces the file byte for byte
        save_complex(loaded, b);
        CHECK(slurp(a) == slurp(b));
        save_complex(*base, b);
        CHECK(slurp(a) == slurp(b));
    }
}

TEST_CASE("hypergraph kind loads as a plain poset") {
    auto base = graph_poset(3, {{0, 1}, {1, 2}});
    std::string path = tmp("io_complex_hyper.json");
    save_complex(*base, path);
    nlohmann::json doc = parse(path);
    doc["kind"] = "hypergraph";
    rewrite(path, doc);
    check_equal_posets(*base, load_complex(path));
}

TEST_CASE("complex loading rejects bad schemas, kinds, and references") {
    auto base = graph_poset(3, {{0, 1}, {1, 2}});
    std::string path = tmp("io_complex_bad.json");

    save_complex(*base, path);
    nlohmann::json doc = parse(path);
    doc["schema"] = "sheaflab-v0";
    rewrite(path, doc);
    CHECK_THROWS_AS(load_complex(path), SchemaVersionMismatch);

    doc = parse(path);
    doc.erase("schema");
    rewrite(path, doc);
    CHECK_THROWS_AS(load_complex(path), SchemaVersionMismatch);

    save_complex(*base, path);
    doc = parse(path);
    doc["kind"] = "interval";
    rewrite(path, doc);
    CHECK_THROWS_AS(load_complex(path), ValidationError);

    save_complex(*base, path);
    doc = parse(path);
    doc["coverings"].push_back({{"from", "n00"}, {"to", "ghost"}});
    rewrite(path, doc);
    CHECK_THROWS_AS(load_complex(path), ValidationError);

    save_complex(*base, path);
    doc = parse(path);
    doc["elements"][0]["rank"] = 7;
    rewrite(path, doc);
    CHECK_THROWS_AS(load_complex(path), ValidationError);

    spit(path, "{ not json");
    CHECK_THROWS_AS(load_complex(path), ParseError);
    CHECK_THROWS_AS(load_complex(tmp("io_no_such_file.json")), ParseError);
}

TEST_CASE("single-edge sheaf round trips to an equal sheaf") {
    auto base = graph_poset(2, {{0, 1}});
    auto F = constant_sheaf(base, 2);
    std::string path = tmp("io_sheaf_edge.json");
    save_sheaf(F, path, "edge-complex");
    std::string ref;
    Sheaf loaded = load_sheaf(path, base, nullptr, &ref);
    check_equal_sheaves(F, loaded);
    CHECK(ref == "edge-complex");
    CHECK(validate_sheaf(loaded).ok);
}

TEST_CASE("random sheaves round trip exactly and validate after loading") {
    std::mt19937_64 rng(402);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 3 + static_cast<int>(rng() % 6);
        auto base = graph_poset(n, random_connected_edges(n, 3, rng));
        Sheaf F = random_graph_sheaf(base, 4, rng);
        std::string a = tmp("io_sheaf_rand_a.json"), b = tmp("io_sheaf_rand_b.json");
        save_sheaf(F, a, "base");
        Sheaf loaded = load_sheaf(a, base);
        check_equal_sheaves(F, loaded);
        CHECK(validate_sheaf(loaded).ok);
        save_sheaf(loaded, b, "base");
        CHECK(slurp(a) == slurp(b));
    }
}

TEST_CASE("sheaf with inner products round trips the Euclidean structure") {
    auto base = graph_poset(3, {{0, 1}, {1, 2}});
    Sheaf F = constant_sheaf(base, 2);
    EuclideanStructure E;
    std::mt19937_64 rng(403);
    for (int i = 0; i < base->n(); ++i) {
        Eigen::MatrixXd A = random_matrix(2, 2, rng);
        E.inner.push_back(A * A.transpose() + 2.0 * Eigen::MatrixXd::Identity(2, 2));
    }
    std::string path = tmp("io_sheaf_inner.json");
    save_sheaf(F, path, "base", &E);
    EuclideanStructure E2;
    Sheaf loaded = load_sheaf(path, base, &E2);
    check_equal_sheaves(F, loaded);
    REQUIRE(E2.inner.size() == E.inner.size());
    for (size_t i = 0; i < E.inner.size(); ++i)
        CHECK((E.inner[i] - E2.inner[i]).norm() == 0.0);
    validate_euclidean(E2, loaded);
}

TEST_CASE("malformed restriction shape names the covering in the error") {
    auto base = graph_poset(2, {{0, 1}});
    Sheaf F = constant_sheaf(base, 2);
    std::string path = tmp("io_sheaf_badshape.json");
    save_sheaf(F, path, "base");
    nlohmann::json doc = parse(path);
    doc["restrictions"][0]["matrix"].erase(3); // 2 x 2 block now has 3 entries
    rewrite(path, doc);
    bool threw = false;
    try {
        load_sheaf(path, base);
    } catch (const ValidationError& e) {
        threw = true;
        std::string msg = e.what();
        CHECK(msg.find("n00") != std::string::npos);
        CHECK(msg.find("e_n00_n01") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("sheaf loading rejects structural mismatches") {
    auto base = graph_poset(3, {{0, 1}, {1, 2}});
    Sheaf F = constant_sheaf(base, 1);
    std::string path = tmp("io_sheaf_bad.json");

    save_sheaf(F, path, "base");
    nlohmann::json doc = parse(path);
    doc["restrictions"].erase(0);
    rewrite(path, doc);
    CHECK_THROWS_AS(load_sheaf(path, base), ValidationError); // missing covering

    save_sheaf(F, path, "base");
    doc = parse(path);
    doc["restrictions"].push_back(
        {{"from", "n00"}, {"to", "n01"}, {"matrix", {1.0}}}); // not a covering
    rewrite(path, doc);
    CHECK_THROWS_AS(load_sheaf(path, base), ValidationError);

    save_sheaf(F, path, "base");
    doc = parse(path);
    doc["stalks"].erase("n02");
    rewrite(path, doc);
    CHECK_THROWS_AS(load_sheaf(path, base), ValidationError); // missing stalk

    save_sheaf(F, path, "base");
    doc = parse(path);
    doc["stalks"]["ghost"] = 1;
    rewrite(path, doc);
    CHECK_THROWS_AS(load_sheaf(path, base), ValidationError); // unknown element

    save_sheaf(F, path, "base");
    doc = parse(path);
    doc["kind"] = "cochain";
    rewrite(path, doc);
    CHECK_THROWS_AS(load_sheaf(path, base), ValidationError); // wrong document kind
}

TEST_CASE("cochains round trip with their grading") {
    std::mt19937_64 rng(404);
    Eigen::VectorXd x = random_vector(17, rng);
    std::string path = tmp("io_cochain.json");
    save_cochain(x, 2, path);
    int k = -1;
    Eigen::VectorXd y = load_cochain(path, &k);
    CHECK(k == 2);
    REQUIRE(y.size() == x.size());
    CHECK((x - y).norm() == 0.0);
}

TEST_CASE("punctured-grid dataset round trip preserves all 500 trajectories") {
    PuncturedGrid grid = gen_punctured_grid(12, 1.5);
    TrajectoryDataset data = gen_trajectories(grid, 250, 10, 0.8, 405);
    REQUIRE(data.trajectories.size() == 500);
    std::string a = tmp("io_dataset_a.jsonl"), b = tmp("io_dataset_b.jsonl");
    save_dataset(data, a);
    TrajectoryDataset loaded = load_dataset(a);
    CHECK(loaded.count_per_region == data.count_per_region);
    CHECK(loaded.length == data.length);
    CHECK(loaded.p_curl == data.p_curl);
    CHECK(loaded.seed == data.seed);
    REQUIRE(loaded.trajectories.size() == data.trajectories.size());
    for (size_t i = 0; i < data.trajectories.size(); ++i) {
        CHECK(loaded.trajectories[i].nodes == data.trajectories[i].nodes);
        CHECK(loaded.trajectories[i].region == data.trajectories[i].region);
        CHECK(loaded.trajectories[i].label == data.trajectories[i].label);
    }
    save_dataset(loaded, b);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("dataset loading rejects bad headers and lines") {
    std::string path = tmp("io_dataset_bad.jsonl");
    spit(path, "");
    CHECK_THROWS_AS(load_dataset(path), ParseError);
    spit(path, "{\"schema\":\"sheaflab-v0\",\"kind\":\"trajectory-dataset\"}\n");
    CHECK_THROWS_AS(load_dataset(path), SchemaVersionMismatch);
    spit(path, "{\"schema\":\"sheaflab-v1\",\"kind\":\"results\"}\n");
    CHECK_THROWS_AS(load_dataset(path), ValidationError);
    spit(path,
         "{\"schema\":\"sheaflab-v1\",\"kind\":\"trajectory-dataset\","
         "\"count_per_region\":1,\"length\":2,\"p_curl\":0.5,\"seed\":1}\n"
         "{\"nodes\":[0,1],\"region\":0}\n"); // label missing
    CHECK_THROWS_AS(load_dataset(path), ValidationError);
}

TEST_CASE("evaluation results round trip and stay byte-stable") {
    EvalReport report;
    report.rows = {{"constant-nsd", 0.5, 0.625, 0.375}, {"ker-up", 0.25, 0.125, 0.375}};
    report.train_indices = {0, 2, 4, 5};
    report.test_indices = {1, 3};
    std::string a = tmp("io_results_a.json"), b = tmp("io_results_b.json");
    save_results(report, a);
    EvalReport loaded = load_results(a);
    REQUIRE(loaded.rows.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(loaded.rows[i].method == report.rows[i].method);
        CHECK(loaded.rows[i].overall == report.rows[i].overall);
        CHECK(loaded.rows[i].harmonic == report.rows[i].harmonic);
        CHECK(loaded.rows[i].curl == report.rows[i].curl);
    }
    CHECK(loaded.train_indices == report.train_indices);
    CHECK(loaded.test_indices == report.test_indices);
    save_results(loaded, b);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("checkpoints restore parameters bit for bit") {
    auto base = graph_poset(4, {{0, 1}, {1, 2}, {2, 3}, {0, 2}});
    auto F = std::make_shared<Sheaf>(constant_sheaf(base, 2));
    NsdModel trained = make_nsd_model(F, 0, {2, 3, 1}, 0.5, Nonlinearity::odd_tanh,
                                      Nonlinearity::identity, 406);
    std::mt19937_64 rng(407);
    for (Eigen::MatrixXd* p : nsd_parameters(trained))
        *p = random_matrix(static_cast<int>(p->rows()), static_cast<int>(p->cols()), rng);
    std::string path = tmp("io_checkpoint.bin");
    save_checkpoint(trained, path, 406);

    NsdModel fresh = make_nsd_model(F, 0, {2, 3, 1}, 0.5, Nonlinearity::odd_tanh,
                                    Nonlinearity::identity, 999);
    CHECK(load_checkpoint(fresh, path) == 406);
    std::vector<Eigen::MatrixXd*> a = nsd_parameters(trained), b = nsd_parameters(fresh);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK((*a[i] - *b[i]).norm() == 0.0);

    // the weights drive the forward pass, so the restored model reproduces it
    Eigen::MatrixXd X = random_matrix(8, 2, rng);
    CHECK((nsd_forward(trained, X) - nsd_forward(fresh, X)).norm() == 0.0);
}

TEST_CASE("checkpoint loading verifies shapes and sizes") {
    auto base = graph_poset(3, {{0, 1}, {1, 2}});
    auto F = std::make_shared<Sheaf>(constant_sheaf(base, 1));
    NsdModel m = make_nsd_model(F, 0, {1, 2, 1}, 0.5, Nonlinearity::odd_tanh,
                                Nonlinearity::identity, 408);
    std::string path = tmp("io_checkpoint_bad.bin");
    save_checkpoint(m, path, 1);

    NsdModel wider = make_nsd_model(F, 0, {1, 5, 1}, 0.5, Nonlinearity::odd_tanh,
                                    Nonlinearity::identity, 408);
    CHECK_THROWS_AS(load_checkpoint(wider, path), ValidationError);

    std::string bytes = slurp(path);
    spit(path, bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(m, path), ValidationError);

    spit(path + ".json", "{\"schema\":\"sheaflab-v2\"}");
    CHECK_THROWS_AS(load_checkpoint(m, path), SchemaVersionMismatch);
}
