#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>

#include "sheaflab/sheaf.hpp"
#include "sheaflab/trajectory.hpp"

namespace sheaflab {

// Every artifact carries this version string in its "schema" field; loading a
// document whose field is absent or different throws SchemaVersionMismatch.
inline constexpr const char* kSchemaVersion = "sheaflab-v1";

// All savers produce canonical, byte-stable output: ids sorted ascending,
// object keys sorted, doubles printed as shortest round-trip decimal text.
// All loaders throw ParseError on malformed JSON and ValidationError on
// semantically inconsistent content (formats are documented under docs/).

// --- complexes ---------------------------------------------------------------
// {schema, kind: poset|simplicial|hypergraph, elements:[{id, rank}],
//  coverings:[{from, to, sign?}], vertex_order?}. A poset with attached
// simplex vertex lists saves as "simplicial" with a vertex_order table;
// "hypergraph" loads like "poset". Optional covering signs are accepted and
// ignored (incidence signs are derived from the vertex orders).
void save_complex(const Poset& p, const std::string& path);
Poset load_complex(const std::string& path);

// --- sheaves -----------------------------------------------------------------
// {schema, kind: "sheaf", base_ref, stalks:{id: dim},
//  restrictions:[{from, to, matrix}], inner_products?}. Matrices are row-major
// flat arrays; the shape dim(to) x dim(from) is implied by the stalk table and
// a mismatched length is a ValidationError naming the covering. base_ref is an
// uninterpreted pointer back to the complex artifact the sheaf lives on.
void save_sheaf(const Sheaf& F, const std::string& path, const std::string& base_ref,
                const EuclideanStructure* E = nullptr);
Sheaf load_sheaf(const std::string& path, std::shared_ptr<const Poset> base,
                 EuclideanStructure* E = nullptr, std::string* base_ref = nullptr);

// --- cochains ----------------------------------------------------------------
// {schema, kind: "cochain", grading, values}.
void save_cochain(const Eigen::VectorXd& x, int grading, const std::string& path);
Eigen::VectorXd load_cochain(const std::string& path, int* grading = nullptr);

// --- trajectory datasets -----------------------------------------------------
// JSON lines: a header object {schema, kind: "trajectory-dataset",
// count_per_region, length, p_curl, seed} followed by one object
// {nodes, region, label} per trajectory.
void save_dataset(const TrajectoryDataset& data, const std::string& path);
TrajectoryDataset load_dataset(const std::string& path);

// --- evaluation results ------------------------------------------------------
// {schema, kind: "results", rows:[{method, overall, harmonic, curl}],
//  train_indices, test_indices}.
void save_results(const EvalReport& report, const std::string& path);
EvalReport load_results(const std::string& path);

// --- model checkpoints -------------------------------------------------------
// Flat binary of little-endian 64-bit floats, the trainable parameters in
// nsd_parameters order, plus a JSON sidecar at <path>.json recording the
// schema version, the parameter shapes, and the training seed. Loading
// verifies the shapes against the model and returns the recorded seed.
void save_checkpoint(NsdModel& model, const std::string& path, std::uint64_t seed);
std::uint64_t load_checkpoint(NsdModel& model, const std::string& path);

} // namespace sheaflab
