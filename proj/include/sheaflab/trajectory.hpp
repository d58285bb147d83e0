#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sheaflab/nsd.hpp"
#include "sheaflab/poset.hpp"

namespace sheaflab {

// Regularly triangulated square grid with the triangles touching a central
// disk removed; the left half hosts circling walks, the right half curly ones.
struct PuncturedGrid {
    SimplicialComplex complex;           // downward closure of surviving triangles
    std::shared_ptr<const Poset> base;   // face poset of `complex`
    std::vector<Eigen::Vector2d> coords; // per vertex (lattice units)
    Eigen::Vector2d hole_center;
    double hole_radius = 0;
    std::vector<int> node_region;     // per vertex: 0 = harmonic, 1 = curl
    std::vector<int> triangle_region; // per 2-simplex (by centroid)
    std::vector<std::vector<int>> neighbors; // vertex adjacency, ascending

    // cochain bookkeeping against the cellular complex of the face poset
    std::vector<int> node_row; // vertex -> row in the rank-0 cochain space
    std::vector<int> edge_row; // 1-simplex index -> row in the rank-1 space

    int edge_index(int a, int b) const; // 1-simplex index, -1 if absent
};

// n x n vertices; a triangle is removed when any of its vertices lies strictly
// inside the disk of the given radius about the grid center. Throws
// HoleTooLarge when the removal reaches the boundary or disconnects the grid.
PuncturedGrid gen_punctured_grid(int n, double hole_radius);

struct Trajectory {
    std::vector<int> nodes; // i_0 .. i_{m-1}, consecutive nodes adjacent
    int region = 0;         // 0 = harmonic, 1 = curl
    int label = -1;         // the held-out next node i_m
};

struct TrajectoryDataset {
    std::vector<Trajectory> trajectories;
    int count_per_region = 0, length = 0;
    double p_curl = 0;
    std::uint64_t seed = 0;
};

// Oriented-edge-sum encoding of the node sequence as a 1-cochain over the
// cellular edge space; reversal negates it.
Eigen::VectorXd encode_trajectory(const PuncturedGrid& grid, const std::vector<int>& nodes);

// Harmonic walks pick the neighbor maximizing the dot product with the
// quarter-turn of the current displacement from the hole center (no immediate
// backtracking); curly walks jump through a shared triangle with probability
// p_curl, else to a random region neighbor. Walks failing to reach the target
// length are resampled a bounded number of times, then StuckWalk is thrown.
TrajectoryDataset gen_trajectories(const PuncturedGrid& grid, int count_per_region,
                                   int length, double p_curl, std::uint64_t seed);

// Constant sheaf with the curl-region triangle stalks set to zero width; its
// Laplacian acts like the down Laplacian over the curl region and the full
// one over the harmonic region.
Sheaf handcrafted_sheaf(const PuncturedGrid& grid);

enum class TrajMethod {
    constant_nsd,
    handcrafted_nsd,
    learned_nsd,
    ker_handcrafted,
    ker_constant,
    ker_up,
    ker_down,
};

std::string method_name(TrajMethod m);

// A prediction method bound to a grid: either a trainable diffusion model with
// a divergence readout, or a fixed kernel projection scored through the
// boundary map restricted to the terminal node's edges.
struct TrajPredictor {
    TrajMethod method;
    std::shared_ptr<const PuncturedGrid> grid;
    std::optional<NsdModel> model;       // diffusion methods
    Eigen::MatrixXd kernel_projector;    // kernel methods
};

// widths for the diffusion methods: {1, hidden, ..., hidden, 1}.
TrajPredictor make_predictor(std::shared_ptr<const PuncturedGrid> grid, TrajMethod method,
                             int layers = 4, int hidden = 32, std::uint64_t seed = 0);

NsdDataset to_nsd_dataset(const PuncturedGrid& grid, const TrajectoryDataset& data);

// Trains diffusion predictors (no-op for kernel methods).
TrainLog fit_predictor(TrajPredictor& pred, const TrajectoryDataset& data,
                       const std::vector<int>& train_indices, const TrainConfig& config);

// Probability over the ascending neighbor list of the terminal node. Throws
// IsolatedTerminal when the terminal node has no neighbors.
Eigen::VectorXd predict_next(const TrajPredictor& pred, const Trajectory& traj);

struct EvalRow {
    std::string method;
    double overall = 0, harmonic = 0, curl = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<int> train_indices, test_indices;
};

// 80/20 train/test split stratified by region, deterministic in split_seed.
void split_dataset(const TrajectoryDataset& data, std::uint64_t split_seed,
                   std::vector<int>& train, std::vector<int>& test);

EvalReport evaluate(std::shared_ptr<const PuncturedGrid> grid, const TrajectoryDataset& data,
                    const std::vector<TrajMethod>& methods, std::uint64_t split_seed,
                    const TrainConfig& config);

// One header line plus one line per method: method,overall,harmonic,curl.
std::string report_csv(const EvalReport& report);

} // namespace sheaflab
