#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "sheaflab/autodiff.hpp"
#include "sheaflab/complex.hpp"

namespace sheaflab {

enum class Nonlinearity { odd_tanh, identity, leaky_relu };

// One sheaf-diffusion layer: the up/down half-diffusion operators composed
// with per-stalk weights and channel mixing, plus a center (harmonic) term:
//   X_new = phi( sd_up (I (x) Wsu) X Wcu + sd_down (I (x) Wsd) X Wcd
//                + (I (x) Wsc) X Wcc )
// with sd_up = 1/2 I - 2 eta Lap_up and sd_down = 1/2 I - 2 eta Lap_down.
struct NsdLayer {
    Eigen::MatrixXd W_stalk_up, W_stalk_down, W_stalk_center;       // d x d
    Eigen::MatrixXd W_channel_up, W_channel_down, W_channel_center; // f_in x f_out
    Nonlinearity phi = Nonlinearity::odd_tanh;
};

enum class LearnerMode { general, diagonal, orthogonal };

// MLP predicting a d x d restriction block from the concatenated features of
// a covering pair; one hidden tanh layer.
struct SheafLearner {
    LearnerMode mode = LearnerMode::general;
    int d = 1, feat = 1, hidden = 32;
    Eigen::MatrixXd W1, b1, W2, b2; // (2 feat) -> hidden -> d*d
};

SheafLearner make_sheaf_learner(LearnerMode mode, int d, int feat, int hidden,
                                std::uint64_t seed);

// Builds an actual sheaf from per-element feature vectors: every covering
// restriction is the learner's output on (source features || target features),
// where a missing target feature is the mean of its covered elements'
// features. Throws MissingFeatures when a source feature is absent.
Sheaf learn_restrictions(const SheafLearner& learner, std::shared_ptr<const Poset> base,
                         const std::map<std::string, Eigen::VectorXd>& features);

// Coboundary block structure of the grading-k neighborhood of a poset, used
// to assemble learned coboundaries on the tape. vblock indices enumerate the
// covering incidences of each level.
struct LevelStructure {
    int n_km1 = 0, n_k = 0, n_kp1 = 0; // element counts at ranks k-1, k, k+1
    std::vector<Tape::CobBlock> up_blocks;   // rank-k -> rank-(k+1)
    std::vector<Tape::CobBlock> down_blocks; // rank-(k-1) -> rank-k
    // aggregation of rank-k features onto the adjacent ranks:
    std::vector<std::vector<int>> km1_groups; // per rank-(k-1) element
    std::vector<std::vector<int>> kp1_groups; // per rank-(k+1) element
};
LevelStructure level_structure(std::shared_ptr<const Poset> base, int k);

enum class Readout {
    divergence, // node signal d_{k-1}^T applied to the (single-channel) output
    identity    // candidates index output rows directly
};

struct NsdModel {
    int k = 0;        // grading of the cochain features
    int d = 1;        // stalk width
    double eta = 0.5; // diffusion step inside sd_up / sd_down
    std::vector<NsdLayer> layers;
    Readout readout = Readout::identity;

    // fixed-sheaf operators (empty matrices when a learner is attached)
    Eigen::SparseMatrix<double> d_up;   // d^k
    Eigen::SparseMatrix<double> d_down; // d^{k-1}
    bool has_up = false, has_down = false;

    std::optional<SheafLearner> learner;
    LevelStructure structure; // populated when learner is set
};

// Fixed-sheaf model over the cellular complex of F at grading k.
// widths = channel counts per layer boundary (layers = widths.size() - 1);
// the last layer's nonlinearity is `last_phi` (identity keeps logits linear).
NsdModel make_nsd_model(std::shared_ptr<const Sheaf> F, int k, const std::vector<int>& widths,
                        double eta, Nonlinearity phi, Nonlinearity last_phi,
                        std::uint64_t seed);

// Learned-sheaf model: restriction maps are produced per forward pass by the
// learner from the current input features (stalk width d, mode-constrained).
NsdModel make_learned_nsd_model(std::shared_ptr<const Poset> base, int k, int d,
                                const std::vector<int>& widths, double eta,
                                LearnerMode mode, Nonlinearity phi, Nonlinearity last_phi,
                                std::uint64_t seed);

// All trainable parameter matrices, in a stable order.
std::vector<Eigen::MatrixXd*> nsd_parameters(NsdModel& model);

// Forward pass on stacked cochain features: X has batch * n_k * d rows.
Eigen::MatrixXd nsd_forward(const NsdModel& model, const Eigen::MatrixXd& X, int batch = 1);

struct NsdDataset {
    std::vector<Eigen::MatrixXd> inputs;      // (n_k * d) x f_in each
    std::vector<std::vector<int>> candidates; // readout rows to softmax over
    std::vector<int> targets;                 // position within candidates
};

// Mean cross-entropy over the chosen samples; fills per-parameter gradients
// (aligned with nsd_parameters) and optionally the number of correct top-1
// predictions.
double nsd_grad(NsdModel& model, const NsdDataset& data, const std::vector<int>& samples,
                std::vector<Eigen::MatrixXd>& grads, int* correct = nullptr);

// Per-sample candidate scores (softmax logits) without gradients.
Eigen::VectorXd nsd_scores(const NsdModel& model, const Eigen::MatrixXd& input,
                           const std::vector<int>& candidates);

struct TrainConfig {
    int epochs = 100;
    double lr = 1e-2;
    int batch = 64;
    std::uint64_t seed = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    // Gradients evaluated in float with double parameter/optimizer state;
    // deterministic either way. Disable for double-precision gradients.
    bool single_precision = true;
};

struct TrainLog {
    std::vector<double> losses;     // mean loss per epoch
    std::vector<double> accuracies; // training top-1 accuracy per epoch
};

// Adam on shuffled minibatches; deterministic given (config.seed, data).
TrainLog train(NsdModel& model, const NsdDataset& data, const TrainConfig& config);

struct EnergyBoundReport {
    double lhs = 0;         // E_F(Y)
    double rhs = 0;         // lambda_star |w1|^2 |W2^T|^2 E_F(X)
    double lambda_star = 0; // max_{i>0} (lambda_i - 1)^2
    double energy_x = 0;
    bool holds = false;
};

// Oversmoothing bound for one sheaf-convolutional layer
// Y = phi((I - Lap)(I (x) w1) X W2) with (Leaky)ReLU phi and the normalized
// degree-0 Laplacian of a 1-dimensional sheaf whose co-edge restriction
// products are positive. Throws ClassViolation when a product is <= 0.
EnergyBoundReport energy_bound_check(std::shared_ptr<const Sheaf> F, double w1,
                                     const Eigen::MatrixXd& W2, const Eigen::MatrixXd& X,
                                     double leaky_slope = 0.0);

} // namespace sheaflab
