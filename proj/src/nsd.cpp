#include "sheaflab/nsd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sheaflab/errors.hpp"
#include "sheaflab/spectral.hpp"

namespace sheaflab {

namespace {

Eigen::MatrixXd gaussian(int r, int c, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> g(0.0, stddev);
    Eigen::MatrixXd M(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) M(i, j) = g(rng);
    return M;
}

// The output layer's channel weights start damped: a readout summing many
// edge contributions otherwise produces large initial logits, and the fastest
// descent direction from there is a global shrink that can kill shared
// operator parameters before anything useful is learned.
NsdLayer make_layer(int d, int f_in, int f_out, Nonlinearity phi, std::mt19937_64& rng,
                    bool last) {
    NsdLayer layer;
    double cs = std::sqrt(2.0 / (f_in + f_out)) * (last ? 0.1 : 1.0);
    layer.W_stalk_up = Eigen::MatrixXd::Identity(d, d) + gaussian(d, d, rng, 0.1);
    layer.W_stalk_down = Eigen::MatrixXd::Identity(d, d) + gaussian(d, d, rng, 0.1);
    layer.W_stalk_center = Eigen::MatrixXd::Identity(d, d) + gaussian(d, d, rng, 0.1);
    layer.W_channel_up = gaussian(f_in, f_out, rng, cs);
    layer.W_channel_down = gaussian(f_in, f_out, rng, cs);
    layer.W_channel_center = gaussian(f_in, f_out, rng, cs);
    layer.phi = phi;
    return layer;
}

template <class S>
int apply_phi(TapeT<S>& t, int x, Nonlinearity phi) {
    switch (phi) {
        case Nonlinearity::odd_tanh: return t.tanh_(x);
        case Nonlinearity::leaky_relu: return t.leaky_relu(x, 0.01);
        case Nonlinearity::identity: return x;
    }
    return x;
}

template <class S>
Eigen::SparseMatrix<S> cast_sparse(const Eigen::SparseMatrix<double>& A) {
    if constexpr (std::is_same_v<S, double>) return A;
    else return A.template cast<S>();
}

// Everything the tape-level forward needs beyond the raw parameters.
template <class S>
struct ForwardContext {
    using Sparse = Eigen::SparseMatrix<S>;
    std::vector<int> layer_params; // 6 ids per layer, nsd_parameters order
    int batch = 1;
    // fixed operators, replicated across the batch (one block per sample)
    Sparse d_up_B, d_up_T_B, d_down_B, d_down_T_B;
    // learned operators
    bool learned = false;
    std::shared_ptr<CobLayout> up_layout, down_layout;
    int up_values = -1, down_values = -1;
    // width-1 learned coboundaries assembled into batch sparse operators
    bool assembled = false;
    Sparse A_up, A_up_T, A_down, A_down_T;
};

// kron(I_batch, A): the batched version of a per-sample operator.
template <class S>
Eigen::SparseMatrix<S> replicate_sparse(const Eigen::SparseMatrix<S>& A, int batch) {
    if (batch == 1) return A;
    std::vector<Eigen::Triplet<S>> trips;
    trips.reserve(static_cast<size_t>(A.nonZeros()) * batch);
    for (int s = 0; s < batch; ++s)
        for (int k = 0; k < A.outerSize(); ++k)
            for (typename Eigen::SparseMatrix<S>::InnerIterator it(A, k); it; ++it)
                trips.emplace_back(static_cast<int>(s * A.rows() + it.row()),
                                   static_cast<int>(s * A.cols() + it.col()), it.value());
    Eigen::SparseMatrix<S> B(static_cast<long>(batch) * A.rows(),
                             static_cast<long>(batch) * A.cols());
    B.setFromTriplets(trips.begin(), trips.end());
    return B;
}

// Batched sparse matrix with entries sign * values[vblock] (width-1 stalks).
template <class S>
Eigen::SparseMatrix<S> assemble_cob(const CobLayout& per_sample,
                                    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& V,
                                    int rows_per, int cols_per) {
    const int batch = static_cast<int>(per_sample.size());
    std::vector<Eigen::Triplet<S>> trips;
    for (int s = 0; s < batch; ++s)
        for (const CobBlock& b : per_sample[s])
            trips.emplace_back(s * rows_per + b.row, s * cols_per + b.col,
                               static_cast<S>(b.sign) * V(b.vblock, 0));
    Eigen::SparseMatrix<S> A(static_cast<long>(batch) * rows_per,
                             static_cast<long>(batch) * cols_per);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

template <class S>
int sd_up_apply(TapeT<S>& t, const NsdModel& m, const ForwardContext<S>& ctx, int A) {
    if (ctx.learned) {
        if (ctx.up_layout->empty() || (*ctx.up_layout)[0].empty()) return t.scale(A, 0.5);
        if (ctx.assembled)
            return t.cob_diffusion_step(ctx.A_up, ctx.A_up_T, ctx.up_layout,
                                        m.structure.n_kp1, m.structure.n_k, m.eta,
                                        ctx.up_values, A, false);
        int half = t.scale(A, 0.5);
        int dA = t.cob_apply(ctx.up_layout, m.structure.n_kp1, m.structure.n_k, m.d,
                             ctx.up_values, A, false);
        int lap = t.cob_apply(ctx.up_layout, m.structure.n_kp1, m.structure.n_k, m.d,
                              ctx.up_values, dA, true);
        return t.add(half, t.scale(lap, -2.0 * m.eta));
    }
    if (!m.has_up) return t.scale(A, 0.5);
    return t.diffusion_step(ctx.d_up_B, ctx.d_up_T_B, m.eta, A, 1);
}

template <class S>
int sd_down_apply(TapeT<S>& t, const NsdModel& m, const ForwardContext<S>& ctx, int A) {
    if (ctx.learned) {
        if (ctx.down_layout->empty() || (*ctx.down_layout)[0].empty())
            return t.scale(A, 0.5);
        if (ctx.assembled)
            return t.cob_diffusion_step(ctx.A_down_T, ctx.A_down, ctx.down_layout,
                                        m.structure.n_k, m.structure.n_km1, m.eta,
                                        ctx.down_values, A, true);
        int half = t.scale(A, 0.5);
        int dtA = t.cob_apply(ctx.down_layout, m.structure.n_k, m.structure.n_km1, m.d,
                              ctx.down_values, A, true);
        int lap = t.cob_apply(ctx.down_layout, m.structure.n_k, m.structure.n_km1, m.d,
                              ctx.down_values, dtA, false);
        return t.add(half, t.scale(lap, -2.0 * m.eta));
    }
    if (!m.has_down) return t.scale(A, 0.5);
    return t.diffusion_step(ctx.d_down_T_B, ctx.d_down_B, m.eta, A, 1);
}

template <class S>
int forward_layers(TapeT<S>& t, const NsdModel& m, const ForwardContext<S>& ctx, int X) {
    int cur = X;
    for (size_t l = 0; l < m.layers.size(); ++l) {
        const int* p = &ctx.layer_params[6 * l];
        int combined;
        if (m.d == 1) {
            // width-1 stalk weights are scalars and commute with the linear
            // half-diffusion operators, so apply them inside one fused mix
            int U = sd_up_apply(t, m, ctx, cur);
            int D = sd_down_apply(t, m, ctx, cur);
            combined = t.mix3(U, p[0], p[3], D, p[1], p[4], cur, p[2], p[5]);
        } else {
            int up = t.matmul(sd_up_apply(t, m, ctx, t.stalk_mix(p[0], cur, m.d)), p[3]);
            int down =
                t.matmul(sd_down_apply(t, m, ctx, t.stalk_mix(p[1], cur, m.d)), p[4]);
            int center = t.matmul(t.stalk_mix(p[2], cur, m.d), p[5]);
            combined = t.add3(up, down, center);
        }
        cur = apply_phi(t, combined, m.layers[l].phi);
    }
    return cur;
}

// Learner MLP on a stack of concatenated pair features; returns the stacked
// restriction blocks after the mode constraint.
template <class S>
int learner_blocks(TapeT<S>& t, const SheafLearner& L, const std::vector<int>& lp, int P) {
    int H = t.tanh_(t.add_rowvec(t.matmul(P, lp[0]), lp[1]));
    int O = t.add_rowvec(t.matmul(H, lp[2]), lp[3]);
    int blocks = t.rows_to_blocks(O, L.d);
    if (L.mode == LearnerMode::diagonal) blocks = t.block_diagonal(blocks, L.d);
    if (L.mode == LearnerMode::orthogonal) blocks = t.cayley_blocks(blocks, L.d);
    return blocks;
}

// Per-sample aggregation groups turning the stacked input X into rank-k
// element features and the adjacent-rank aggregates.
template <class S>
void build_learned_values(TapeT<S>& t, const NsdModel& m, const std::vector<int>& lp,
                          int X, ForwardContext<S>& ctx) {
    using Mat = typename TapeT<S>::Mat;
    const LevelStructure& S_ = m.structure;
    const int B = ctx.batch, d = m.d;
    // rank-k features: mean over the d stalk rows of each element (a width-1
    // stalk already has one row per element, so the mean is the identity)
    int Fk;
    if (d == 1) {
        Fk = X;
    } else {
        std::vector<std::vector<int>> k_groups(static_cast<size_t>(B) * S_.n_k);
        for (int s = 0; s < B; ++s)
            for (int i = 0; i < S_.n_k; ++i)
                for (int j = 0; j < d; ++j)
                    k_groups[s * S_.n_k + i].push_back((s * S_.n_k + i) * d + j);
        Fk = t.average_rows(X, k_groups);
    }

    auto aggregate = [&](const std::vector<std::vector<int>>& groups, int count) {
        std::vector<std::vector<int>> g(static_cast<size_t>(B) * count);
        for (int s = 0; s < B; ++s)
            for (int a = 0; a < count; ++a)
                for (int i : groups[a]) g[s * count + a].push_back(s * S_.n_k + i);
        return t.average_rows(Fk, g);
    };
    int Fkm1 = S_.n_km1 > 0 ? aggregate(S_.km1_groups, S_.n_km1) : -1;
    int Fkp1 = S_.n_kp1 > 0 ? aggregate(S_.kp1_groups, S_.n_kp1) : -1;

    const int ncov_down = static_cast<int>(S_.down_blocks.size());
    const int ncov_up = static_cast<int>(S_.up_blocks.size());

    auto layout_for = [&](const std::vector<CobBlock>& blocks, int ncov) {
        auto out = std::make_shared<CobLayout>(B);
        for (int s = 0; s < B; ++s) {
            (*out)[s] = blocks;
            for (auto& b : (*out)[s]) b.vblock += s * ncov;
        }
        return out;
    };

    if (ncov_down > 0) {
        std::vector<int> src, dst;
        for (int s = 0; s < B; ++s)
            for (const auto& b : S_.down_blocks) {
                src.push_back(s * S_.n_km1 + b.col); // rank-(k-1) element
                dst.push_back(s * S_.n_k + b.row);   // rank-k element
            }
        int P = t.concat_cols(t.gather_rows(Fkm1, src), t.gather_rows(Fk, dst));
        ctx.down_values = learner_blocks(t, *m.learner, lp, P);
        ctx.down_layout = layout_for(S_.down_blocks, ncov_down);
    } else {
        ctx.down_layout = std::make_shared<CobLayout>(B);
        ctx.down_values = t.input(Mat::Zero(d, d));
    }
    if (ncov_up > 0) {
        std::vector<int> src, dst;
        for (int s = 0; s < B; ++s)
            for (const auto& b : S_.up_blocks) {
                src.push_back(s * S_.n_k + b.col);   // rank-k element
                dst.push_back(s * S_.n_kp1 + b.row); // rank-(k+1) element
            }
        int P = t.concat_cols(t.gather_rows(Fk, src), t.gather_rows(Fkp1, dst));
        ctx.up_values = learner_blocks(t, *m.learner, lp, P);
        ctx.up_layout = layout_for(S_.up_blocks, ncov_up);
    } else {
        ctx.up_layout = std::make_shared<CobLayout>(B);
        ctx.up_values = t.input(Mat::Zero(d, d));
    }
}

// Registers parameters, builds the forward graph, returns the output node.
template <class S>
int build_forward(TapeT<S>& t, const NsdModel& m, int X, int batch,
                  ForwardContext<S>& ctx, std::vector<int>* param_ids_out) {
    ctx.batch = batch;
    std::vector<int> param_ids;
    for (const NsdLayer& l : m.layers) {
        for (const Eigen::MatrixXd* w :
             {&l.W_stalk_up, &l.W_stalk_down, &l.W_stalk_center, &l.W_channel_up,
              &l.W_channel_down, &l.W_channel_center})
            param_ids.push_back(t.input(w->template cast<S>()));
    }
    std::vector<int> learner_params;
    if (m.learner) {
        for (const Eigen::MatrixXd* w :
             {&m.learner->W1, &m.learner->b1, &m.learner->W2, &m.learner->b2}) {
            learner_params.push_back(t.input(w->template cast<S>()));
            param_ids.push_back(learner_params.back());
        }
        ctx.learned = true;
        build_learned_values(t, m, learner_params, X, ctx);
        if (m.d == 1) {
            ctx.assembled = true;
            if (!ctx.up_layout->empty() && !(*ctx.up_layout)[0].empty()) {
                ctx.A_up = assemble_cob(*ctx.up_layout, t.value(ctx.up_values),
                                        m.structure.n_kp1, m.structure.n_k);
                ctx.A_up_T = ctx.A_up.transpose();
            }
            if (!ctx.down_layout->empty() && !(*ctx.down_layout)[0].empty()) {
                ctx.A_down = assemble_cob(*ctx.down_layout, t.value(ctx.down_values),
                                          m.structure.n_k, m.structure.n_km1);
                ctx.A_down_T = ctx.A_down.transpose();
            }
        }
    } else {
        if (m.has_up) {
            ctx.d_up_B = replicate_sparse(cast_sparse<S>(m.d_up), batch);
            ctx.d_up_T_B = ctx.d_up_B.transpose();
        }
        if (m.has_down) {
            ctx.d_down_B = replicate_sparse(cast_sparse<S>(m.d_down), batch);
            ctx.d_down_T_B = ctx.d_down_B.transpose();
        }
    }
    ctx.layer_params.assign(param_ids.begin(),
                            param_ids.begin() + 6 * static_cast<long>(m.layers.size()));
    if (param_ids_out) *param_ids_out = param_ids;
    return forward_layers(t, m, ctx, X);
}

// Readout node: divergence maps the output to the rank-(k-1) signal.
template <class S>
int build_readout(TapeT<S>& t, const NsdModel& m, const ForwardContext<S>& ctx, int Y) {
    if (m.readout == Readout::identity) return Y;
    if (m.d != 1) throw ShapeError("divergence readout needs stalk width 1");
    if (ctx.learned)
        return t.cob_apply(ctx.down_layout, m.structure.n_k, m.structure.n_km1, m.d,
                           ctx.down_values, Y, true);
    if (!m.has_down) throw ShapeError("divergence readout needs a down coboundary");
    Eigen::SparseMatrix<S> d_down_T = cast_sparse<S>(m.d_down).transpose();
    return t.spmm(d_down_T, Y, ctx.batch);
}

int signal_rows_per_sample(const NsdModel& m) {
    if (m.readout == Readout::identity) {
        if (m.learner) return m.structure.n_k * m.d;
        return static_cast<int>(m.d_up.size() > 0 && m.has_up ? m.d_up.cols()
                                                              : m.d_down.rows());
    }
    return m.learner ? m.structure.n_km1 : static_cast<int>(m.d_down.cols());
}

// Batched loss/gradient evaluation; the scalar type selects the fast float
// training path or the double reference path. Gradients come back in double
// regardless so the optimizer state stays in full precision.
template <class S>
double nsd_grad_impl(NsdModel& model, const NsdDataset& data,
                     const std::vector<int>& samples, std::vector<Eigen::MatrixXd>& grads,
                     int* correct) {
    if (samples.empty()) throw ShapeError("empty batch");
    const int B = static_cast<int>(samples.size());
    const long rows_per = data.inputs[samples[0]].rows();
    typename TapeT<S>::Mat X(B * rows_per, data.inputs[samples[0]].cols());
    for (int s = 0; s < B; ++s)
        X.middleRows(s * rows_per, rows_per) = data.inputs[samples[s]].template cast<S>();

    TapeT<S> t;
    ForwardContext<S> ctx;
    std::vector<int> param_ids;
    int out = build_forward(t, model, t.input(std::move(X)), B, ctx, &param_ids);
    int signal = build_readout(t, model, ctx, out);
    if (t.value(signal).cols() != 1) throw ShapeError("readout needs a single channel");
    const int sig_per = signal_rows_per_sample(model);

    std::vector<int> losses;
    int ncorrect = 0;
    for (int s = 0; s < B; ++s) {
        const std::vector<int>& cand = data.candidates[samples[s]];
        std::vector<int> rows;
        for (int c : cand) rows.push_back(s * sig_per + c);
        int z = t.gather_rows(signal, rows);
        losses.push_back(t.softmax_cross_entropy(z, data.targets[samples[s]]));
        int arg = 0;
        t.value(z).col(0).maxCoeff(&arg);
        if (arg == data.targets[samples[s]]) ++ncorrect;
    }
    int loss = t.scale(t.add_many(losses), 1.0 / B);
    double loss_val = static_cast<double>(t.value(loss)(0, 0));
    if (!std::isfinite(loss_val)) throw NonFiniteLoss("loss is not finite");
    t.backward(loss);

    grads.clear();
    for (int id : param_ids) {
        if (t.grad(id).size() == 0)
            grads.push_back(Eigen::MatrixXd::Zero(t.value(id).rows(), t.value(id).cols()));
        else
            grads.push_back(t.grad(id).template cast<double>());
    }
    if (correct) *correct = ncorrect;
    return loss_val;
}

} // namespace

SheafLearner make_sheaf_learner(LearnerMode mode, int d, int feat, int hidden,
                                std::uint64_t seed) {
    SheafLearner L;
    L.mode = mode;
    L.d = d;
    L.feat = feat;
    L.hidden = hidden;
    std::mt19937_64 rng(seed ^ 0xabcdef12u);
    L.W1 = gaussian(2 * feat, hidden, rng, std::sqrt(2.0 / (2 * feat + hidden)));
    L.b1 = Eigen::MatrixXd::Zero(1, hidden);
    // damped output weights: restriction maps start tight around the identity
    // bias below, so the diffusion operator is well-conditioned from step one
    L.W2 = gaussian(hidden, d * d, rng, 0.1 * std::sqrt(2.0 / (hidden + d * d)));
    // identity output bias: restriction maps start at I (the constant sheaf)
    // and training perturbs them, mirroring the I + noise stalk-weight init
    L.b2 = Eigen::MatrixXd::Zero(1, d * d);
    if (mode != LearnerMode::orthogonal)
        for (int i = 0; i < d; ++i) L.b2(0, i * d + i) = 1.0;
    return L;
}

Sheaf learn_restrictions(const SheafLearner& learner, std::shared_ptr<const Poset> base,
                         const std::map<std::string, Eigen::VectorXd>& features) {
    const Poset& p = *base;
    std::vector<Eigen::VectorXd> feat(p.n());
    std::vector<bool> have(p.n(), false);
    for (int i = 0; i < p.n(); ++i) {
        auto it = features.find(p.ids[i]);
        if (it != features.end()) {
            if (it->second.size() != learner.feat)
                throw ShapeError("feature dimension mismatch at " + p.ids[i]);
            feat[i] = it->second;
            have[i] = true;
        }
    }
    // absent target features: mean of the element's covered features
    for (int i = 0; i < p.n(); ++i) {
        if (have[i]) continue;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(learner.feat);
        int count = 0;
        for (int s : p.down[i])
            if (have[s]) {
                sum += feat[s];
                ++count;
            }
        if (count > 0) {
            feat[i] = sum / count;
            have[i] = true;
        }
    }
    Sheaf F;
    F.base = base;
    F.stalk_dim.assign(p.n(), learner.d);
    Tape t;
    std::vector<int> lp = {t.input(learner.W1), t.input(learner.b1), t.input(learner.W2),
                           t.input(learner.b2)};
    Eigen::MatrixXd P(p.coverings.size(), 2 * learner.feat);
    int row = 0;
    for (auto& [s, tgt] : p.coverings) {
        if (!have[s]) throw MissingFeatures("no features for source " + p.ids[s]);
        if (!have[tgt]) throw MissingFeatures("no features for target " + p.ids[tgt]);
        P.row(row).head(learner.feat) = feat[s].transpose();
        P.row(row).tail(learner.feat) = feat[tgt].transpose();
        ++row;
    }
    int blocks = learner_blocks(t, learner, lp, t.input(P));
    const Eigen::MatrixXd& V = t.value(blocks);
    row = 0;
    for (auto& [s, tgt] : p.coverings) {
        F.restriction[{s, tgt}] = V.middleRows(row * learner.d, learner.d);
        ++row;
    }
    return F;
}

LevelStructure level_structure(std::shared_ptr<const Poset> base, int k) {
    auto cx = cellular_complex(std::make_shared<Sheaf>(constant_sheaf(base, 1)));
    LevelStructure S;
    S.n_k = cx.dim_at(k);
    S.n_km1 = k >= 1 ? cx.dim_at(k - 1) : 0;
    S.n_kp1 = cx.dim_at(k + 1);
    if (S.n_kp1 > 0) {
        const Eigen::MatrixXd& D = cx.d[k];
        S.kp1_groups.resize(S.n_kp1);
        int vb = 0;
        for (int r = 0; r < D.rows(); ++r)
            for (int c = 0; c < D.cols(); ++c)
                if (D(r, c) != 0) {
                    S.up_blocks.push_back({r, c, D(r, c), vb++});
                    S.kp1_groups[r].push_back(c);
                }
    }
    if (S.n_km1 > 0) {
        const Eigen::MatrixXd& D = cx.d[k - 1];
        S.km1_groups.resize(S.n_km1);
        int vb = 0;
        for (int r = 0; r < D.rows(); ++r)
            for (int c = 0; c < D.cols(); ++c)
                if (D(r, c) != 0) {
                    // row = rank-k element, col = rank-(k-1) element
                    S.down_blocks.push_back({r, c, D(r, c), vb++});
                    S.km1_groups[c].push_back(r);
                }
    }
    return S;
}

NsdModel make_nsd_model(std::shared_ptr<const Sheaf> F, int k, const std::vector<int>& widths,
                        double eta, Nonlinearity phi, Nonlinearity last_phi,
                        std::uint64_t seed) {
    if (widths.size() < 2) throw ShapeError("need at least one layer");
    NsdModel m;
    m.k = k;
    m.eta = eta;
    auto cx = cellular_complex(F);
    if (k < 0 || k >= cx.gradings() || cx.dim_at(k) == 0)
        throw ShapeError("no cochains at the requested grading");
    int d = -1;
    for (const Summand& s : cx.summands[k]) {
        if (d < 0) d = s.dim;
        if (s.dim != d) throw ShapeError("rank-k stalk widths must be uniform");
    }
    m.d = std::max(d, 1);
    if (cx.dim_at(k + 1) > 0 && cx.coboundary(k).size() > 0) {
        m.d_up = cx.coboundary(k).sparseView();
        m.has_up = m.d_up.rows() > 0;
    }
    if (k >= 1 && cx.dim_at(k - 1) > 0) {
        m.d_down = cx.coboundary(k - 1).sparseView();
        m.has_down = true;
    }
    std::mt19937_64 rng(seed ^ 0x5d0f00dULL);
    for (size_t l = 0; l + 1 < widths.size(); ++l)
        m.layers.push_back(make_layer(m.d, widths[l], widths[l + 1],
                                      l + 2 == widths.size() ? last_phi : phi, rng,
                                      l + 2 == widths.size()));
    return m;
}

NsdModel make_learned_nsd_model(std::shared_ptr<const Poset> base, int k, int d,
                                const std::vector<int>& widths, double eta,
                                LearnerMode mode, Nonlinearity phi, Nonlinearity last_phi,
                                std::uint64_t seed) {
    if (widths.size() < 2) throw ShapeError("need at least one layer");
    NsdModel m;
    m.k = k;
    m.d = d;
    m.eta = eta;
    m.structure = level_structure(base, k);
    m.learner = make_sheaf_learner(mode, d, widths[0], 32, seed);
    std::mt19937_64 rng(seed ^ 0x5d0f00dULL);
    for (size_t l = 0; l + 1 < widths.size(); ++l)
        m.layers.push_back(make_layer(d, widths[l], widths[l + 1],
                                      l + 2 == widths.size() ? last_phi : phi, rng,
                                      l + 2 == widths.size()));
    return m;
}

std::vector<Eigen::MatrixXd*> nsd_parameters(NsdModel& model) {
    std::vector<Eigen::MatrixXd*> out;
    for (NsdLayer& l : model.layers)
        for (Eigen::MatrixXd* w : {&l.W_stalk_up, &l.W_stalk_down, &l.W_stalk_center,
                                   &l.W_channel_up, &l.W_channel_down, &l.W_channel_center})
            out.push_back(w);
    if (model.learner)
        for (Eigen::MatrixXd* w :
             {&model.learner->W1, &model.learner->b1, &model.learner->W2, &model.learner->b2})
            out.push_back(w);
    return out;
}

Eigen::MatrixXd nsd_forward(const NsdModel& model, const Eigen::MatrixXd& X, int batch) {
    Tape t;
    ForwardContext<double> ctx;
    int out = build_forward(t, model, t.input(X), batch, ctx, nullptr);
    return t.value(out);
}

double nsd_grad(NsdModel& model, const NsdDataset& data, const std::vector<int>& samples,
                std::vector<Eigen::MatrixXd>& grads, int* correct) {
    return nsd_grad_impl<double>(model, data, samples, grads, correct);
}

Eigen::VectorXd nsd_scores(const NsdModel& model, const Eigen::MatrixXd& input,
                           const std::vector<int>& candidates) {
    Tape t;
    ForwardContext<double> ctx;
    int out = build_forward(t, model, t.input(input), 1, ctx, nullptr);
    int signal = build_readout(t, model, ctx, out);
    Eigen::VectorXd z(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i)
        z[static_cast<long>(i)] = t.value(signal)(candidates[i], 0);
    return z;
}

TrainLog train(NsdModel& model, const NsdDataset& data, const TrainConfig& config) {
    std::vector<Eigen::MatrixXd*> params = nsd_parameters(model);
    std::vector<Eigen::MatrixXd> m1, m2;
    for (Eigen::MatrixXd* p : params) {
        m1.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        m2.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
    std::mt19937_64 rng(config.seed ^ 0xada3ULL);
    std::vector<int> order(data.inputs.size());
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        int correct = 0, seen = 0;
        for (size_t start = 0; start < order.size(); start += config.batch) {
            std::vector<int> batch(order.begin() + static_cast<long>(start),
                                   order.begin() +
                                       static_cast<long>(std::min(order.size(),
                                                                  start + config.batch)));
            std::vector<Eigen::MatrixXd> grads;
            int ncorrect = 0;
            double loss = config.single_precision
                              ? nsd_grad_impl<float>(model, data, batch, grads, &ncorrect)
                              : nsd_grad_impl<double>(model, data, batch, grads, &ncorrect);
            loss_sum += loss * static_cast<double>(batch.size());
            correct += ncorrect;
            seen += static_cast<int>(batch.size());
            ++step;
            double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (size_t p = 0; p < params.size(); ++p) {
                m1[p] = config.beta1 * m1[p] + (1 - config.beta1) * grads[p];
                m2[p] = config.beta2 * m2[p].array().matrix() +
                        (1 - config.beta2) * grads[p].array().square().matrix();
                *params[p] -= (config.lr *
                               ((m1[p] / bc1).array() /
                                ((m2[p] / bc2).array().sqrt() + config.eps)))
                                  .matrix();
            }
        }
        log.losses.push_back(loss_sum / seen);
        log.accuracies.push_back(static_cast<double>(correct) / seen);
    }
    return log;
}

EnergyBoundReport energy_bound_check(std::shared_ptr<const Sheaf> F, double w1,
                                     const Eigen::MatrixXd& W2, const Eigen::MatrixXd& X,
                                     double leaky_slope) {
    const Poset& p = F->poset();
    for (int e : p.elements_of_rank(1)) {
        const std::vector<int>& ends = p.down[e];
        if (ends.size() != 2 || F->dim(ends[0]) != 1 || F->dim(ends[1]) != 1)
            throw ClassViolation("need a graph with one-dimensional stalks");
        double prod = F->covering_restriction(ends[0], e)(0, 0) *
                      F->covering_restriction(ends[1], e)(0, 0);
        if (prod <= 0) throw ClassViolation("co-edge restriction product not positive");
    }
    auto cx = cellular_complex(F);
    Eigen::MatrixXd lap = laplacian(cx, 0, LaplacianKind::normalized);
    EigSym eig = eig_sym(lap);

    EnergyBoundReport rep;
    rep.lambda_star = 0;
    for (int i = 1; i < eig.values.size(); ++i)
        rep.lambda_star = std::max(rep.lambda_star, std::pow(eig.values[i] - 1.0, 2));
    rep.energy_x = (X.transpose() * lap * X).trace();

    Eigen::MatrixXd Z = w1 * (Eigen::MatrixXd::Identity(lap.rows(), lap.cols()) - lap) * X * W2;
    Eigen::MatrixXd Y = Z.cwiseMax(leaky_slope * Z);
    rep.lhs = (Y.transpose() * lap * Y).trace();
    double w2norm = W2.jacobiSvd().singularValues()[0];
    rep.rhs = rep.lambda_star * w1 * w1 * w2norm * w2norm * rep.energy_x;
    rep.holds = rep.lhs <= rep.rhs * (1 + 1e-9) + 1e-12;
    return rep;
}

} // namespace sheaflab
