#include "sheaflab/autodiff.hpp"

#include <cmath>

#include "sheaflab/errors.hpp"

namespace sheaflab {

namespace {
// Adds an expression into a lazily allocated gradient without materializing a
// temporary; the first contribution assigns directly.
template <class M, class D>
void accumulate(M& g, const M& shape_like, const Eigen::MatrixBase<D>& delta) {
    if (g.size() == 0) {
        g.resize(shape_like.rows(), shape_like.cols());
        g.noalias() = delta;
    } else {
        g.noalias() += delta;
    }
}
} // namespace

template <class S>
typename TapeT<S>::Mat& TapeT<S>::grad_ref(int id) {
    Node& n = nodes[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

template <class S>
int TapeT<S>::input(Mat v) {
    nodes.push_back({std::move(v), {}, {}});
    return static_cast<int>(nodes.size()) - 1;
}

template <class S>
int TapeT<S>::matmul(int a, int b) {
    int id = input(nodes[a].value * nodes[b].value);
    nodes[id].backward = [this, a, b, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, g * nodes[b].value.transpose());
        accumulate(nodes[b].grad, nodes[b].value, nodes[a].value.transpose() * g);
    };
    return id;
}

template <class S>
int TapeT<S>::add(int a, int b) {
    int id = input(nodes[a].value + nodes[b].value);
    nodes[id].backward = [this, a, b, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, g);
        accumulate(nodes[b].grad, nodes[b].value, g);
    };
    return id;
}

template <class S>
int TapeT<S>::add3(int a, int b, int c) {
    int id = input(nodes[a].value + nodes[b].value + nodes[c].value);
    nodes[id].backward = [this, a, b, c, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, g);
        accumulate(nodes[b].grad, nodes[b].value, g);
        accumulate(nodes[c].grad, nodes[c].value, g);
    };
    return id;
}

template <class S>
int TapeT<S>::scale(int a, double c) {
    const S cs = static_cast<S>(c);
    int id = input(cs * nodes[a].value);
    nodes[id].backward = [this, a, cs, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, cs * g);
    };
    return id;
}

template <class S>
int TapeT<S>::tanh_(int a) {
    int id;
    if constexpr (std::is_same_v<S, float>) {
        // float has a vectorized tanh kernel that is odd by construction
        id = input(nodes[a].value.array().tanh().matrix());
    } else {
        // tanh via sign(x) (1 - e^{-2|x|}) / (1 + e^{-2|x|}): exp has a
        // vectorized double path while tanh does not, and the symmetrized form
        // stays exactly odd so sign flips commute with the activation
        // bit-for-bit.
        const auto& x = nodes[a].value.array();
        Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> t = (S(-2) * x.abs()).exp();
        id = input((x.sign() * (S(1) - t) / (S(1) + t)).matrix());
    }
    nodes[id].backward = [this, a, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value,
                   (g.array() * (S(1) - nodes[id].value.array().square())).matrix());
    };
    return id;
}

template <class S>
int TapeT<S>::leaky_relu(int a, double slope) {
    const S sl = static_cast<S>(slope);
    const Mat& x = nodes[a].value;
    int id = input(x.cwiseMax(sl * x));
    nodes[id].backward = [this, a, sl, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat mask = (nodes[a].value.array() > S(0)).template cast<S>().matrix() * (S(1) - sl);
        mask.array() += sl;
        accumulate(nodes[a].grad, nodes[a].value, (g.array() * mask.array()).matrix());
    };
    return id;
}

template <class S>
int TapeT<S>::add_rowvec(int a, int b) {
    int id = input(nodes[a].value.rowwise() + nodes[b].value.row(0));
    nodes[id].backward = [this, a, b, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, g);
        accumulate(nodes[b].grad, nodes[b].value, g.colwise().sum());
    };
    return id;
}

template <class S>
int TapeT<S>::stalk_mix(int W, int X, int d) {
    const Mat& x = nodes[X].value;
    if (x.rows() % d != 0) throw ShapeError("stalk_mix: rows not a multiple of d");
    if (d == 1) {
        // one-dimensional stalks: a global scalar multiple
        int id = input(nodes[W].value(0, 0) * x);
        nodes[id].backward = [this, W, X, id] {
            const Mat& g = nodes[id].grad;
            if (g.size() == 0) return;
            accumulate(nodes[X].grad, nodes[X].value, nodes[W].value(0, 0) * g);
            Mat gw(1, 1);
            gw(0, 0) = (g.array() * nodes[X].value.array()).sum();
            accumulate(nodes[W].grad, nodes[W].value, gw);
        };
        return id;
    }
    const int blocks = static_cast<int>(x.rows()) / d;
    Mat y(x.rows(), x.cols());
    for (int i = 0; i < blocks; ++i)
        y.middleRows(i * d, d) = nodes[W].value * x.middleRows(i * d, d);
    int id = input(y);
    nodes[id].backward = [this, W, X, d, blocks, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        const Mat& x = nodes[X].value;
        Mat gx(x.rows(), x.cols());
        Mat gw = Mat::Zero(d, d);
        Mat Wt = nodes[W].value.transpose();
        for (int i = 0; i < blocks; ++i) {
            gx.middleRows(i * d, d) = Wt * g.middleRows(i * d, d);
            gw += g.middleRows(i * d, d) * x.middleRows(i * d, d).transpose();
        }
        accumulate(nodes[X].grad, x, gx);
        accumulate(nodes[W].grad, nodes[W].value, gw);
    };
    return id;
}

template <class S>
int TapeT<S>::spmm(const Sparse& A, int X, int batch) {
    const Mat& x = nodes[X].value;
    if (x.rows() != static_cast<long>(batch) * A.cols())
        throw ShapeError("spmm: X rows must equal batch * A.cols()");
    Mat y(static_cast<long>(batch) * A.rows(), x.cols());
    for (int s = 0; s < batch; ++s)
        y.middleRows(s * A.rows(), A.rows()) = A * x.middleRows(s * A.cols(), A.cols());
    int id = input(y);
    Sparse At = A.transpose();
    nodes[id].backward = [this, At, X, batch, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        const Mat& x = nodes[X].value;
        Mat gx(x.rows(), x.cols());
        for (int s = 0; s < batch; ++s)
            gx.middleRows(s * At.rows(), At.rows()) =
                At * g.middleRows(s * At.cols(), At.cols());
        accumulate(nodes[X].grad, x, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::diffusion_step(const Sparse& A, const Sparse& At, double eta, int X,
                             int batch) {
    const Mat& x = nodes[X].value;
    if (x.rows() != static_cast<long>(batch) * A.cols())
        throw ShapeError("diffusion_step: X rows must equal batch * A.cols()");
    const long n = A.cols();
    const S c = S(2) * static_cast<S>(eta);
    Mat y(x.rows(), x.cols());
    Mat mid;
    for (int s = 0; s < batch; ++s) {
        mid.noalias() = A * x.middleRows(s * n, n);
        y.middleRows(s * n, n).noalias() = S(0.5) * x.middleRows(s * n, n);
        y.middleRows(s * n, n).noalias() -= c * (At * mid);
    }
    int id = input(std::move(y));
    nodes[id].backward = [this, A, At, c, X, batch, n, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat& gx = grad_ref(X);
        Mat mid;
        for (int s = 0; s < batch; ++s) {
            mid.noalias() = A * g.middleRows(s * n, n);
            gx.middleRows(s * n, n).noalias() += S(0.5) * g.middleRows(s * n, n);
            gx.middleRows(s * n, n).noalias() -= c * (At * mid);
        }
    };
    return id;
}

template <class S>
int TapeT<S>::mix3(int U, int wu, int Wu, int D, int wd, int Wd, int C, int wc, int Wc) {
    auto w = [&](int id) { return nodes[id].value(0, 0); };
    Mat y;
    y.noalias() = w(wu) * (nodes[U].value * nodes[Wu].value);
    y.noalias() += w(wd) * (nodes[D].value * nodes[Wd].value);
    y.noalias() += w(wc) * (nodes[C].value * nodes[Wc].value);
    int id = input(std::move(y));
    nodes[id].backward = [this, U, wu, Wu, D, wd, Wd, C, wc, Wc, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        auto term = [&](int X, int wn, int Wn) {
            S w = nodes[wn].value(0, 0);
            Mat Sm;
            Sm.noalias() = nodes[X].value.transpose() * g;
            Mat gw(1, 1);
            gw(0, 0) = (Sm.array() * nodes[Wn].value.array()).sum();
            accumulate(nodes[wn].grad, nodes[wn].value, gw);
            accumulate(nodes[Wn].grad, nodes[Wn].value, w * Sm);
            accumulate(nodes[X].grad, nodes[X].value,
                       w * (g * nodes[Wn].value.transpose()));
        };
        term(U, wu, Wu);
        term(D, wd, Wd);
        term(C, wc, Wc);
    };
    return id;
}

template <class S>
int TapeT<S>::cob_diffusion_step(const Sparse& A, const Sparse& At,
                                 std::shared_ptr<const CobLayout> per_sample,
                                 int rows_per, int cols_per, double eta, int values,
                                 int X, bool transpose) {
    const Mat& x = nodes[X].value;
    if (x.rows() != A.cols()) throw ShapeError("cob_diffusion_step: X rows mismatch");
    const S c = S(2) * static_cast<S>(eta);
    Mat mid, y;
    mid.noalias() = A * x;
    y.noalias() = S(0.5) * x;
    y.noalias() -= c * (At * mid);
    int id = input(std::move(y));
    nodes[id].backward = [this, A, At, per_sample, rows_per, cols_per, c, values, X,
                          transpose, id, m = std::move(mid)] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        const Mat& x = nodes[X].value;
        Mat mg;
        mg.noalias() = A * g;
        {
            Mat& gx = grad_ref(X);
            gx.noalias() += S(0.5) * g;
            gx.noalias() -= c * (At * mg);
        }
        Mat& gv = grad_ref(values);
        // Row-major copies keep the per-block row dot products contiguous;
        // rows of the column-major originals are widely strided.
        using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        RowMat gr = g, xr = x, mr = m, mgr = mg;
        const int batch = static_cast<int>(per_sample->size());
        for (int s = 0; s < batch; ++s)
            for (const CobBlock& b : (*per_sample)[s]) {
                int in_row = transpose ? s * rows_per + b.row : s * cols_per + b.col;
                int out_row = transpose ? s * cols_per + b.col : s * rows_per + b.row;
                gv(b.vblock, 0) -=
                    c * static_cast<S>(b.sign) *
                    (gr.row(in_row).dot(mr.row(out_row)) + mgr.row(out_row).dot(xr.row(in_row)));
            }
    };
    return id;
}

template <class S>
int TapeT<S>::cob_apply(std::shared_ptr<const CobLayout> per_sample, int rows_per,
                        int cols_per, int d, int values, int X, bool transpose) {
    const Mat& x = nodes[X].value;
    const int batch = static_cast<int>(per_sample->size());
    const int in_per = (transpose ? rows_per : cols_per) * d;
    const int out_per = (transpose ? cols_per : rows_per) * d;
    if (x.rows() != static_cast<long>(batch) * in_per)
        throw ShapeError("cob_apply: X rows inconsistent with batch layout");
    const Mat& V = nodes[values].value;
    Mat y = Mat::Zero(static_cast<long>(batch) * out_per, x.cols());
    for (int s = 0; s < batch; ++s)
        for (const CobBlock& b : (*per_sample)[s]) {
            const auto R = V.middleRows(b.vblock * d, d);
            const S sg = static_cast<S>(b.sign);
            if (!transpose)
                y.middleRows(s * out_per + b.row * d, d) +=
                    sg * (R * x.middleRows(s * in_per + b.col * d, d));
            else
                y.middleRows(s * out_per + b.col * d, d) +=
                    sg * (R.transpose() * x.middleRows(s * in_per + b.row * d, d));
        }
    int id = input(y);
    nodes[id].backward = [this, per_sample, d, values, X, transpose, in_per, out_per, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        const Mat& x = nodes[X].value;
        const Mat& V = nodes[values].value;
        Mat gx = Mat::Zero(x.rows(), x.cols());
        Mat gv = Mat::Zero(V.rows(), V.cols());
        const int batch = static_cast<int>(per_sample->size());
        for (int s = 0; s < batch; ++s)
            for (const CobBlock& b : (*per_sample)[s]) {
                const auto R = V.middleRows(b.vblock * d, d);
                const S sg = static_cast<S>(b.sign);
                if (!transpose) {
                    const auto gout = g.middleRows(s * out_per + b.row * d, d);
                    const auto xin = x.middleRows(s * in_per + b.col * d, d);
                    gx.middleRows(s * in_per + b.col * d, d) +=
                        sg * (R.transpose() * gout);
                    gv.middleRows(b.vblock * d, d) += sg * (gout * xin.transpose());
                } else {
                    const auto gout = g.middleRows(s * out_per + b.col * d, d);
                    const auto xin = x.middleRows(s * in_per + b.row * d, d);
                    gx.middleRows(s * in_per + b.row * d, d) += sg * (R * gout);
                    gv.middleRows(b.vblock * d, d) += sg * (xin * gout.transpose());
                }
            }
        accumulate(nodes[X].grad, x, gx);
        accumulate(nodes[values].grad, V, gv);
    };
    return id;
}

template <class S>
int TapeT<S>::concat_cols(int a, int b) {
    const Mat& A = nodes[a].value;
    const Mat& B = nodes[b].value;
    Mat y(A.rows(), A.cols() + B.cols());
    y << A, B;
    int id = input(y);
    nodes[id].backward = [this, a, b, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        accumulate(nodes[a].grad, nodes[a].value, g.leftCols(nodes[a].value.cols()));
        accumulate(nodes[b].grad, nodes[b].value, g.rightCols(nodes[b].value.cols()));
    };
    return id;
}

template <class S>
int TapeT<S>::average_rows(int X, const std::vector<std::vector<int>>& groups) {
    const Mat& x = nodes[X].value;
    Mat y = Mat::Zero(static_cast<long>(groups.size()), x.cols());
    for (size_t g = 0; g < groups.size(); ++g) {
        for (int r : groups[g]) y.row(static_cast<long>(g)) += x.row(r);
        if (!groups[g].empty()) y.row(static_cast<long>(g)) /= S(groups[g].size());
    }
    int id = input(y);
    nodes[id].backward = [this, X, groups, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat gx = Mat::Zero(nodes[X].value.rows(), nodes[X].value.cols());
        for (size_t gi = 0; gi < groups.size(); ++gi)
            for (int r : groups[gi])
                gx.row(r) += g.row(static_cast<long>(gi)) / S(groups[gi].size());
        accumulate(nodes[X].grad, nodes[X].value, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::gather_rows(int X, const std::vector<int>& rows) {
    const Mat& x = nodes[X].value;
    Mat y(static_cast<long>(rows.size()), x.cols());
    for (size_t i = 0; i < rows.size(); ++i) y.row(static_cast<long>(i)) = x.row(rows[i]);
    int id = input(y);
    nodes[id].backward = [this, X, rows, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat gx = Mat::Zero(nodes[X].value.rows(), nodes[X].value.cols());
        for (size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += g.row(static_cast<long>(i));
        accumulate(nodes[X].grad, nodes[X].value, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::rows_to_blocks(int X, int d) {
    const Mat& x = nodes[X].value;
    if (x.cols() != static_cast<long>(d) * d) throw ShapeError("rows_to_blocks: need d*d columns");
    const int n = static_cast<int>(x.rows());
    Mat y(static_cast<long>(n) * d, d);
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) y(b * d + i, j) = x(b, i * d + j);
    int id = input(y);
    nodes[id].backward = [this, X, d, n, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat gx = Mat::Zero(n, static_cast<long>(d) * d);
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) gx(b, i * d + j) = g(b * d + i, j);
        accumulate(nodes[X].grad, nodes[X].value, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::block_diagonal(int X, int d) {
    const Mat& x = nodes[X].value;
    const int n = static_cast<int>(x.rows()) / d;
    Mat y = Mat::Zero(x.rows(), d);
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < d; ++i) y(b * d + i, i) = x(b * d + i, i);
    int id = input(y);
    nodes[id].backward = [this, X, d, n, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat gx = Mat::Zero(nodes[X].value.rows(), d);
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < d; ++i) gx(b * d + i, i) = g(b * d + i, i);
        accumulate(nodes[X].grad, nodes[X].value, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::cayley_blocks(int X, int d) {
    const Mat& x = nodes[X].value;
    const int n = static_cast<int>(x.rows()) / d;
    Mat y(x.rows(), d);
    std::vector<Mat> Ms(n); // (I - S)^{-1} per block, reused backward
    Mat I = Mat::Identity(d, d);
    for (int b = 0; b < n; ++b) {
        Mat A = x.middleRows(b * d, d);
        Mat Sm = A - A.transpose();
        Ms[b] = (I - Sm).inverse();
        y.middleRows(b * d, d) = Ms[b] * (I + Sm);
    }
    int id = input(y);
    nodes[id].backward = [this, X, d, n, Ms = std::move(Ms), id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat I = Mat::Identity(d, d);
        Mat gx = Mat::Zero(nodes[X].value.rows(), d);
        for (int b = 0; b < n; ++b) {
            // Q = M (I + S), dQ = M dS (Q + I)  =>  dL/dS = M^T G (Q + I)^T
            Mat Q = nodes[id].value.middleRows(b * d, d);
            Mat gS = Ms[b].transpose() * g.middleRows(b * d, d) * (Q + I).transpose();
            gx.middleRows(b * d, d) = gS - gS.transpose(); // S = A - A^T
        }
        accumulate(nodes[X].grad, nodes[X].value, gx);
    };
    return id;
}

template <class S>
int TapeT<S>::softmax_cross_entropy(int z, int target) {
    const Eigen::Vector<S, Eigen::Dynamic> v = nodes[z].value.col(0);
    S zmax = v.maxCoeff();
    S lse = zmax + std::log((v.array() - zmax).exp().sum());
    Mat loss(1, 1);
    loss(0, 0) = lse - v[target];
    int id = input(loss);
    nodes[id].backward = [this, z, target, lse, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        Mat p = (nodes[z].value.col(0).array() - lse).exp().matrix();
        p(target, 0) -= S(1);
        accumulate(nodes[z].grad, nodes[z].value, g(0, 0) * p);
    };
    return id;
}

template <class S>
int TapeT<S>::add_many(const std::vector<int>& ids) {
    Mat sum = Mat::Zero(1, 1);
    for (int i : ids) sum += nodes[i].value;
    int id = input(sum);
    nodes[id].backward = [this, ids, id] {
        const Mat& g = nodes[id].grad;
        if (g.size() == 0) return;
        for (int i : ids) accumulate(nodes[i].grad, nodes[i].value, g);
    };
    return id;
}

template <class S>
void TapeT<S>::backward(int loss) {
    if (loss < 0 || loss >= static_cast<int>(nodes.size()))
        throw TapeMissing("backward target is not on the tape");
    if (nodes[loss].value.size() != 1) throw ShapeError("backward target must be scalar");
    grad_ref(loss)(0, 0) = S(1);
    for (int i = loss; i >= 0; --i)
        if (nodes[i].backward && nodes[i].grad.size() != 0) nodes[i].backward();
}

template struct TapeT<double>;
template struct TapeT<float>;

} // namespace sheaflab
