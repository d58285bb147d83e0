#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <vector>

namespace sheaflab {

// One d x d block of a coboundary matrix: target-stalk row block `row`,
// source-stalk column block `col` (both in stalk units), sign, and the
// index `vblock` of the restriction block inside the stacked values node.
struct CobBlock {
    int row, col;
    double sign;
    int vblock;
};
using CobLayout = std::vector<std::vector<CobBlock>>; // per batch sample

// Reverse-mode automatic differentiation over matrix-valued nodes. A tape is
// built afresh for each forward pass; every operation appends a node holding
// its value and a closure that scatters the node's cotangent to its inputs.
// backward(loss) replays those closures in reverse order.
//
// The scalar type is a template parameter: the double instantiation is the
// reference used throughout the library and its finite-difference checks, the
// float instantiation backs the fast training path.
template <class Scalar>
struct TapeT {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Sparse = Eigen::SparseMatrix<Scalar>;
    using CobBlock = sheaflab::CobBlock;
    using CobLayout = sheaflab::CobLayout;

    struct Node {
        Mat value;
        Mat grad; // same shape, lazily zero-initialized
        std::function<void()> backward;
    };
    std::vector<Node> nodes;

    int input(Mat v);
    const Mat& value(int id) const { return nodes[id].value; }
    const Mat& grad(int id) const { return nodes[id].grad; }
    Mat& grad_ref(int id);

    // --- elementwise / linear algebra ---------------------------------------
    int matmul(int a, int b);           // A B
    int add(int a, int b);              // A + B
    int add3(int a, int b, int c);      // A + B + C
    int scale(int a, double c);         // c A
    int tanh_(int a);                   // tanh entrywise
    int leaky_relu(int a, double slope); // max(x, slope*x) entrywise
    int add_rowvec(int a, int b);       // X + 1 b (b is 1 x cols, broadcast)

    // (I tensor W) X: multiply every d-row block of X by the d x d matrix W.
    int stalk_mix(int W, int X, int d);

    // Fixed sparse operator applied per batch block: X has batch * A.cols()
    // rows; each block of A.cols() rows maps to A.rows() rows.
    int spmm(const Sparse& A, int X, int batch);

    // Fused half-step through a fixed coboundary, per batch block:
    // 0.5 X - 2 eta At (A X). The operator is symmetric, so the backward pass
    // applies it to the incoming gradient unchanged.
    int diffusion_step(const Sparse& A, const Sparse& At, double eta, int X,
                       int batch);

    // Fused width-1-stalk layer combination:
    //   wu U Wu + wd D Wd + wc C Wc
    // with wu/wd/wc scalar (1 x 1) stalk-weight nodes and Wu/Wd/Wc channel
    // matrices. Equivalent to stalk_mix + matmul + add3 when the stalk width
    // is one, with a single output node.
    int mix3(int U, int wu, int Wu, int D, int wd, int Wd, int C, int wc, int Wc);

    // --- structured coboundary with differentiable entries ------------------
    // Applies, per batch sample s, the block matrix with entries
    // sign * values[vblock] to the sample's rows of X (cols_per stalk columns
    // -> rows_per stalk rows; transposed when `transpose`). `values` is a
    // (num_blocks * d) x d stack of restriction blocks; its gradient receives
    // the chain-rule contribution, enabling learned restriction maps.
    int cob_apply(std::shared_ptr<const CobLayout> per_sample, int rows_per, int cols_per,
                  int d, int values, int X, bool transpose);

    // Fused half-step 0.5 X - 2 eta At (A X) through a width-1 coboundary that
    // was assembled from `values` over the batched layout (entries
    // sign * values[vblock]). A and At are the preassembled batch operator and
    // its transpose; the backward pass routes gradients to both X and
    // `values`. When `transpose`, the layout's row/col fields describe At
    // instead of A. Requires d == 1 layouts.
    int cob_diffusion_step(const Sparse& A, const Sparse& At,
                           std::shared_ptr<const CobLayout> per_sample, int rows_per,
                           int cols_per, double eta, int values, int X, bool transpose);

    // --- sheaf-learner helpers ----------------------------------------------
    int concat_cols(int a, int b);
    // Y row g = mean of X rows listed in groups[g] (empty group -> zero row).
    int average_rows(int X, const std::vector<std::vector<int>>& groups);
    int gather_rows(int X, const std::vector<int>& rows);
    // (n x d^2) row-major rows -> (n d) x d stacked blocks.
    int rows_to_blocks(int X, int d);
    // Keep only the diagonal of each d x d block of a (n d) x d stack.
    int block_diagonal(int X, int d);
    // Cayley transform per block: Q = (I - S)^{-1} (I + S), S = A - A^T.
    int cayley_blocks(int X, int d);

    // --- losses -------------------------------------------------------------
    // Cross entropy of softmax(z) against the target index; z is a column.
    int softmax_cross_entropy(int z, int target);
    int add_many(const std::vector<int>& ids); // sum of scalars (1 x 1 nodes)

    void backward(int loss);
};

extern template struct TapeT<double>;
extern template struct TapeT<float>;

using Tape = TapeT<double>;

} // namespace sheaflab
