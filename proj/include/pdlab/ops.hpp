#pragma once

#include <span>
#include <vector>

#include "pdlab/rng.hpp"
#include "pdlab/tensor.hpp"

namespace pdlab {

// Differentiable primitives over tensors. Forward values are computed eagerly;
// when grad mode is on, each result records its inputs and a backprop closure
// on the tape. All shape violations throw TensorError naming the op and the
// offending shapes.

// -------- arithmetic --------
// add/sub accept equal shapes, a scalar rhs, or a rank-1 rhs broadcast over
// the rows of a rank-2 lhs. mul accepts equal shapes or a scalar rhs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// -------- linear algebra --------
Tensor matmul(const Tensor& a, const Tensor& b);  // (m x k) @ (k x n)
Tensor transpose(const Tensor& a);

// -------- structure --------
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
// [a[0:at]; block; a[at:]] along the row axis
Tensor insert_rows(const Tensor& a, const Tensor& block, Index at);
Tensor reshape(const Tensor& a, Shape shape);

// -------- nonlinearity / normalization --------
// Row-wise over the last axis; gamma and beta are rank-1 of width cols.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis = 1);
Tensor log_softmax(const Tensor& x, int axis = 1);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// Rows rescaled to unit L2 norm (rank-1 input treated as a single row).
Tensor normalize_rows(const Tensor& x, double eps = 1e-12);

// -------- reductions --------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// axis 0: column sums (rank-1 of cols); axis 1: row sums (rank-1 of rows).
Tensor sum_axis(const Tensor& x, int axis);

// -------- similarity --------
// Row-paired cosine; rank-2 inputs give a rank-1 result, rank-1 a scalar.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// -------- stochastic --------
// Train mode masks elements with keep probability 1-p and rescales kept values
// by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

// -------- lookup --------
// Gathers rows of table (V x d) at ids; backward scatter-adds into the table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

}  // namespace pdlab
