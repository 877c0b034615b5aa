#pragma once

#include <span>
#include <type_traits>
#include <vector>

#include "fsb/tensor.hpp"

namespace fsb {

// Dense ops. Their backward rules are written in terms of these same ops, so
// gradients through them can themselves be differentiated (create_graph).

/// [m x k] * [k x n]
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// [m x k] * [n x k]^T
template <class T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
/// [k x m]^T * [k x n]
template <class T> Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// a * s where s holds one element.
template <class T> Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s);

/// a[m x n] + b[n] broadcast over rows.
template <class T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b);
/// a[m x n] * s[n] broadcast over rows.
template <class T> Tensor<T> mul_row(const Tensor<T>& a, const Tensor<T>& s);
/// a[m x n] * v[m] broadcast over columns.
template <class T> Tensor<T> mul_col(const Tensor<T>& a, const Tensor<T>& v);
/// v[n] -> [m x n]
template <class T> Tensor<T> expand_rows(const Tensor<T>& v, std::size_t m);
/// v[m] -> [m x n]
template <class T> Tensor<T> expand_cols(const Tensor<T>& v, std::size_t n);
/// scalar -> shape
template <class T> Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape);

template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
/// [m x n] -> [m]
template <class T> Tensor<T> sum_rows(const Tensor<T>& a);
/// [m x n] -> [n]
template <class T> Tensor<T> sum_cols(const Tensor<T>& a);

template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// [B x ...] -> [B x rest]
template <class T> Tensor<T> flatten(const Tensor<T>& a);

/// Row gather along the leading dimension.
template <class T> Tensor<T> gather_rows(const Tensor<T>& a, std::span<const int> index);
/// Inverse of gather_rows: rows of `a` added into a zero tensor with `rows` leading rows.
template <class T>
Tensor<T> scatter_add_rows(const Tensor<T>& a, std::span<const int> index, std::size_t rows);

/// Row-wise softmax of an [m x n] matrix.
template <class T> Tensor<T> softmax_rows(const Tensor<T>& logits);
/// Mean over the batch of -log softmax(logits)[label].
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);
/// Squared L2 distance between every row of q[n x d] and p[c x d].
template <class T> Tensor<T> euclidean_sqdist_matrix(const Tensor<T>& q, const Tensor<T>& p);

// Ops below have hand-written backward kernels (first order only).

inline constexpr double kCosineEps = 1e-8;
/// dot(f_i, w_j) / ((|f_i| + eps)(|w_j| + eps)) for f[n x d], w[c x d].
template <class T> Tensor<T> cosine_similarity_matrix(const Tensor<T>& f, const Tensor<T>& w);

/// [m x p] ++ [m x q] -> [m x (p + q)]
template <class T> Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);

/// Cross-correlation with zero padding, no bias.
/// input [B x C x H x W], kernel [F x C x kh x kw] -> [B x F x H' x W'].
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int pad);

/// Floor-mode max pooling; backward routes to the first maximal element.
template <class T> Tensor<T> maxpool2d(const Tensor<T>& x, int window, int stride);

enum class BnMode { train, eval, episode_batch };

template <class T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;

  static RunningStats identity(std::size_t channels) {
    return {std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1))};
  }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel batch normalization of [B x C x H x W]. `train` normalizes by
/// batch statistics and folds them into `stats`; `episode_batch` uses batch
/// statistics without touching `stats`; `eval` normalizes by `stats`.
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      std::type_identity_t<RunningStats<T>>* stats, BnMode mode);

/// Index of the maximal entry in each row; ties go to the lowest index.
template <class T> std::vector<int> argmax_rows(const Tensor<T>& scores);

/// Sets the BLAS backend to a single thread so reductions run in a fixed order.
void pin_blas_threads();

}  // namespace fsb
