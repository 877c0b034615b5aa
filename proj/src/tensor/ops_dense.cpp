#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsb/errors.hpp"
#include "fsb/ops.hpp"
#include "gemm.hpp"

namespace fsb {

namespace {

template <class T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class T>
Tensor<T> matmul_impl(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  const char* op = ta ? (tb ? "matmul_tt" : "matmul_tn") : (tb ? "matmul_nt" : "matmul");
  if (!a.defined() || !b.defined() || a.rank() != 2 || b.rank() != 2) {
    throw DimensionError(std::string(op) + ": operands must be matrices, got " +
                         (a.defined() ? shape_str(a.shape()) : "<undefined>") + " and " +
                         (b.defined() ? shape_str(b.shape()) : "<undefined>"));
  }
  const std::size_t m = ta ? a.dim(1) : a.dim(0);
  const std::size_t k = ta ? a.dim(0) : a.dim(1);
  const std::size_t kb = tb ? b.dim(1) : b.dim(0);
  const std::size_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw DimensionError(std::string(op) + ": inner extents differ for " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  detail::gemm<T>(ta, tb, m, n, k, T(1), a.data().data(), a.dim(1), b.data().data(), b.dim(1),
                  T(0), out.data(), n);

  return make_op_result<T>(
      {m, n}, std::move(out), {a, b}, op,
      [a, b, ta, tb](const Tensor<T>& g) -> std::vector<Tensor<T>> {
        Tensor<T> ga, gb;
        if (!ta && !tb) {
          if (a.requires_grad()) ga = matmul_impl(g, b, false, true);
          if (b.requires_grad()) gb = matmul_impl(a, g, true, false);
        } else if (!ta && tb) {
          if (a.requires_grad()) ga = matmul_impl(g, b, false, false);
          if (b.requires_grad()) gb = matmul_impl(g, a, true, false);
        } else if (ta && !tb) {
          if (a.requires_grad()) ga = matmul_impl(b, g, false, true);
          if (b.requires_grad()) gb = matmul_impl(a, g, false, false);
        } else {
          if (a.requires_grad()) ga = matmul_impl(b, g, true, true);
          if (b.requires_grad()) gb = matmul_impl(g, a, true, true);
        }
        return {ga, gb};
      });
}

template <class T, class F>
Tensor<T> unary_map(const Tensor<T>& a, F f) {
  std::vector<T> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<T>(a.shape(), std::move(out));
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul_impl(a, b, false, false);
}

template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul_impl(a, b, false, true);
}

template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul_impl(a, b, true, false);
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_op_result<T>({n, m}, std::move(out), {a}, "transpose",
                           [](const Tensor<T>& g) -> std::vector<Tensor<T>> { return {transpose(g)}; });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, "add",
                           [](const Tensor<T>& g) -> std::vector<Tensor<T>> { return {g, g}; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, "sub",
                           [b](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {g, b.requires_grad() ? scale(g, T(-1)) : Tensor<T>()};
                           });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, "mul",
                           [a, b](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {a.requires_grad() ? mul(g, b) : Tensor<T>(),
                                     b.requires_grad() ? mul(g, a) : Tensor<T>()};
                           });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_op_result<T>(a.shape(), std::move(out), {a}, "scale",
                           [factor](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {scale(g, factor)};
                           });
}

template <class T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must hold one element, got " + shape_str(s.shape()));
  const T f = s.item();
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  return make_op_result<T>(a.shape(), std::move(out), {a, s}, "scale_by",
                           [a, s](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             Tensor<T> ga, gs;
                             if (a.requires_grad()) ga = scale_by(g, s);
                             if (s.requires_grad()) gs = reshape(sum(mul(g, a)), s.shape());
                             return {ga, gs};
                           });
}

template <class T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "add_row");
  if (b.numel() != a.dim(1) || b.rank() != 1) {
    throw DimensionError("add_row: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  }
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + y[j];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, "add_row",
                           [b](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {g, b.requires_grad() ? sum_cols(g) : Tensor<T>()};
                           });
}

template <class T>
Tensor<T> mul_row(const Tensor<T>& a, const Tensor<T>& s) {
  require_rank(a, 2, "mul_row");
  if (s.numel() != a.dim(1) || s.rank() != 1) {
    throw DimensionError("mul_row: " + shape_str(a.shape()) + " * " + shape_str(s.shape()));
  }
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto x = a.data(), y = s.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * y[j];
  return make_op_result<T>(a.shape(), std::move(out), {a, s}, "mul_row",
                           [a, s](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {a.requires_grad() ? mul_row(g, s) : Tensor<T>(),
                                     s.requires_grad() ? sum_cols(mul(g, a)) : Tensor<T>()};
                           });
}

template <class T>
Tensor<T> mul_col(const Tensor<T>& a, const Tensor<T>& v) {
  require_rank(a, 2, "mul_col");
  if (v.numel() != a.dim(0) || v.rank() != 1) {
    throw DimensionError("mul_col: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
  }
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto x = a.data(), y = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * y[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, v}, "mul_col",
                           [a, v](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {a.requires_grad() ? mul_col(g, v) : Tensor<T>(),
                                     v.requires_grad() ? sum_rows(mul(g, a)) : Tensor<T>()};
                           });
}

template <class T>
Tensor<T> expand_rows(const Tensor<T>& v, std::size_t m) {
  require_rank(v, 1, "expand_rows");
  const auto n = v.dim(0);
  std::vector<T> out(m * n);
  auto y = v.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(y.begin(), y.end(), out.begin() + i * n);
  return make_op_result<T>({m, n}, std::move(out), {v}, "expand_rows",
                           [](const Tensor<T>& g) -> std::vector<Tensor<T>> { return {sum_cols(g)}; });
}

template <class T>
Tensor<T> expand_cols(const Tensor<T>& v, std::size_t n) {
  require_rank(v, 1, "expand_cols");
  const auto m = v.dim(0);
  std::vector<T> out(m * n);
  auto y = v.data();
  for (std::size_t i = 0; i < m; ++i) std::fill_n(out.begin() + i * n, n, y[i]);
  return make_op_result<T>({m, n}, std::move(out), {v}, "expand_cols",
                           [](const Tensor<T>& g) -> std::vector<Tensor<T>> { return {sum_rows(g)}; });
}

template <class T>
Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw DimensionError("expand_scalar: expected one element, got " + shape_str(s.shape()));
  return make_op_result<T>(shape, std::vector<T>(shape_numel(shape), s.item()), {s}, "expand_scalar",
                           [s](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {reshape(sum(g), s.shape())};
                           });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (auto v : a.data()) acc += v;
  return make_op_result<T>({}, {acc}, {a}, "sum", [a](const Tensor<T>& g) -> std::vector<Tensor<T>> {
    return {expand_scalar(g, a.shape())};
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <class T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  require_rank(a, 2, "sum_rows");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m, T(0));
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  return make_op_result<T>({m}, std::move(out), {a}, "sum_rows",
                           [n](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {expand_cols(g, n)};
                           });
}

template <class T>
Tensor<T> sum_cols(const Tensor<T>& a) {
  require_rank(a, 2, "sum_cols");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<T> out(n, T(0));
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  return make_op_result<T>({n}, std::move(out), {a}, "sum_cols",
                           [m](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {expand_rows(g, m)};
                           });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  return make_op_result<T>(x.shape(), std::move(out), {x}, "relu",
                           [x](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             auto mask = unary_map(x, [](T v) { return v > T(0) ? T(1) : T(0); });
                             return {mul(g, mask)};
                           });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  const Shape original = a.shape();
  return make_op_result<T>(std::move(shape), std::move(out), {a}, "reshape",
                           [original](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {reshape(g, original)};
                           });
}

template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("flatten: rank-0 tensor");
  return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const int> index) {
  if (a.rank() < 1) throw DimensionError("gather_rows: rank-0 tensor");
  const auto rows = a.dim(0);
  const auto width = a.numel() / rows;
  std::vector<T> out(index.size() * width);
  auto x = a.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int src = index[r];
    if (src < 0 || static_cast<std::size_t>(src) >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(src) + " outside " + std::to_string(rows) + " rows");
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(src * width), width, out.begin() + r * width);
  }
  Shape shape = a.shape();
  shape[0] = index.size();
  std::vector<int> idx(index.begin(), index.end());
  return make_op_result<T>(std::move(shape), std::move(out), {a}, "gather_rows",
                           [idx, rows](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {scatter_add_rows(g, std::span<const int>(idx), rows)};
                           });
}

template <class T>
Tensor<T> scatter_add_rows(const Tensor<T>& a, std::span<const int> index, std::size_t rows) {
  if (a.rank() < 1 || a.dim(0) != index.size()) {
    throw DimensionError("scatter_add_rows: " + shape_str(a.shape()) + " with " +
                         std::to_string(index.size()) + " indices");
  }
  const auto width = a.numel() / a.dim(0);
  std::vector<T> out(rows * width, T(0));
  auto x = a.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int dst = index[r];
    if (dst < 0 || static_cast<std::size_t>(dst) >= rows) {
      throw IndexError("scatter_add_rows: index " + std::to_string(dst) + " outside " + std::to_string(rows) + " rows");
    }
    for (std::size_t j = 0; j < width; ++j) out[dst * width + j] += x[r * width + j];
  }
  Shape shape = a.shape();
  shape[0] = rows;
  std::vector<int> idx(index.begin(), index.end());
  return make_op_result<T>(std::move(shape), std::move(out), {a}, "scatter_add_rows",
                           [idx](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             return {gather_rows(g, std::span<const int>(idx))};
                           });
}

namespace {

template <class T>
std::vector<T> softmax_data(const Tensor<T>& logits) {
  const auto m = logits.dim(0), n = logits.dim(1);
  std::vector<T> out(m * n);
  auto x = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return out;
}

// Softmax for use inside backward rules: recorded when building a
// differentiable gradient graph, a plain constant otherwise.
template <class T>
Tensor<T> softmax_for_backward(const Tensor<T>& logits) {
  if (grad_enabled()) return softmax_rows(logits);
  return Tensor<T>(logits.shape(), softmax_data(logits));
}

}  // namespace

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  require_rank(logits, 2, "softmax_rows");
  return make_op_result<T>(logits.shape(), softmax_data(logits), {logits}, "softmax_rows",
                           [logits](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             auto s = softmax_for_backward(logits);
                             auto inner = expand_cols(sum_rows(mul(g, s)), logits.dim(1));
                             return {mul(s, sub(g, inner))};
                           });
}

template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const auto m = logits.dim(0), n = logits.dim(1);
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0," +
                       std::to_string(n) + ")");
    }
  }
  auto x = logits.data();
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    total += (mx + std::log(z)) - row[labels[i]];
  }
  std::vector<T> onehot(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) onehot[i * n + static_cast<std::size_t>(labels[i])] = T(1);
  Tensor<T> target(logits.shape(), std::move(onehot));
  const T inv_m = T(1) / static_cast<T>(m);
  return make_op_result<T>({}, {total * inv_m}, {logits}, "softmax_cross_entropy",
                           [logits, target, inv_m](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             auto diff = scale(sub(softmax_for_backward(logits), target), inv_m);
                             return {scale_by(diff, g)};
                           });
}

template <class T>
Tensor<T> euclidean_sqdist_matrix(const Tensor<T>& q, const Tensor<T>& p) {
  require_rank(q, 2, "euclidean_sqdist_matrix");
  require_rank(p, 2, "euclidean_sqdist_matrix");
  if (q.dim(1) != p.dim(1)) {
    throw DimensionError("euclidean_sqdist_matrix: feature widths differ for " + shape_str(q.shape()) +
                         " and " + shape_str(p.shape()));
  }
  const auto n = q.dim(0), c = p.dim(0), d = q.dim(1);
  std::vector<T> out(n * c);
  auto x = q.data(), y = p.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const T diff = x[i * d + k] - y[j * d + k];
        acc += diff * diff;
      }
      out[i * c + j] = acc;
    }
  }
  // dQ = 2 (diag(rowsum G) Q - G P),  dP = 2 (diag(colsum G) P - G^T Q)
  return make_op_result<T>({n, c}, std::move(out), {q, p}, "euclidean_sqdist_matrix",
                           [q, p](const Tensor<T>& g) -> std::vector<Tensor<T>> {
                             Tensor<T> gq, gp;
                             if (q.requires_grad()) gq = scale(sub(mul_col(q, sum_rows(g)), matmul(g, p)), T(2));
                             if (p.requires_grad()) gp = scale(sub(mul_col(p, sum_cols(g)), matmul_tn(g, q)), T(2));
                             return {gq, gp};
                           });
}

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  require_rank(scores, 2, "argmax_rows");
  const auto m = scores.dim(0), n = scores.dim(1);
  std::vector<int> out(m);
  auto x = scores.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (x[i * n + j] > x[i * n + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

#define FSB_INSTANTIATE_DENSE(T)                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> transpose(const Tensor<T>&);                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                          \
  template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul_row(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul_col(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> expand_rows(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> expand_cols(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> expand_scalar(const Tensor<T>&, const Shape&);                       \
  template Tensor<T> sum(const Tensor<T>&);                                               \
  template Tensor<T> mean(const Tensor<T>&);                                              \
  template Tensor<T> sum_rows(const Tensor<T>&);                                          \
  template Tensor<T> sum_cols(const Tensor<T>&);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                    \
  template Tensor<T> flatten(const Tensor<T>&);                                           \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);                 \
  template Tensor<T> scatter_add_rows(const Tensor<T>&, std::span<const int>, std::size_t); \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                      \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);       \
  template Tensor<T> euclidean_sqdist_matrix(const Tensor<T>&, const Tensor<T>&);         \
  template std::vector<int> argmax_rows(const Tensor<T>&);

FSB_INSTANTIATE_DENSE(float)
FSB_INSTANTIATE_DENSE(double)

}  // namespace fsb
