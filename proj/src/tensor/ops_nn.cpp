#include <algorithm>
#include <cmath>
#include <string>

#include "fsb/errors.hpp"
#include "fsb/ops.hpp"
#include "gemm.hpp"

namespace fsb {

// ---------------------------------------------------------------------------
// cosine similarity

template <class T>
Tensor<T> cosine_similarity_matrix(const Tensor<T>& f, const Tensor<T>& w) {
  if (f.rank() != 2 || w.rank() != 2 || f.dim(1) != w.dim(1)) {
    throw DimensionError("cosine_similarity_matrix: incompatible " + shape_str(f.shape()) + " and " +
                         shape_str(w.shape()));
  }
  const auto n = f.dim(0), c = w.dim(0), d = f.dim(1);
  const T eps = static_cast<T>(kCosineEps);
  auto norms = [d](std::span<const T> x, std::size_t rows) {
    std::vector<T> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      T acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += x[i * d + k] * x[i * d + k];
      out[i] = std::sqrt(acc);
    }
    return out;
  };
  const auto fn = norms(f.data(), n);
  const auto wn = norms(w.data(), c);

  std::vector<T> dots(n * c);
  detail::gemm<T>(false, true, n, c, d, T(1), f.data().data(), d, w.data().data(), d, T(0),
                  dots.data(), c);
  std::vector<T> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = dots[i * c + j] / ((fn[i] + eps) * (wn[j] + eps));

  auto s = out;
  return make_op_result<T>(
      {n, c}, std::move(out), {f, w}, "cosine_similarity_matrix",
      [f, w, fn, wn, s, n, c, d, eps](const Tensor<T>& g) -> std::vector<Tensor<T>> {
        auto gd = g.data();
        // a[i,j] = g / ((|f_i|+eps)(|w_j|+eps)); the norm terms use s * x / (|x| (|x|+eps)).
        std::vector<T> a(n * c), row_coef(n, T(0)), col_coef(c, T(0));
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            a[i * c + j] = gd[i * c + j] / ((fn[i] + eps) * (wn[j] + eps));
            const T gs = gd[i * c + j] * s[i * c + j];
            row_coef[i] += gs;
            col_coef[j] += gs;
          }
        }
        Tensor<T> gf, gw;
        if (f.requires_grad()) {
          std::vector<T> out(n * d, T(0));
          detail::gemm<T>(false, false, n, d, c, T(1), a.data(), c, w.data().data(), d, T(0),
                          out.data(), d);
          auto x = f.data();
          for (std::size_t i = 0; i < n; ++i) {
            if (fn[i] == T(0)) continue;
            const T k = row_coef[i] / (fn[i] * (fn[i] + eps));
            for (std::size_t t = 0; t < d; ++t) out[i * d + t] -= k * x[i * d + t];
          }
          gf = Tensor<T>(f.shape(), std::move(out));
        }
        if (w.requires_grad()) {
          std::vector<T> out(c * d, T(0));
          detail::gemm<T>(true, false, c, d, n, T(1), a.data(), c, f.data().data(), d, T(0),
                          out.data(), d);
          auto x = w.data();
          for (std::size_t j = 0; j < c; ++j) {
            if (wn[j] == T(0)) continue;
            const T k = col_coef[j] / (wn[j] * (wn[j] + eps));
            for (std::size_t t = 0; t < d; ++t) out[j * d + t] -= k * x[j * d + t];
          }
          gw = Tensor<T>(w.shape(), std::move(out));
        }
        return {gf, gw};
      },
      false);
}

// ---------------------------------------------------------------------------
// concat

template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto m = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<T> out(m * (p + q));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * p), p, out.begin() + i * (p + q));
    std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(i * q), q, out.begin() + i * (p + q) + p);
  }
  return make_op_result<T>(
      {m, p + q}, std::move(out), {a, b}, "concat_cols",
      [m, p, q](const Tensor<T>& g) -> std::vector<Tensor<T>> {
        std::vector<T> ga(m * p), gb(m * q);
        auto gd = g.data();
        for (std::size_t i = 0; i < m; ++i) {
          std::copy_n(gd.begin() + static_cast<std::ptrdiff_t>(i * (p + q)), p, ga.begin() + i * p);
          std::copy_n(gd.begin() + static_cast<std::ptrdiff_t>(i * (p + q) + p), q, gb.begin() + i * q);
        }
        return {Tensor<T>({m, p}, std::move(ga)), Tensor<T>({m, q}, std::move(gb))};
      },
      false);
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw;
  std::size_t out_h, out_w;
  int stride, pad;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

template <class T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* dst = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            dst[oy * g.out_w + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)]
                       : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* img) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* src = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int pad) {
  if (input.rank() != 4 || kernel.rank() != 4 || input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(input.shape()) + " incompatible with kernel " +
                         shape_str(kernel.shape()));
  }
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2),
                 kernel.dim(3), 0, 0, stride, pad};
  const auto ph = g.height + 2 * static_cast<std::size_t>(pad);
  const auto pw = g.width + 2 * static_cast<std::size_t>(pad);
  if (g.kh > ph || g.kw > pw) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  g.out_h = (ph - g.kh) / static_cast<std::size_t>(stride) + 1;
  g.out_w = (pw - g.kw) / static_cast<std::size_t>(stride) + 1;

  const auto in_size = g.channels * g.height * g.width;
  const auto out_size = g.filters * g.positions();
  std::vector<T> out(g.batch * out_size);
  std::vector<T> col(g.patch() * g.positions());
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x + b * in_size, g, col.data());
    detail::gemm<T>(false, false, g.filters, g.positions(), g.patch(), T(1), k, g.patch(), col.data(),
                    g.positions(), T(0), out.data() + b * out_size, g.positions());
  }

  return make_op_result<T>(
      {g.batch, g.filters, g.out_h, g.out_w}, std::move(out), {input, kernel}, "conv2d",
      [input, kernel, g](const Tensor<T>& grad_out) -> std::vector<Tensor<T>> {
        const auto in_size = g.channels * g.height * g.width;
        const auto out_size = g.filters * g.positions();
        const T* x = input.data().data();
        const T* k = kernel.data().data();
        const T* go = grad_out.data().data();
        std::vector<T> col(g.patch() * g.positions());
        std::vector<T> gk, gx;
        if (kernel.requires_grad()) gk.assign(kernel.numel(), T(0));
        if (input.requires_grad()) gx.assign(input.numel(), T(0));
        for (std::size_t b = 0; b < g.batch; ++b) {
          if (!gk.empty()) {
            im2col(x + b * in_size, g, col.data());
            detail::gemm<T>(false, true, g.filters, g.patch(), g.positions(), T(1), go + b * out_size,
                            g.positions(), col.data(), g.positions(), T(1), gk.data(), g.patch());
          }
          if (!gx.empty()) {
            detail::gemm<T>(true, false, g.patch(), g.positions(), g.filters, T(1), k, g.patch(),
                            go + b * out_size, g.positions(), T(0), col.data(), g.positions());
            col2im_add(col.data(), g, gx.data() + b * in_size);
          }
        }
        Tensor<T> tx, tk;
        if (!gx.empty()) tx = Tensor<T>(input.shape(), std::move(gx));
        if (!gk.empty()) tk = Tensor<T>(kernel.shape(), std::move(gk));
        return {tx, tk};
      },
      false);
}

// ---------------------------------------------------------------------------
// maxpool2d

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x, int window, int stride) {
  if (x.rank() != 4) throw DimensionError("maxpool2d: expected [B x C x H x W], got " + shape_str(x.shape()));
  if (window < 1 || stride < 1) throw DimensionError("maxpool2d: window and stride must be positive");
  const auto bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto win = static_cast<std::size_t>(window), st = static_cast<std::size_t>(stride);
  if (win > h || win > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds spatial extent of " +
                         shape_str(x.shape()));
  }
  const auto oh = (h - win) / st + 1, ow = (w - win) / st + 1;
  std::vector<T> out(bc * oh * ow);
  std::vector<std::size_t> arg(out.size());
  auto in = x.data();
  for (std::size_t p = 0; p < bc; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (oy * st) * w + ox * st;
        for (std::size_t dy = 0; dy < win; ++dy) {
          for (std::size_t dx = 0; dx < win; ++dx) {
            const std::size_t idx = base + (oy * st + dy) * w + ox * st + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = in[best];
        arg[o] = best;
      }
    }
  }
  const Shape in_shape = x.shape();
  return make_op_result<T>(
      {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, "maxpool2d",
      [arg = std::move(arg), in_shape](const Tensor<T>& g) -> std::vector<Tensor<T>> {
        std::vector<T> gx(shape_numel(in_shape), T(0));
        auto gd = g.data();
        for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += gd[o];
        return {Tensor<T>(in_shape, std::move(gx))};
      },
      false);
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      std::type_identity_t<RunningStats<T>>* stats, BnMode mode) {
  if (x.rank() != 4) throw DimensionError("batchnorm2d: expected [B x C x H x W], got " + shape_str(x.shape()));
  const auto batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw DimensionError("batchnorm2d: affine parameters " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
  }
  if (stats && (stats->mean.size() != channels || stats->var.size() != channels)) {
    throw DimensionError("batchnorm2d: running statistics sized for a different channel count");
  }
  if (mode == BnMode::eval && !stats) throw ContractError("batchnorm2d: eval mode needs running statistics");

  const T eps = static_cast<T>(kBatchNormEps);
  const std::size_t count = batch * plane;
  auto in = x.data();
  std::vector<T> mu(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (mode == BnMode::eval) {
      mu[c] = stats->mean[c];
      inv_std[c] = T(1) / std::sqrt(stats->var[c] + eps);
      continue;
    }
    double s = 0, ss = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = in.data() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double m = s / static_cast<double>(count);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = in.data() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
    }
    const double var = ss / static_cast<double>(count);
    mu[c] = static_cast<T>(m);
    inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    if (mode == BnMode::train && stats) {
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      const double mom = kBatchNormMomentum;
      stats->mean[c] = static_cast<T>((1 - mom) * stats->mean[c] + mom * m);
      stats->var[c] = static_cast<T>((1 - mom) * stats->var[c] + mom * unbiased);
    }
  }

  std::vector<T> xhat(x.numel()), out(x.numel());
  auto gm = gamma.data(), bt = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (in[off + i] - mu[c]) * inv_std[c];
        out[off + i] = gm[c] * xhat[off + i] + bt[c];
      }
    }
  }

  const bool batch_stats = mode != BnMode::eval;
  return make_op_result<T>(
      x.shape(), std::move(out), {x, gamma, beta}, "batchnorm2d",
      [x, gamma, beta, xhat = std::move(xhat), inv_std, batch, channels, plane,
       batch_stats](const Tensor<T>& g) -> std::vector<Tensor<T>> {
        auto gd = g.data();
        auto gm = gamma.data();
        const T n = static_cast<T>(batch * plane);
        std::vector<T> dgamma(channels, T(0)), dbeta(channels, T(0));
        std::vector<T> sum_dxhat(channels, T(0)), sum_dxhat_xhat(channels, T(0));
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dgamma[c] += gd[off + i] * xhat[off + i];
              dbeta[c] += gd[off + i];
            }
          }
        }
        for (std::size_t c = 0; c < channels; ++c) {
          sum_dxhat[c] = dbeta[c] * gm[c];
          sum_dxhat_xhat[c] = dgamma[c] * gm[c];
        }
        Tensor<T> gx;
        if (x.requires_grad()) {
          std::vector<T> dx(x.numel());
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t off = (b * channels + c) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                const T dxhat = gd[off + i] * gm[c];
                dx[off + i] = batch_stats
                                  ? inv_std[c] / n * (n * dxhat - sum_dxhat[c] - xhat[off + i] * sum_dxhat_xhat[c])
                                  : dxhat * inv_std[c];
              }
            }
          }
          gx = Tensor<T>(x.shape(), std::move(dx));
        }
        return {gx,
                gamma.requires_grad() ? Tensor<T>(gamma.shape(), std::move(dgamma)) : Tensor<T>(),
                beta.requires_grad() ? Tensor<T>(beta.shape(), std::move(dbeta)) : Tensor<T>()};
      },
      false);
}

#define FSB_INSTANTIATE_NN(T)                                                                 \
  template Tensor<T> cosine_similarity_matrix(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                    \
  template Tensor<T> maxpool2d(const Tensor<T>&, int, int);                                   \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                 RunningStats<T>*, BnMode);

FSB_INSTANTIATE_NN(float)
FSB_INSTANTIATE_NN(double)

}  // namespace fsb
