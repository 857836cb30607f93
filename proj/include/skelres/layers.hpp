#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skelres/rng.hpp"
#include "skelres/tensor.hpp"

namespace skelres {

enum class Mode { Train, Infer };

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// ---------------------------------------------------------------------------
// conv2d
//
// Cross-correlation of x (N,C,H,W) with w (F,C,kh,kw) plus a per-filter bias.
// Two routes: a direct nested-loop evaluation and a patch-matrix (im2col)
// route that reduces to one Eigen GEMM per call. Training uses the patch
// route; the direct route is the reference the tests pit it against.
// ---------------------------------------------------------------------------

enum class ConvRoute { Auto, Direct, Im2col };

template <typename Scalar>
struct ConvCache {
    Tensor<Scalar> x;
    Index stride = 1;
    Index pad = 0;
};

template <typename Scalar>
struct ConvGrads {
    Tensor<Scalar> gx, gw, gb;
};

namespace detail {

inline std::pair<Index, Index> conv_out_dims(Index h, Index w, Index k, Index stride, Index pad) {
    return {(h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
}

template <typename Scalar>
void conv_check(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                Index stride, Index pad) {
    require(x.rank() == 4, "conv2d: input must be N x C x H x W, got " +
                               Tensor<Scalar>::shape_string(x.shape()));
    require(w.rank() == 4, "conv2d: weights must be F x C x kh x kw");
    require(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must have one entry per filter");
    require(w.dim(1) == x.dim(1), "conv2d: channel mismatch between input and weights");
    require(w.dim(2) == w.dim(3), "conv2d: only square kernels supported");
    const Index k = w.dim(2);
    require(k == 1 || k == 3, "conv2d: kernel size must be 1 or 3");
    require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
    require(pad == 0 || pad == (k - 1) / 2, "conv2d: pad must be 0 or (k-1)/2");
    auto [ho, wo] = conv_out_dims(x.dim(2), x.dim(3), k, stride, pad);
    require(ho >= 1 && wo >= 1, "conv2d: output would be empty");
}

/// Patch matrix for images [n0, n1): column p = (((n - n0) * Ho) + i) * Wo + j
/// holds the receptive field of output pixel (n,i,j), rows ordered (c,u,v),
/// written column-major into dst (c*k*k rows). Out-of-bounds taps are zero.
template <typename Scalar>
void im2col_range(const Tensor<Scalar>& x, Index k, Index stride, Index pad, Index ho,
                  Index wo, Index n0, Index n1, Scalar* dst) {
    const Index c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index rows = c * k * k;
    const Scalar* px = x.data();
    Index p = 0;
    for (Index in = n0; in < n1; ++in) {
        for (Index i = 0; i < ho; ++i) {
            for (Index j = 0; j < wo; ++j, ++p) {
                Scalar* col = dst + p * rows;
                const Index hi0 = i * stride - pad;
                const Index wj0 = j * stride - pad;
                for (Index ic = 0; ic < c; ++ic) {
                    const Scalar* plane = px + (in * c + ic) * h * w;
                    for (Index u = 0; u < k; ++u) {
                        const Index hi = hi0 + u;
                        if (hi < 0 || hi >= h) {
                            for (Index v = 0; v < k; ++v) *col++ = Scalar(0);
                            continue;
                        }
                        const Scalar* row = plane + hi * w;
                        for (Index v = 0; v < k; ++v) {
                            const Index wj = wj0 + v;
                            *col++ = (wj < 0 || wj >= w) ? Scalar(0) : row[wj];
                        }
                    }
                }
            }
        }
    }
}

/// Transposed scatter of im2col_range: accumulates column gradients for
/// images [n0, n1) back into the input layout.
template <typename Scalar>
void col2im_range(const Scalar* cols, Index k, Index stride, Index pad, Tensor<Scalar>& gx,
                  Index ho, Index wo, Index n0, Index n1) {
    const Index c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
    const Index rows = c * k * k;
    Scalar* px = gx.data();
    Index p = 0;
    for (Index in = n0; in < n1; ++in) {
        for (Index i = 0; i < ho; ++i) {
            for (Index j = 0; j < wo; ++j, ++p) {
                const Scalar* col = cols + p * rows;
                const Index hi0 = i * stride - pad;
                const Index wj0 = j * stride - pad;
                for (Index ic = 0; ic < c; ++ic) {
                    Scalar* plane = px + (in * c + ic) * h * w;
                    for (Index u = 0; u < k; ++u) {
                        const Index hi = hi0 + u;
                        if (hi < 0 || hi >= h) {
                            col += k;
                            continue;
                        }
                        Scalar* row = plane + hi * w;
                        for (Index v = 0; v < k; ++v, ++col) {
                            const Index wj = wj0 + v;
                            if (wj >= 0 && wj < w) row[wj] += *col;
                        }
                    }
                }
            }
        }
    }
}

/// Images per GEMM chunk such that the chunk's patch matrix stays cache
/// resident; one batch-sized GEMM over a 100+ MB patch matrix loses more to
/// memory traffic than it gains in GEMM shape.
inline Index conv_chunk_images(Index rows, Index plane, Index n, Index scalar_bytes) {
    const Index budget = Index(3) << 18;  // 768 KiB of patch columns
    const Index per_image = std::max<Index>(rows * plane * scalar_bytes, 1);
    return std::clamp<Index>(budget / per_image, 1, n);
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                              const Tensor<Scalar>& b, Index stride, Index pad,
                              ConvCache<Scalar>* cache = nullptr,
                              ConvRoute route = ConvRoute::Auto) {
    detail::conv_check(x, w, b, stride, pad);
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const Index f = w.dim(0), k = w.dim(2);
    auto [ho, wo] = detail::conv_out_dims(h, wd, k, stride, pad);
    Tensor<Scalar> y({n, f, ho, wo});

    if (route == ConvRoute::Direct) {
        for (Index in = 0; in < n; ++in)
            for (Index of = 0; of < f; ++of)
                for (Index i = 0; i < ho; ++i)
                    for (Index j = 0; j < wo; ++j) {
                        Scalar acc = b(of);
                        for (Index ic = 0; ic < c; ++ic)
                            for (Index u = 0; u < k; ++u)
                                for (Index v = 0; v < k; ++v) {
                                    const Index hi = i * stride - pad + u;
                                    const Index wj = j * stride - pad + v;
                                    if (hi < 0 || hi >= h || wj < 0 || wj >= wd) continue;
                                    acc += x(in, ic, hi, wj) * w(of, ic, u, v);
                                }
                        y(in, of, i, j) = acc;
                    }
    } else {
        const Index rows = c * k * k;
        const Index plane = ho * wo;
        auto wmap = w.as_matrix(f, rows);
        const Index chunk = detail::conv_chunk_images(rows, plane, n, Index(sizeof(Scalar)));
        MatX<Scalar> cols(rows, chunk * plane);
        MatX<Scalar> out(f, chunk * plane);
        Scalar* py = y.data();
        for (Index n0 = 0; n0 < n; n0 += chunk) {
            const Index nc = std::min(chunk, n - n0);
            const Index pcols = nc * plane;
            detail::im2col_range(x, k, stride, pad, ho, wo, n0, n0 + nc, cols.data());
            out.leftCols(pcols).noalias() = wmap * cols.leftCols(pcols);
            out.leftCols(pcols).colwise() += b.as_vector();
            // out(of, p) with p = (((in-n0)*Ho)+i)*Wo + j -> y[in, of, i, j]
            for (Index in = 0; in < nc; ++in)
                for (Index of = 0; of < f; ++of) {
                    Scalar* dst = py + ((n0 + in) * f + of) * plane;
                    const Scalar* src = out.data() + of;
                    for (Index p = 0; p < plane; ++p) dst[p] = src[(in * plane + p) * f];
                }
        }
    }

    if (cache) {
        cache->x = x;
        cache->stride = stride;
        cache->pad = pad;
    }
    return y;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const ConvCache<Scalar>& cache, const Tensor<Scalar>& w,
                                  const Tensor<Scalar>& gy, ConvRoute route = ConvRoute::Auto) {
    const Tensor<Scalar>& x = cache.x;
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const Index f = w.dim(0), k = w.dim(2);
    const Index stride = cache.stride, pad = cache.pad;
    auto [ho, wo] = detail::conv_out_dims(h, wd, k, stride, pad);
    require(gy.rank() == 4 && gy.dim(0) == n && gy.dim(1) == f && gy.dim(2) == ho &&
                gy.dim(3) == wo,
            "conv2d_backward: upstream gradient shape mismatch");

    ConvGrads<Scalar> g{Tensor<Scalar>({n, c, h, wd}), Tensor<Scalar>({f, c, k, k}),
                        Tensor<Scalar>({f})};

    if (route == ConvRoute::Direct) {
        for (Index in = 0; in < n; ++in)
            for (Index of = 0; of < f; ++of)
                for (Index i = 0; i < ho; ++i)
                    for (Index j = 0; j < wo; ++j) {
                        const Scalar up = gy(in, of, i, j);
                        g.gb(of) += up;
                        for (Index ic = 0; ic < c; ++ic)
                            for (Index u = 0; u < k; ++u)
                                for (Index v = 0; v < k; ++v) {
                                    const Index hi = i * stride - pad + u;
                                    const Index wj = j * stride - pad + v;
                                    if (hi < 0 || hi >= h || wj < 0 || wj >= wd) continue;
                                    g.gw(of, ic, u, v) += up * x(in, ic, hi, wj);
                                    g.gx(in, ic, hi, wj) += up * w(of, ic, u, v);
                                }
                    }
        return g;
    }

    const Index rows = c * k * k;
    const Index plane = ho * wo;
    auto wmat = w.as_matrix(f, rows);
    auto gwmat = g.gw.as_matrix(f, rows);
    const Scalar* pg = gy.data();
    const Index chunk = detail::conv_chunk_images(rows, plane, n, Index(sizeof(Scalar)));
    MatX<Scalar> cols(rows, chunk * plane);
    MatX<Scalar> gymat(f, chunk * plane);
    MatX<Scalar> gcols(rows, chunk * plane);
    for (Index n0 = 0; n0 < n; n0 += chunk) {
        const Index nc = std::min(chunk, n - n0);
        const Index pcols = nc * plane;
        // Gather gy into the (F x P) layout matching the forward patch matrix.
        for (Index in = 0; in < nc; ++in)
            for (Index of = 0; of < f; ++of) {
                const Scalar* src = pg + ((n0 + in) * f + of) * plane;
                Scalar* dst = gymat.data() + of;
                for (Index p = 0; p < plane; ++p) dst[(in * plane + p) * f] = src[p];
                g.gb(of) += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(src, plane)
                                .sum();
            }
        detail::im2col_range(x, k, stride, pad, ho, wo, n0, n0 + nc, cols.data());
        gwmat.noalias() += gymat.leftCols(pcols) * cols.leftCols(pcols).transpose();
        gcols.leftCols(pcols).noalias() = wmat.transpose() * gymat.leftCols(pcols);
        detail::col2im_range(gcols.data(), k, stride, pad, g.gx, ho, wo, n0, n0 + nc);
    }
    return g;
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

template <typename Scalar>
struct BnCache {
    Tensor<Scalar> xhat;     // normalized input
    Tensor<Scalar> inv_std;  // per channel, 1/sqrt(var + eps)
    Mode mode = Mode::Train;
};

template <typename Scalar>
struct BnGrads {
    Tensor<Scalar> gx, ggamma, gbeta;
};

template <typename Scalar>
Tensor<Scalar> batch_norm_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                                  const Tensor<Scalar>& beta, Tensor<Scalar>& running_mean,
                                  Tensor<Scalar>& running_var, Mode mode, Scalar eps,
                                  Scalar momentum, BnCache<Scalar>* cache = nullptr) {
    require(x.rank() == 4, "batch_norm: input must be N x C x H x W");
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(gamma.size() == c && beta.size() == c && running_mean.size() == c &&
                running_var.size() == c,
            "batch_norm: per-channel parameter size mismatch");
    const Index m = n * h * w;
    if (mode == Mode::Train)
        require(m >= 2, "batch_norm: train mode needs at least 2 values per channel");

    Tensor<Scalar> mean({c}), inv_std({c});
    if (mode == Mode::Train) {
        for (Index ic = 0; ic < c; ++ic) {
            Scalar s = 0;
            for (Index in = 0; in < n; ++in)
                for (Index i = 0; i < h; ++i)
                    for (Index j = 0; j < w; ++j) s += x(in, ic, i, j);
            const Scalar mu = s / Scalar(m);
            Scalar v = 0;
            for (Index in = 0; in < n; ++in)
                for (Index i = 0; i < h; ++i)
                    for (Index j = 0; j < w; ++j) {
                        const Scalar d = x(in, ic, i, j) - mu;
                        v += d * d;
                    }
            const Scalar var = v / Scalar(m);
            mean(ic) = mu;
            inv_std(ic) = Scalar(1) / std::sqrt(var + eps);
            running_mean(ic) = momentum * running_mean(ic) + (Scalar(1) - momentum) * mu;
            running_var(ic) = momentum * running_var(ic) + (Scalar(1) - momentum) * var;
        }
    } else {
        for (Index ic = 0; ic < c; ++ic) {
            mean(ic) = running_mean(ic);
            inv_std(ic) = Scalar(1) / std::sqrt(running_var(ic) + eps);
        }
    }

    Tensor<Scalar> y(x.shape());
    Tensor<Scalar> xhat(x.shape());
    for (Index in = 0; in < n; ++in)
        for (Index ic = 0; ic < c; ++ic) {
            const Scalar mu = mean(ic), is = inv_std(ic), ga = gamma(ic), be = beta(ic);
            for (Index i = 0; i < h; ++i)
                for (Index j = 0; j < w; ++j) {
                    const Scalar xh = (x(in, ic, i, j) - mu) * is;
                    xhat(in, ic, i, j) = xh;
                    y(in, ic, i, j) = ga * xh + be;
                }
        }

    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->mode = mode;
    }
    return y;
}

template <typename Scalar>
BnGrads<Scalar> batch_norm_backward(const BnCache<Scalar>& cache, const Tensor<Scalar>& gamma,
                                    const Tensor<Scalar>& gy) {
    const Tensor<Scalar>& xhat = cache.xhat;
    require(gy.same_shape(xhat), "batch_norm_backward: upstream gradient shape mismatch");
    const Index n = xhat.dim(0), c = xhat.dim(1), h = xhat.dim(2), w = xhat.dim(3);
    const Index m = n * h * w;

    BnGrads<Scalar> g{Tensor<Scalar>(xhat.shape()), Tensor<Scalar>({c}), Tensor<Scalar>({c})};
    for (Index ic = 0; ic < c; ++ic) {
        Scalar sum_gy = 0, sum_gy_xhat = 0;
        for (Index in = 0; in < n; ++in)
            for (Index i = 0; i < h; ++i)
                for (Index j = 0; j < w; ++j) {
                    const Scalar u = gy(in, ic, i, j);
                    sum_gy += u;
                    sum_gy_xhat += u * xhat(in, ic, i, j);
                }
        g.gbeta(ic) = sum_gy;
        g.ggamma(ic) = sum_gy_xhat;

        const Scalar scale = gamma(ic) * cache.inv_std(ic);
        if (cache.mode == Mode::Infer) {
            // running statistics are constants; the map is elementwise affine
            for (Index in = 0; in < n; ++in)
                for (Index i = 0; i < h; ++i)
                    for (Index j = 0; j < w; ++j) g.gx(in, ic, i, j) = scale * gy(in, ic, i, j);
            continue;
        }
        const Scalar mean_gy = sum_gy / Scalar(m);
        const Scalar mean_gy_xhat = sum_gy_xhat / Scalar(m);
        for (Index in = 0; in < n; ++in)
            for (Index i = 0; i < h; ++i)
                for (Index j = 0; j < w; ++j)
                    g.gx(in, ic, i, j) =
                        scale * (gy(in, ic, i, j) - mean_gy - xhat(in, ic, i, j) * mean_gy_xhat);
    }
    return g;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

struct ReluCache {
    Tensor<std::uint8_t> mask;  // 1 where x > 0; gradient is 0 at exactly 0
};

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x, ReluCache* cache = nullptr) {
    Tensor<Scalar> y(x.shape());
    y.flat() = x.flat().max(Scalar(0));
    if (cache) {
        cache->mask = Tensor<std::uint8_t>(x.shape());
        cache->mask.flat() = (x.flat() > Scalar(0)).template cast<std::uint8_t>();
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const ReluCache& cache, const Tensor<Scalar>& gy) {
    require(gy.shape() == cache.mask.shape(), "relu_backward: shape mismatch");
    Tensor<Scalar> gx(gy.shape());
    gx.flat() = gy.flat() * cache.mask.flat().template cast<Scalar>();
    return gx;
}

// ---------------------------------------------------------------------------
// dropout (inverted: survivors scaled at train time, inference is identity)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct DropoutCache {
    Tensor<std::uint8_t> keep;
    Scalar scale = 1;
    bool identity = true;
};

template <typename Scalar>
Tensor<Scalar> dropout_forward(const Tensor<Scalar>& x, double rate, Mode mode,
                               std::mt19937_64& rng, DropoutCache<Scalar>* cache = nullptr) {
    if (rate < 0.0 || rate >= 1.0)
        throw RateError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::Infer || rate == 0.0) {
        if (cache) {
            cache->identity = true;
            cache->scale = 1;
        }
        return x;
    }
    Tensor<std::uint8_t> keep(x.shape());
    for (Index i = 0; i < keep.size(); ++i) keep(i) = uniform_real(rng) >= rate ? 1 : 0;
    const Scalar scale = Scalar(1) / Scalar(1.0 - rate);
    Tensor<Scalar> y(x.shape());
    y.flat() = x.flat() * keep.flat().template cast<Scalar>() * scale;
    if (cache) {
        cache->keep = std::move(keep);
        cache->scale = scale;
        cache->identity = false;
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const DropoutCache<Scalar>& cache, const Tensor<Scalar>& gy) {
    if (cache.identity) return gy;
    require(gy.shape() == cache.keep.shape(), "dropout_backward: shape mismatch");
    Tensor<Scalar> gx(gy.shape());
    gx.flat() = gy.flat() * cache.keep.flat().template cast<Scalar>() * cache.scale;
    return gx;
}

// ---------------------------------------------------------------------------
// global mean pool
// ---------------------------------------------------------------------------

struct PoolCache {
    Index n = 0, c = 0, h = 0, w = 0;
};

template <typename Scalar>
Tensor<Scalar> global_mean_pool_forward(const Tensor<Scalar>& x, PoolCache* cache = nullptr) {
    require(x.rank() == 4, "global_mean_pool: input must be N x C x H x W");
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<Scalar> y({n, c});
    const Scalar inv = Scalar(1) / Scalar(h * w);
    for (Index in = 0; in < n; ++in)
        for (Index ic = 0; ic < c; ++ic) {
            Scalar s = 0;
            for (Index i = 0; i < h; ++i)
                for (Index j = 0; j < w; ++j) s += x(in, ic, i, j);
            y(in, ic) = s * inv;
        }
    if (cache) *cache = {n, c, h, w};
    return y;
}

template <typename Scalar>
Tensor<Scalar> global_mean_pool_backward(const PoolCache& cache, const Tensor<Scalar>& gy) {
    require(gy.rank() == 2 && gy.dim(0) == cache.n && gy.dim(1) == cache.c,
            "global_mean_pool_backward: shape mismatch");
    Tensor<Scalar> gx({cache.n, cache.c, cache.h, cache.w});
    const Scalar inv = Scalar(1) / Scalar(cache.h * cache.w);
    for (Index in = 0; in < cache.n; ++in)
        for (Index ic = 0; ic < cache.c; ++ic) {
            const Scalar v = gy(in, ic) * inv;
            for (Index i = 0; i < cache.h; ++i)
                for (Index j = 0; j < cache.w; ++j) gx(in, ic, i, j) = v;
        }
    return gx;
}

// ---------------------------------------------------------------------------
// fully connected
// ---------------------------------------------------------------------------

template <typename Scalar>
struct FcCache {
    Tensor<Scalar> x;
};

template <typename Scalar>
struct FcGrads {
    Tensor<Scalar> gx, gw, gb;
};

template <typename Scalar>
Tensor<Scalar> fully_connected_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                       const Tensor<Scalar>& b, FcCache<Scalar>* cache = nullptr) {
    require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "fully_connected: x N x C, w C x M, b M");
    require(x.dim(1) == w.dim(0) && b.dim(0) == w.dim(1), "fully_connected: dimension mismatch");
    const Index n = x.dim(0), c = x.dim(1), m = w.dim(1);
    Tensor<Scalar> y({n, m});
    y.as_matrix(n, m).noalias() = x.as_matrix(n, c) * w.as_matrix(c, m);
    y.as_matrix(n, m).rowwise() += b.as_vector().transpose();
    if (cache) cache->x = x;
    return y;
}

template <typename Scalar>
FcGrads<Scalar> fully_connected_backward(const FcCache<Scalar>& cache, const Tensor<Scalar>& w,
                                         const Tensor<Scalar>& gy) {
    const Index n = cache.x.dim(0), c = cache.x.dim(1), m = w.dim(1);
    require(gy.rank() == 2 && gy.dim(0) == n && gy.dim(1) == m,
            "fully_connected_backward: shape mismatch");
    FcGrads<Scalar> g{Tensor<Scalar>({n, c}), Tensor<Scalar>({c, m}), Tensor<Scalar>({m})};
    g.gx.as_matrix(n, c).noalias() = gy.as_matrix(n, m) * w.as_matrix(c, m).transpose();
    g.gw.as_matrix(c, m).noalias() = cache.x.as_matrix(n, c).transpose() * gy.as_matrix(n, m);
    g.gb.as_vector() = gy.as_matrix(n, m).colwise().sum().transpose();
    return g;
}

// ---------------------------------------------------------------------------
// softmax cross entropy
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SoftmaxResult {
    Scalar loss = 0;             // mean over the batch
    Tensor<Scalar> grad;         // d loss / d logits, (softmax - onehot)/N
    Tensor<Scalar> probs;        // softmax rows, kept for prediction
};

template <typename Scalar>
SoftmaxResult<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                            const std::vector<int>& labels) {
    require(logits.rank() == 2, "softmax_cross_entropy: logits must be N x M");
    const Index n = logits.dim(0), m = logits.dim(1);
    require(static_cast<Index>(labels.size()) == n,
            "softmax_cross_entropy: one label per batch row");
    for (int lab : labels)
        if (lab < 0 || lab >= m)
            throw LabelRangeError("label " + std::to_string(lab) + " outside [0, " +
                                  std::to_string(m) + ")");

    SoftmaxResult<Scalar> r;
    r.probs = Tensor<Scalar>({n, m});
    r.grad = Tensor<Scalar>({n, m});
    Scalar total = 0;
    for (Index i = 0; i < n; ++i) {
        Scalar mx = logits(i, 0);
        for (Index j = 1; j < m; ++j) mx = std::max(mx, logits(i, j));
        Scalar denom = 0;
        for (Index j = 0; j < m; ++j) denom += std::exp(logits(i, j) - mx);
        const Scalar log_denom = std::log(denom);
        for (Index j = 0; j < m; ++j) r.probs(i, j) = std::exp(logits(i, j) - mx) / denom;
        total += -(logits(i, labels[static_cast<std::size_t>(i)]) - mx - log_denom);
    }
    r.loss = total / Scalar(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j) {
            const Scalar onehot = (j == labels[static_cast<std::size_t>(i)]) ? Scalar(1) : Scalar(0);
            r.grad(i, j) = (r.probs(i, j) - onehot) / Scalar(n);
        }
    return r;
}

}  // namespace skelres
