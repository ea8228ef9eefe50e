#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vdd/tape.hpp"
#include "vdd/tensor.hpp"

namespace vdd {

// Multiply-accumulate counter for the matmul kernel. Enabled only around
// instrumented benchmark/spot-check runs; attention kernels route every
// projection and score product through matmul, so their counted MACs can be
// compared exactly against the closed-form complexity formulas.
struct MacCounter {
    inline static bool enabled = false;
    inline static uint64_t macs = 0;

    static void reset() { macs = 0; }
    struct Scope {
        Scope() {
            MacCounter::reset();
            MacCounter::enabled = true;
        }
        ~Scope() { MacCounter::enabled = false; }
    };
};

namespace detail {

template <typename S, typename F>
Ptr<S> finish(TapeT<S>& tape, Ptr<S> out, bool needs_grad, const char* name, F&& closure) {
    check_finite(*out, name);
    out->requires_grad = needs_grad;
    if (needs_grad) tape.record(out, std::forward<F>(closure));
    return out;
}

template <typename S>
void matmul_kernel(const S* a, const S* b, S* out, int m, int k, int n) {
    if (MacCounter::enabled)
        MacCounter::macs += static_cast<uint64_t>(m) * static_cast<uint64_t>(k) * static_cast<uint64_t>(n);
    for (int i = 0; i < m; ++i) {
        S* orow = out + static_cast<int64_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const S av = a[static_cast<int64_t>(i) * k + kk];
            const S* brow = b + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// Cross-correlation, square kernel K in {1,3}, padding K/2, stride in {1,2}.
template <typename S>
void conv2d_forward(const S* in, const S* w, S* out, int ci_n, int h, int wd, int co_n, int k,
                    int stride, int ho, int wo) {
    const int pad = k / 2;
    for (int co = 0; co < co_n; ++co)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                S acc = S(0);
                for (int ci = 0; ci < ci_n; ++ci)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const S* irow = in + (static_cast<int64_t>(ci) * h + iy) * wd;
                        const S* wrow = w + ((static_cast<int64_t>(co) * ci_n + ci) * k + ky) * k;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= wd) continue;
                            acc += irow[ix] * wrow[kx];
                        }
                    }
                out[(static_cast<int64_t>(co) * ho + oy) * wo + ox] = acc;
            }
}

template <typename S>
void conv2d_backward_input(const S* gout, const S* w, S* gin, int ci_n, int h, int wd, int co_n,
                           int k, int stride, int ho, int wo) {
    const int pad = k / 2;
    for (int co = 0; co < co_n; ++co)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const S g = gout[(static_cast<int64_t>(co) * ho + oy) * wo + ox];
                for (int ci = 0; ci < ci_n; ++ci)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= wd) continue;
                            gin[(static_cast<int64_t>(ci) * h + iy) * wd + ix] +=
                                g * w[((static_cast<int64_t>(co) * ci_n + ci) * k + ky) * k + kx];
                        }
                    }
            }
}

template <typename S>
void conv2d_backward_weight(const S* gout, const S* in, S* gw, int ci_n, int h, int wd, int co_n,
                            int k, int stride, int ho, int wo) {
    const int pad = k / 2;
    for (int co = 0; co < co_n; ++co)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const S g = gout[(static_cast<int64_t>(co) * ho + oy) * wo + ox];
                for (int ci = 0; ci < ci_n; ++ci)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= wd) continue;
                            gw[((static_cast<int64_t>(co) * ci_n + ci) * k + ky) * k + kx] +=
                                g * in[(static_cast<int64_t>(ci) * h + iy) * wd + ix];
                        }
                    }
            }
}

inline void conv_check_args(const std::vector<int>& xs, const std::vector<int>& ks, int stride,
                            int spatial_offset) {
    if (ks.size() != 4) throw ShapeError("conv kernels must be [C_out,C_in,k,k]");
    if (ks[2] != ks[3] || (ks[2] != 1 && ks[2] != 3)) throw ShapeError("conv kernel must be square, size 1 or 3");
    if (stride != 1 && stride != 2) throw ShapeError("conv stride must be 1 or 2");
    if (xs[static_cast<size_t>(spatial_offset)] != ks[1])
        throw ShapeError("conv channel mismatch: input has " + std::to_string(xs[static_cast<size_t>(spatial_offset)]) +
                         ", kernels expect " + std::to_string(ks[1]));
}

inline int conv_out_extent(int in, int k, int stride) { return (in + 2 * (k / 2) - k) / stride + 1; }

inline int normalize_axis(int axis, int rank) {
    if (axis < 0 || axis >= rank) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return axis;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

template <typename S>
Ptr<S> add(TapeT<S>& tape, const Ptr<S>& a, const Ptr<S>& b) {
    require_same_shape(*a, *b, "add");
    auto out = zeros<S>(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    return detail::finish(tape, out, a->requires_grad || b->requires_grad, "add", [a, b, out] {
        const auto& g = out->grad;
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) b->grad[i] += g[i];
        }
    });
}

template <typename S>
Ptr<S> sub(TapeT<S>& tape, const Ptr<S>& a, const Ptr<S>& b) {
    require_same_shape(*a, *b, "sub");
    auto out = zeros<S>(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    return detail::finish(tape, out, a->requires_grad || b->requires_grad, "sub", [a, b, out] {
        const auto& g = out->grad;
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) b->grad[i] -= g[i];
        }
    });
}

template <typename S>
Ptr<S> mul(TapeT<S>& tape, const Ptr<S>& a, const Ptr<S>& b) {
    require_same_shape(*a, *b, "mul");
    auto out = zeros<S>(a->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    return detail::finish(tape, out, a->requires_grad || b->requires_grad, "mul", [a, b, out] {
        const auto& g = out->grad;
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i] * b->data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) b->grad[i] += g[i] * a->data[i];
        }
    });
}

template <typename S>
Ptr<S> scale(TapeT<S>& tape, const Ptr<S>& x, double c) {
    auto out = zeros<S>(x->shape);
    const S cs = static_cast<S>(c);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * cs;
    return detail::finish(tape, out, x->requires_grad, "scale", [x, out, cs] {
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i] * cs;
    });
}

// x: [..., C, H, W] plus per-channel bias[C], broadcast over every other axis.
template <typename S>
Ptr<S> add_channel_bias(TapeT<S>& tape, const Ptr<S>& x, const Ptr<S>& bias) {
    if (x->rank() < 3) throw ShapeError("add_channel_bias needs rank >= 3");
    const int c = x->extent(x->rank() - 3);
    if (bias->rank() != 1 || bias->extent(0) != c)
        throw ShapeError("bias shape " + shape_str(bias->shape) + " does not match channels " + std::to_string(c));
    const int64_t hw = static_cast<int64_t>(x->extent(x->rank() - 2)) * x->extent(x->rank() - 1);
    const int64_t lead = x->numel() / (c * hw);
    auto out = zeros<S>(x->shape);
    for (int64_t l = 0; l < lead; ++l)
        for (int ch = 0; ch < c; ++ch) {
            const int64_t base = (l * c + ch) * hw;
            const S bv = bias->data[static_cast<size_t>(ch)];
            for (int64_t i = 0; i < hw; ++i) out->data[base + i] = x->data[base + i] + bv;
        }
    return detail::finish(tape, out, x->requires_grad || bias->requires_grad, "add_channel_bias",
                          [x, bias, out, lead, c, hw] {
                              const auto& g = out->grad;
                              if (x->requires_grad) {
                                  x->ensure_grad();
                                  for (size_t i = 0; i < g.size(); ++i) x->grad[i] += g[i];
                              }
                              if (bias->requires_grad) {
                                  bias->ensure_grad();
                                  for (int64_t l = 0; l < lead; ++l)
                                      for (int ch = 0; ch < c; ++ch) {
                                          const int64_t base = (l * c + ch) * hw;
                                          S acc = S(0);
                                          for (int64_t i = 0; i < hw; ++i) acc += g[base + i];
                                          bias->grad[static_cast<size_t>(ch)] += acc;
                                      }
                              }
                          });
}

// x: [N, D] plus bias[D] added to every row.
template <typename S>
Ptr<S> add_row_bias(TapeT<S>& tape, const Ptr<S>& x, const Ptr<S>& bias) {
    if (x->rank() != 2) throw ShapeError("add_row_bias needs rank 2");
    const int n = x->extent(0), d = x->extent(1);
    if (bias->rank() != 1 || bias->extent(0) != d)
        throw ShapeError("row bias shape " + shape_str(bias->shape) + " does not match width " + std::to_string(d));
    auto out = zeros<S>(x->shape);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            out->data[static_cast<size_t>(i * d + j)] = x->data[static_cast<size_t>(i * d + j)] + bias->data[static_cast<size_t>(j)];
    return detail::finish(tape, out, x->requires_grad || bias->requires_grad, "add_row_bias",
                          [x, bias, out, n, d] {
                              const auto& g = out->grad;
                              if (x->requires_grad) {
                                  x->ensure_grad();
                                  for (size_t i = 0; i < g.size(); ++i) x->grad[i] += g[i];
                              }
                              if (bias->requires_grad) {
                                  bias->ensure_grad();
                                  for (int j = 0; j < d; ++j) {
                                      S acc = S(0);
                                      for (int i = 0; i < n; ++i) acc += g[static_cast<size_t>(i * d + j)];
                                      bias->grad[static_cast<size_t>(j)] += acc;
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Ptr<S> matmul(TapeT<S>& tape, const Ptr<S>& a, const Ptr<S>& b) {
    if (a->rank() != 2 || b->rank() != 2) throw ShapeError("matmul needs rank-2 operands");
    const int m = a->extent(0), k = a->extent(1), k2 = b->extent(0), n = b->extent(1);
    if (k != k2)
        throw ShapeError("matmul inner dims disagree: " + shape_str(a->shape) + " x " + shape_str(b->shape));
    auto out = zeros<S>({m, n});
    detail::matmul_kernel(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    return detail::finish(tape, out, a->requires_grad || b->requires_grad, "matmul", [a, b, out, m, k, n] {
        const auto& g = out->grad;
        if (a->requires_grad) {
            a->ensure_grad();  // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const S gv = g[static_cast<size_t>(i * n + j)];
                    for (int kk = 0; kk < k; ++kk)
                        a->grad[static_cast<size_t>(i * k + kk)] += gv * b->data[static_cast<size_t>(kk * n + j)];
                }
        }
        if (b->requires_grad) {
            b->ensure_grad();  // dB = A^T * G
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    const S av = a->data[static_cast<size_t>(i * k + kk)];
                    for (int j = 0; j < n; ++j)
                        b->grad[static_cast<size_t>(kk * n + j)] += av * g[static_cast<size_t>(i * n + j)];
                }
        }
    });
}

template <typename S>
Ptr<S> transpose(TapeT<S>& tape, const Ptr<S>& x) {
    if (x->rank() != 2) throw ShapeError("transpose needs rank 2");
    const int m = x->extent(0), n = x->extent(1);
    auto out = zeros<S>({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->data[static_cast<size_t>(j * m + i)] = x->data[static_cast<size_t>(i * n + j)];
    return detail::finish(tape, out, x->requires_grad, "transpose", [x, out, m, n] {
        x->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                x->grad[static_cast<size_t>(i * n + j)] += out->grad[static_cast<size_t>(j * m + i)];
    });
}

// ---------------------------------------------------------------------------
// Convolution family
// ---------------------------------------------------------------------------

// Single image [C_in, H, W] -> [C_out, H', W']. Same-padding; stride 1 keeps
// the spatial size, stride 2 halves it.
template <typename S>
Ptr<S> conv2d(TapeT<S>& tape, const Ptr<S>& x, const Ptr<S>& kernels, int stride = 1) {
    if (x->rank() != 3) throw ShapeError("conv2d input must be [C,H,W]");
    detail::conv_check_args(x->shape, kernels->shape, stride, 0);
    const int ci = x->extent(0), h = x->extent(1), w = x->extent(2);
    const int co = kernels->extent(0), k = kernels->extent(2);
    const int ho = detail::conv_out_extent(h, k, stride), wo = detail::conv_out_extent(w, k, stride);
    auto out = zeros<S>({co, ho, wo});
    detail::conv2d_forward(x->data.data(), kernels->data.data(), out->data.data(), ci, h, w, co, k, stride, ho, wo);
    return detail::finish(tape, out, x->requires_grad || kernels->requires_grad, "conv2d",
                          [x, kernels, out, ci, h, w, co, k, stride, ho, wo] {
                              const auto& g = out->grad;
                              if (x->requires_grad) {
                                  x->ensure_grad();
                                  detail::conv2d_backward_input(g.data(), kernels->data.data(), x->grad.data(), ci, h, w, co, k, stride, ho, wo);
                              }
                              if (kernels->requires_grad) {
                                  kernels->ensure_grad();
                                  detail::conv2d_backward_weight(g.data(), x->data.data(), kernels->grad.data(), ci, h, w, co, k, stride, ho, wo);
                              }
                          });
}

// Per-frame 2-D convolution with shared weights over [F, C, H, W]; frames
// never mix (the 1x3x3 inflation of a 3x3 kernel).
template <typename S>
Ptr<S> pseudo3d_conv(TapeT<S>& tape, const Ptr<S>& z, const Ptr<S>& kernels, int stride = 1) {
    if (z->rank() != 4) throw ShapeError("pseudo3d_conv input must be [F,C,H,W]");
    detail::conv_check_args(z->shape, kernels->shape, stride, 1);
    const int f = z->extent(0), ci = z->extent(1), h = z->extent(2), w = z->extent(3);
    const int co = kernels->extent(0), k = kernels->extent(2);
    const int ho = detail::conv_out_extent(h, k, stride), wo = detail::conv_out_extent(w, k, stride);
    auto out = zeros<S>({f, co, ho, wo});
    const int64_t in_fs = static_cast<int64_t>(ci) * h * w, out_fs = static_cast<int64_t>(co) * ho * wo;
    for (int fr = 0; fr < f; ++fr)
        detail::conv2d_forward(z->data.data() + fr * in_fs, kernels->data.data(),
                               out->data.data() + fr * out_fs, ci, h, w, co, k, stride, ho, wo);
    return detail::finish(tape, out, z->requires_grad || kernels->requires_grad, "pseudo3d_conv",
                          [z, kernels, out, f, ci, h, w, co, k, stride, ho, wo, in_fs, out_fs] {
                              const auto& g = out->grad;
                              if (z->requires_grad) {
                                  z->ensure_grad();
                                  for (int fr = 0; fr < f; ++fr)
                                      detail::conv2d_backward_input(g.data() + fr * out_fs, kernels->data.data(),
                                                                    z->grad.data() + fr * in_fs, ci, h, w, co, k, stride, ho, wo);
                              }
                              if (kernels->requires_grad) {
                                  kernels->ensure_grad();
                                  for (int fr = 0; fr < f; ++fr)
                                      detail::conv2d_backward_weight(g.data() + fr * out_fs, z->data.data() + fr * in_fs,
                                                                     kernels->grad.data(), ci, h, w, co, k, stride, ho, wo);
                              }
                          });
}

// Nearest-neighbour 2x upsampling of the trailing two axes.
template <typename S>
Ptr<S> upsample_nearest2x(TapeT<S>& tape, const Ptr<S>& x) {
    if (x->rank() < 2) throw ShapeError("upsample_nearest2x needs rank >= 2");
    const int h = x->extent(x->rank() - 2), w = x->extent(x->rank() - 1);
    const int64_t lead = x->numel() / (static_cast<int64_t>(h) * w);
    std::vector<int> oshape = x->shape;
    oshape[oshape.size() - 2] = 2 * h;
    oshape[oshape.size() - 1] = 2 * w;
    auto out = zeros<S>(oshape);
    for (int64_t l = 0; l < lead; ++l) {
        const S* src = x->data.data() + l * h * w;
        S* dst = out->data.data() + l * 4 * h * w;
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < w; ++x2) {
                const S v = src[y * w + x2];
                dst[(2 * y) * 2 * w + 2 * x2] = v;
                dst[(2 * y) * 2 * w + 2 * x2 + 1] = v;
                dst[(2 * y + 1) * 2 * w + 2 * x2] = v;
                dst[(2 * y + 1) * 2 * w + 2 * x2 + 1] = v;
            }
    }
    return detail::finish(tape, out, x->requires_grad, "upsample_nearest2x", [x, out, lead, h, w] {
        x->ensure_grad();
        for (int64_t l = 0; l < lead; ++l) {
            S* gsrc = x->grad.data() + l * h * w;
            const S* gdst = out->grad.data() + l * 4 * h * w;
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2)
                    gsrc[y * w + x2] += gdst[(2 * y) * 2 * w + 2 * x2] + gdst[(2 * y) * 2 * w + 2 * x2 + 1] +
                                        gdst[(2 * y + 1) * 2 * w + 2 * x2] + gdst[(2 * y + 1) * 2 * w + 2 * x2 + 1];
        }
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

// Max-subtracted along the reduced axis; rows sum to 1.
template <typename S>
Ptr<S> softmax(TapeT<S>& tape, const Ptr<S>& x, int axis) {
    axis = detail::normalize_axis(axis, x->rank());
    const int n = x->extent(axis);
    int64_t inner = 1;
    for (int i = axis + 1; i < x->rank(); ++i) inner *= x->extent(i);
    const int64_t outer = x->numel() / (n * inner);
    auto out = zeros<S>(x->shape);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            double mx = -HUGE_VAL;
            for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(x->data[base + i * inner]));
            double sum = 0;
            for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(x->data[base + i * inner]) - mx);
            for (int i = 0; i < n; ++i)
                out->data[base + i * inner] =
                    static_cast<S>(std::exp(static_cast<double>(x->data[base + i * inner]) - mx) / sum);
        }
    return detail::finish(tape, out, x->requires_grad, "softmax", [x, out, n, inner, outer] {
        x->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * n * inner + in;
                double dot = 0;
                for (int i = 0; i < n; ++i)
                    dot += static_cast<double>(out->grad[base + i * inner]) * static_cast<double>(out->data[base + i * inner]);
                for (int i = 0; i < n; ++i) {
                    const double y = out->data[base + i * inner];
                    x->grad[base + i * inner] += static_cast<S>(y * (static_cast<double>(out->grad[base + i * inner]) - dot));
                }
            }
    });
}

// Group normalization over [..., C, H, W] with per-channel affine. Statistics
// are computed independently for each leading index (e.g. per frame).
template <typename S>
Ptr<S> group_norm(TapeT<S>& tape, const Ptr<S>& x, const Ptr<S>& gamma, const Ptr<S>& beta,
                  int groups, double eps = 1e-5) {
    if (x->rank() < 3) throw ShapeError("group_norm needs rank >= 3");
    const int c = x->extent(x->rank() - 3);
    const int64_t hw = static_cast<int64_t>(x->extent(x->rank() - 2)) * x->extent(x->rank() - 1);
    if (c % groups != 0) throw ShapeError("channels " + std::to_string(c) + " not divisible by groups " + std::to_string(groups));
    if (gamma->rank() != 1 || gamma->extent(0) != c || beta->rank() != 1 || beta->extent(0) != c)
        throw ShapeError("group_norm affine params must be [C]");
    const int gs = c / groups;
    const int64_t lead = x->numel() / (c * hw);
    const int64_t m = gs * hw;
    auto out = zeros<S>(x->shape);
    for (int64_t l = 0; l < lead; ++l)
        for (int g = 0; g < groups; ++g) {
            const int64_t base = l * c * hw + static_cast<int64_t>(g) * gs * hw;
            double mean = 0;
            for (int64_t i = 0; i < m; ++i) mean += x->data[base + i];
            mean /= static_cast<double>(m);
            double var = 0;
            for (int64_t i = 0; i < m; ++i) {
                const double d = x->data[base + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(m);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int ch = 0; ch < gs; ++ch) {
                const double ga = gamma->data[static_cast<size_t>(g * gs + ch)];
                const double be = beta->data[static_cast<size_t>(g * gs + ch)];
                for (int64_t i = 0; i < hw; ++i) {
                    const int64_t idx = base + ch * hw + i;
                    out->data[idx] = static_cast<S>(ga * (x->data[idx] - mean) * inv + be);
                }
            }
        }
    const bool needs = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    return detail::finish(tape, out, needs, "group_norm", [x, gamma, beta, out, groups, gs, hw, lead, m, eps] {
        const int c = gs * groups;
        for (int64_t l = 0; l < lead; ++l)
            for (int g = 0; g < groups; ++g) {
                const int64_t base = l * c * hw + static_cast<int64_t>(g) * gs * hw;
                double mean = 0;
                for (int64_t i = 0; i < m; ++i) mean += x->data[base + i];
                mean /= static_cast<double>(m);
                double var = 0;
                for (int64_t i = 0; i < m; ++i) {
                    const double d = x->data[base + i] - mean;
                    var += d * d;
                }
                var /= static_cast<double>(m);
                const double inv = 1.0 / std::sqrt(var + eps);

                if (gamma->requires_grad || beta->requires_grad) {
                    if (gamma->requires_grad) gamma->ensure_grad();
                    if (beta->requires_grad) beta->ensure_grad();
                    for (int ch = 0; ch < gs; ++ch) {
                        double dg = 0, db = 0;
                        for (int64_t i = 0; i < hw; ++i) {
                            const int64_t idx = base + ch * hw + i;
                            const double go = out->grad[idx];
                            dg += go * (x->data[idx] - mean) * inv;
                            db += go;
                        }
                        if (gamma->requires_grad) gamma->grad[static_cast<size_t>(g * gs + ch)] += static_cast<S>(dg);
                        if (beta->requires_grad) beta->grad[static_cast<size_t>(g * gs + ch)] += static_cast<S>(db);
                    }
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    double dvar = 0, dmean_a = 0, xm_sum = 0;
                    for (int ch = 0; ch < gs; ++ch) {
                        const double ga = gamma->data[static_cast<size_t>(g * gs + ch)];
                        for (int64_t i = 0; i < hw; ++i) {
                            const int64_t idx = base + ch * hw + i;
                            const double gh = static_cast<double>(out->grad[idx]) * ga;
                            const double xm = x->data[idx] - mean;
                            dvar += gh * xm;
                            dmean_a += gh;
                            xm_sum += xm;
                        }
                    }
                    dvar *= -0.5 * inv * inv * inv;
                    const double dmean = -dmean_a * inv + dvar * (-2.0 / static_cast<double>(m)) * xm_sum;
                    for (int ch = 0; ch < gs; ++ch) {
                        const double ga = gamma->data[static_cast<size_t>(g * gs + ch)];
                        for (int64_t i = 0; i < hw; ++i) {
                            const int64_t idx = base + ch * hw + i;
                            const double gh = static_cast<double>(out->grad[idx]) * ga;
                            const double xm = x->data[idx] - mean;
                            x->grad[idx] += static_cast<S>(gh * inv + dvar * 2.0 * xm / static_cast<double>(m) +
                                                           dmean / static_cast<double>(m));
                        }
                    }
                }
            }
    });
}

template <typename S>
Ptr<S> silu(TapeT<S>& tape, const Ptr<S>& x) {
    auto out = zeros<S>(x->shape);
    for (size_t i = 0; i < out->data.size(); ++i) {
        const double v = x->data[i];
        out->data[i] = static_cast<S>(v / (1.0 + std::exp(-v)));
    }
    return detail::finish(tape, out, x->requires_grad, "silu", [x, out] {
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) {
            const double v = x->data[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            x->grad[i] += static_cast<S>(static_cast<double>(out->grad[i]) * s * (1.0 + v * (1.0 - s)));
        }
    });
}

template <typename S>
Ptr<S> tanh_act(TapeT<S>& tape, const Ptr<S>& x) {
    auto out = zeros<S>(x->shape);
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = static_cast<S>(std::tanh(static_cast<double>(x->data[i])));
    return detail::finish(tape, out, x->requires_grad, "tanh", [x, out] {
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) {
            const double y = out->data[i];
            x->grad[i] += static_cast<S>(static_cast<double>(out->grad[i]) * (1.0 - y * y));
        }
    });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
Ptr<S> reshape(TapeT<S>& tape, const Ptr<S>& x, std::vector<int> new_shape) {
    check_shape_valid(new_shape);
    if (shape_numel(new_shape) != x->numel())
        throw ShapeError("reshape " + shape_str(x->shape) + " -> " + shape_str(new_shape) + " changes element count");
    auto out = std::make_shared<TensorT<S>>();
    out->shape = std::move(new_shape);
    out->data = x->data;
    return detail::finish(tape, out, x->requires_grad, "reshape", [x, out] {
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
}

template <typename S>
Ptr<S> concat(TapeT<S>& tape, const std::vector<Ptr<S>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const int rank = parts[0]->rank();
    axis = detail::normalize_axis(axis, rank);
    int total = 0;
    bool needs = false;
    for (const auto& p : parts) {
        if (p->rank() != rank) throw ShapeError("concat rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && p->extent(i) != parts[0]->extent(i))
                throw ShapeError("concat extent mismatch off the concat axis");
        total += p->extent(axis);
        needs = needs || p->requires_grad;
    }
    std::vector<int> oshape = parts[0]->shape;
    oshape[static_cast<size_t>(axis)] = total;
    int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= parts[0]->extent(i);
    const int64_t outer = shape_numel(oshape) / (total * inner);
    auto out = zeros<S>(oshape);
    int offset = 0;
    for (const auto& p : parts) {
        const int ext = p->extent(axis);
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(p->data.data() + o * ext * inner, ext * inner,
                        out->data.data() + (o * total + offset) * inner);
        offset += ext;
    }
    return detail::finish(tape, out, needs, "concat", [parts, out, axis, total, inner, outer] {
        int off = 0;
        for (const auto& p : parts) {
            const int ext = p->extent(axis);
            if (p->requires_grad) {
                p->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const S* src = out->grad.data() + (o * total + off) * inner;
                    S* dst = p->grad.data() + o * ext * inner;
                    for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                }
            }
            off += ext;
        }
    });
}

template <typename S>
Ptr<S> slice(TapeT<S>& tape, const Ptr<S>& x, int axis, int begin, int end) {
    axis = detail::normalize_axis(axis, x->rank());
    const int ext = x->extent(axis);
    if (begin < 0 || end > ext || begin >= end)
        throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for extent " + std::to_string(ext));
    std::vector<int> oshape = x->shape;
    oshape[static_cast<size_t>(axis)] = end - begin;
    int64_t inner = 1;
    for (int i = axis + 1; i < x->rank(); ++i) inner *= x->extent(i);
    const int64_t outer = x->numel() / (ext * inner);
    const int len = end - begin;
    auto out = zeros<S>(oshape);
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(x->data.data() + (o * ext + begin) * inner, len * inner, out->data.data() + o * len * inner);
    return detail::finish(tape, out, x->requires_grad, "slice", [x, out, ext, inner, outer, begin, len] {
        x->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            const S* src = out->grad.data() + o * len * inner;
            S* dst = x->grad.data() + (o * ext + begin) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions (double accumulators for stable checks at both precisions)
// ---------------------------------------------------------------------------

template <typename S>
Ptr<S> mean_all(TapeT<S>& tape, const Ptr<S>& x) {
    double acc = 0;
    for (S v : x->data) acc += v;
    const double n = static_cast<double>(x->numel());
    auto out = scalar<S>(static_cast<S>(acc / n));
    return detail::finish(tape, out, x->requires_grad, "mean", [x, out, n] {
        x->ensure_grad();
        const S g = static_cast<S>(static_cast<double>(out->grad[0]) / n);
        for (auto& gv : x->grad) gv += g;
    });
}

template <typename S>
Ptr<S> sum_squares(TapeT<S>& tape, const Ptr<S>& x) {
    double acc = 0;
    for (S v : x->data) acc += static_cast<double>(v) * static_cast<double>(v);
    auto out = scalar<S>(static_cast<S>(acc));
    return detail::finish(tape, out, x->requires_grad, "sum_squares", [x, out] {
        x->ensure_grad();
        const S g = out->grad[0];
        for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += S(2) * x->data[i] * g;
    });
}

// Mean squared error: mean((a - b)^2). Composition of primitives.
template <typename S>
Ptr<S> mse(TapeT<S>& tape, const Ptr<S>& a, const Ptr<S>& b) {
    auto d = sub(tape, a, b);
    return scale(tape, sum_squares(tape, d), 1.0 / static_cast<double>(d->numel()));
}

}  // namespace vdd
