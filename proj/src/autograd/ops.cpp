#include "fre/autograd/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fre::ag {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_finite([[maybe_unused]] const char* op, [[maybe_unused]] const Tensor<T>& t) {
#ifndef NDEBUG
    for (T v : t.data()) {
        if (!std::isfinite(v)) throw Error(std::string(op) + ": produced a non-finite value");
    }
#endif
}

void require_rank(const char* op, const Shape& shape, int rank) {
    if (static_cast<int>(shape.size()) != rank) {
        throw ShapeError(op, "rank", rank, static_cast<long>(shape.size()));
    }
}

void require_dim(const char* op, const char* name, int expected, int actual) {
    if (expected != actual) throw ShapeError(op, name, expected, actual);
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
    int channels, height, width;
    int kh, kw, stride, padding;
    int out_h, out_w;

    int col_rows() const { return channels * kh * kw; }
    int col_cols() const { return out_h * out_w; }
    bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
    for (int c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                T* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * g.col_cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.padding + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
                    if (iy < 0 || iy >= g.height) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = image + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx;
                        dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
    for (int c = 0; c < g.channels; ++c) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * g.col_cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * g.out_w;
                    T* dst = image + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx;
                        if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
    constexpr const char* op = "conv2d";
    require_rank(op, input.shape(), 4);
    require_rank(op, kernel.shape(), 4);
    if (stride < 1) throw ShapeError(op, "stride must be >= 1");
    if (padding < 0) throw ShapeError(op, "padding must be >= 0");
    const int n = input.dim(0);
    const int out_ch = kernel.dim(0);
    require_dim(op, "in_channels", kernel.dim(1), input.dim(1));
    if (bias.defined()) require_dim(op, "bias", out_ch, static_cast<int>(bias.numel()));

    ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), stride, padding, 0, 0};
    const int span_h = g.height + 2 * padding - g.kh;
    const int span_w = g.width + 2 * padding - g.kw;
    if (span_h < 0) throw ShapeError(op, "height", g.kh, g.height + 2 * padding);
    if (span_w < 0) throw ShapeError(op, "width", g.kw, g.width + 2 * padding);
    g.out_h = span_h / stride + 1;
    g.out_w = span_w / stride + 1;

    Tensor<T> out(Shape{n, out_ch, g.out_h, g.out_w});
    const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.height * g.width;
    const std::size_t out_stride = static_cast<std::size_t>(out_ch) * g.out_h * g.out_w;
    ConstMapMat<T> w(kernel.raw(), out_ch, g.col_rows());
    std::vector<T> col(g.is_pointwise() ? 0 : static_cast<std::size_t>(g.col_rows()) * g.col_cols());

    for (int b = 0; b < n; ++b) {
        const T* src = input.raw() + b * in_stride;
        if (!g.is_pointwise()) {
            im2col(src, g, col.data());
            src = col.data();
        }
        MapMat<T> y(out.raw() + b * out_stride, out_ch, g.col_cols());
        y.noalias() = w * ConstMapMat<T>(src, g.col_rows(), g.col_cols());
        if (bias.defined()) {
            for (int o = 0; o < out_ch; ++o) y.row(o).array() += bias[static_cast<std::size_t>(o)];
        }
    }
    check_finite(op, out);

    if (tape.wants({&input, &kernel, &bias})) {
        tape.record(op, {input, kernel, bias}, out,
                    [input, kernel, bias, g, n, out_ch, in_stride, out_stride](std::span<const T> gout) mutable {
                        std::vector<T> col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
                        ConstMapMat<T> w(kernel.raw(), out_ch, g.col_rows());
                        for (int b = 0; b < n; ++b) {
                            ConstMapMat<T> gy(gout.data() + b * out_stride, out_ch, g.col_cols());
                            if (kernel.requires_grad()) {
                                const T* src = input.raw() + b * in_stride;
                                if (!g.is_pointwise()) {
                                    im2col(src, g, col.data());
                                    src = col.data();
                                }
                                MapMat<T> gw(kernel.grad().data(), out_ch, g.col_rows());
                                gw.noalias() += gy * ConstMapMat<T>(src, g.col_rows(), g.col_cols()).transpose();
                            }
                            if (bias.defined() && bias.requires_grad()) {
                                auto gb = bias.grad();
                                // plain loop: Eigen's vectorised sum peels by pointer alignment
                                for (int o = 0; o < out_ch; ++o) {
                                    const T* row = gy.data() + static_cast<std::size_t>(o) * g.col_cols();
                                    T acc = T(0);
                                    for (int j = 0; j < g.col_cols(); ++j) acc += row[j];
                                    gb[static_cast<std::size_t>(o)] += acc;
                                }
                            }
                            if (input.requires_grad()) {
                                T* gx = input.grad().data() + b * in_stride;
                                if (g.is_pointwise()) {
                                    MapMat<T>(gx, g.col_rows(), g.col_cols()).noalias() += w.transpose() * gy;
                                } else {
                                    MapMat<T> gcol(col.data(), g.col_rows(), g.col_cols());
                                    gcol.noalias() = w.transpose() * gy;
                                    col2im_add(col.data(), g, gx);
                                }
                            }
                        }
                    });
    }
    return out;
}

template <typename T>
Tensor<T> maxpool2(Tape<T>& tape, const Tensor<T>& input) {
    constexpr const char* op = "maxpool2";
    require_rank(op, input.shape(), 4);
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0) throw ShapeError(op, "height must be even, got " + std::to_string(h));
    if (w % 2 != 0) throw ShapeError(op, "width must be even, got " + std::to_string(w));
    const int oh = h / 2, ow = w / 2;
    Tensor<T> out(Shape{n, c, oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    const T* x = input.raw();
    T* y = out.raw();
    std::size_t k = 0;
    for (int p = 0; p < n * c; ++p) {
        const std::size_t plane = static_cast<std::size_t>(p) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++k) {
                const std::size_t base = plane + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
                const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (int i = 1; i < 4; ++i) {
                    if (x[cand[i]] > x[best]) best = cand[i];
                }
                argmax[k] = best;
                y[k] = x[best];
            }
        }
    }
    if (tape.wants({&input})) {
        tape.record(op, {input}, out, [input, argmax = std::move(argmax)](std::span<const T> gout) mutable {
            auto gx = input.grad();
            for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += gout[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest(Tape<T>& tape, const Tensor<T>& input, int factor) {
    constexpr const char* op = "upsample_nearest";
    require_rank(op, input.shape(), 4);
    if (factor < 1) throw ShapeError(op, "factor must be >= 1");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int oh = h * factor, ow = w * factor;
    Tensor<T> out(Shape{n, c, oh, ow});
    const T* x = input.raw();
    T* y = out.raw();
    for (int p = 0; p < n * c; ++p) {
        const T* src = x + static_cast<std::size_t>(p) * h * w;
        T* dst = y + static_cast<std::size_t>(p) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const T* srow = src + static_cast<std::size_t>(oy / factor) * w;
            T* drow = dst + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) drow[ox] = srow[ox / factor];
        }
    }
    if (tape.wants({&input})) {
        tape.record(op, {input}, out, [input, n, c, h, w, factor](std::span<const T> gout) mutable {
            const int oh = h * factor, ow = w * factor;
            T* gx = input.grad().data();
            for (int p = 0; p < n * c; ++p) {
                const T* src = gout.data() + static_cast<std::size_t>(p) * oh * ow;
                T* dst = gx + static_cast<std::size_t>(p) * h * w;
                for (int oy = 0; oy < oh; ++oy) {
                    T* drow = dst + static_cast<std::size_t>(oy / factor) * w;
                    const T* srow = src + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) drow[ox / factor] += srow[ox];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    constexpr const char* op = "concat_channels";
    require_rank(op, a.shape(), 4);
    require_rank(op, b.shape(), 4);
    require_dim(op, "batch", a.dim(0), b.dim(0));
    require_dim(op, "height", a.dim(2), b.dim(2));
    require_dim(op, "width", a.dim(3), b.dim(3));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    const std::size_t sa = ca * plane, sb = cb * plane;
    Tensor<T> out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::copy_n(a.raw() + i * sa, sa, out.raw() + i * (sa + sb));
        std::copy_n(b.raw() + i * sb, sb, out.raw() + i * (sa + sb) + sa);
    }
    if (tape.wants({&a, &b})) {
        tape.record(op, {a, b}, out, [a, b, n, sa, sb](std::span<const T> gout) mutable {
            for (int i = 0; i < n; ++i) {
                const T* g = gout.data() + i * (sa + sb);
                if (a.requires_grad()) accumulate<T>(a.grad().subspan(i * sa, sa), {g, sa});
                if (b.requires_grad()) accumulate<T>(b.grad().subspan(i * sb, sb), {g + sa, sb});
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Phase phase, bool update_running) {
    constexpr const char* op = "batch_norm";
    require_rank(op, input.shape(), 4);
    const int n = input.dim(0), c = input.dim(1);
    const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
    require_dim(op, "gamma", c, static_cast<int>(gamma.numel()));
    require_dim(op, "beta", c, static_cast<int>(beta.numel()));
    require_dim(op, "running_mean", c, static_cast<int>(state.running_mean.numel()));
    require_dim(op, "running_var", c, static_cast<int>(state.running_var.numel()));
    const std::size_t count = static_cast<std::size_t>(n) * plane;
    if (phase == Phase::Train && count <= 1) {
        throw ShapeError(op, "train mode needs more than one value per channel (batch*height*width == " +
                                 std::to_string(count) + ")");
    }

    const T eps = static_cast<T>(kBatchNormEpsilon);
    const T momentum = static_cast<T>(kBatchNormMomentum);
    Tensor<T> out(input.shape());
    Tensor<T> xhat(input.shape());
    std::vector<T> inv_std(static_cast<std::size_t>(c));
    const T* x = input.raw();

    for (int ch = 0; ch < c; ++ch) {
        T mean, var;
        if (phase == Phase::Train) {
            T acc = 0;
            for (int i = 0; i < n; ++i) {
                const T* p = x + (static_cast<std::size_t>(i) * c + ch) * plane;
                for (std::size_t j = 0; j < plane; ++j) acc += p[j];
            }
            mean = acc / static_cast<T>(count);
            T sq = 0;
            for (int i = 0; i < n; ++i) {
                const T* p = x + (static_cast<std::size_t>(i) * c + ch) * plane;
                for (std::size_t j = 0; j < plane; ++j) {
                    const T d = p[j] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(count);
            if (update_running) {
                const T unbiased = sq / static_cast<T>(count - 1);
                T& rm = state.running_mean[static_cast<std::size_t>(ch)];
                T& rv = state.running_var[static_cast<std::size_t>(ch)];
                rm = momentum * rm + (T(1) - momentum) * mean;
                rv = momentum * rv + (T(1) - momentum) * unbiased;
            }
        } else {
            mean = state.running_mean[static_cast<std::size_t>(ch)];
            var = state.running_var[static_cast<std::size_t>(ch)];
        }
        const T istd = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(ch)] = istd;
        const T gm = gamma[static_cast<std::size_t>(ch)];
        const T bt = beta[static_cast<std::size_t>(ch)];
        for (int i = 0; i < n; ++i) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                const T h = (x[off + j] - mean) * istd;
                xhat[off + j] = h;
                out[off + j] = gm * h + bt;
            }
        }
    }
    check_finite(op, out);

    if (tape.wants({&input, &gamma, &beta})) {
        tape.record(op, {input, gamma, beta}, out,
                    [input, gamma, beta, xhat, inv_std = std::move(inv_std), n, c, plane, count,
                     phase](std::span<const T> gout) mutable {
                        for (int ch = 0; ch < c; ++ch) {
                            T sum_dy = 0, sum_dy_xhat = 0;
                            for (int i = 0; i < n; ++i) {
                                const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
                                for (std::size_t j = 0; j < plane; ++j) {
                                    sum_dy += gout[off + j];
                                    sum_dy_xhat += gout[off + j] * xhat[off + j];
                                }
                            }
                            const auto uch = static_cast<std::size_t>(ch);
                            if (gamma.requires_grad()) gamma.grad()[uch] += sum_dy_xhat;
                            if (beta.requires_grad()) beta.grad()[uch] += sum_dy;
                            if (!input.requires_grad()) continue;
                            const T gm = gamma[uch];
                            const T istd = inv_std[uch];
                            auto gx = input.grad();
                            if (phase == Phase::Train) {
                                const T m = static_cast<T>(count);
                                const T k = gm * istd / m;
                                for (int i = 0; i < n; ++i) {
                                    const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
                                    for (std::size_t j = 0; j < plane; ++j) {
                                        gx[off + j] += k * (m * gout[off + j] - sum_dy - xhat[off + j] * sum_dy_xhat);
                                    }
                                }
                            } else {
                                for (int i = 0; i < n; ++i) {
                                    const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
                                    for (std::size_t j = 0; j < plane; ++j) gx[off + j] += gout[off + j] * gm * istd;
                                }
                            }
                        }
                    });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (tape.wants({&input})) {
        tape.record("relu", {input}, out, [input, out_data = out](std::span<const T> gout) mutable {
            auto gx = input.grad();
            const auto y = out_data.data();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (y[i] > T(0)) gx[i] += gout[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] >= T(0)) {
            y[i] = T(1) / (T(1) + std::exp(-x[i]));
        } else {
            const T e = std::exp(x[i]);
            y[i] = e / (T(1) + e);
        }
    }
    if (tape.wants({&input})) {
        // Holding `out` in the closure is safe: outputs are never written after
        // the op returns.
        tape.record("sigmoid", {input}, out, [input, out_data = out](std::span<const T> gout) mutable {
            auto gx = input.grad();
            const auto y = out_data.data();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

template <typename T>
Tensor<T> dense(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    constexpr const char* op = "dense";
    require_rank(op, input.shape(), 2);
    require_rank(op, weight.shape(), 2);
    const int n = input.dim(0), in = input.dim(1), out_f = weight.dim(0);
    require_dim(op, "in_features", weight.dim(1), in);
    if (bias.defined()) require_dim(op, "bias", out_f, static_cast<int>(bias.numel()));
    Tensor<T> out(Shape{n, out_f});
    ConstMapMat<T> x(input.raw(), n, in);
    ConstMapMat<T> w(weight.raw(), out_f, in);
    MapMat<T> y(out.raw(), n, out_f);
    y.noalias() = x * w.transpose();
    if (bias.defined()) {
        for (int i = 0; i < n; ++i) {
            for (int o = 0; o < out_f; ++o) y(i, o) += bias[static_cast<std::size_t>(o)];
        }
    }
    check_finite(op, out);
    if (tape.wants({&input, &weight, &bias})) {
        tape.record(op, {input, weight, bias}, out, [input, weight, bias, n, in, out_f](std::span<const T> gout) mutable {
            ConstMapMat<T> gy(gout.data(), n, out_f);
            if (weight.requires_grad()) {
                MapMat<T>(weight.grad().data(), out_f, in).noalias() += gy.transpose() * ConstMapMat<T>(input.raw(), n, in);
            }
            if (input.requires_grad()) {
                MapMat<T>(input.grad().data(), n, in).noalias() += gy * ConstMapMat<T>(weight.raw(), out_f, in);
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad();
                for (int i = 0; i < n; ++i) {
                    for (int o = 0; o < out_f; ++o) gb[static_cast<std::size_t>(o)] += gy(i, o);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& input) {
    constexpr const char* op = "global_avg_pool";
    require_rank(op, input.shape(), 4);
    const int n = input.dim(0), c = input.dim(1);
    const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
    if (plane == 0) throw ShapeError(op, "empty spatial extent");
    Tensor<T> out(Shape{n, c});
    for (int p = 0; p < n * c; ++p) {
        const T* src = input.raw() + static_cast<std::size_t>(p) * plane;
        T acc = 0;
        for (std::size_t j = 0; j < plane; ++j) acc += src[j];
        out[static_cast<std::size_t>(p)] = acc / static_cast<T>(plane);
    }
    if (tape.wants({&input})) {
        tape.record(op, {input}, out, [input, plane](std::span<const T> gout) mutable {
            auto gx = input.grad();
            const T inv = T(1) / static_cast<T>(plane);
            for (std::size_t p = 0; p < gout.size(); ++p) {
                const T g = gout[p] * inv;
                for (std::size_t j = 0; j < plane; ++j) gx[p * plane + j] += g;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> gate_channels(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gate) {
    constexpr const char* op = "gate_channels";
    require_rank(op, input.shape(), 4);
    require_rank(op, gate.shape(), 2);
    require_dim(op, "batch", input.dim(0), gate.dim(0));
    require_dim(op, "channels", input.dim(1), gate.dim(1));
    const std::size_t planes = static_cast<std::size_t>(input.dim(0)) * input.dim(1);
    const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
    Tensor<T> out(input.shape());
    for (std::size_t p = 0; p < planes; ++p) {
        const T g = gate[p];
        for (std::size_t j = 0; j < plane; ++j) out[p * plane + j] = input[p * plane + j] * g;
    }
    if (tape.wants({&input, &gate})) {
        tape.record(op, {input, gate}, out, [input, gate, planes, plane](std::span<const T> gout) mutable {
            for (std::size_t p = 0; p < planes; ++p) {
                if (gate.requires_grad()) {
                    T acc = 0;
                    for (std::size_t j = 0; j < plane; ++j) acc += gout[p * plane + j] * input[p * plane + j];
                    gate.grad()[p] += acc;
                }
                if (input.requires_grad()) {
                    const T g = gate[p];
                    auto gx = input.grad();
                    for (std::size_t j = 0; j < plane; ++j) gx[p * plane + j] += gout[p * plane + j] * g;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale_channels(Tape<T>& tape, const Tensor<T>& input, std::span<const T> factors) {
    constexpr const char* op = "scale_channels";
    require_rank(op, input.shape(), 4);
    const int n = input.dim(0), c = input.dim(1);
    const bool per_sample = factors.size() == static_cast<std::size_t>(n) * c;
    if (!per_sample && factors.size() != static_cast<std::size_t>(c)) {
        throw ShapeError(op, "factors", c, static_cast<long>(factors.size()));
    }
    const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
    std::vector<T> f(static_cast<std::size_t>(n) * c);
    for (std::size_t p = 0; p < f.size(); ++p) f[p] = per_sample ? factors[p] : factors[p % c];
    Tensor<T> out(input.shape());
    for (std::size_t p = 0; p < f.size(); ++p) {
        for (std::size_t j = 0; j < plane; ++j) out[p * plane + j] = input[p * plane + j] * f[p];
    }
    if (tape.wants({&input})) {
        tape.record(op, {input}, out, [input, f = std::move(f), plane](std::span<const T> gout) mutable {
            auto gx = input.grad();
            for (std::size_t p = 0; p < f.size(); ++p) {
                for (std::size_t j = 0; j < plane; ++j) gx[p * plane + j] += gout[p * plane + j] * f[p];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const int> labels,
                                std::optional<int> ignore_index) {
    constexpr const char* op = "softmax_cross_entropy";
    require_rank(op, logits.shape(), 4);
    const int n = logits.dim(0), classes = logits.dim(1);
    const std::size_t plane = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
    if (labels.size() != static_cast<std::size_t>(n) * plane) {
        throw ShapeError(op, "labels", static_cast<long>(static_cast<std::size_t>(n) * plane),
                         static_cast<long>(labels.size()));
    }
    Tensor<T> probs(logits.shape());
    T total = 0;
    std::size_t scored = 0;
    for (int b = 0; b < n; ++b) {
        const T* z = logits.raw() + static_cast<std::size_t>(b) * classes * plane;
        T* pr = probs.raw() + static_cast<std::size_t>(b) * classes * plane;
        for (std::size_t j = 0; j < plane; ++j) {
            const int label = labels[static_cast<std::size_t>(b) * plane + j];
            const bool ignored = ignore_index && label == *ignore_index;
            if (!ignored && (label < 0 || label >= classes)) {
                throw DataError("", std::string(op) + ": label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(classes) + ")");
            }
            T zmax = -std::numeric_limits<T>::infinity();
            for (int k = 0; k < classes; ++k) zmax = std::max(zmax, z[k * plane + j]);
            T denom = 0;
            for (int k = 0; k < classes; ++k) {
                const T e = std::exp(z[k * plane + j] - zmax);
                pr[k * plane + j] = e;
                denom += e;
            }
            for (int k = 0; k < classes; ++k) pr[k * plane + j] /= denom;
            if (ignored) continue;
            total += zmax + std::log(denom) - z[static_cast<std::size_t>(label) * plane + j];
            ++scored;
        }
    }
    Tensor<T> out = Tensor<T>::scalar(scored == 0 ? T(0) : total / static_cast<T>(scored));
    check_finite(op, out);
    if (tape.wants({&logits})) {
        std::vector<int> saved(labels.begin(), labels.end());
        tape.record(op, {logits}, out,
                    [logits, probs, saved = std::move(saved), ignore_index, n, classes, plane,
                     scored](std::span<const T> gout) mutable {
                        if (scored == 0) return;
                        const T g = gout[0] / static_cast<T>(scored);
                        auto gx = logits.grad();
                        for (int b = 0; b < n; ++b) {
                            const std::size_t base = static_cast<std::size_t>(b) * classes * plane;
                            for (std::size_t j = 0; j < plane; ++j) {
                                const int label = saved[static_cast<std::size_t>(b) * plane + j];
                                if (ignore_index && label == *ignore_index) continue;
                                for (int k = 0; k < classes; ++k) {
                                    const std::size_t idx = base + k * plane + j;
                                    gx[idx] += g * (probs[idx] - (k == label ? T(1) : T(0)));
                                }
                            }
                        }
                    });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input) {
    T acc = 0;
    for (T v : input.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (tape.wants({&input})) {
        tape.record("sum", {input}, out, [input](std::span<const T> gout) mutable {
            for (auto& g : input.grad()) g += gout[0];
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("add", "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    if (tape.wants({&a, &b})) {
        tape.record("add", {a, b}, out, [a, b](std::span<const T> gout) mutable {
            if (a.requires_grad()) accumulate<T>(a.grad(), gout);
            if (b.requires_grad()) accumulate<T>(b.grad(), gout);
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul", "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
    if (tape.wants({&a, &b})) {
        tape.record("mul", {a, b}, out, [a, b](std::span<const T> gout) mutable {
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * b[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * a[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = input[i] * factor;
    if (tape.wants({&input})) {
        tape.record("scale", {input}, out, [input, factor](std::span<const T> gout) mutable {
            auto gx = input.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * factor;
        });
    }
    return out;
}

#define FRE_INSTANTIATE_OPS(T)                                                                                   \
    template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);        \
    template Tensor<T> maxpool2(Tape<T>&, const Tensor<T>&);                                                     \
    template Tensor<T> upsample_nearest(Tape<T>&, const Tensor<T>&, int);                                        \
    template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> batch_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                  BatchNormState<T>&, Phase, bool);                                              \
    template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                         \
    template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> dense(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> global_avg_pool(Tape<T>&, const Tensor<T>&);                                              \
    template Tensor<T> gate_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> scale_channels(Tape<T>&, const Tensor<T>&, std::span<const T>);                           \
    template Tensor<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const int>, std::optional<int>); \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                          \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);

FRE_INSTANTIATE_OPS(float)
FRE_INSTANTIATE_OPS(double)

#undef FRE_INSTANTIATE_OPS

}  // namespace fre::ag
