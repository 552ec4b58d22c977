#include "vfcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

namespace vfcn::ops {
namespace {

// C[MxN] = op(A) * op(B) (+ C when accumulate), all row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, bool accumulate, T* c)
{
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const Mat> A(a, trans_a ? k : m, trans_a ? m : k);
    const Eigen::Map<const Mat> B(b, trans_b ? n : k, trans_b ? k : n);
    Eigen::Map<Mat> C(c, m, n);
    auto run = [&](const auto& lhs, const auto& rhs) {
        if (accumulate)
            C.noalias() += lhs * rhs;
        else
            C.noalias() = lhs * rhs;
    };
    if (trans_a && trans_b)
        run(A.transpose(), B.transpose());
    else if (trans_a)
        run(A.transpose(), B);
    else if (trans_b)
        run(A, B.transpose());
    else
        run(A, B);
}

struct Geometry {
    int channels, in_h, in_w, kh, kw, stride, pad, out_h, out_w;
    int col_rows() const { return channels * kh * kw; }
    int col_cols() const { return out_h * out_w; }
    bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + kj lies inside [0, in_w).
inline void valid_range(const Geometry& g, int kj, int& lo, int& hi)
{
    const int shift = kj - g.pad;
    lo = shift >= 0 ? 0 : (-shift + g.stride - 1) / g.stride;
    hi = g.in_w - shift <= 0 ? 0 : std::min(g.out_w, (g.in_w - shift + g.stride - 1) / g.stride);
    lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* src, const Geometry& g, T* col)
{
    const int ohw = g.col_cols();
    for (int c = 0; c < g.channels; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * ohw;
                int lo, hi;
                valid_range(g, kj, lo, hi);
                const int shift = kj - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
                    std::fill(dst, dst + lo, T(0));
                    if (g.stride == 1) {
                        std::copy(line + lo + shift, line + hi + shift, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox)
                            dst[ox] = line[ox * g.stride + shift];
                    }
                    std::fill(dst + hi, dst + g.out_w, T(0));
                }
            }
        }
    }
}

// Accumulates columns back into `dst` (which must be zeroed by the caller).
template <typename T>
void col2im(const T* col, const Geometry& g, T* dst)
{
    const int ohw = g.col_cols();
    for (int c = 0; c < g.channels; ++c) {
        T* plane = dst + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * ohw;
                int lo, hi;
                valid_range(g, kj, lo, hi);
                const int shift = kj - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.in_h)
                        continue;
                    T* line = plane + static_cast<std::size_t>(iy) * g.in_w;
                    const T* srcrow = row + oy * g.out_w;
                    for (int ox = lo; ox < hi; ++ox)
                        line[ox * g.stride + shift] += srcrow[ox];
                }
            }
        }
    }
}

int conv_out_size(int in, int k, int stride, int pad)
{
    const int span = in + 2 * pad - k;
    if (span < 0)
        return 0;
    return span / stride + 1;
}

template <typename T>
void add_bias(BasicTensor<T>& out, std::span<const T> bias)
{
    if (bias.empty())
        return;
    const Shape& s = out.shape();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            T* p = out.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i)
                p[i] += bias[c];
        }
}

template <typename T>
std::vector<T> bias_grad(const BasicTensor<T>& grad_out)
{
    const Shape& s = grad_out.shape();
    std::vector<T> db(s.c, T(0));
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = grad_out.plane(n, c);
            T acc = 0;
            for (std::size_t i = 0; i < s.plane(); ++i)
                acc += p[i];
            db[c] += acc;
        }
    return db;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, std::span<const T> bias,
                      int stride, int pad)
{
    const Shape& xs = input.shape();
    const Shape& ws = weights.shape();
    if (stride < 1 || pad < 0)
        throw ContractError("conv2d: stride must be >= 1 and pad >= 0");
    if (xs.c != ws.c)
        throw ContractError("conv2d: input has " + std::to_string(xs.c) + " channels, weights expect " +
                            std::to_string(ws.c));
    if (!bias.empty() && bias.size() != ws.n)
        throw ContractError("conv2d: bias length does not match output channels");
    const Geometry g{static_cast<int>(xs.c), static_cast<int>(xs.h), static_cast<int>(xs.w),
                     static_cast<int>(ws.h), static_cast<int>(ws.w), stride, pad,
                     conv_out_size(static_cast<int>(xs.h), static_cast<int>(ws.h), stride, pad),
                     conv_out_size(static_cast<int>(xs.w), static_cast<int>(ws.w), stride, pad)};
    if (g.out_h < 1 || g.out_w < 1)
        throw ContractError("conv2d: output dimension would be < 1 for input " + xs.str());

    const int out_c = static_cast<int>(ws.n);
    BasicTensor<T> out(Shape{xs.n, ws.n, static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w)});
    std::vector<T> col;
    if (!g.is_pointwise())
        col.resize(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
    for (std::size_t n = 0; n < xs.n; ++n) {
        const T* src = input.plane(n, 0);
        if (!g.is_pointwise()) {
            im2col(src, g, col.data());
            src = col.data();
        }
        gemm(false, false, out_c, g.col_cols(), g.col_rows(), weights.data(), src, false, out.plane(n, 0));
    }
    add_bias(out, bias);
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_out, int stride, int pad, bool want_input_grad)
{
    const Shape& xs = input.shape();
    const Shape& ws = weights.shape();
    const Shape& gs = grad_out.shape();
    const Geometry g{static_cast<int>(xs.c), static_cast<int>(xs.h), static_cast<int>(xs.w),
                     static_cast<int>(ws.h), static_cast<int>(ws.w), stride, pad,
                     static_cast<int>(gs.h), static_cast<int>(gs.w)};
    const int out_c = static_cast<int>(ws.n);

    ConvGrads<T> grads;
    grads.weights = BasicTensor<T>(ws);
    if (want_input_grad)
        grads.input = BasicTensor<T>(xs);
    std::vector<T> col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
    for (std::size_t n = 0; n < xs.n; ++n) {
        const T* dout = grad_out.plane(n, 0);
        const T* cols = input.plane(n, 0);
        if (!g.is_pointwise()) {
            im2col(input.plane(n, 0), g, col.data());
            cols = col.data();
        }
        gemm(false, true, out_c, g.col_rows(), g.col_cols(), dout, cols, true, grads.weights.data());
        if (!want_input_grad)
            continue;
        if (g.is_pointwise()) {
            gemm(true, false, g.col_rows(), g.col_cols(), out_c, weights.data(), dout, false,
                 grads.input.plane(n, 0));
        } else {
            gemm(true, false, g.col_rows(), g.col_cols(), out_c, weights.data(), dout, false, col.data());
            col2im(col.data(), g, grads.input.plane(n, 0));
        }
    }
    grads.bias = bias_grad(grad_out);
    return grads;
}

template <typename T>
BasicTensor<T> transposed_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                 std::span<const T> bias, int stride)
{
    const Shape& xs = input.shape();
    const Shape& ws = weights.shape();
    if (ws.h == 0 || ws.w == 0)
        throw ContractError("transposed_conv2d: degenerate kernel");
    if (stride < 1)
        throw ContractError("transposed_conv2d: stride must be >= 1");
    if (xs.c != ws.n)
        throw ContractError("transposed_conv2d: input has " + std::to_string(xs.c) + " channels, weights expect " +
                            std::to_string(ws.n));
    if (!bias.empty() && bias.size() != ws.c)
        throw ContractError("transposed_conv2d: bias length does not match output channels");
    const int out_h = (static_cast<int>(xs.h) - 1) * stride + static_cast<int>(ws.h);
    const int out_w = (static_cast<int>(xs.w) - 1) * stride + static_cast<int>(ws.w);
    // Geometry of the equivalent forward convolution mapping out -> input.
    const Geometry g{static_cast<int>(ws.c), out_h, out_w, static_cast<int>(ws.h), static_cast<int>(ws.w),
                     stride, 0, static_cast<int>(xs.h), static_cast<int>(xs.w)};

    BasicTensor<T> out(Shape{xs.n, ws.c, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});
    std::vector<T> col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
    for (std::size_t n = 0; n < xs.n; ++n) {
        gemm(true, false, g.col_rows(), g.col_cols(), static_cast<int>(ws.n), weights.data(),
             input.plane(n, 0), false, col.data());
        col2im(col.data(), g, out.plane(n, 0));
    }
    add_bias(out, bias);
    return out;
}

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& grad_out, int stride, bool want_input_grad)
{
    const Shape& xs = input.shape();
    const Shape& ws = weights.shape();
    const Shape& gs = grad_out.shape();
    const Geometry g{static_cast<int>(ws.c), static_cast<int>(gs.h), static_cast<int>(gs.w),
                     static_cast<int>(ws.h), static_cast<int>(ws.w), stride, 0,
                     static_cast<int>(xs.h), static_cast<int>(xs.w)};
    const int in_c = static_cast<int>(ws.n);

    ConvGrads<T> grads;
    grads.weights = BasicTensor<T>(ws);
    if (want_input_grad)
        grads.input = BasicTensor<T>(xs);
    std::vector<T> col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
    for (std::size_t n = 0; n < xs.n; ++n) {
        im2col(grad_out.plane(n, 0), g, col.data());
        gemm(false, true, in_c, g.col_rows(), g.col_cols(), input.plane(n, 0), col.data(), true,
             grads.weights.data());
        if (want_input_grad)
            gemm(false, false, in_c, g.col_cols(), g.col_rows(), weights.data(), col.data(), false,
                 grads.input.plane(n, 0));
    }
    grads.bias = bias_grad(grad_out);
    return grads;
}

int pooled_size(int in, int kernel, int stride)
{
    return (in - kernel + stride - 1) / stride + 1;
}

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel, int stride)
{
    const Shape& s = input.shape();
    if (kernel < 1 || stride < 1)
        throw ContractError("maxpool2d: kernel and stride must be positive");
    if (s.h < static_cast<std::size_t>(kernel) || s.w < static_cast<std::size_t>(kernel))
        throw ContractError("maxpool2d: input " + s.str() + " smaller than kernel " + std::to_string(kernel));
    const int in_h = static_cast<int>(s.h);
    const int in_w = static_cast<int>(s.w);
    const int out_h = pooled_size(in_h, kernel, stride);
    const int out_w = pooled_size(in_w, kernel, stride);

    PoolResult<T> r;
    r.output = BasicTensor<T>(Shape{s.n, s.c, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});
    r.argmax.resize(r.output.size());
    std::size_t o = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = (n * s.c + c) * s.plane();
            const T* plane = input.data() + base;
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = oy * stride;
                const int y1 = std::min(y0 + kernel, in_h);
                for (int ox = 0; ox < out_w; ++ox, ++o) {
                    const int x0 = ox * stride;
                    const int x1 = std::min(x0 + kernel, in_w);
                    std::size_t best = static_cast<std::size_t>(y0) * in_w + x0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) {
                            const std::size_t i = static_cast<std::size_t>(y) * in_w + x;
                            if (plane[i] > plane[best])
                                best = i;
                        }
                    r.output[o] = plane[best];
                    r.argmax[o] = static_cast<std::uint32_t>(base + best);
                }
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                                  const Shape& input_shape)
{
    if (argmax.size() != grad_out.size())
        throw ContractError("maxpool2d_backward: argmax does not match gradient");
    BasicTensor<T> dx(input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o)
        dx[argmax[o]] += grad_out[o];
    return dx;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input)
{
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out)
{
    BasicTensor<T> dx(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        dx[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return dx;
}

template <typename T>
MvnResult<T> mvn(const BasicTensor<T>& input)
{
    const Shape& s = input.shape();
    const std::size_t count = s.plane();
    MvnResult<T> r;
    r.output = BasicTensor<T>(s);
    r.stddev.resize(s.n * s.c);
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* x = input.data() + nc * count;
        T* y = r.output.data() + nc * count;
        double mean = 0;
        for (std::size_t i = 0; i < count; ++i)
            mean += x[i];
        mean /= static_cast<double>(count);
        double var = 0;
        for (std::size_t i = 0; i < count; ++i) {
            const double d = x[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
        const double sd = std::sqrt(var);
        const double inv = 1.0 / (sd + kMvnEpsilon);
        for (std::size_t i = 0; i < count; ++i)
            y[i] = static_cast<T>((x[i] - mean) * inv);
        r.stddev[nc] = static_cast<T>(sd);
    }
    return r;
}

template <typename T>
BasicTensor<T> mvn_backward(const MvnResult<T>& forward, const BasicTensor<T>& grad_out)
{
    // With d = x - mean, s = sd + eps and y = d / s:
    //   dx_i = (g_i - mean(g)) / s - y_i * sum_j(g_j y_j) / (N sd)
    const Shape& s = forward.output.shape();
    const std::size_t count = s.plane();
    BasicTensor<T> dx(s);
    for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* y = forward.output.data() + nc * count;
        const T* g = grad_out.data() + nc * count;
        T* out = dx.data() + nc * count;
        double gsum = 0;
        double gy = 0;
        for (std::size_t i = 0; i < count; ++i) {
            gsum += g[i];
            gy += static_cast<double>(g[i]) * y[i];
        }
        const double sd = forward.stddev[nc];
        const double inv = 1.0 / (sd + kMvnEpsilon);
        const double gmean = gsum / static_cast<double>(count);
        const double coupling = sd > 0 ? gy / (static_cast<double>(count) * sd) : 0.0;
        for (std::size_t i = 0; i < count; ++i)
            out[i] = static_cast<T>((g[i] - gmean) * inv - y[i] * coupling);
    }
    return dx;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double ratio, bool train, Rng& rng)
{
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ContractError("dropout: ratio must be in [0, 1)");
    DropoutResult<T> r;
    if (!train || ratio == 0.0) {
        r.output = input;
        return r;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - ratio));
    r.output = BasicTensor<T>(input.shape());
    r.scale.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        r.scale[i] = rng.uniform() < ratio ? T(0) : keep_scale;
        r.output[i] = input[i] * r.scale[i];
    }
    return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const DropoutResult<T>& forward, const BasicTensor<T>& grad_out)
{
    if (forward.scale.empty())
        return grad_out;
    BasicTensor<T> dx(grad_out.shape());
    for (std::size_t i = 0; i < dx.size(); ++i)
        dx[i] = grad_out[i] * forward.scale[i];
    return dx;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    if (a.shape() != b.shape())
        throw ContractError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    BasicTensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + b[i];
    return out;
}

template <typename T>
BasicTensor<T> center_crop_to(const BasicTensor<T>& input, int target_h, int target_w)
{
    const Shape& s = input.shape();
    if (target_h < 1 || target_w < 1 || static_cast<std::size_t>(target_h) > s.h ||
        static_cast<std::size_t>(target_w) > s.w)
        throw ContractError("center_crop_to: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                            " does not fit input " + s.str());
    const std::size_t oy = (s.h - target_h) / 2;
    const std::size_t ox = (s.w - target_w) / 2;
    BasicTensor<T> out(Shape{s.n, s.c, static_cast<std::size_t>(target_h), static_cast<std::size_t>(target_w)});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (int y = 0; y < target_h; ++y) {
                const T* src = &input.at(n, c, oy + y, ox);
                std::copy(src, src + target_w, &out.at(n, c, y, 0));
            }
    return out;
}

template <typename T>
BasicTensor<T> center_crop_backward(const BasicTensor<T>& grad_out, const Shape& input_shape)
{
    const Shape& g = grad_out.shape();
    const std::size_t oy = (input_shape.h - g.h) / 2;
    const std::size_t ox = (input_shape.w - g.w) / 2;
    BasicTensor<T> dx(input_shape);
    for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t c = 0; c < g.c; ++c)
            for (std::size_t y = 0; y < g.h; ++y) {
                const T* src = &grad_out.at(n, c, y, 0);
                std::copy(src, src + g.w, &dx.at(n, c, oy + y, ox));
            }
    return dx;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits)
{
    const Shape& s = logits.shape();
    BasicTensor<T> out(s);
    const std::size_t hw = s.plane();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < s.c; ++c)
                mx = std::max(mx, logits.plane(n, c)[p]);
            T sum = 0;
            for (std::size_t c = 0; c < s.c; ++c) {
                const T e = std::exp(logits.plane(n, c)[p] - mx);
                out.plane(n, c)[p] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < s.c; ++c)
                out.plane(n, c)[p] /= sum;
        }
    return out;
}

template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const std::uint8_t> labels)
{
    const Shape& s = logits.shape();
    const std::size_t hw = s.plane();
    if (labels.size() != s.n * hw)
        throw ContractError("softmax_xent: label count does not match logits " + s.str());
    XentResult<T> r;
    r.grad = softmax(logits);
    const double inv_count = 1.0 / static_cast<double>(s.n * hw);
    double total = 0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t label = labels[n * hw + p];
            if (label >= s.c)
                throw ContractError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                                    std::to_string(s.c) + " classes");
            // log-sum-exp form keeps the loss finite when the true-class probability underflows.
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < s.c; ++c)
                mx = std::max(mx, logits.plane(n, c)[p]);
            double lse = 0;
            for (std::size_t c = 0; c < s.c; ++c)
                lse += std::exp(static_cast<double>(logits.plane(n, c)[p] - mx));
            total += std::log(lse) - static_cast<double>(logits.plane(n, label)[p] - mx);
            r.grad.plane(n, label)[p] -= T(1);
        }
    for (std::size_t i = 0; i < r.grad.size(); ++i)
        r.grad[i] = static_cast<T>(r.grad[i] * inv_count);
    r.loss = static_cast<T>(total * inv_count);
    return r;
}

#define VFCN_INSTANTIATE(T)                                                                                        \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>, int, int);   \
    template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                          int, bool);                                                              \
    template BasicTensor<T> transposed_conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>,    \
                                              int);                                                                \
    template ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                                     const BasicTensor<T>&, int, bool);                            \
    template PoolResult<T> maxpool2d(const BasicTensor<T>&, int, int);                                             \
    template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&, std::span<const std::uint32_t>,              \
                                               const Shape&);                                                      \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                           \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template MvnResult<T> mvn(const BasicTensor<T>&);                                                              \
    template BasicTensor<T> mvn_backward(const MvnResult<T>&, const BasicTensor<T>&);                              \
    template DropoutResult<T> dropout(const BasicTensor<T>&, double, bool, Rng&);                                  \
    template BasicTensor<T> dropout_backward(const DropoutResult<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
    template BasicTensor<T> center_crop_to(const BasicTensor<T>&, int, int);                                       \
    template BasicTensor<T> center_crop_backward(const BasicTensor<T>&, const Shape&);                             \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                                        \
    template XentResult<T> softmax_xent(const BasicTensor<T>&, std::span<const std::uint8_t>);

VFCN_INSTANTIATE(float)
VFCN_INSTANTIATE(double)

#undef VFCN_INSTANTIATE

}  // namespace vfcn::ops
