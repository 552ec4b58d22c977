#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vfcn/rng.hpp"
#include "vfcn/tensor.hpp"

// Forward and backward kernels for every layer type in the network. All
// functions are pure: whatever backward needs is returned by forward
// explicitly. Convolutions use the cross-correlation convention; conv weights
// are [outC, inC, kh, kw], transposed-conv weights are [inC, outC, kh, kw].

namespace vfcn::ops {

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;  ///< empty when not requested
    BasicTensor<T> weights;
    std::vector<T> bias;
};

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, std::span<const T> bias,
                      int stride, int pad);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_out, int stride, int pad, bool want_input_grad = true);

/// Fractional-stride convolution; the adjoint of conv2d with pad 0.
/// Output spatial size is (h-1)*stride + kh.
template <typename T>
BasicTensor<T> transposed_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                 std::span<const T> bias, int stride);

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& grad_out, int stride, bool want_input_grad = true);

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::uint32_t> argmax;  ///< flat input offset per output element
};

/// Ceil-mode output length of a pooling window sweep.
int pooled_size(int in, int kernel, int stride);

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel = 3, int stride = 2);

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                                  const Shape& input_shape);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

inline constexpr double kMvnEpsilon = 1e-6;

template <typename T>
struct MvnResult {
    BasicTensor<T> output;
    std::vector<T> stddev;  ///< population std per (sample, channel), before epsilon
};

template <typename T>
MvnResult<T> mvn(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> mvn_backward(const MvnResult<T>& forward, const BasicTensor<T>& grad_out);

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    std::vector<T> scale;  ///< 0 or 1/(1-ratio) per element; empty in eval mode
};

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double ratio, bool train, Rng& rng);

template <typename T>
BasicTensor<T> dropout_backward(const DropoutResult<T>& forward, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Crop to (target_h, target_w) at offset (floor((h-th)/2), floor((w-tw)/2)).
template <typename T>
BasicTensor<T> center_crop_to(const BasicTensor<T>& input, int target_h, int target_w);

/// Zero-pad back into `input_shape`; the adjoint of center_crop_to.
template <typename T>
BasicTensor<T> center_crop_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct XentResult {
    T loss = 0;
    BasicTensor<T> grad;
};

/// Mean over all n*h*w pixels of -log softmax(logits)[label].
template <typename T>
XentResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const std::uint8_t> labels);

}  // namespace vfcn::ops
