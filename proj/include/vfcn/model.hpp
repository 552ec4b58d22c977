#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vfcn/autodiff.hpp"
#include "vfcn/network_spec.hpp"
#include "vfcn/rng.hpp"
#include "vfcn/weights.hpp"

namespace vfcn {

/// Smallest input side accepted by forward().
inline constexpr int kMinInputSize = 32;

template <typename T>
struct NetworkGraph {
    struct ParamVars {
        std::string layer;
        Var weights;
        Var bias;
    };

    Tape<T> tape;
    Var input;
    Var logits;  ///< input of the softmax head (or the last layer when there is none)
    std::vector<ParamVars> params;
};

/// Records one pass of `spec` over `input` on a fresh tape. In train mode
/// dropout draws masks from `rng`; with `param_grads` the weights are
/// recorded as differentiable leaves.
template <typename T>
NetworkGraph<T> build_graph(const NetworkSpec& spec, const BasicWeightStore<T>& store, BasicTensor<T> input,
                            bool train, Rng& rng, bool param_grads);

/// Per-pixel class probabilities (N x K x H x W) in eval mode.
template <typename T>
BasicTensor<T> forward(const NetworkSpec& spec, const BasicWeightStore<T>& store, const BasicTensor<T>& image);

/// Per-pixel argmax labels for a single 1 x C x H x W image.
LabelMask predict_labels(const NetworkSpec& spec, const WeightStore& store, const Tensor& image);

/// Argmax over channels of sample 0.
template <typename T>
LabelMask argmax_labels(const BasicTensor<T>& scores);

}  // namespace vfcn
