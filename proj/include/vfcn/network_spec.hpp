#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vfcn/tensor.hpp"

namespace vfcn {

enum class LayerKind { Conv, Pool, Relu, Mvn, Dropout, ScoreConv, Upsample, Fuse, Crop, Softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// Name of the implicit network input that layers may reference.
inline constexpr std::string_view kInputName = "data";

/// Output-channel placeholder bound to the class count K.
inline constexpr int kClassChannels = -1;

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Relu;
    /// Explicit inputs; empty means "the previous layer" (or the network input).
    std::vector<std::string> inputs;
    int out_channels = 0;  ///< conv, score-conv, upsample; kClassChannels means K
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    double dropout_ratio = 0.5;
    std::string like;  ///< crop: layer whose spatial size is the target

    bool has_params() const
    {
        return kind == LayerKind::Conv || kind == LayerKind::ScoreConv || kind == LayerKind::Upsample;
    }
    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    int num_classes = 2;
    int in_channels = 1;

    const LayerSpec* find(std::string_view name) const;
    std::size_t count(LayerKind kind) const;
    /// Resolved input names of layer `index` (previous layer or kInputName when implicit).
    std::vector<std::string> inputs_of(std::size_t index) const;
    int resolved_out_channels(const LayerSpec& layer) const
    {
        return layer.out_channels == kClassChannels ? num_classes : layer.out_channels;
    }
    bool operator==(const NetworkSpec&) const = default;
};

/// The default skip-architecture FCN: 12 feature convs (3x3, pad 1, each
/// followed by ReLU and MVN) in five blocks with three 3/2 max pools, dropout
/// after the two block-5 convs, 1x1 score convs on block 5, pool2 and pool1,
/// three x2 learnable upsamplers with crop+fuse, and a softmax head.
NetworkSpec default_spec(int num_classes = 2, int in_channels = 1);

/// Checks name uniqueness, input resolution and per-kind attributes.
void validate(const NetworkSpec& spec);

/// Line-oriented text form: `name kind key=value ...`, `#` comments.
NetworkSpec parse_spec(std::string_view text, int num_classes, int in_channels);
std::string format_spec(const NetworkSpec& spec);
NetworkSpec load_spec_file(const std::filesystem::path& path, int num_classes, int in_channels);

struct ParamShapes {
    std::string layer;
    Shape weights;
    Shape bias;  ///< (outC, 1, 1, 1)
};

/// Parameter blob shapes in layer order, with input channels inferred.
std::vector<ParamShapes> param_shapes(const NetworkSpec& spec);

/// Sum of weight and bias element counts.
std::size_t count_params(const NetworkSpec& spec);

struct LayerGeometry {
    int channels = 0;
    int height = 0;
    int width = 0;
};

/// Output geometry of every layer for an input of size height x width.
/// Throws ContractError when some layer cannot be applied at that size.
std::vector<LayerGeometry> infer_geometry(const NetworkSpec& spec, int height, int width);

}  // namespace vfcn
