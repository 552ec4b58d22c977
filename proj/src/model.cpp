#include "vfcn/model.hpp"

#include <map>

namespace vfcn {

template <typename T>
NetworkGraph<T> build_graph(const NetworkSpec& spec, const BasicWeightStore<T>& store, BasicTensor<T> input,
                            bool train, Rng& rng, bool param_grads)
{
    validate(spec);
    check_store_matches(spec, store);
    if (input.shape().c != static_cast<std::size_t>(spec.in_channels))
        throw ContractError("network input has " + std::to_string(input.shape().c) + " channels, spec expects " +
                            std::to_string(spec.in_channels));
    input.require_finite("network input");

    NetworkGraph<T> g;
    Tape<T>& t = g.tape;
    g.input = t.constant(std::move(input));
    std::map<std::string, Var, std::less<>> vars{{std::string(kInputName), g.input}};
    Var last = g.input;
    bool have_logits = false;

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const auto inputs = spec.inputs_of(i);
        const Var x = vars.at(inputs.front());
        Var out;
        switch (l.kind) {
        case LayerKind::Conv:
        case LayerKind::ScoreConv:
        case LayerKind::Upsample: {
            const auto& blobs = store.find(l.name)->blobs;
            const Var w = param_grads ? t.parameter(blobs[0]) : t.constant(blobs[0]);
            const Var b = param_grads ? t.parameter(blobs[1]) : t.constant(blobs[1]);
            g.params.push_back({l.name, w, b});
            out = l.kind == LayerKind::Upsample ? t.transposed_conv2d(x, w, b, l.stride)
                                                : t.conv2d(x, w, b, l.stride, l.pad);
            break;
        }
        case LayerKind::Pool:
            out = t.maxpool2d(x, l.kernel, l.stride);
            break;
        case LayerKind::Relu:
            out = t.relu(x);
            break;
        case LayerKind::Mvn:
            out = t.mvn(x);
            break;
        case LayerKind::Dropout:
            out = t.dropout(x, l.dropout_ratio, train, rng);
            break;
        case LayerKind::Fuse:
            out = t.add(x, vars.at(inputs[1]));
            break;
        case LayerKind::Crop: {
            const Shape& target = t.value(vars.at(l.like)).shape();
            out = t.center_crop_to(x, static_cast<int>(target.h), static_cast<int>(target.w));
            break;
        }
        case LayerKind::Softmax:
            // The head is applied outside the tape; training consumes logits.
            g.logits = x;
            have_logits = true;
            out = x;
            break;
        }
        vars[l.name] = out;
        last = out;
    }
    if (!have_logits)
        g.logits = last;
    return g;
}

template <typename T>
BasicTensor<T> forward(const NetworkSpec& spec, const BasicWeightStore<T>& store, const BasicTensor<T>& image)
{
    const Shape& s = image.shape();
    if (s.h < static_cast<std::size_t>(kMinInputSize) || s.w < static_cast<std::size_t>(kMinInputSize))
        throw ContractError("forward: input " + s.str() + " below minimum side " + std::to_string(kMinInputSize));
    Rng unused(0);
    auto g = build_graph(spec, store, image, false, unused, false);
    BasicTensor<T> probs = ops::softmax(g.tape.value(g.logits));
    probs.require_finite("network output");
    return probs;
}

template <typename T>
LabelMask argmax_labels(const BasicTensor<T>& scores)
{
    const Shape& s = scores.shape();
    LabelMask out(static_cast<int>(s.h), static_cast<int>(s.w));
    for (std::size_t p = 0; p < s.plane(); ++p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < s.c; ++c)
            if (scores.plane(0, c)[p] > scores.plane(0, best)[p])
                best = c;
        out.data[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

LabelMask predict_labels(const NetworkSpec& spec, const WeightStore& store, const Tensor& image)
{
    return argmax_labels(forward(spec, store, image));
}

template NetworkGraph<float> build_graph(const NetworkSpec&, const BasicWeightStore<float>&, BasicTensor<float>,
                                         bool, Rng&, bool);
template NetworkGraph<double> build_graph(const NetworkSpec&, const BasicWeightStore<double>&, BasicTensor<double>,
                                          bool, Rng&, bool);
template BasicTensor<float> forward(const NetworkSpec&, const BasicWeightStore<float>&, const BasicTensor<float>&);
template BasicTensor<double> forward(const NetworkSpec&, const BasicWeightStore<double>&,
                                     const BasicTensor<double>&);
template LabelMask argmax_labels(const BasicTensor<float>&);
template LabelMask argmax_labels(const BasicTensor<double>&);

}  // namespace vfcn
