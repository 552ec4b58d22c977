#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vfcn/ops.hpp"
#include "vfcn/tensor.hpp"

namespace vfcn {

/// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Records one forward pass and replays it in reverse. Nodes are appended in
/// execution order, so the recording is already topologically sorted and
/// acyclic. Each node's backward closure captures exactly the context its
/// forward kernel returned.
template <typename T>
class Tape {
public:
    using TensorT = BasicTensor<T>;

    /// Leaf that never receives a gradient (e.g. the input image).
    Var constant(TensorT value) { return push("constant", std::move(value), {}, false, nullptr); }

    /// Leaf whose gradient is accumulated by backward().
    Var parameter(TensorT value) { return push("parameter", std::move(value), {}, true, nullptr); }

    Var conv2d(Var x, Var w, Var b, int stride, int pad)
    {
        TensorT out = ops::conv2d<T>(value(x), value(w), value(b).values(), stride, pad);
        return push("conv2d", std::move(out), {x, w, b}, any_grad({x, w, b}),
                    [x, w, b, stride, pad](Tape& t, std::size_t self) {
                        const bool want_dx = t.nodes_[x.id].requires_grad;
                        auto g = ops::conv2d_backward<T>(t.value(x), t.value(w), t.nodes_[self].grad, stride, pad,
                                                         want_dx);
                        if (want_dx)
                            t.accumulate(x, std::move(g.input));
                        t.accumulate(w, std::move(g.weights));
                        t.accumulate(b, TensorT(t.value(b).shape(), std::move(g.bias)));
                    });
    }

    Var transposed_conv2d(Var x, Var w, Var b, int stride)
    {
        TensorT out = ops::transposed_conv2d<T>(value(x), value(w), value(b).values(), stride);
        return push("transposed_conv2d", std::move(out), {x, w, b}, any_grad({x, w, b}),
                    [x, w, b, stride](Tape& t, std::size_t self) {
                        const bool want_dx = t.nodes_[x.id].requires_grad;
                        auto g = ops::transposed_conv2d_backward<T>(t.value(x), t.value(w), t.nodes_[self].grad,
                                                                    stride, want_dx);
                        if (want_dx)
                            t.accumulate(x, std::move(g.input));
                        t.accumulate(w, std::move(g.weights));
                        t.accumulate(b, TensorT(t.value(b).shape(), std::move(g.bias)));
                    });
    }

    Var maxpool2d(Var x, int kernel, int stride)
    {
        auto r = ops::maxpool2d<T>(value(x), kernel, stride);
        return push("maxpool2d", std::move(r.output), {x}, any_grad({x}),
                    [x, argmax = std::move(r.argmax)](Tape& t, std::size_t self) {
                        t.accumulate(x, ops::maxpool2d_backward<T>(t.nodes_[self].grad, argmax, t.value(x).shape()));
                    });
    }

    Var relu(Var x)
    {
        return push("relu", ops::relu<T>(value(x)), {x}, any_grad({x}), [x](Tape& t, std::size_t self) {
            t.accumulate(x, ops::relu_backward<T>(t.value(x), t.nodes_[self].grad));
        });
    }

    Var mvn(Var x)
    {
        auto r = ops::mvn<T>(value(x));
        TensorT out = r.output;
        return push("mvn", std::move(out), {x}, any_grad({x}),
                    [x, saved = std::move(r)](Tape& t, std::size_t self) {
                        t.accumulate(x, ops::mvn_backward<T>(saved, t.nodes_[self].grad));
                    });
    }

    Var dropout(Var x, double ratio, bool train, Rng& rng)
    {
        auto r = ops::dropout<T>(value(x), ratio, train, rng);
        TensorT out = r.output;
        r.output = TensorT();  // backward only needs the mask
        return push("dropout", std::move(out), {x}, any_grad({x}),
                    [x, saved = std::move(r)](Tape& t, std::size_t self) {
                        t.accumulate(x, ops::dropout_backward<T>(saved, t.nodes_[self].grad));
                    });
    }

    Var add(Var a, Var b)
    {
        return push("add", ops::add<T>(value(a), value(b)), {a, b}, any_grad({a, b}),
                    [a, b](Tape& t, std::size_t self) {
                        t.accumulate(a, TensorT(t.nodes_[self].grad));
                        t.accumulate(b, TensorT(t.nodes_[self].grad));
                    });
    }

    Var center_crop_to(Var x, int target_h, int target_w)
    {
        return push("center_crop", ops::center_crop_to<T>(value(x), target_h, target_w), {x}, any_grad({x}),
                    [x](Tape& t, std::size_t self) {
                        t.accumulate(x, ops::center_crop_backward<T>(t.nodes_[self].grad, t.value(x).shape()));
                    });
    }

    /// Scalar loss node holding the mean pixelwise cross-entropy.
    Var softmax_xent(Var logits, std::span<const std::uint8_t> labels)
    {
        auto r = ops::softmax_xent<T>(value(logits), labels);
        TensorT loss(Shape{1, 1, 1, 1}, r.loss);
        return push("softmax_xent", std::move(loss), {logits}, any_grad({logits}),
                    [logits, grad = std::move(r.grad)](Tape& t, std::size_t self) {
                        TensorT g = grad;
                        const T upstream = t.nodes_[self].grad[0];
                        if (upstream != T(1))
                            for (auto& v : g.values())
                                v *= upstream;
                        t.accumulate(logits, std::move(g));
                    });
    }

    const TensorT& value(Var v) const { return node(v).value; }

    /// Gradient accumulated by backward(); zeros if nothing reached the node.
    const TensorT& grad(Var v)
    {
        Node& n = node(v);
        if (n.grad.empty())
            n.grad = TensorT(n.value.shape());
        return n.grad;
    }

    const std::string& op_name(Var v) const { return node(v).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 for a scalar root and runs every recorded
    /// backward closure in reverse order.
    void backward(Var root)
    {
        Node& r = node(root);
        if (r.value.size() != 1)
            throw ContractError("backward: root must be a scalar");
        r.grad = TensorT(r.value.shape(), T(1));
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.backward || n.grad.empty())
                continue;
            n.backward(*this, i);
        }
    }

private:
    using Backward = std::function<void(Tape&, std::size_t)>;

    struct Node {
        std::string op;
        TensorT value;
        TensorT grad;
        std::vector<Var> inputs;
        bool requires_grad = false;
        Backward backward;
    };

    Node& node(Var v)
    {
        if (v.id >= nodes_.size())
            throw ContractError("tape: invalid variable handle");
        return nodes_[v.id];
    }
    const Node& node(Var v) const
    {
        if (v.id >= nodes_.size())
            throw ContractError("tape: invalid variable handle");
        return nodes_[v.id];
    }

    bool any_grad(std::initializer_list<Var> vars) const
    {
        for (Var v : vars)
            if (node(v).requires_grad)
                return true;
        return false;
    }

    Var push(std::string op, TensorT value, std::vector<Var> inputs, bool requires_grad, Backward backward)
    {
        nodes_.push_back(Node{std::move(op), std::move(value), TensorT(), std::move(inputs), requires_grad,
                              std::move(backward)});
        return Var{nodes_.size() - 1};
    }

    void accumulate(Var v, TensorT g)
    {
        Node& n = nodes_[v.id];
        if (!n.requires_grad)
            return;
        if (n.grad.empty()) {
            n.grad = std::move(g);
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i)
            n.grad[i] += g[i];
    }

    std::vector<Node> nodes_;
};

}  // namespace vfcn
