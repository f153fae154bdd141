#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "pan/tensor.hpp"

namespace pan {

/// Reverse-mode tape. Ops append nodes in execution order; backward() walks
/// them in reverse and lets each node scatter into its inputs' grad buffers.
/// Single-threaded by contract.
template <typename T>
class TapeT {
  public:
    using Ptr = TensorPtrT<T>;

    /// Called by every op after computing its output. Records the node only
    /// when recording is on and some input carries gradients; marks the
    /// output as gradient-bearing in that case.
    void track(const char* op, std::vector<Ptr> inputs, const Ptr& output,
               std::function<void()> backward) {
        output->requires_grad = false;
        if (!recording_) return;
        bool any = false;
        for (const auto& in : inputs)
            if (in && in->requires_grad) any = true;
        if (!any) return;
        output->requires_grad = true;
        nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
    }

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    std::size_t size() const { return nodes_.size(); }

    /// Populates dLoss/dLeaf for every gradient-bearing leaf. Intermediate
    /// grads are reset here; leaf grads accumulate across calls (callers zero
    /// them between optimization steps).
    void backward(const Ptr& loss) {
        if (nodes_.empty()) throw ShapeError("backward: tape is empty");
        if (consumed_) throw ShapeError("backward: tape already consumed; re-record the forward pass");
        Shape4 scalar{1, 1, 1, 1};
        if (!(loss->shape == scalar))
            throw ShapeError("backward: loss must be scalar (1,1,1,1), got " + to_string(loss->shape));

        for (auto& node : nodes_) node.output->zero_grad();
        for (auto& node : nodes_)
            for (auto& in : node.inputs)
                if (in && in->requires_grad) in->ensure_grad();

        loss->ensure_grad();
        loss->grad[0] = T(1);

        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
        consumed_ = true;
    }

    void clear() {
        nodes_.clear();
        consumed_ = false;
    }

  private:
    struct Node {
        const char* op;
        std::vector<Ptr> inputs;
        Ptr output;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

using Tape = TapeT<float>;

}  // namespace pan
