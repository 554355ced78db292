#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adaptkit/errors.hpp"

namespace adaptkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Shared storage behind Tensor handles. All values are row-major 64-bit
// floats. The grad buffer is empty until a backward pass deposits into it;
// once allocated it always matches data in length. Accumulation is
// additive: repeated backward passes without zero_grad() sum their
// contributions.
struct TensorData {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    std::size_t size() const { return data.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() { grad.clear(); }
};

// Value-semantics handle over shared TensorData. Copying a Tensor aliases
// the same storage; clone() makes a deep copy.
class Tensor {
   public:
    Tensor() : impl_(std::make_shared<TensorData>()) {}

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : impl_(std::make_shared<TensorData>()) {
        if (shape_numel(shape) != values.size()) {
            throw ContractError("tensor: shape " + shape_str(shape) + " does not cover " +
                                std::to_string(values.size()) + " values");
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> v(shape_numel(shape), value);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    const Shape& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->data.size(); }
    std::size_t rows() const { return impl_->shape.empty() ? 0 : impl_->shape[0]; }
    std::size_t cols() const { return impl_->shape.size() < 2 ? 1 : impl_->shape[1]; }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const { return impl_->grad; }
    std::vector<double>& grad_buffer() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() { impl_->zero_grad(); }

    // Scalar convenience accessor; contract-checked.
    double value() const {
        if (size() != 1) {
            throw ContractError("tensor: value() on non-scalar shape " + shape_str(shape()));
        }
        return impl_->data[0];
    }

    double& at(std::size_t i) { return impl_->data[i]; }
    double at(std::size_t i) const { return impl_->data[i]; }

    Tensor clone() const {
        Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
        return t;
    }

    const std::shared_ptr<TensorData>& impl() const { return impl_; }

   private:
    std::shared_ptr<TensorData> impl_;
};

// One executed operation on the tape: the tensors it read, the tensor it
// produced, and a closure that routes the output gradient to the inputs.
struct GraphNode {
    const char* op = "";
    std::vector<std::shared_ptr<TensorData>> inputs;
    std::shared_ptr<TensorData> output;
    std::function<void()> backward;
};

// Execution-ordered record of operations (a tape). Recording order is a
// topological order by construction: an operation's inputs exist before it
// runs. backward() releases the tape, so a Graph covers exactly one
// forward/backward round; leaf gradients survive in their tensors.
class Graph {
   public:
    void record(GraphNode node) { nodes_.push_back(std::move(node)); }

    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }

    // Reverse-mode sweep from a scalar loss. Each node is visited exactly
    // once, in reverse execution order; nodes whose output never received
    // a gradient are skipped (they do not influence the loss).
    void backward(const Tensor& loss) {
        if (loss.size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
        }
        loss.impl()->ensure_grad();
        loss.impl()->grad[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->output->grad.empty()) continue;
            it->backward();
        }
        clear();
    }

   private:
    std::vector<GraphNode> nodes_;
};

namespace detail {
inline Graph*& active_graph_slot() {
    thread_local Graph* g = nullptr;
    return g;
}
}  // namespace detail

// RAII activation of a tape. While a scope is alive, ops whose inputs
// require grad record themselves onto the scoped graph; without a scope
// ops only compute values (evaluation mode). Scopes do not nest.
class GraphScope {
   public:
    explicit GraphScope(Graph& graph) {
        if (detail::active_graph_slot() != nullptr) {
            throw ContractError("graph scope: a recording scope is already active");
        }
        detail::active_graph_slot() = &graph;
    }
    ~GraphScope() { detail::active_graph_slot() = nullptr; }

    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

    static Graph* active() { return detail::active_graph_slot(); }
};

// Backward through the active scope's tape.
inline void backward(const Tensor& loss) {
    Graph* g = GraphScope::active();
    if (g == nullptr) {
        throw ContractError("backward: no recording scope is active");
    }
    g->backward(loss);
}

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts) {
        if (t->requires_grad()) return true;
    }
    return false;
}

// Accumulate `delta` into `dst`'s grad if dst participates in
// differentiation. Frozen tensors (requires_grad == false) are never
// touched, which keeps them bit-identical across backward passes.
inline void accumulate_grad(const std::shared_ptr<TensorData>& dst,
                            const std::vector<double>& delta) {
    if (!dst->requires_grad) return;
    dst->ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) dst->grad[i] += delta[i];
}

}  // namespace detail

}  // namespace adaptkit
