#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mss {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor with an optional gradient buffer. Copies share
// storage (handle semantics); use clone() for an independent copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), requires_grad);
    }
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Mutation is reserved for initialisation, optimiser updates and tests;
    // tensors produced by ops are treated as immutable.
    std::span<double> mutable_data();

    double item() const;
    double at(std::initializer_list<std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index);

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<const double> grad() const;
    // Allocates a zeroed gradient buffer on first use.
    std::span<double> grad_buffer() const;
    void zero_grad();

    Tensor clone() const;
    // Same values, fresh storage, no gradient tracking.
    Tensor detach() const;

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }

private:
    struct Node {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;

    Node& node() const;
    std::size_t flat_index(std::initializer_list<std::size_t> index) const;
};

// Ordered record of differentiable operations. Each record owns the closure
// that propagates its outputs' gradients to its inputs.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    // True when an op on these inputs has to be recorded.
    bool needs_grad(std::initializer_list<const Tensor*> inputs) const;

    void record(std::vector<Tensor> inputs, std::vector<Tensor> outputs, BackwardFn backward);

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    void clear() { records_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the records in reverse. Gradients
    // of op outputs are rebuilt from scratch on each call; leaf gradients
    // accumulate across calls until zeroed.
    void backward(const Tensor& loss);

private:
    struct Record {
        std::vector<Tensor> inputs;
        std::vector<Tensor> outputs;
        BackwardFn backward;
    };
    std::vector<Record> records_;
    bool recording_;
};

inline void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

} // namespace mss
