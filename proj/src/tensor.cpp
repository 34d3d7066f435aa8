#include "mssdepth/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mssdepth/error.hpp"

namespace mss {

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::argument: return "argument error";
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::state: return "state error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::ordering: return "ordering error";
    case ErrorKind::bounds: return "bounds error";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::metric: return "metric error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::numerical: return "numerical error";
    }
    return "error";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) fail(ErrorKind::dimension, "tensor shape must have at least one axis");
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == 0) {
            fail(ErrorKind::dimension, "axis " + std::to_string(i) + " of shape " + shape_str(shape) + " is zero");
        }
    }
}

} // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    node_->data.assign(shape_numel(shape), 0.0);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : node_(std::make_shared<Node>()) {
    check_shape(shape);
    if (shape_numel(shape) != data.size()) {
        fail(ErrorKind::dimension, "shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                                       " values, got " + std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor::Node& Tensor::node() const {
    if (!node_) fail(ErrorKind::state, "use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        fail(ErrorKind::argument, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }
std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
    if (numel() != 1) fail(ErrorKind::argument, "item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) {
        fail(ErrorKind::argument, "index rank " + std::to_string(index.size()) + " for shape " + shape_str(s));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) {
            fail(ErrorKind::bounds, "index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
        }
        flat = flat * s[axis] + i;
        ++axis;
    }
    return flat;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return node().data[flat_index(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return node().data[flat_index(index)]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node().requires_grad = flag; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) fail(ErrorKind::state, "tensor of shape " + shape_str(shape()) + " has no gradient");
    return node_->grad;
}

std::span<double> Tensor::grad_buffer() const {
    auto& n = node();
    if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
    return n.grad;
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t(shape(), node().data, requires_grad());
    return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), node().data, false); }

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t && t->requires_grad(); });
}

void Tape::record(std::vector<Tensor> inputs, std::vector<Tensor> outputs, BackwardFn backward) {
    for (auto& out : outputs) out.set_requires_grad(true);
    records_.push_back(Record{std::move(inputs), std::move(outputs), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        fail(ErrorKind::argument, "backward needs a scalar loss, got shape " +
                                      (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (records_.empty()) return;

    bool produced_here = false;
    for (auto& rec : records_) {
        for (auto& out : rec.outputs) {
            out.zero_grad();
            produced_here = produced_here || out.same_storage(loss);
        }
    }
    if (!produced_here) fail(ErrorKind::argument, "loss was not produced on this tape");

    Tensor seed = loss;
    seed.grad_buffer()[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        bool live = std::any_of(it->outputs.begin(), it->outputs.end(), [](const Tensor& t) { return t.has_grad(); });
        if (live) it->backward();
    }
}

} // namespace mss
