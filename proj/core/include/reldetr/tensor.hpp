#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace reldetr::nk {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor that records the operations producing it.
///
/// Copies share the underlying node, like a handle. Values are fixed once an
/// op has produced them; leaves (parameters) may be overwritten in place by
/// optimizers and the gradient checker.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    /// Writable view; only legal on leaves (no recorded parents).
    std::span<double> mutable_values();

    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t i, std::size_t j) const;
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; zeros when nothing has been accumulated.
    std::vector<double> grad() const;
    void zero_grad();

    /// Reverse-mode sweep from this scalar.
    void backward() const;

    /// Same values, cut from the graph.
    Tensor detach() const;

    bool is_leaf() const { return node_->parents.empty(); }
    bool all_finite() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;

    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                              std::function<void(detail::Node&)>);
};

/// Builds an op output. Only inputs that require gradients are kept as
/// parents; if none does, the result is a constant and `backward` is dropped.
/// `backward` receives the output node whose `grad` is populated.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

}  // namespace reldetr::nk
