#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reldetr/tensor.hpp"

namespace reldetr::nk {

// Elementwise binary ops; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);

/// max(floor, a). The gradient passes only where a > floor.
Tensor max_with(const Tensor& a, double floor);

/// [n x k] + [k], the vector added to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Softmax over the last axis, stabilized by max subtraction.
/// Throws NumericError on NaN input.
Tensor softmax_rows(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

/// Columns [start, start + count) of a matrix.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
/// Concatenates matrices with equal row counts along columns.
Tensor concat_cols(std::span<const Tensor> parts);
/// Picks rows of a matrix, in the given order (repeats allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Column j of a matrix as a rank-1 tensor.
Tensor column(const Tensor& a, std::size_t j);
/// Slice k of the last axis of a rank-3 tensor.
Tensor select_last(const Tensor& a, std::size_t k);

/// Sum over entries of the sigmoid focal loss with soft targets t in [0, 1]:
///   -alpha * t * |t-p|^gamma * log(p) - (1-alpha) * (1-t) * |t-p|^gamma * log(1-p)
/// with p = sigmoid(logits). Targets are constants.
Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets, double alpha,
                          double gamma);

/// Records stop-gradient points of a forward pass so that a later pass can
/// replay the exact same detached values.
///
/// In record mode `cut` behaves like `detach` and keeps a copy. In replay mode
/// it returns the recorded copy instead of the live value. This lets the
/// finite-difference checker evaluate the function whose gradient the
/// backward sweep actually computes.
class DetachTape {
public:
    enum class Mode { record, replay };

    Tensor cut(const Tensor& t);
    void start_replay();
    void start_record();
    Mode mode() const { return mode_; }
    std::size_t size() const { return recorded_.size(); }

private:
    Mode mode_ = Mode::record;
    std::size_t cursor_ = 0;
    std::vector<Tensor> recorded_;
};

/// `tape ? tape->cut(t) : t.detach()`.
Tensor cut(DetachTape* tape, const Tensor& t);

}  // namespace reldetr::nk
