#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "reldetr/tensor.hpp"

namespace reldetr::geom {

/// Axis-aligned box in center-size form [x, y, w, h] with w, h > 0.
class Box {
public:
    /// Throws InputError for non-finite fields or non-positive size.
    Box(double x, double y, double w, double h);

    static std::optional<Box> try_make(double x, double y, double w, double h);
    /// COCO convention: [x_min, y_min, width, height].
    static Box from_corner_size(double x_min, double y_min, double w, double h);

    double x() const { return x_; }
    double y() const { return y_; }
    double w() const { return w_; }
    double h() const { return h_; }

    double x_min() const { return x_ - 0.5 * w_; }
    double y_min() const { return y_ - 0.5 * h_; }
    double x_max() const { return x_ + 0.5 * w_; }
    double y_max() const { return y_ + 0.5 * h_; }
    double area() const { return w_ * h_; }

    std::array<double, 4> as_array() const { return {x_, y_, w_, h_}; }

    friend bool operator==(const Box&, const Box&) = default;

private:
    double x_, y_, w_, h_;
};

/// e(a, b) = [ln(|xa-xb|/wa + 1), ln(|ya-yb|/ha + 1), ln(wa/wb), ln(ha/hb)].
///
/// Offsets are normalized by the first box only, so channels 0 and 1 are not
/// symmetric in (a, b); channels 2 and 3 are antisymmetric.
std::array<double, 4> relative_geometry(const Box& a, const Box& b);

/// Pairwise relative geometry, entry (i, j) = relative_geometry(a[i], b[j]).
struct RelationFeatures {
    nk::Tensor values;  // |a| x |b| x 4

    std::size_t rows() const { return values.dim(0); }
    std::size_t cols() const { return values.dim(1); }
};

/// Throws InputError when either set is empty.
RelationFeatures relation_matrix(std::span<const Box> a, std::span<const Box> b);

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
/// Generalized IoU, in (-1, 1].
double giou(const Box& a, const Box& b);

/// Interprets each row of an N x 4 tensor as a box.
std::vector<Box> boxes_from_tensor(const nk::Tensor& t);
nk::Tensor boxes_to_tensor(std::span<const Box> boxes);

}  // namespace reldetr::geom
