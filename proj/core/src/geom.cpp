#include "reldetr/geom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "reldetr/errors.hpp"

namespace reldetr::geom {

namespace {

bool valid(double x, double y, double w, double h) {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
           w > 0.0 && h > 0.0;
}

}  // namespace

Box::Box(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    if (!valid(x, y, w, h)) {
        throw InputError("invalid box [" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                         std::to_string(w) + ", " + std::to_string(h) + "]");
    }
}

std::optional<Box> Box::try_make(double x, double y, double w, double h) {
    if (!valid(x, y, w, h)) return std::nullopt;
    return Box(x, y, w, h);
}

Box Box::from_corner_size(double x_min, double y_min, double w, double h) {
    return Box(x_min + 0.5 * w, y_min + 0.5 * h, w, h);
}

std::array<double, 4> relative_geometry(const Box& a, const Box& b) {
    // Each term is a single correctly rounded ratio, which keeps the result
    // bit-identical under transforms that are exact in floating point.
    return {std::log(std::abs(a.x() - b.x()) / a.w() + 1.0),
            std::log(std::abs(a.y() - b.y()) / a.h() + 1.0),
            std::log(a.w() / b.w()),
            std::log(a.h() / b.h())};
}

RelationFeatures relation_matrix(std::span<const Box> a, std::span<const Box> b) {
    if (a.empty() || b.empty()) {
        throw InputError("relation_matrix: empty box set (" + std::to_string(a.size()) + " x " +
                         std::to_string(b.size()) + ")");
    }
    std::vector<double> values;
    values.reserve(a.size() * b.size() * 4);
    for (const auto& bi : a) {
        for (const auto& bj : b) {
            auto e = relative_geometry(bi, bj);
            values.insert(values.end(), e.begin(), e.end());
        }
    }
    return {nk::Tensor(nk::Shape{a.size(), b.size(), 4}, std::move(values))};
}

double intersection_area(const Box& a, const Box& b) {
    const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    return std::max(iw, 0.0) * std::max(ih, 0.0);
}

double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    return inter / (a.area() + b.area() - inter);
}

double giou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    const double ew = std::max(a.x_max(), b.x_max()) - std::min(a.x_min(), b.x_min());
    const double eh = std::max(a.y_max(), b.y_max()) - std::min(a.y_min(), b.y_min());
    const double enclosing = ew * eh;
    return inter / uni - (enclosing - uni) / enclosing;
}

std::vector<Box> boxes_from_tensor(const nk::Tensor& t) {
    if (t.rank() != 2 || t.dim(1) != 4) {
        throw DimensionError("boxes_from_tensor: expected N x 4, got " + nk::to_string(t.shape()));
    }
    std::vector<Box> out;
    out.reserve(t.dim(0));
    auto v = t.values();
    for (std::size_t i = 0; i < t.dim(0); ++i) {
        out.emplace_back(v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]);
    }
    return out;
}

nk::Tensor boxes_to_tensor(std::span<const Box> boxes) {
    std::vector<double> v;
    v.reserve(boxes.size() * 4);
    for (const auto& b : boxes) {
        auto a = b.as_array();
        v.insert(v.end(), a.begin(), a.end());
    }
    return nk::Tensor(nk::Shape{boxes.size(), 4}, std::move(v));
}

}  // namespace reldetr::geom
