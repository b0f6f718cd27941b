#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "reldetr/geom.hpp"
#include "reldetr/matching.hpp"

namespace reldetr::verify {

struct BruteAssignment {
    double total_cost = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // sorted by row
};

/// Exhaustive search over every injective map of the smaller side into the
/// larger. Costs are summed in ascending row order.
BruteAssignment brute_force_assignment(const matching::CostMatrix& cost);

/// Pearson on 4-vectors in long double; nullopt when a variance is exactly 0.
std::optional<double> pearson_oracle(const std::array<double, 4>& a, const std::array<double, 4>& b);

/// Plain double loop over ordered pairs; nullopt for fewer than two boxes.
std::optional<double> mc_oracle(std::span<const geom::Box> boxes);

/// GIoU estimated by counting cell centers of a grid x grid raster laid over
/// the enclosing box.
double raster_giou(const geom::Box& a, const geom::Box& b, int grid = 1000);

/// exp(x_i) / sum exp(x_j) without any shift, in long double.
std::vector<double> softmax_oracle(std::span<const double> row);

}  // namespace reldetr::verify
