#include "reldetr/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace reldetr::verify {

BruteAssignment brute_force_assignment(const matching::CostMatrix& cost) {
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    BruteAssignment best;
    if (n == 0 || m == 0) return best;
    const bool wide = n <= m;
    const std::size_t small = wide ? n : m;
    const std::size_t large = wide ? m : n;

    std::vector<std::size_t> pick(small);
    std::vector<char> taken(large, 0);
    double best_cost = std::numeric_limits<double>::infinity();

    std::function<void(std::size_t)> search = [&](std::size_t k) {
        if (k == small) {
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t s = 0; s < small; ++s) {
                pairs.emplace_back(wide ? s : pick[s], wide ? pick[s] : s);
            }
            std::sort(pairs.begin(), pairs.end());
            double total = 0.0;
            for (auto [i, j] : pairs) total += cost(i, j);
            if (total < best_cost) {
                best_cost = total;
                best.pairs = std::move(pairs);
            }
            return;
        }
        for (std::size_t c = 0; c < large; ++c) {
            if (taken[c]) continue;
            taken[c] = 1;
            pick[k] = c;
            search(k + 1);
            taken[c] = 0;
        }
    };
    search(0);
    best.total_cost = best_cost;
    return best;
}

std::optional<double> pearson_oracle(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    long double ma = 0, mb = 0;
    for (int i = 0; i < 4; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= 4;
    mb /= 4;
    long double sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < 4; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) return std::nullopt;
    return static_cast<double>(sab / std::sqrt(saa * sbb));
}

std::optional<double> mc_oracle(std::span<const geom::Box> boxes) {
    const std::size_t n = boxes.size();
    if (n < 2) return std::nullopt;
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            auto r = pearson_oracle(boxes[i].as_array(), boxes[j].as_array());
            if (r) total += std::fabs(*r);
        }
    }
    return static_cast<double>(total / static_cast<long double>(n * (n - 1)));
}

double raster_giou(const geom::Box& a, const geom::Box& b, int grid) {
    const double x0 = std::min(a.x_min(), b.x_min());
    const double y0 = std::min(a.y_min(), b.y_min());
    const double x1 = std::max(a.x_max(), b.x_max());
    const double y1 = std::max(a.y_max(), b.y_max());
    const double dx = (x1 - x0) / grid;
    const double dy = (y1 - y0) / grid;
    auto inside = [](const geom::Box& box, double x, double y) {
        return x >= box.x_min() && x < box.x_max() && y >= box.y_min() && y < box.y_max();
    };
    long long both = 0, either = 0;
    for (int r = 0; r < grid; ++r) {
        const double y = y0 + (r + 0.5) * dy;
        for (int c = 0; c < grid; ++c) {
            const double x = x0 + (c + 0.5) * dx;
            const bool ia = inside(a, x, y);
            const bool ib = inside(b, x, y);
            both += ia && ib;
            either += ia || ib;
        }
    }
    const double cells = static_cast<double>(grid) * grid;
    const double iou = static_cast<double>(both) / static_cast<double>(either);
    return iou - (cells - static_cast<double>(either)) / cells;
}

std::vector<double> softmax_oracle(std::span<const double> row) {
    long double total = 0;
    for (double v : row) total += std::exp(static_cast<long double>(v));
    std::vector<double> out;
    for (double v : row) out.push_back(static_cast<double>(std::exp(static_cast<long double>(v)) / total));
    return out;
}

}  // namespace reldetr::verify
