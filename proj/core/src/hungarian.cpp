#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "reldetr/errors.hpp"
#include "reldetr/matching.hpp"

namespace reldetr::matching {

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw DimensionError("cost matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " given " + std::to_string(values_.size()) + " values");
    }
}

double assignment_cost(const CostMatrix& cost,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    double total = 0.0;
    for (auto [i, j] : pairs) total += cost(i, j);
    return total;
}

namespace {

// Rows <= cols. Returns, for each row, its column.
std::vector<std::size_t> solve_wide(std::size_t n, std::size_t m,
                                    const std::function<double(std::size_t, std::size_t)>& a) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based; column 0 is a virtual source.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
    for (std::size_t i = 0; i < cost.values().size(); ++i) {
        if (!std::isfinite(cost.values()[i])) {
            throw InputError("hungarian: non-finite cost at (" + std::to_string(i / cost.cols()) +
                             ", " + std::to_string(i % cost.cols()) + ")");
        }
    }
    Assignment out;
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    if (n == 0 || m == 0) return out;

    if (n <= m) {
        auto cols = solve_wide(n, m, [&](std::size_t i, std::size_t j) { return cost(i, j); });
        for (std::size_t i = 0; i < n; ++i) out.pairs.emplace_back(i, cols[i]);
    } else {
        auto rows = solve_wide(m, n, [&](std::size_t j, std::size_t i) { return cost(i, j); });
        for (std::size_t j = 0; j < m; ++j) out.pairs.emplace_back(rows[j], j);
        std::sort(out.pairs.begin(), out.pairs.end());
    }
    out.total_cost = assignment_cost(cost, out.pairs);
    return out;
}

}  // namespace reldetr::matching
