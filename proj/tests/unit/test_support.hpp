#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reldetr/geom.hpp"
#include "reldetr/rng.hpp"
#include "reldetr/tensor.hpp"

namespace testing_support {

inline reldetr::nk::Tensor random_tensor(reldetr::Rng& rng, reldetr::nk::Shape shape, double lo = -1.0,
                                         double hi = 1.0, bool requires_grad = true) {
    std::vector<double> v(reldetr::nk::element_count(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return reldetr::nk::Tensor(std::move(shape), std::move(v), requires_grad);
}

/// Values in [lo, hi] kept at least `gap` away from every point in `kinks`.
inline reldetr::nk::Tensor away_from(reldetr::Rng& rng, reldetr::nk::Shape shape,
                                     std::vector<double> kinks, double gap, double lo = -1.0,
                                     double hi = 1.0) {
    std::vector<double> v(reldetr::nk::element_count(shape));
    for (auto& x : v) {
        for (;;) {
            x = rng.uniform(lo, hi);
            bool ok = true;
            for (double k : kinks) ok = ok && std::abs(x - k) > gap;
            if (ok) break;
        }
    }
    return reldetr::nk::Tensor(std::move(shape), std::move(v), true);
}

inline std::vector<reldetr::geom::Box> random_boxes(reldetr::Rng& rng, std::size_t n) {
    std::vector<reldetr::geom::Box> out;
    for (std::size_t k = 0; k < n; ++k) {
        out.emplace_back(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
                         rng.uniform(0.05, 0.4));
    }
    return out;
}

inline std::string fixture_path(const std::string& name) {
    return std::string(RELDETR_FIXTURE_DIR) + "/" + name;
}

}  // namespace testing_support
