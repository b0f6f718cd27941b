#include "reldetr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "reldetr/errors.hpp"

namespace reldetr::nk {
namespace {

using NodePtr = std::shared_ptr<detail::Node>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                             " vs " + to_string(b.shape()));
    }
}

void require_matrix(const Tensor& a, const char* op) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
    }
}

// Applies y = f(x) elementwise; dfdx(x, y) gives the local derivative.
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    auto x = a.values();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    NodePtr an = a.node();
    return make_result(a.shape(), std::move(y), {a}, [an, dfdx](detail::Node& out) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += out.grad[i] * dfdx(an->value[i], out.value[i]);
        }
    });
}

// z = f(x, y) elementwise; partials(x, y, z) -> {dz/dx, dz/dy}.
template <typename F, typename P>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, P partials) {
    require_same_shape(a, b, name);
    auto x = a.values();
    auto y = b.values();
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = f(x[i], y[i]);
    NodePtr an = a.node();
    NodePtr bn = b.node();
    return make_result(a.shape(), std::move(z), {a, b}, [an, bn, partials](detail::Node& out) {
        const bool ga = an->requires_grad;
        const bool gb = bn->requires_grad;
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            auto [dx, dy] = partials(an->value[i], bn->value[i], out.value[i]);
            if (ga) an->grad_buffer()[i] += out.grad[i] * dx;
            if (gb) bn->grad_buffer()[i] += out.grad[i] * dy;
        }
    });
}

struct Partials {
    double dx;
    double dy;
};

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double, double) { return Partials{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double, double) { return Partials{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y, double) { return Partials{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(a, b, "div", [](double x, double y) { return x / y; },
                  [](double, double y, double z) { return Partials{1.0 / y, -z / y}; });
}

// Ties route the gradient to the first operand.
Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary(a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
                  [](double x, double y, double) {
                      return x >= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0};
                  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary(a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
                  [](double x, double y, double) {
                      return x <= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0};
                  });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return x * factor; },
                 [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a,
                 [](double x) {
                     if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                     const double e = std::exp(x);
                     return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sin(const Tensor& a) {
    return unary(a, [](double x) { return std::sin(x); },
                 [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary(a, [](double x) { return std::cos(x); },
                 [](double x, double) { return -std::sin(x); });
}

Tensor abs(const Tensor& a) {
    return unary(a, [](double x) { return std::abs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor max_with(const Tensor& a, double floor) {
    return unary(a, [floor](double x) { return x > floor ? x : floor; },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_matrix(a, "add_bias");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    if (bias.numel() != cols) {
        throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " vs matrix " +
                             to_string(a.shape()));
    }
    auto x = a.values();
    auto b = bias.values();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = x[i * cols + j] + b[j];
    }
    NodePtr an = a.node();
    NodePtr bn = bias.node();
    return make_result(a.shape(), std::move(y), {a, bias},
                       [an, bn, rows, cols](detail::Node& out) {
                           if (an->requires_grad) {
                               auto g = an->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
                           }
                           if (bn->requires_grad) {
                               auto g = bn->grad_buffer();
                               for (std::size_t i = 0; i < rows; ++i) {
                                   for (std::size_t j = 0; j < cols; ++j) {
                                       g[j] += out.grad[i * cols + j];
                                   }
                               }
                           }
                       });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ, " + to_string(a.shape()) + " x " +
                             to_string(b.shape()));
    }
    auto x = a.values();
    auto w = b.values();
    std::vector<double> y(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = y.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = x[i * k + p];
            const double* wrow = w.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * wrow[j];
        }
    }
    NodePtr an = a.node();
    NodePtr bn = b.node();
    return make_result(Shape{m, n}, std::move(y), {a, b}, [an, bn, m, k, n](detail::Node& out) {
        const auto& gy = out.grad;
        if (an->requires_grad) {
            auto ga = an->grad_buffer();
            const auto& w = bn->value;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * w[p * n + j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (bn->requires_grad) {
            auto gb = bn->grad_buffer();
            const auto& x = an->value;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = x[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * gy[i * n + j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.dim(0);
    const std::size_t c = a.dim(1);
    auto x = a.values();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
    }
    NodePtr an = a.node();
    return make_result(Shape{c, r}, std::move(y), {a}, [an, r, c](detail::Node& out) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[j * r + i];
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() == 0 || x.numel() == 0) throw DimensionError("softmax_rows: empty input");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    auto in = x.values();
    std::vector<double> y(in.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = in.data() + r * n;
        double* dst = y.data() + r * n;
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isnan(src[j])) {
                throw NumericError("softmax_rows: NaN in row " + std::to_string(r));
            }
            hi = std::max(hi, src[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - hi);
            total += dst[j];
        }
        for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
    }
    NodePtr xn = x.node();
    return make_result(x.shape(), std::move(y), {x}, [xn, rows, n](detail::Node& out) {
        auto g = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yv = out.value.data() + r * n;
            const double* gy = out.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[j] * yv[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += yv[j] * (gy[j] - dot);
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    NodePtr an = a.node();
    return make_result(Shape{1}, {total}, {a}, [an](detail::Node& out) {
        auto g = an->grad_buffer();
        for (auto& v : g) v += out.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (element_count(shape) != a.numel()) {
        throw DimensionError("reshape " + to_string(a.shape()) + " -> " + to_string(shape));
    }
    NodePtr an = a.node();
    std::vector<double> y(a.values().begin(), a.values().end());
    return make_result(std::move(shape), std::move(y), {a}, [an](detail::Node& out) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
    require_matrix(a, "slice_cols");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    if (start + count > cols) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + to_string(a.shape()));
    }
    auto x = a.values();
    std::vector<double> y(rows * count);
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(x.data() + i * cols + start, count, y.data() + i * count);
    }
    NodePtr an = a.node();
    return make_result(Shape{rows, count}, std::move(y), {a},
                       [an, rows, cols, start, count](detail::Node& out) {
                           auto g = an->grad_buffer();
                           for (std::size_t i = 0; i < rows; ++i) {
                               for (std::size_t j = 0; j < count; ++j) {
                                   g[i * cols + start + j] += out.grad[i * count + j];
                               }
                           }
                       });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts.front().dim(0);
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) +
                                 " vs " + to_string(p.shape()));
        }
        offsets.push_back(cols);
        cols += p.dim(1);
    }
    std::vector<double> y(rows * cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto x = parts[k].values();
        const std::size_t w = parts[k].dim(1);
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy_n(x.data() + i * w, w, y.data() + i * cols + offsets[k]);
        }
    }
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_result(Shape{rows, cols}, std::move(y), {parts.begin(), parts.end()},
                       [nodes, offsets, rows, cols](detail::Node& out) {
                           for (std::size_t k = 0; k < nodes.size(); ++k) {
                               if (!nodes[k]->requires_grad) continue;
                               auto g = nodes[k]->grad_buffer();
                               const std::size_t w = nodes[k]->shape[1];
                               for (std::size_t i = 0; i < rows; ++i) {
                                   for (std::size_t j = 0; j < w; ++j) {
                                       g[i * w + j] += out.grad[i * cols + offsets[k] + j];
                                   }
                               }
                           }
                       });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_matrix(a, "gather_rows");
    const std::size_t cols = a.dim(1);
    auto x = a.values();
    std::vector<double> y(rows.size() * cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= a.dim(0)) {
            throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " outside " +
                                 to_string(a.shape()));
        }
        std::copy_n(x.data() + rows[r] * cols, cols, y.data() + r * cols);
    }
    NodePtr an = a.node();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return make_result(Shape{idx.size(), cols}, std::move(y), {a},
                       [an, idx, cols](detail::Node& out) {
                           auto g = an->grad_buffer();
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                               for (std::size_t j = 0; j < cols; ++j) {
                                   g[idx[r] * cols + j] += out.grad[r * cols + j];
                               }
                           }
                       });
}

Tensor column(const Tensor& a, std::size_t j) {
    require_matrix(a, "column");
    return reshape(slice_cols(a, j, 1), Shape{a.dim(0)});
}

Tensor select_last(const Tensor& a, std::size_t k) {
    if (a.rank() != 3) {
        throw DimensionError("select_last: expected rank 3, got " + to_string(a.shape()));
    }
    const std::size_t r = a.dim(0);
    const std::size_t c = a.dim(1);
    const std::size_t depth = a.dim(2);
    if (k >= depth) {
        throw DimensionError("select_last: index " + std::to_string(k) + " outside " +
                             to_string(a.shape()));
    }
    auto x = a.values();
    std::vector<double> y(r * c);
    for (std::size_t i = 0; i < r * c; ++i) y[i] = x[i * depth + k];
    NodePtr an = a.node();
    return make_result(Shape{r, c}, std::move(y), {a}, [an, depth, k](detail::Node& out) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < out.grad.size(); ++i) g[i * depth + k] += out.grad[i];
    });
}

Tensor sigmoid_focal_loss(const Tensor& logits, std::span<const double> targets, double alpha,
                          double gamma) {
    if (targets.size() != logits.numel()) {
        throw DimensionError("sigmoid_focal_loss: " + std::to_string(targets.size()) +
                             " targets for logits " + to_string(logits.shape()));
    }
    auto z = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-z[i]));
        const double t = targets[i];
        const double w = std::pow(std::abs(t - p), gamma);
        const double log_p = -softplus(-z[i]);
        const double log_q = -softplus(z[i]);
        total += -alpha * t * w * log_p - (1.0 - alpha) * (1.0 - t) * w * log_q;
    }
    NodePtr zn = logits.node();
    std::vector<double> t(targets.begin(), targets.end());
    return make_result(Shape{1}, {total}, {logits},
                       [zn, t = std::move(t), alpha, gamma](detail::Node& out) {
                           auto g = zn->grad_buffer();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               const double zi = zn->value[i];
                               const double p = 1.0 / (1.0 + std::exp(-zi));
                               const double d = p - t[i];
                               const double ad = std::abs(d);
                               const double w = std::pow(ad, gamma);
                               double dw_dp = 0.0;
                               if (ad > 0.0) dw_dp = gamma * std::pow(ad, gamma - 1.0) * (d > 0 ? 1.0 : -1.0);
                               const double dw = dw_dp * p * (1.0 - p);
                               const double log_p = -softplus(-zi);
                               const double log_q = -softplus(zi);
                               const double grad = -alpha * t[i] * (dw * log_p + w * (1.0 - p)) -
                                                   (1.0 - alpha) * (1.0 - t[i]) * (dw * log_q - w * p);
                               g[i] += out.grad[0] * grad;
                           }
                       });
}

Tensor DetachTape::cut(const Tensor& t) {
    if (mode_ == Mode::record) {
        recorded_.push_back(t.detach());
        return recorded_.back();
    }
    if (cursor_ >= recorded_.size()) {
        throw Error("DetachTape: replay ran past " + std::to_string(recorded_.size()) +
                    " recorded cuts");
    }
    const auto& saved = recorded_[cursor_++];
    if (saved.shape() != t.shape()) {
        throw DimensionError("DetachTape: replayed cut " + to_string(saved.shape()) +
                             " does not match live " + to_string(t.shape()));
    }
    return saved;
}

void DetachTape::start_replay() {
    mode_ = Mode::replay;
    cursor_ = 0;
}

void DetachTape::start_record() {
    mode_ = Mode::record;
    cursor_ = 0;
    recorded_.clear();
}

Tensor cut(DetachTape* tape, const Tensor& t) { return tape ? tape->cut(t) : t.detach(); }

}  // namespace reldetr::nk
