#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "reldetr/geom.hpp"
#include "reldetr/tensor.hpp"

namespace reldetr::matching {

struct GroundTruth {
    std::vector<geom::Box> boxes;
    std::vector<int> labels;

    std::size_t size() const { return boxes.size(); }
    /// Throws InputError on length mismatch or labels outside [0, num_classes).
    void validate(int num_classes) const;
    /// The targets repeated k times, copy after copy.
    GroundTruth tiled(int k) const;
};

/// Dense row-major cost matrix; rows are queries, columns targets.
class CostMatrix {
public:
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
    std::span<const double> values() const { return values_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
};

struct Assignment {
    /// (query, target) pairs sorted by query index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    /// Sum of the selected entries, accumulated in ascending query order.
    double total_cost = 0.0;
};

/// Minimum-cost injective assignment of the smaller side into the larger,
/// O(n^2 m) shortest augmenting paths with dual potentials. Ties go to the
/// lowest column index met while scanning. Throws InputError on non-finite
/// entries.
Assignment hungarian(const CostMatrix& cost);

/// Sum of cost entries over `pairs` in the order given.
double assignment_cost(const CostMatrix& cost,
                       std::span<const std::pair<std::size_t, std::size_t>> pairs);

struct Prediction {
    nk::Tensor boxes;   // N x 4, center-size in the unit square
    nk::Tensor logits;  // N x C
};

struct CostWeights {
    double cls = 2.0;
    double l1 = 5.0;
    double giou = 2.0;
};

/// cost(i, j) = w_cls * (-sigmoid(logit[i][label_j])) + w_l1 * |b_i - g_j|_1
///            + w_giou * (1 - giou(b_i, g_j)).
CostMatrix matching_cost(const Prediction& pred, const GroundTruth& gt, const CostWeights& weights);

enum class ClassificationLoss {
    quality_focal,  // matched target = IoU(pred, gt), VariFocal-like
    focal,          // matched target = 1
};

struct LossOptions {
    CostWeights weights;
    ClassificationLoss classification = ClassificationLoss::quality_focal;
    double alpha = 0.25;
    double gamma = 2.0;
};

struct LossTerms {
    double classification = 0.0;
    double box_l1 = 0.0;
    double box_giou = 0.0;  // sum of (1 - GIoU), >= 0
    double total = 0.0;     // weighted by LossOptions::weights
};

struct LossBreakdown {
    double classification = 0.0;
    double box_l1 = 0.0;
    double box_giou = 0.0;
    double total = 0.0;
    std::vector<LossTerms> per_layer;
    /// Differentiable total; its value equals `total` up to rounding.
    nk::Tensor graph;
    /// One-to-many only: fewer queries than tiled targets.
    bool undersized = false;
};

/// Frozen outcome of the non-differentiable half of the loss.
struct LayerMatch {
    Assignment assignment;
    std::vector<double> quality;  // IoU(pred, gt) per pair, taken as a constant
};

struct MatchPlan {
    std::vector<LayerMatch> layers;
};

/// Hungarian matching of every layer against `gt`.
MatchPlan plan_matching(std::span<const Prediction> layers, const GroundTruth& gt,
                        const LossOptions& options);

/// Set-prediction loss given a matching: focal classification over all
/// queries plus L1 and 1-GIoU over matched pairs, each normalized by
/// max(1, |gt|), summed without weighting over layers.
LossBreakdown set_loss(std::span<const Prediction> layers, const GroundTruth& gt,
                       const MatchPlan& plan, const LossOptions& options);

/// One-to-one supervision, L_m. `plan_out` receives the matching used.
LossBreakdown one_to_one_loss(std::span<const Prediction> layers, const GroundTruth& gt,
                              const LossOptions& options, MatchPlan* plan_out = nullptr);

/// One-to-many supervision, L_h: the same machinery against gt tiled k times.
LossBreakdown one_to_many_loss(std::span<const Prediction> layers, const GroundTruth& gt, int k,
                               const LossOptions& options, MatchPlan* plan_out = nullptr);

}  // namespace reldetr::matching
