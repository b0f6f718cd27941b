#include "reldetr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "reldetr/errors.hpp"
#include "reldetr/ops.hpp"

namespace reldetr::matching {

void GroundTruth::validate(int num_classes) const {
    if (boxes.size() != labels.size()) {
        throw InputError("ground truth has " + std::to_string(boxes.size()) + " boxes but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (int label : labels) {
        if (label < 0 || label >= num_classes) {
            throw InputError("label " + std::to_string(label) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
    }
}

GroundTruth GroundTruth::tiled(int k) const {
    if (k < 1) throw InputError("repeat factor must be >= 1");
    GroundTruth out;
    for (int r = 0; r < k; ++r) {
        out.boxes.insert(out.boxes.end(), boxes.begin(), boxes.end());
        out.labels.insert(out.labels.end(), labels.begin(), labels.end());
    }
    return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_prediction(const Prediction& pred, const GroundTruth& gt) {
    if (pred.boxes.rank() != 2 || pred.boxes.dim(1) != 4) {
        throw DimensionError("prediction boxes must be N x 4, got " +
                             nk::to_string(pred.boxes.shape()));
    }
    if (pred.logits.rank() != 2 || pred.logits.dim(0) != pred.boxes.dim(0)) {
        throw DimensionError("prediction logits " + nk::to_string(pred.logits.shape()) +
                             " do not match boxes " + nk::to_string(pred.boxes.shape()));
    }
    gt.validate(static_cast<int>(pred.logits.dim(1)));
}

// Sum over rows of 1 - GIoU between P (differentiable) and G (constant), both M x 4.
nk::Tensor giou_loss_sum(const nk::Tensor& pred, const nk::Tensor& target) {
    using namespace nk;
    auto px = column(pred, 0), py = column(pred, 1), pw = column(pred, 2), ph = column(pred, 3);
    auto gx = column(target, 0), gy = column(target, 1), gw = column(target, 2),
         gh = column(target, 3);

    auto px1 = sub(px, scale(pw, 0.5)), px2 = add(px, scale(pw, 0.5));
    auto py1 = sub(py, scale(ph, 0.5)), py2 = add(py, scale(ph, 0.5));
    auto gx1 = sub(gx, scale(gw, 0.5)), gx2 = add(gx, scale(gw, 0.5));
    auto gy1 = sub(gy, scale(gh, 0.5)), gy2 = add(gy, scale(gh, 0.5));

    auto iw = relu(sub(minimum(px2, gx2), maximum(px1, gx1)));
    auto ih = relu(sub(minimum(py2, gy2), maximum(py1, gy1)));
    auto inter = mul(iw, ih);
    auto uni = sub(add(mul(pw, ph), mul(gw, gh)), inter);
    auto enclosing = mul(sub(maximum(px2, gx2), minimum(px1, gx1)),
                         sub(maximum(py2, gy2), minimum(py1, gy1)));
    auto giou = sub(div(inter, uni), div(sub(enclosing, uni), enclosing));
    return add_scalar(neg(sum(giou)), static_cast<double>(pred.dim(0)));
}

}  // namespace

CostMatrix matching_cost(const Prediction& pred, const GroundTruth& gt, const CostWeights& w) {
    check_prediction(pred, gt);
    const std::size_t n = pred.boxes.dim(0);
    const std::size_t classes = pred.logits.dim(1);
    CostMatrix cost(n, gt.size());
    auto boxes = geom::boxes_from_tensor(pred.boxes);
    auto logits = pred.logits.values();
    for (std::size_t i = 0; i < n; ++i) {
        const auto b = boxes[i].as_array();
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const auto g = gt.boxes[j].as_array();
            const double cls = -sigmoid(logits[i * classes + static_cast<std::size_t>(gt.labels[j])]);
            double l1 = 0.0;
            for (int c = 0; c < 4; ++c) l1 += std::abs(b[c] - g[c]);
            const double g_term = 1.0 - geom::giou(boxes[i], gt.boxes[j]);
            cost(i, j) = w.cls * cls + w.l1 * l1 + w.giou * g_term;
        }
    }
    return cost;
}

MatchPlan plan_matching(std::span<const Prediction> layers, const GroundTruth& gt,
                        const LossOptions& options) {
    MatchPlan plan;
    for (const auto& pred : layers) {
        LayerMatch lm;
        lm.assignment = hungarian(matching_cost(pred, gt, options.weights));
        auto boxes = geom::boxes_from_tensor(pred.boxes);
        for (auto [q, t] : lm.assignment.pairs) lm.quality.push_back(geom::iou(boxes[q], gt.boxes[t]));
        plan.layers.push_back(std::move(lm));
    }
    return plan;
}

LossBreakdown set_loss(std::span<const Prediction> layers, const GroundTruth& gt,
                       const MatchPlan& plan, const LossOptions& options) {
    if (layers.empty()) throw InputError("set_loss: no decoder layers");
    if (plan.layers.size() != layers.size()) {
        throw InputError("set_loss: plan covers " + std::to_string(plan.layers.size()) +
                         " layers, predictions " + std::to_string(layers.size()));
    }
    const auto& w = options.weights;
    const double norm = std::max<double>(1.0, static_cast<double>(gt.size()));
    const auto target_boxes = geom::boxes_to_tensor(gt.boxes);

    LossBreakdown out;
    nk::Tensor graph_total;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& pred = layers[l];
        check_prediction(pred, gt);
        const auto& match = plan.layers[l];
        const std::size_t n = pred.logits.dim(0);
        const std::size_t classes = pred.logits.dim(1);

        std::vector<double> targets(n * classes, 0.0);
        std::vector<std::size_t> query_rows, target_rows;
        for (std::size_t p = 0; p < match.assignment.pairs.size(); ++p) {
            auto [q, t] = match.assignment.pairs[p];
            const double quality =
                options.classification == ClassificationLoss::focal ? 1.0 : match.quality.at(p);
            targets[q * classes + static_cast<std::size_t>(gt.labels[t])] = quality;
            query_rows.push_back(q);
            target_rows.push_back(t);
        }

        auto cls = nk::scale(
            nk::sigmoid_focal_loss(pred.logits, targets, options.alpha, options.gamma), 1.0 / norm);
        auto layer_total = nk::scale(cls, w.cls);
        LossTerms terms;
        terms.classification = cls.item();
        if (!query_rows.empty()) {
            auto matched = nk::gather_rows(pred.boxes, query_rows);
            auto goal = nk::gather_rows(target_boxes, target_rows);
            auto l1 = nk::scale(nk::sum(nk::abs(nk::sub(matched, goal))), 1.0 / norm);
            auto gl = nk::scale(giou_loss_sum(matched, goal), 1.0 / norm);
            terms.box_l1 = l1.item();
            terms.box_giou = gl.item();
            layer_total = nk::add(layer_total, nk::add(nk::scale(l1, w.l1), nk::scale(gl, w.giou)));
        }
        terms.total = w.cls * terms.classification + w.l1 * terms.box_l1 + w.giou * terms.box_giou;

        out.classification += terms.classification;
        out.box_l1 += terms.box_l1;
        out.box_giou += terms.box_giou;
        out.total += terms.total;
        out.per_layer.push_back(terms);
        graph_total = l == 0 ? layer_total : nk::add(graph_total, layer_total);
    }
    out.graph = graph_total;
    return out;
}

LossBreakdown one_to_one_loss(std::span<const Prediction> layers, const GroundTruth& gt,
                              const LossOptions& options, MatchPlan* plan_out) {
    auto plan = plan_matching(layers, gt, options);
    auto out = set_loss(layers, gt, plan, options);
    if (plan_out) *plan_out = std::move(plan);
    return out;
}

LossBreakdown one_to_many_loss(std::span<const Prediction> layers, const GroundTruth& gt, int k,
                               const LossOptions& options, MatchPlan* plan_out) {
    const auto tiled = gt.tiled(k);
    auto out = one_to_one_loss(layers, tiled, options, plan_out);
    out.undersized = !layers.empty() && layers.front().boxes.dim(0) < tiled.size();
    return out;
}

}  // namespace reldetr::matching
