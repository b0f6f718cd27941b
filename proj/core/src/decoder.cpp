#include "reldetr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "reldetr/errors.hpp"

namespace reldetr::decoder {
namespace {

constexpr double kPositionTemperature = 100.0;
constexpr double kLogitClamp = 1e-12;

std::string layer_name(int l, const std::string& rest) {
    return "layer" + std::to_string(l) + "." + rest;
}

void add_linear(nk::ParameterSet& ps, const Rng& rng, const std::string& name, std::size_t in,
                std::size_t out, bool zero_weight = false) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    auto stream = rng.split(name + ".weight");
    std::vector<double> w(in * out, 0.0);
    if (!zero_weight) {
        for (auto& v : w) v = stream.uniform(-bound, bound);
    }
    ps.add(name + ".weight", nk::Tensor(nk::Shape{in, out}, std::move(w)));
    ps.add(name + ".bias", nk::Tensor::zeros(nk::Shape{out}));
}

void add_embedding(nk::ParameterSet& ps, const Rng& rng, const std::string& name, std::size_t rows,
                   std::size_t cols) {
    auto stream = rng.split(name);
    std::vector<double> w(rows * cols);
    for (auto& v : w) v = stream.uniform(-1.0, 1.0);
    ps.add(name, nk::Tensor(nk::Shape{rows, cols}, std::move(w)));
}

Linear linear_from(const nk::ParameterSet& ps, const std::string& name) {
    return {ps.get(name + ".weight"), ps.get(name + ".bias")};
}

AttentionWeights attention_from(const nk::ParameterSet& ps, const std::string& name) {
    return {linear_from(ps, name + ".q"), linear_from(ps, name + ".k"), linear_from(ps, name + ".v"),
            linear_from(ps, name + ".o")};
}

double inverse_sigmoid(double x) {
    x = std::clamp(x, kLogitClamp, 1.0 - kLogitClamp);
    return std::log(x / (1.0 - x));
}

// Plain multi-head attention of `x` over precomputed keys/values.
nk::Tensor multi_head(const nk::Tensor& queries, const nk::Tensor& keys, const nk::Tensor& values,
                      const relenc::RelationBias* bias, int heads, double logit_scale,
                      std::vector<nk::Tensor>* probe) {
    const std::size_t d = queries.dim(1);
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    std::vector<nk::Tensor> outputs;
    outputs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const std::size_t start = static_cast<std::size_t>(h) * dh;
        auto qh = nk::slice_cols(queries, start, dh);
        auto kh = nk::slice_cols(keys, start, dh);
        auto vh = nk::slice_cols(values, start, dh);
        auto logits = nk::scale(nk::matmul(qh, nk::transpose(kh)), logit_scale);
        if (bias) {
            auto b = nk::select_last(bias->values, static_cast<std::size_t>(h));
            const std::size_t rows = b.dim(0);
            const std::size_t cols = b.dim(1);
            std::vector<double> shift(rows * cols);
            for (std::size_t i = 0; i < rows; ++i) {
                const auto row = b.values().subspan(i * cols, cols);
                const double hi = *std::max_element(row.begin(), row.end());
                std::fill_n(shift.begin() + static_cast<std::ptrdiff_t>(i * cols), cols, hi);
            }
            auto centered = nk::sub(b, nk::Tensor(b.shape(), std::move(shift)));
            logits = nk::add(logits, centered);
        }
        auto probs = nk::softmax_rows(logits);
        if (probe) probe->push_back(probs);
        outputs.push_back(nk::matmul(probs, vh));
    }
    return nk::concat_cols(outputs);
}

}  // namespace

DecoderConfig DecoderConfig::toy() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::paper() {
    DecoderConfig cfg;
    cfg.layers = 6;
    cfg.d_model = 256;
    cfg.heads = 8;
    cfg.num_matching = 900;
    cfg.num_hybrid = 1500;
    cfg.repeat_k = 6;
    cfg.ffn_dim = 2048;
    cfg.num_classes = 80;
    cfg.relation = relenc::RelEncConfig{};
    cfg.relation.heads = 8;
    return cfg;
}

DecoderConfig DecoderConfig::gradcheck() {
    DecoderConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 16;
    cfg.heads = 2;
    cfg.num_matching = 4;
    cfg.num_hybrid = 6;
    cfg.repeat_k = 2;
    cfg.ffn_dim = 32;
    cfg.num_classes = 3;
    cfg.memory_height = 4;
    cfg.memory_width = 4;
    cfg.relation.heads = 2;
    return cfg;
}

void DecoderConfig::validate() const {
    if (layers < 1) throw InputError("decoder needs at least one layer");
    if (heads < 1 || d_model < 1 || d_model % heads != 0) {
        throw InputError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                         std::to_string(heads));
    }
    if (d_model % 8 != 0) throw InputError("d_model must be a multiple of 8");
    if (num_matching < 1 || num_hybrid < 1) throw InputError("query counts must be >= 1");
    if (repeat_k < 1) throw InputError("repeat factor K must be >= 1");
    if (ffn_dim < 1 || num_classes < 1) throw InputError("ffn_dim and num_classes must be >= 1");
    if (memory_height < 1 || memory_width < 1) throw InputError("memory grid must be non-empty");
    if (!(memory_noise >= 0.0)) throw InputError("memory noise must be >= 0");
    relation.validate();
    if (relation.heads != heads) {
        throw InputError("relation heads " + std::to_string(relation.heads) +
                         " differ from attention heads " + std::to_string(heads));
    }
}

nk::Tensor Linear::operator()(const nk::Tensor& x) const {
    return nk::add_bias(nk::matmul(x, weight), bias);
}

DecoderWeights::DecoderWeights(const DecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const Rng root(seed);
    const auto d = static_cast<std::size_t>(cfg_.d_model);
    const auto ffn = static_cast<std::size_t>(cfg_.ffn_dim);
    const auto classes = static_cast<std::size_t>(cfg_.num_classes);
    for (int l = 0; l < cfg_.layers; ++l) {
        for (const char* block : {"self", "cross"}) {
            for (const char* proj : {"q", "k", "v", "o"}) {
                add_linear(params_, root, layer_name(l, std::string(block) + "." + proj), d, d);
            }
        }
        add_linear(params_, root, layer_name(l, "ffn.in"), d, ffn);
        add_linear(params_, root, layer_name(l, "ffn.out"), ffn, d);
        add_linear(params_, root, layer_name(l, "box.hidden"), d, d);
        add_linear(params_, root, layer_name(l, "box.delta"), d, 4, /*zero_weight=*/true);
        add_linear(params_, root, layer_name(l, "cls"), d, classes);
    }
    relenc::init_relation_head(params_, "relation", cfg_.relation, root);
    add_embedding(params_, root, "matching.query_embed", static_cast<std::size_t>(cfg_.num_matching), d);
    add_embedding(params_, root, "hybrid.query_embed", static_cast<std::size_t>(cfg_.num_hybrid), d);
    add_embedding(params_, root, "memory.class_embed", classes, d);
}

LayerWeights DecoderWeights::layer(int l) const {
    if (l < 0 || l >= cfg_.layers) throw InputError("no decoder layer " + std::to_string(l));
    return {attention_from(params_, layer_name(l, "self")),
            attention_from(params_, layer_name(l, "cross")),
            linear_from(params_, layer_name(l, "ffn.in")),
            linear_from(params_, layer_name(l, "ffn.out")),
            linear_from(params_, layer_name(l, "box.hidden")),
            linear_from(params_, layer_name(l, "box.delta")),
            linear_from(params_, layer_name(l, "cls"))};
}

relenc::RelationHead DecoderWeights::relation() const {
    return relenc::relation_head_from(params_, "relation");
}

void DecoderWeights::zero_relation() {
    for (const char* name : {"relation.weight", "relation.bias"}) {
        auto v = params_.get(name).mutable_values();
        std::fill(v.begin(), v.end(), 0.0);
    }
}

nk::Tensor box_position_encoding(const nk::Tensor& boxes, int d_model) {
    if (boxes.rank() != 2 || boxes.dim(1) != 4) {
        throw DimensionError("box_position_encoding: expected N x 4, got " +
                             nk::to_string(boxes.shape()));
    }
    const std::size_t n = boxes.dim(0);
    const auto d = static_cast<std::size_t>(d_model);
    const std::size_t per = d / 4;
    std::vector<double> out(n * d);
    auto src = boxes.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double v = 2.0 * std::numbers::pi * src[i * 4 + c];
            for (std::size_t k = 0; k < per / 2; ++k) {
                const double f = std::pow(kPositionTemperature, 2.0 * static_cast<double>(k) / per);
                out[i * d + c * per + 2 * k] = std::sin(v / f);
                out[i * d + c * per + 2 * k + 1] = std::cos(v / f);
            }
        }
    }
    return nk::Tensor(nk::Shape{n, d}, std::move(out));
}

Memory build_memory(std::span<const geom::Box> boxes, std::span<const int> labels,
                    const DecoderWeights& weights, Rng rng) {
    const auto& cfg = weights.config();
    if (boxes.size() != labels.size()) throw InputError("build_memory: boxes/labels length mismatch");
    const auto hgt = static_cast<std::size_t>(cfg.memory_height);
    const auto wid = static_cast<std::size_t>(cfg.memory_width);
    const std::size_t s = hgt * wid;
    const auto classes = static_cast<std::size_t>(cfg.num_classes);

    Memory mem;
    std::vector<geom::Box> cells;
    std::vector<double> occupancy(s * classes, 0.0);
    for (std::size_t r = 0; r < hgt; ++r) {
        for (std::size_t c = 0; c < wid; ++c) {
            const double cx = (static_cast<double>(c) + 0.5) / static_cast<double>(wid);
            const double cy = (static_cast<double>(r) + 0.5) / static_cast<double>(hgt);
            cells.emplace_back(cx, cy, 1.0 / static_cast<double>(wid), 1.0 / static_cast<double>(hgt));
            mem.positions.emplace_back(cx, cy);
            for (std::size_t k = 0; k < boxes.size(); ++k) {
                const auto& b = boxes[k];
                if (cx >= b.x_min() && cx <= b.x_max() && cy >= b.y_min() && cy <= b.y_max()) {
                    const auto label = static_cast<std::size_t>(labels[k]);
                    if (label >= classes) throw InputError("build_memory: label out of range");
                    occupancy[(r * wid + c) * classes + label] += 1.0;
                }
            }
        }
    }
    auto base = box_position_encoding(geom::boxes_to_tensor(cells), cfg.d_model);
    std::vector<double> noisy(base.values().begin(), base.values().end());
    for (auto& v : noisy) v += rng.normal(0.0, cfg.memory_noise);
    auto occ = nk::Tensor(nk::Shape{s, classes}, std::move(occupancy));
    mem.tokens = nk::add(nk::Tensor(base.shape(), std::move(noisy)),
                         nk::matmul(occ, weights.class_embed()));
    return mem;
}

nk::Tensor biased_self_attention(const nk::Tensor& x, const relenc::RelationBias* bias,
                                 const AttentionWeights& w, int heads,
                                 std::vector<nk::Tensor>* probe) {
    if (x.rank() != 2 || x.dim(1) % static_cast<std::size_t>(heads) != 0) {
        throw DimensionError("self-attention input " + nk::to_string(x.shape()) +
                             " incompatible with " + std::to_string(heads) + " heads");
    }
    const std::size_t n = x.dim(0);
    if (bias && bias->values.shape() != nk::Shape{n, n, static_cast<std::size_t>(heads)}) {
        throw DimensionError("relation bias " + nk::to_string(bias->values.shape()) +
                             " does not fit " + std::to_string(n) + " queries x " +
                             std::to_string(heads) + " heads");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
    auto mixed = multi_head(w.query(x), w.key(x), w.value(x), bias, heads, scale, probe);
    return w.output(mixed);
}

MemoryKV project_memory(const Memory& mem, const AttentionWeights& w) {
    return {w.key(mem.tokens), w.value(mem.tokens)};
}

QueryState decoder_layer(const QueryState& state, const MemoryKV& memory, const DecoderWeights& w,
                         int layer, bool use_relation, Path path, const ForwardContext& ctx) {
    const auto& cfg = w.config();
    const auto lw = w.layer(layer);
    if (state.boxes.size() != state.queries.dim(0) || state.prev_boxes.size() != state.boxes.size()) {
        throw DimensionError("decoder layer " + std::to_string(layer) + ": " +
                             std::to_string(state.queries.dim(0)) + " queries but " +
                             std::to_string(state.boxes.size()) + " boxes");
    }

    auto reference = nk::cut(ctx.tape, state.box_coords);
    auto current = geom::boxes_from_tensor(reference);
    auto pos = box_position_encoding(reference, cfg.d_model);

    std::optional<relenc::RelationBias> bias;
    if (use_relation) {
        bias = relenc::encode_relation(state.prev_boxes, current, w.relation(), cfg.relation);
        if (ctx.counters) ++ctx.counters->relation_encodings;
    }
    auto attended = biased_self_attention(nk::add(state.queries, pos), bias ? &*bias : nullptr,
                                          lw.self_attn, cfg.heads, ctx.attention_probe);
    if (ctx.counters) ++ctx.counters->self_attention[static_cast<int>(path)];

    auto cross_q = lw.cross_attn.query(nk::add(attended, pos));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    auto cross = lw.cross_attn.output(
        multi_head(cross_q, memory.keys, memory.values, nullptr, cfg.heads, scale, nullptr));
    if (ctx.counters) ++ctx.counters->cross_attention[static_cast<int>(path)];

    auto hidden = nk::add(state.queries, cross);
    auto next = nk::add(hidden, lw.ffn_out(nk::relu(lw.ffn_in(hidden))));
    if (ctx.counters) ++ctx.counters->ffn[static_cast<int>(path)];

    std::vector<double> base(reference.values().begin(), reference.values().end());
    for (auto& v : base) v = inverse_sigmoid(v);
    auto delta = lw.box_delta(nk::relu(lw.box_hidden(next)));
    auto coords = nk::sigmoid(nk::add(nk::Tensor(reference.shape(), std::move(base)), delta));
    auto logits = lw.classifier(next);

    if (!next.all_finite() || !coords.all_finite() || !logits.all_finite()) {
        throw NumericError("decoder layer " + std::to_string(layer) + ": non-finite activations");
    }
    QueryState out;
    out.queries = next;
    out.box_coords = coords;
    out.logits = logits;
    out.prev_boxes = std::move(current);
    auto v = coords.values();
    for (std::size_t i = 0; i < coords.dim(0); ++i) {
        auto b = geom::Box::try_make(v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]);
        if (!b) {
            throw NumericError("decoder layer " + std::to_string(layer) + ": degenerate box for query " +
                               std::to_string(i));
        }
        out.boxes.push_back(*b);
    }
    return out;
}

LayerOutputs contrast_forward(const QueryState& matching_queries, const QueryState& hybrid_queries,
                              const Memory& memory, const DecoderWeights& w,
                              const ForwardOptions& options, const ForwardContext& ctx) {
    const int layers = w.config().layers;
    std::vector<MemoryKV> kv;
    for (int l = 0; l < layers; ++l) {
        kv.push_back(project_memory(memory, w.layer(l).cross_attn));
        if (ctx.counters) ++ctx.counters->memory_projections;
    }

    LayerOutputs out;
    QueryState state = matching_queries;
    for (int l = 0; l < layers; ++l) {
        state = decoder_layer(state, kv[static_cast<std::size_t>(l)], w, l, options.use_relation,
                              Path::matching, ctx);
        out.matching.push_back({state.box_coords, state.logits});
    }
    if (options.mode == Mode::train) {
        out.hybrid.emplace();
        state = hybrid_queries;
        for (int l = 0; l < layers; ++l) {
            state = decoder_layer(state, kv[static_cast<std::size_t>(l)], w, l, false, Path::hybrid, ctx);
            out.hybrid->push_back({state.box_coords, state.logits});
        }
    }
    return out;
}

std::vector<geom::Box> anchor_grid(std::size_t n) {
    if (n == 0) return {};
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    const std::size_t rows = (n + cols - 1) / cols;
    std::vector<geom::Box> out;
    out.reserve(n);
    for (std::size_t r = 0; r < rows && out.size() < n; ++r) {
        for (std::size_t c = 0; c < cols && out.size() < n; ++c) {
            out.emplace_back((static_cast<double>(c) + 0.5) / static_cast<double>(cols),
                             (static_cast<double>(r) + 0.5) / static_cast<double>(rows),
                             0.5 / static_cast<double>(cols), 0.5 / static_cast<double>(rows));
        }
    }
    return out;
}

std::pair<QueryState, QueryState> init_queries(const DecoderWeights& w) {
    auto make = [](nk::Tensor embed) {
        QueryState s;
        s.boxes = anchor_grid(embed.dim(0));
        s.prev_boxes = s.boxes;
        s.box_coords = geom::boxes_to_tensor(s.boxes);
        s.queries = std::move(embed);
        return s;
    };
    return {make(w.matching_embed()), make(w.hybrid_embed())};
}

}  // namespace reldetr::decoder
