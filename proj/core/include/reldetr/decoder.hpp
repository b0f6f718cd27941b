#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reldetr/geom.hpp"
#include "reldetr/matching.hpp"
#include "reldetr/ops.hpp"
#include "reldetr/parameter.hpp"
#include "reldetr/relenc.hpp"
#include "reldetr/rng.hpp"

namespace reldetr::decoder {

struct DecoderConfig {
    int layers = 3;
    int d_model = 32;
    int heads = 4;
    int num_matching = 24;
    int num_hybrid = 40;
    int repeat_k = 3;
    int ffn_dim = 64;
    int num_classes = 4;
    int memory_height = 16;
    int memory_width = 16;
    double memory_noise = 0.1;
    relenc::RelEncConfig relation{.heads = 4};

    /// Desk-scale defaults used by the experiments.
    static DecoderConfig toy();
    /// Full-size settings (N_m = 900, N_h = 1500, K = 6, T/d_re/s = 10000/16/100).
    static DecoderConfig paper();
    /// Small enough for exhaustive finite-difference checks.
    static DecoderConfig gradcheck();

    /// Throws InputError. Requires d_model % heads == 0, d_model % 8 == 0
    /// (four coordinates of sin/cos pairs) and relation.heads == heads.
    void validate() const;
};

struct Linear {
    nk::Tensor weight;  // in x out
    nk::Tensor bias;    // out

    nk::Tensor operator()(const nk::Tensor& x) const;
};

struct AttentionWeights {
    Linear query, key, value, output;
};

struct LayerWeights {
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
    Linear ffn_in, ffn_out;
    Linear box_hidden, box_delta;
    Linear classifier;
};

/// All learnable state of the toy detector, one shared set for both query
/// paths.
class DecoderWeights {
public:
    DecoderWeights(const DecoderConfig& cfg, std::uint64_t seed);

    const DecoderConfig& config() const { return cfg_; }
    nk::ParameterSet& params() { return params_; }
    const nk::ParameterSet& params() const { return params_; }

    LayerWeights layer(int index) const;
    relenc::RelationHead relation() const;
    nk::Tensor matching_embed() const { return params_.get("matching.query_embed"); }
    nk::Tensor hybrid_embed() const { return params_.get("hybrid.query_embed"); }
    nk::Tensor class_embed() const { return params_.get("memory.class_embed"); }

    /// Zeroes the relation head W and B (the bias then sits at epsilon).
    void zero_relation();

private:
    DecoderConfig cfg_;
    nk::ParameterSet params_;
};

/// Flattened synthetic image features.
struct Memory {
    nk::Tensor tokens;  // S x d_model
    std::vector<std::pair<double, double>> positions;
};

/// Fixed sin/cos encoding of N x 4 boxes into N x d_model.
nk::Tensor box_position_encoding(const nk::Tensor& boxes, int d_model);

/// H x W grid of tokens: position encoding of each cell (as a box) plus the
/// learned class embedding of every object covering the cell center plus
/// N(0, noise^2) noise drawn from `rng`.
Memory build_memory(std::span<const geom::Box> boxes, std::span<const int> labels,
                    const DecoderWeights& weights, Rng rng);

struct QueryState {
    nk::Tensor queries;                 // N x d_model
    nk::Tensor box_coords;              // N x 4; differentiable after a layer
    std::vector<geom::Box> boxes;       // b^l
    std::vector<geom::Box> prev_boxes;  // b^(l-1)
    nk::Tensor logits;                  // N x C, empty before the first layer

    std::size_t size() const { return boxes.size(); }
};

enum class Path { matching, hybrid };

struct Counters {
    std::size_t self_attention[2] = {0, 0};
    std::size_t cross_attention[2] = {0, 0};
    std::size_t ffn[2] = {0, 0};
    std::size_t relation_encodings = 0;
    std::size_t memory_projections = 0;

    std::size_t attention(Path p) const {
        return self_attention[static_cast<int>(p)] + cross_attention[static_cast<int>(p)];
    }
    std::size_t feed_forward(Path p) const { return ffn[static_cast<int>(p)]; }
};

struct ForwardContext {
    nk::DetachTape* tape = nullptr;
    Counters* counters = nullptr;
    /// When set, receives every self-attention probability matrix (per head).
    std::vector<nk::Tensor>* attention_probe = nullptr;
};

/// softmax(bias_h + Q_h K_h^T / sqrt(d_model)) V_h per head, concatenated and
/// mixed by the output projection. `bias` may be null (plain attention).
///
/// Each bias row is shifted by its own (constant) maximum before being added;
/// softmax is invariant to that, and row-constant biases then contribute
/// exactly zero.
nk::Tensor biased_self_attention(const nk::Tensor& x, const relenc::RelationBias* bias,
                                 const AttentionWeights& w, int heads,
                                 std::vector<nk::Tensor>* probe = nullptr);

/// Memory keys and values for one layer, shared by both query paths.
struct MemoryKV {
    nk::Tensor keys;
    nk::Tensor values;
};

MemoryKV project_memory(const Memory& mem, const AttentionWeights& w);

/// One refinement step:
///   Q' = FFN(Q + CrossAttn(SelfAttn(Q + pos) + pos, Z)),
///   b' = sigmoid(logit(b) + MLP(Q')),  c' = Linear(Q').
/// The relation bias Rel(prev_boxes, boxes) is used only if `use_relation`.
/// Throws NumericError naming the layer on non-finite activations.
QueryState decoder_layer(const QueryState& state, const MemoryKV& memory, const DecoderWeights& w,
                         int layer, bool use_relation, Path path, const ForwardContext& ctx = {});

enum class Mode { train, infer };

struct LayerOutputs {
    std::vector<matching::Prediction> matching;
    std::optional<std::vector<matching::Prediction>> hybrid;
};

struct ForwardOptions {
    Mode mode = Mode::train;
    /// Matching path relation bias; the hybrid path never uses it.
    bool use_relation = true;
};

/// Runs all layers for the matching queries and, in train mode, for the
/// hybrid queries with the same weights. In infer mode the hybrid path is not
/// evaluated at all.
LayerOutputs contrast_forward(const QueryState& matching_queries, const QueryState& hybrid_queries,
                              const Memory& memory, const DecoderWeights& w,
                              const ForwardOptions& options, const ForwardContext& ctx = {});

/// Row-major grid of n anchors covering the unit square: ceil(sqrt(n))
/// columns, centers at cell midpoints, size half a cell.
std::vector<geom::Box> anchor_grid(std::size_t n);

/// Initial (matching, hybrid) states: learned embeddings, grid anchors,
/// prev_boxes equal to boxes.
std::pair<QueryState, QueryState> init_queries(const DecoderWeights& w);

}  // namespace reldetr::decoder
