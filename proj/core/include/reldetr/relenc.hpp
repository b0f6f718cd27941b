#pragma once

#include <span>
#include <string>

#include "reldetr/geom.hpp"
#include "reldetr/parameter.hpp"
#include "reldetr/rng.hpp"
#include "reldetr/tensor.hpp"

namespace reldetr::relenc {

/// Position relation encoder settings.
struct RelEncConfig {
    double temperature = 10000.0;
    int embed_dim = 16;  // d_re: slots per geometry channel, must be even
    double scale = 100.0;
    double epsilon = 1e-6;
    int heads = 8;

    /// Throws InputError when a field is out of range.
    void validate() const;
    std::size_t embedding_width() const { return 4 * static_cast<std::size_t>(embed_dim); }
};

/// Additive self-attention bias, N_a x N_b x heads, every entry >= epsilon.
struct RelationBias {
    nk::Tensor values;
};

/// Learnable projection of the relation embedding to one scalar per head.
struct RelationHead {
    nk::Tensor weight;  // heads x 4*d_re
    nk::Tensor bias;    // heads
};

/// Sine-cosine embedding of relation features: N_a x N_b x 4*d_re.
///
/// Per channel, slot 2k holds sin(s*E / T^(2k/d_re)) and slot 2k+1 the matching
/// cosine, k in [0, d_re/2); channels are laid out in order.
nk::Tensor sincos_embed(const geom::RelationFeatures& features, const RelEncConfig& cfg);

/// max(epsilon, W * embed + B) for every box pair.
RelationBias relation_head(const nk::Tensor& embed, const RelationHead& head,
                           const RelEncConfig& cfg);

/// relation_matrix -> sincos_embed -> relation_head. Boxes are plain values,
/// so gradients reach the head parameters only.
RelationBias encode_relation(std::span<const geom::Box> a, std::span<const geom::Box> b,
                             const RelationHead& head, const RelEncConfig& cfg);

/// Registers `<prefix>.weight` (uniform in ±(4*d_re)^-1/2) and `<prefix>.bias`
/// (zeros) and returns handles to them.
RelationHead init_relation_head(nk::ParameterSet& params, const std::string& prefix,
                                const RelEncConfig& cfg, const Rng& rng);

RelationHead relation_head_from(const nk::ParameterSet& params, const std::string& prefix);

}  // namespace reldetr::relenc
