#include "reldetr/relenc.hpp"

#include <cmath>
#include <vector>

#include "reldetr/errors.hpp"
#include "reldetr/ops.hpp"

namespace reldetr::relenc {

void RelEncConfig::validate() const {
    if (!(temperature > 1.0)) throw InputError("relation temperature must be > 1");
    if (embed_dim < 2 || embed_dim % 2 != 0) {
        throw InputError("relation embed_dim must be even and >= 2");
    }
    if (!(scale > 0.0)) throw InputError("relation scale must be > 0");
    if (!(epsilon > 0.0)) throw InputError("relation epsilon must be > 0");
    if (heads < 1) throw InputError("relation heads must be >= 1");
}

nk::Tensor sincos_embed(const geom::RelationFeatures& features, const RelEncConfig& cfg) {
    cfg.validate();
    const auto& e = features.values;
    const std::size_t pairs = e.dim(0) * e.dim(1);
    const std::size_t half = static_cast<std::size_t>(cfg.embed_dim) / 2;
    const std::size_t width = cfg.embedding_width();

    std::vector<double> inv_freq(half);
    for (std::size_t k = 0; k < half; ++k) {
        inv_freq[k] = 1.0 / std::pow(cfg.temperature, 2.0 * static_cast<double>(k) / cfg.embed_dim);
    }

    auto src = e.values();
    std::vector<double> out(pairs * width);
    for (std::size_t p = 0; p < pairs; ++p) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double v = cfg.scale * src[p * 4 + c];
            double* slot = out.data() + p * width + c * cfg.embed_dim;
            for (std::size_t k = 0; k < half; ++k) {
                slot[2 * k] = std::sin(v * inv_freq[k]);
                slot[2 * k + 1] = std::cos(v * inv_freq[k]);
            }
        }
    }
    return nk::Tensor(nk::Shape{e.dim(0), e.dim(1), width}, std::move(out));
}

RelationBias relation_head(const nk::Tensor& embed, const RelationHead& head,
                           const RelEncConfig& cfg) {
    const std::size_t width = cfg.embedding_width();
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    if (embed.rank() != 3 || embed.dim(2) != width) {
        throw DimensionError("relation_head: embedding " + nk::to_string(embed.shape()) +
                             " needs last extent " + std::to_string(width));
    }
    if (head.weight.shape() != nk::Shape{heads, width} || head.bias.numel() != heads) {
        throw DimensionError("relation_head: weight " + nk::to_string(head.weight.shape()) +
                             " / bias " + nk::to_string(head.bias.shape()) + " vs heads=" +
                             std::to_string(heads) + ", width=" + std::to_string(width));
    }
    const std::size_t na = embed.dim(0);
    const std::size_t nb = embed.dim(1);
    auto flat = nk::reshape(embed, nk::Shape{na * nb, width});
    auto projected = nk::add_bias(nk::matmul(flat, nk::transpose(head.weight)), head.bias);
    auto floored = nk::max_with(projected, cfg.epsilon);
    return {nk::reshape(floored, nk::Shape{na, nb, heads})};
}

RelationBias encode_relation(std::span<const geom::Box> a, std::span<const geom::Box> b,
                             const RelationHead& head, const RelEncConfig& cfg) {
    return relation_head(sincos_embed(geom::relation_matrix(a, b), cfg), head, cfg);
}

RelationHead init_relation_head(nk::ParameterSet& params, const std::string& prefix,
                                const RelEncConfig& cfg, const Rng& rng) {
    cfg.validate();
    const std::size_t width = cfg.embedding_width();
    const std::size_t heads = static_cast<std::size_t>(cfg.heads);
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    auto stream = rng.split(prefix + ".weight");
    std::vector<double> w(heads * width);
    for (auto& v : w) v = stream.uniform(-bound, bound);
    RelationHead head;
    head.weight = params.add(prefix + ".weight", nk::Tensor(nk::Shape{heads, width}, std::move(w)));
    head.bias = params.add(prefix + ".bias", nk::Tensor::zeros(nk::Shape{heads}));
    return head;
}

RelationHead relation_head_from(const nk::ParameterSet& params, const std::string& prefix) {
    return {params.get(prefix + ".weight"), params.get(prefix + ".bias")};
}

}  // namespace reldetr::relenc
