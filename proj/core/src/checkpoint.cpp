#include "reldetr/checkpoint.hpp"

#include <fstream>

#include "reldetr/errors.hpp"

namespace reldetr::decoder {

namespace {
constexpr const char* kFormat = "reldetr-checkpoint";
}

nlohmann::json checkpoint_to_json(const nk::ParameterSet& params) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& p : params.items()) {
        entries[p.name] = {{"shape", p.value.shape()},
                           {"values", std::vector<double>(p.value.values().begin(),
                                                          p.value.values().end())}};
    }
    return {{"format", kFormat}, {"version", 1}, {"parameters", std::move(entries)}};
}

void checkpoint_from_json(const nlohmann::json& doc, nk::ParameterSet& params) {
    try {
        if (doc.at("format").get<std::string>() != kFormat) {
            throw InputError("checkpoint: unexpected format tag");
        }
        const auto& entries = doc.at("parameters");
        if (entries.size() != params.size()) {
            throw InputError("checkpoint holds " + std::to_string(entries.size()) +
                             " parameters, model has " + std::to_string(params.size()));
        }
        for (auto& p : params.items()) {
            if (!entries.contains(p.name)) throw InputError("checkpoint lacks '" + p.name + "'");
            const auto& e = entries.at(p.name);
            auto shape = e.at("shape").get<nk::Shape>();
            if (shape != p.value.shape()) {
                throw InputError("checkpoint shape " + nk::to_string(shape) + " for '" + p.name +
                                 "', model has " + nk::to_string(p.value.shape()));
            }
            auto values = e.at("values").get<std::vector<double>>();
            auto dst = p.value.mutable_values();
            if (values.size() != dst.size()) {
                throw InputError("checkpoint '" + p.name + "' has " + std::to_string(values.size()) +
                                 " values");
            }
            std::copy(values.begin(), values.end(), dst.begin());
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const nk::ParameterSet& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(params).dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, nk::ParameterSet& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read checkpoint " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    checkpoint_from_json(doc, params);
}

}  // namespace reldetr::decoder
