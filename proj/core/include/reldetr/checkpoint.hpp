#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "reldetr/parameter.hpp"

namespace reldetr::decoder {

/// {"format": "reldetr-checkpoint", "version": 1,
///  "parameters": {name: {"shape": [...], "values": [...]}}}
/// Values are float64 printed in shortest round-trip form.
nlohmann::json checkpoint_to_json(const nk::ParameterSet& params);

/// Overwrites the values of existing parameters in place. Every parameter
/// must be present with a matching shape; extra entries are rejected.
void checkpoint_from_json(const nlohmann::json& doc, nk::ParameterSet& params);

void save_checkpoint(const nk::ParameterSet& params, const std::filesystem::path& path);
void load_checkpoint(const std::filesystem::path& path, nk::ParameterSet& params);

}  // namespace reldetr::decoder
