#pragma once

#include <json.hpp>

#include "gateprune/model_spec.hpp"

namespace gateprune {

// Documented JSON schema for specs: name, input_shape, num_classes, nodes
// (id/kind/prunable/artificial plus the kind's attribute object), edges as
// [producer, consumer] pairs, branches, blocks, and shortcut sites.
// Round-tripping load(save(spec)) is lossless.
nlohmann::ordered_json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::ordered_json& j);

void save_spec(const ModelSpec& spec, const std::string& path);
ModelSpec load_spec(const std::string& path);

}  // namespace gateprune
