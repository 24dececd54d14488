#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "addnet/model.hpp"

namespace addnet {

/// A saved detector. Parameters are stored per named array so a file can be
/// inspected without knowing the flat layout.
struct Checkpoint {
  model::Detector<float> detector;
  long step = 0;
  std::string id;         // "step-<N>-<parameter hash>"
  nlohmann::json extra;   // caller metadata, e.g. the resolved run config
};

std::string checkpoint_id(const model::Detector<float>& detector, long step);

void save_checkpoint(const std::filesystem::path& path, const model::Detector<float>& detector,
                     long step, const nlohmann::json& extra = nlohmann::json::object());

/// Throws SchemaError on a malformed file and ShapeMismatch when an array
/// disagrees with the stored spec.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace addnet
