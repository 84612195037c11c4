#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "tensor.hpp"

namespace wdistill {

// On-disk layout: 8-byte little-endian manifest length N, N bytes of JSON
// manifest ({"config": ..., "tensors": [{"key", "shape"}...]}), then every
// tensor's values as little-endian IEEE-754 doubles in manifest order.
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct SavedModel {
  ModelConfig config;
  TransformerParams params;
  nlohmann::json meta;
};

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const TransformerParams& params,
                const nlohmann::json& meta = nlohmann::json::object());
// Loaded tensors are trainable leaves.
SavedModel load_model(const std::filesystem::path& path);

}  // namespace wdistill
