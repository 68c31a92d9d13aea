#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ismallnet/data.hpp"
#include "ismallnet/model.hpp"
#include "ismallnet/train.hpp"

namespace ismallnet {

using json = nlohmann::json;

// Every from_json rejects unknown keys and keeps defaults for absent ones.
void to_json(json& j, const BackboneConfig& c);
void from_json(const json& j, BackboneConfig& c);
void to_json(json& j, const MnimConfig& c);
void from_json(const json& j, MnimConfig& c);
void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);
void to_json(json& j, const LossWeights& w);
void from_json(const json& j, LossWeights& w);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const SynthConfig& c);
void from_json(const json& j, SynthConfig& c);
void to_json(json& j, const LoadOptions& c);
void from_json(const json& j, LoadOptions& c);

/// The single structured config file read by every command.
struct AppConfig {
  std::filesystem::path data_root;  ///< empty: $ISMALLNET_DATA_ROOT
  std::string split = "train";
  std::string eval_split;  ///< empty: evaluate on `split`
  LoadOptions load;
  SynthConfig synth;
  int num_samples = 8;
  ModelConfig model;
  TrainConfig train;
};

void to_json(json& j, const AppConfig& c);
void from_json(const json& j, AppConfig& c);

/// Throws ConfigError (bad content) or LoadError (unreadable file).
AppConfig load_app_config(const std::filesystem::path& path);

/// Dotted paths of leaves that differ between two JSON documents.
std::vector<std::string> diff_fields(const json& a, const json& b);

}  // namespace ismallnet
