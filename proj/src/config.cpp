#include "ismallnet/config.hpp"

#include <fstream>
#include <set>

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  const std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!names.count(key)) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename E, std::size_t N>
E parse_enum(const std::string& value, const std::array<std::pair<const char*, E>, N>& table, const char* what) {
  for (const auto& [name, e] : table) {
    if (value == name) return e;
  }
  std::string valid;
  for (const auto& [name, e] : table) valid += (valid.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(std::string("unknown ") + what + " '" + value + "'; valid: " + valid);
}

template <typename E, std::size_t N>
std::string enum_name(E value, const std::array<std::pair<const char*, E>, N>& table) {
  for (const auto& [name, e] : table) {
    if (e == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<const char*, ColumnMode>, 2> kColumnModes{
    {{"seeded", ColumnMode::seeded}, {"recursive", ColumnMode::recursive}}};
constexpr std::array<std::pair<const char*, IbfmGate>, 2> kGates{
    {{"sigmoid", IbfmGate::sigmoid}, {"none", IbfmGate::none}}};
constexpr std::array<std::pair<const char*, WeightDecayMode>, 2> kDecayModes{
    {{"l2", WeightDecayMode::l2}, {"decoupled", WeightDecayMode::decoupled}}};
constexpr std::array<std::pair<const char*, LossKind>, 2> kLosses{
    {{"soft_iou", LossKind::soft_iou}, {"bce", LossKind::bce}}};

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) flatten(value, prefix.empty() ? key : prefix + "." + key, out);
  } else {
    out[prefix] = j;
  }
}

}  // namespace

void to_json(json& j, const BackboneConfig& c) {
  j = {{"stage_channels", c.stage_channels},
       {"blocks_per_stage", c.blocks_per_stage},
       {"share_encoders", c.share_encoders}};
}

void from_json(const json& j, BackboneConfig& c) {
  reject_unknown(j, {"stage_channels", "blocks_per_stage", "share_encoders"}, "backbone");
  std::vector<int> channels(c.stage_channels.begin(), c.stage_channels.end());
  std::vector<int> blocks(c.blocks_per_stage.begin(), c.blocks_per_stage.end());
  read(j, "stage_channels", channels);
  read(j, "blocks_per_stage", blocks);
  if (channels.size() != 5 || blocks.size() != 5) throw ConfigError("backbone: exactly 5 stages are required");
  std::copy(channels.begin(), channels.end(), c.stage_channels.begin());
  std::copy(blocks.begin(), blocks.end(), c.blocks_per_stage.begin());
  read(j, "share_encoders", c.share_encoders);
  c.validate();
}

void to_json(json& j, const MnimConfig& c) {
  j = {{"levels", c.levels},
       {"node_width", c.node_width},
       {"conv_block_depth", c.conv_block_depth},
       {"column_mode", enum_name(c.column_mode, kColumnModes)}};
}

void from_json(const json& j, MnimConfig& c) {
  reject_unknown(j, {"levels", "node_width", "conv_block_depth", "column_mode"}, "mnim");
  read(j, "levels", c.levels);
  read(j, "node_width", c.node_width);
  read(j, "conv_block_depth", c.conv_block_depth);
  if (j.contains("column_mode")) c.column_mode = parse_enum(j.at("column_mode").get<std::string>(), kColumnModes, "column_mode");
  c.validate();
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"backbone", c.backbone},
       {"mnim", c.mnim},
       {"variant", std::string(to_string(c.variant))},
       {"head_width", c.head_width},
       {"ibfm_gate", enum_name(c.ibfm_gate, kGates)},
       {"project_norm", c.project_norm},
       {"head_bias_init", c.head_bias_init},
       {"deep_supervision", c.deep_supervision}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, {"backbone", "mnim", "variant", "head_width", "ibfm_gate", "project_norm", "head_bias_init",
                     "deep_supervision"},
                 "model");
  read(j, "backbone", c.backbone);
  read(j, "mnim", c.mnim);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  read(j, "head_width", c.head_width);
  if (j.contains("ibfm_gate")) c.ibfm_gate = parse_enum(j.at("ibfm_gate").get<std::string>(), kGates, "ibfm_gate");
  read(j, "project_norm", c.project_norm);
  read(j, "head_bias_init", c.head_bias_init);
  read(j, "deep_supervision", c.deep_supervision);
  c.mnim.topology = c.topology();
  c.validate();
}

void to_json(json& j, const LossWeights& w) {
  j = {{"fused", w.fused}, {"interior", w.interior}, {"boundary", w.boundary}};
}

void from_json(const json& j, LossWeights& w) {
  reject_unknown(j, {"fused", "interior", "boundary"}, "loss_weights");
  read(j, "fused", w.fused);
  read(j, "interior", w.interior);
  read(j, "boundary", w.boundary);
  w.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"lr0", c.lr0},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"warmup_epochs", c.warmup_epochs},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"decay_mode", enum_name(c.decay_mode, kDecayModes)},
       {"loss", enum_name(c.loss, kLosses)},
       {"hflip", c.hflip},
       {"vflip", c.vflip},
       {"crop", c.crop},
       {"max_steps", c.max_steps},
       {"threshold", c.threshold}};
  j["loss_weights"] = c.loss_weights ? json(*c.loss_weights) : json(nullptr);
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j, {"lr0", "momentum", "weight_decay", "batch_size", "epochs", "warmup_epochs", "seed", "eval_every",
                     "decay_mode", "loss", "loss_weights", "hflip", "vflip", "crop", "max_steps", "threshold"},
                 "train");
  read(j, "lr0", c.lr0);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "warmup_epochs", c.warmup_epochs);
  read(j, "seed", c.seed);
  read(j, "eval_every", c.eval_every);
  if (j.contains("decay_mode")) c.decay_mode = parse_enum(j.at("decay_mode").get<std::string>(), kDecayModes, "decay_mode");
  if (j.contains("loss")) c.loss = parse_enum(j.at("loss").get<std::string>(), kLosses, "loss");
  if (j.contains("loss_weights")) {
    if (j.at("loss_weights").is_null()) c.loss_weights.reset();
    else c.loss_weights = j.at("loss_weights").get<LossWeights>();
  }
  read(j, "hflip", c.hflip);
  read(j, "vflip", c.vflip);
  read(j, "crop", c.crop);
  read(j, "max_steps", c.max_steps);
  read(j, "threshold", c.threshold);
  c.validate();
}

void to_json(json& j, const SynthConfig& c) {
  j = {{"height", c.height},
       {"width", c.width},
       {"num_targets", c.num_targets},
       {"radius_min", c.radius_min},
       {"radius_max", c.radius_max},
       {"target_scr", c.target_scr},
       {"clutter_smoothness", c.clutter_smoothness},
       {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  reject_unknown(j, {"height", "width", "num_targets", "radius_min", "radius_max", "target_scr",
                     "clutter_smoothness", "seed"},
                 "synth");
  read(j, "height", c.height);
  read(j, "width", c.width);
  read(j, "num_targets", c.num_targets);
  read(j, "radius_min", c.radius_min);
  read(j, "radius_max", c.radius_max);
  read(j, "target_scr", c.target_scr);
  read(j, "clutter_smoothness", c.clutter_smoothness);
  read(j, "seed", c.seed);
  c.validate();
}

void to_json(json& j, const LoadOptions& c) {
  j = {{"height", c.height}, {"width", c.width}, {"mask_tolerance", c.mask_tolerance}};
}

void from_json(const json& j, LoadOptions& c) {
  reject_unknown(j, {"height", "width", "mask_tolerance"}, "load");
  read(j, "height", c.height);
  read(j, "width", c.width);
  read(j, "mask_tolerance", c.mask_tolerance);
}

void to_json(json& j, const AppConfig& c) {
  j = {{"data_root", c.data_root.string()},
       {"split", c.split},
       {"eval_split", c.eval_split},
       {"load", c.load},
       {"synth", c.synth},
       {"num_samples", c.num_samples},
       {"model", c.model},
       {"train", c.train}};
}

void from_json(const json& j, AppConfig& c) {
  reject_unknown(j, {"data_root", "split", "eval_split", "load", "synth", "num_samples", "model", "train"}, "config");
  std::string root = c.data_root.string();
  read(j, "data_root", root);
  c.data_root = root;
  read(j, "split", c.split);
  read(j, "eval_split", c.eval_split);
  read(j, "load", c.load);
  read(j, "synth", c.synth);
  read(j, "num_samples", c.num_samples);
  read(j, "model", c.model);
  read(j, "train", c.train);
  if (c.num_samples < 0) throw ConfigError("num_samples must be >= 0");
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return j.get<AppConfig>();
}

std::vector<std::string> diff_fields(const json& a, const json& b) {
  std::map<std::string, json> fa, fb;
  flatten(a, "", fa);
  flatten(b, "", fb);
  std::vector<std::string> out;
  for (const auto& [key, value] : fa) {
    const auto it = fb.find(key);
    if (it == fb.end() || it->second != value) out.push_back(key);
  }
  for (const auto& [key, value] : fb) {
    if (!fa.count(key)) out.push_back(key);
  }
  return out;
}

}  // namespace ismallnet
