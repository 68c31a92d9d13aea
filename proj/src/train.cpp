#include "ismallnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "ismallnet/config.hpp"
#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace {

constexpr const char* kMomentumPrefix = "optimizer.momentum.";
constexpr const char* kCheckpointFormat = "ismallnet-checkpoint";

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}

torch::Tensor plane_tensor(std::span<const float> values, int h, int w) {
  return torch::from_blob(const_cast<float*>(values.data()), {1, 1, h, w}, torch::kFloat32).clone();
}

torch::Tensor real_map_tensor(const RealMap& map) {
  std::vector<float> v(map.size());
  std::transform(map.values().begin(), map.values().end(), v.begin(), [](double x) { return static_cast<float>(x); });
  return plane_tensor(v, map.height(), map.width());
}

torch::Tensor mask_tensor(const BinaryMask& mask) {
  std::vector<float> v(mask.size());
  std::transform(mask.values().begin(), mask.values().end(), v.begin(), [](std::uint8_t x) { return x ? 1.0f : 0.0f; });
  return plane_tensor(v, mask.height(), mask.width());
}

torch::ScalarType model_dtype(const ISmallNet& model) {
  const auto params = model->parameters();
  return params.empty() ? torch::kFloat32 : params.front().scalar_type();
}

Plane<float> to_plane(const torch::Tensor& map) {
  const auto cpu = map.detach().to(torch::kFloat32).contiguous();
  const auto h = static_cast<int>(cpu.size(-2));
  const auto w = static_cast<int>(cpu.size(-1));
  const float* p = cpu.data_ptr<float>();
  return Plane<float>(h, w, std::vector<float>(p, p + static_cast<std::size_t>(h) * w));
}

/// Restores the module's training flag on scope exit.
class InferenceScope {
 public:
  explicit InferenceScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~InferenceScope() { module_.train(was_training_); }
  InferenceScope(const InferenceScope&) = delete;
  InferenceScope& operator=(const InferenceScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
  torch::NoGradGuard no_grad_;
};

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("train: lr0 must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs)) {
    throw ConfigError("train: warmup_epochs must satisfy 0 <= warmup_epochs < epochs");
  }
  if (eval_every < 0 || max_steps < 0) throw ConfigError("train: eval_every and max_steps must be >= 0");
  if (crop < 0 || crop % 32 != 0) throw ConfigError("train: crop must be 0 or a multiple of 32");
  if (loss_weights) loss_weights->validate();
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw DomainError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  const int warmup = cfg.warmup_epochs;
  if (epoch < warmup) return cfg.lr0 * (epoch + 1) / warmup;
  return cfg.lr0 * (cfg.epochs - epoch) / (cfg.epochs - warmup);
}

Sgd::Sgd(std::vector<std::pair<std::string, torch::Tensor>> params, double momentum, double weight_decay,
         WeightDecayMode mode)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay), mode_(mode) {}

void Sgd::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.mutable_grad().defined()) p.mutable_grad().zero_();
  }
}

void Sgd::step(double lr) {
  torch::NoGradGuard guard;
  for (auto& [name, p] : params_) {
    if (!p.grad().defined()) continue;
    auto g = p.grad();
    if (weight_decay_ > 0 && mode_ == WeightDecayMode::l2) g = g + weight_decay_ * p;
    if (momentum_ > 0) {
      auto it = buffers_.find(name);
      if (it == buffers_.end()) {
        it = buffers_.emplace(name, g.clone()).first;
      } else {
        it->second.mul_(momentum_).add_(g);
      }
      g = it->second;
    }
    if (weight_decay_ > 0 && mode_ == WeightDecayMode::decoupled) p.mul_(1.0 - lr * weight_decay_);
    p.add_(g, -lr);
  }
}

void Sgd::load_state(const std::map<std::string, torch::Tensor>& buffers) {
  buffers_.clear();
  for (const auto& [name, p] : params_) {
    const auto it = buffers.find(name);
    if (it != buffers.end()) buffers_.emplace(name, it->second.to(p.options()).clone());
  }
}

Checkpoint make_checkpoint(const ISmallNet& model, const TrainConfig& train_cfg, const Sgd* optimizer) {
  Checkpoint ckpt;
  ckpt.model_config = model->config();
  ckpt.train_config = train_cfg;
  for (const auto& [name, p] : unique_parameters(*model)) {
    ckpt.parameters.emplace(name, p.detach().to(torch::kFloat32).cpu().clone());
  }
  if (optimizer) {
    for (const auto& [name, b] : optimizer->state()) {
      ckpt.momentum.emplace(name, b.detach().to(torch::kFloat32).cpu().clone());
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Archive archive;
  json manifest = {{"format", kCheckpointFormat},
                   {"version", 1},
                   {"model", ckpt.model_config},
                   {"train", ckpt.train_config},
                   {"epoch", ckpt.epoch},
                   {"step", ckpt.step},
                   {"best_miou", ckpt.best_miou},
                   {"best_epoch", ckpt.best_epoch}};
  archive.manifest = manifest.dump(2);
  auto pack = [](const torch::Tensor& t) {
    const auto c = t.to(torch::kFloat32).contiguous().cpu();
    NamedArray a;
    a.shape.assign(c.sizes().begin(), c.sizes().end());
    a.values.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    return a;
  };
  for (const auto& [name, t] : ckpt.parameters) archive.arrays.emplace(name, pack(t));
  for (const auto& [name, t] : ckpt.momentum) archive.arrays.emplace(kMomentumPrefix + name, pack(t));
  save_archive(path, archive);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Archive archive = load_archive(path);
  json manifest;
  try {
    manifest = json::parse(archive.manifest);
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": bad checkpoint manifest: " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) throw LoadError(path.string() + ": not a checkpoint");
  Checkpoint ckpt;
  ckpt.model_config = manifest.at("model").get<ModelConfig>();
  ckpt.train_config = manifest.at("train").get<TrainConfig>();
  ckpt.epoch = manifest.at("epoch").get<int>();
  ckpt.step = manifest.at("step").get<std::int64_t>();
  ckpt.best_miou = manifest.at("best_miou").get<double>();
  ckpt.best_epoch = manifest.at("best_epoch").get<int>();
  const std::string prefix = kMomentumPrefix;
  for (const auto& [name, a] : archive.arrays) {
    auto t = torch::from_blob(const_cast<float*>(a.values.data()), a.shape, torch::kFloat32).clone();
    if (name.rfind(prefix, 0) == 0) ckpt.momentum.emplace(name.substr(prefix.size()), t);
    else ckpt.parameters.emplace(name, t);
  }
  return ckpt;
}

void load_parameters(ISmallNet& model, const Checkpoint& ckpt) {
  const auto params = unique_parameters(*model);
  std::vector<std::string> problems;
  std::set<std::string> expected;
  for (const auto& [name, p] : params) {
    expected.insert(name);
    const auto it = ckpt.parameters.find(name);
    if (it == ckpt.parameters.end()) problems.push_back("missing " + name);
    else if (it->second.sizes() != p.sizes()) problems.push_back("shape mismatch " + name);
  }
  for (const auto& [name, t] : ckpt.parameters) {
    if (!expected.count(name)) problems.push_back("unexpected " + name);
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match model:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  torch::NoGradGuard guard;
  for (const auto& [name, p] : params) {
    auto target = p;
    target.copy_(ckpt.parameters.at(name).to(p.options()));
  }
}

torch::Tensor image_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  std::vector<torch::Tensor> parts;
  for (auto i : indices) {
    const auto& img = samples.at(i).image;
    parts.push_back(plane_tensor(img.values(), img.height(), img.width()));
  }
  return torch::cat(parts, 0);
}

LabelBatch label_batch(const std::vector<DecoupledLabel>& labels, const std::vector<std::size_t>& indices) {
  std::vector<torch::Tensor> gt, interior, boundary;
  for (auto i : indices) {
    const auto& l = labels.at(i);
    gt.push_back(mask_tensor(l.gt));
    interior.push_back(real_map_tensor(l.interior));
    boundary.push_back(real_map_tensor(l.boundary));
  }
  return {torch::cat(gt, 0), torch::cat(interior, 0), torch::cat(boundary, 0)};
}

std::string loss_log_header() { return "step,lr,loss_total,loss_fused,loss_interior,loss_boundary"; }

std::string format_loss_record(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.lr,
                r.loss_total, r.loss_fused, r.loss_interior, r.loss_boundary);
  return buf;
}

TrainResult train(ISmallNet& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  const ModelConfig& mcfg = model->config();
  const LossWeights weights = cfg.loss_weights.value_or(default_weights(mcfg));
  weights.validate();
  if ((weights.interior > 0 && !mcfg.has_interior()) || (weights.boundary > 0 && !mcfg.has_boundary())) {
    throw ConfigError("loss weight > 0 for a stream that variant '" + std::string(to_string(mcfg.variant)) +
                      "' does not have");
  }

  std::vector<DecoupledLabel> own_labels;
  const std::vector<DecoupledLabel>* labels = options.labels;
  if (!labels) {
    own_labels.reserve(dataset.size());
    for (const auto& s : dataset) own_labels.push_back(decouple(s.mask));
    labels = &own_labels;
  }
  if (labels->size() != dataset.size()) throw ConfigError("train: label count does not match dataset");

  Sgd optimizer(unique_parameters(*model), cfg.momentum, cfg.weight_decay, cfg.decay_mode);
  TrainResult result;
  int start_epoch = 0;
  std::int64_t step = 0;
  double best_miou = -1.0;
  int best_epoch = -1;
  if (options.resume) {
    load_parameters(model, *options.resume);
    optimizer.load_state(options.resume->momentum);
    start_epoch = options.resume->epoch;
    step = options.resume->step;
    best_miou = options.resume->best_miou;
    best_epoch = options.resume->best_epoch;
  }

  std::ofstream loss_log, metrics_log;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    loss_log.open(*options.out_dir / "loss.log", std::ios::out | mode);
    metrics_log.open(*options.out_dir / "metrics.log", std::ios::out | mode);
    if (!loss_log || !metrics_log) throw LoadError("cannot write logs in " + options.out_dir->string());
    if (!options.resume) {
      loss_log << loss_log_header() << '\n';
      metrics_log << "epoch,miou,precision,recall,f1\n";
    }
  }

  auto snapshot = [&](int epochs_done) {
    Checkpoint c = make_checkpoint(model, cfg, &optimizer);
    c.epoch = epochs_done;
    c.step = step;
    c.best_miou = best_miou;
    c.best_epoch = best_epoch;
    return c;
  };

  if (dataset.empty() && cfg.epochs > start_epoch) throw ConfigError("train: dataset is empty");
  const auto dtype = model_dtype(model);
  model->train();
  int epoch = start_epoch;
  bool stop = false;
  for (; epoch < cfg.epochs && !stop; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    auto rng = epoch_rng(cfg.seed, epoch);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + cfg.batch_size)));
      auto images = image_batch(dataset, idx);
      auto target = label_batch(*labels, idx);

      if (cfg.hflip || cfg.vflip || cfg.crop > 0) {
        std::vector<torch::Tensor> xi, xg, xin, xb;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto sl = [&](const torch::Tensor& t) { return t.narrow(0, static_cast<std::int64_t>(k), 1); };
          torch::Tensor a = sl(images), g = sl(target.gt), in = sl(target.interior), b = sl(target.boundary);
          std::vector<std::int64_t> dims;
          if (cfg.hflip && (rng() & 1u)) dims.push_back(3);
          if (cfg.vflip && (rng() & 1u)) dims.push_back(2);
          if (!dims.empty()) {
            a = a.flip(dims), g = g.flip(dims), in = in.flip(dims), b = b.flip(dims);
          }
          if (cfg.crop > 0 && cfg.crop < a.size(2) && cfg.crop < a.size(3)) {
            const auto top = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(a.size(2) - cfg.crop + 1));
            const auto left = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(a.size(3) - cfg.crop + 1));
            auto crop = [&](const torch::Tensor& t) { return t.narrow(2, top, cfg.crop).narrow(3, left, cfg.crop); };
            a = crop(a), g = crop(g), in = crop(in), b = crop(b);
          }
          xi.push_back(a), xg.push_back(g), xin.push_back(in), xb.push_back(b);
        }
        images = torch::cat(xi, 0);
        target = {torch::cat(xg, 0), torch::cat(xin, 0), torch::cat(xb, 0)};
      }
      images = images.to(dtype);
      target = {target.gt.to(dtype), target.interior.to(dtype), target.boundary.to(dtype)};

      optimizer.zero_grad();
      const ModelOutputs outputs = model->forward(images);
      const LossBreakdown loss = total_loss(outputs, target, weights, cfg.loss);
      const double total = loss.total.item<double>();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            ", lr " + std::to_string(lr));
      }
      loss.total.backward();
      optimizer.step(lr);
      ++step;

      const StepRecord record{epoch, step, lr, total, loss.fused.item<double>(), loss.interior.item<double>(),
                              loss.boundary.item<double>()};
      result.history.push_back(record);
      if (loss_log.is_open()) loss_log << format_loss_record(record) << '\n';
      if (options.on_step) options.on_step(record);
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    if (options.progress && !result.history.empty()) {
      *options.progress << "epoch " << epoch + 1 << "/" << cfg.epochs << " lr " << lr << " loss "
                        << result.history.back().loss_total << '\n';
    }

    const bool last_epoch = epoch + 1 == cfg.epochs || stop;
    if (cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
      const auto& eval_set = options.eval_set && !options.eval_set->empty() ? *options.eval_set : dataset;
      const MetricsReport report = evaluate(model, eval_set, cfg.threshold);
      if (metrics_log.is_open()) {
        metrics_log << epoch + 1 << ',' << report.miou << ',' << report.precision << ',' << report.recall << ','
                    << report.f1 << '\n';
      }
      if (report.miou > best_miou) {
        best_miou = report.miou;
        best_epoch = epoch + 1;
        result.best = snapshot(epoch + 1);
        if (options.out_dir) save_checkpoint(*options.out_dir / "best.ckpt", *result.best);
      }
    }
  }

  result.last = snapshot(epoch);
  if (result.best) {
    result.best->best_miou = best_miou;
    result.best->best_epoch = best_epoch;
  }
  if (options.out_dir) save_checkpoint(*options.out_dir / "last.ckpt", result.last);
  return result;
}

std::vector<Prediction> predict(ISmallNet& model, const std::vector<Sample>& dataset, int batch_size) {
  InferenceScope scope(*model);
  const auto dtype = model_dtype(model);
  std::vector<Prediction> out;
  out.reserve(dataset.size());
  for (std::size_t begin = 0; begin < dataset.size(); begin += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + batch_size); ++i) idx.push_back(i);
    const ModelOutputs o = model->forward(image_batch(dataset, idx).to(dtype));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto n = static_cast<std::int64_t>(k);
      Prediction p{to_plane(o.fused[n][0]), std::nullopt, std::nullopt};
      if (o.interior) p.interior = to_plane((*o.interior)[n][0]);
      if (o.boundary) p.boundary = to_plane((*o.boundary)[n][0]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

MetricsReport evaluate(ISmallNet& model, const std::vector<Sample>& dataset, double threshold, int batch_size) {
  MetricsAccumulator acc(threshold);
  InferenceScope scope(*model);
  const auto dtype = model_dtype(model);
  for (std::size_t begin = 0; begin < dataset.size(); begin += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + batch_size); ++i) idx.push_back(i);
    const auto fused = model->forward(image_batch(dataset, idx).to(dtype)).fused.to(torch::kFloat32).contiguous();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto map = fused[static_cast<std::int64_t>(k)][0].contiguous();
      acc.add(std::span<const float>(map.data_ptr<float>(), static_cast<std::size_t>(map.numel())),
              dataset[idx[k]].mask);
    }
  }
  return acc.report();
}

}  // namespace ismallnet
