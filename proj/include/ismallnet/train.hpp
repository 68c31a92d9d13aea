#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ismallnet/archive.hpp"
#include "ismallnet/data.hpp"
#include "ismallnet/decouple.hpp"
#include "ismallnet/losses.hpp"
#include "ismallnet/metrics.hpp"
#include "ismallnet/model.hpp"

namespace ismallnet {

enum class WeightDecayMode { l2, decoupled };

struct TrainConfig {
  double lr0 = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 16;
  int epochs = 1500;
  int warmup_epochs = 5;
  std::uint64_t seed = 1;
  int eval_every = 0;  ///< epochs between evaluations; 0 disables
  WeightDecayMode decay_mode = WeightDecayMode::l2;
  LossKind loss = LossKind::soft_iou;
  std::optional<LossWeights> loss_weights;  ///< unset: default_weights(model)
  bool hflip = false;
  bool vflip = false;
  int crop = 0;        ///< random square crop side (multiple of 32); 0 disables
  int max_steps = 0;   ///< stop after this many optimizer steps; 0 = no limit
  double threshold = kDefaultThreshold;

  void validate() const;
};

/// Linear warmup to lr0 over the first W epochs, then linear decay reaching 0 at `epochs`:
/// epoch < W: lr0 (epoch + 1) / W;  otherwise lr0 (epochs - epoch) / (epochs - W).
/// Throws DomainError outside [0, epochs).
double lr_schedule(int epoch, const TrainConfig& cfg);

/// SGD with momentum; weight decay either as an L2 gradient term or decoupled.
class Sgd {
 public:
  Sgd(std::vector<std::pair<std::string, torch::Tensor>> params, double momentum, double weight_decay,
      WeightDecayMode mode);

  void zero_grad();
  void step(double lr);

  /// Momentum buffers keyed by parameter name (absent until the first step).
  const std::map<std::string, torch::Tensor>& state() const { return buffers_; }
  void load_state(const std::map<std::string, torch::Tensor>& buffers);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::map<std::string, torch::Tensor> buffers_;
  double momentum_;
  double weight_decay_;
  WeightDecayMode mode_;
};

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  int epoch = 0;  ///< epochs completed
  std::int64_t step = 0;
  double best_miou = -1.0;
  int best_epoch = -1;
  std::map<std::string, torch::Tensor> parameters;  ///< float32, CPU
  std::map<std::string, torch::Tensor> momentum;
};

/// Snapshot of a model's parameters (and optionally optimizer state).
Checkpoint make_checkpoint(const ISmallNet& model, const TrainConfig& train_cfg, const Sgd* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies checkpoint parameters into `model`; throws ConfigError listing missing/unexpected names.
void load_parameters(ISmallNet& model, const Checkpoint& checkpoint);

/// Images [N,1,H,W] float32 for the selected samples.
torch::Tensor image_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);
LabelBatch label_batch(const std::vector<DecoupledLabel>& labels, const std::vector<std::size_t>& indices);

/// One line per optimizer step.
struct StepRecord {
  int epoch;
  std::int64_t step;
  double lr;
  double loss_total;
  double loss_fused;
  double loss_interior;
  double loss_boundary;
};

/// Header + records as `step, lr, loss_total, loss_fused, loss_interior, loss_boundary`.
std::string loss_log_header();
std::string format_loss_record(const StepRecord& r);

struct TrainOptions {
  /// Evaluation set for periodic evaluation; the training set when empty.
  const std::vector<Sample>* eval_set = nullptr;
  /// Writes `last.ckpt`, `best.ckpt`, `loss.log`, `metrics.log` here when set.
  std::optional<std::filesystem::path> out_dir;
  /// Continue from this checkpoint (parameters, momentum, epoch, best record).
  const Checkpoint* resume = nullptr;
  /// Precomputed decoupled labels aligned with the training set.
  const std::vector<DecoupledLabel>* labels = nullptr;
  std::function<void(const StepRecord&)> on_step;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  Checkpoint last;
  std::optional<Checkpoint> best;
  std::vector<StepRecord> history;
};

/// SGD training with per-epoch schedule and shuffles seeded by (seed, epoch).
/// Throws TrainingError if the loss becomes non-finite.
TrainResult train(ISmallNet& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Forward every sample in inference mode and pool counts on the fused map.
MetricsReport evaluate(ISmallNet& model, const std::vector<Sample>& dataset, double threshold = kDefaultThreshold,
                       int batch_size = 8);

/// Model inference for one sample: fused / interior / boundary probability maps.
struct Prediction {
  Plane<float> fused;
  std::optional<Plane<float>> interior;
  std::optional<Plane<float>> boundary;
};
std::vector<Prediction> predict(ISmallNet& model, const std::vector<Sample>& dataset, int batch_size = 8);

}  // namespace ismallnet
