#ifndef UNETV2_TRAIN_HPP
#define UNETV2_TRAIN_HPP

#include "unetv2/data.hpp"
#include "unetv2/loss.hpp"
#include "unetv2/metrics.hpp"
#include "unetv2/model.hpp"
#include "unetv2/optim.hpp"
#include "unetv2/random.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unetv2 {

struct TrainConfig {
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double poly_power = 0.9;
  std::size_t max_epochs = 300;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  LossWeights loss;

  void validate() const;
};

/// Exclusive state of one training run. The schedule advances per optimizer step.
struct TrainState {
  Adam<float> optimizer;
  std::size_t step = 0;
  std::size_t epoch = 0;
  Rng rng;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  MetricsRecord val;
};

/// "epoch,lr,train_loss,val_dsc,val_iou,val_mae"
std::string format_log_line(const EpochRecord& r);
inline constexpr const char* kLogHeader = "epoch,lr,train_loss,val_dsc,val_iou,val_mae";

struct TrainOutputs {
  std::filesystem::path best_checkpoint;  // rewritten whenever validation DSC improves
  std::filesystem::path log;              // one line per epoch, flushed as written
  std::filesystem::path abort_checkpoint;  // parameters at the failing batch
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  NamedTensors best_state;
  NamedTensors final_state;
  double best_dsc = -1;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> log;
};

/// Raised when a batch produces a non-finite loss or gradient.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const std::optional<TrainOutputs>& outputs = std::nullopt);

/// Stacks samples [begin, end) into (B, 3, H, W) images and (B, 1, H, W) masks.
std::pair<Tensor<float>, Tensor<float>> make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                                   std::size_t begin, std::size_t end);

/// Sigmoid probabilities, one (1, H, W) map per sample.
std::vector<Tensor<float>> predict(UNetV2<float>& model, std::span<const Sample> samples, std::size_t batch_size = 8);

struct Evaluation {
  std::vector<MetricsRecord> per_image;
  MetricsRecord mean;
};

Evaluation evaluate(UNetV2<float>& model, std::span<const Sample> samples, std::size_t batch_size = 8);

}  // namespace unetv2

#endif  // UNETV2_TRAIN_HPP
