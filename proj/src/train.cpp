#include "unetv2/train.hpp"

#include "unetv2/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

namespace unetv2 {

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw std::invalid_argument("train: initial learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("train: betas in [0, 1)");
  if (!(poly_power > 0)) throw std::invalid_argument("train: polynomial power must be positive");
  if (max_epochs == 0) throw std::invalid_argument("train: need at least one epoch");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
}

std::string format_log_line(const EpochRecord& r) {
  char line[256];
  std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", r.epoch, r.lr, r.train_loss, r.val.dsc, r.val.iou,
                r.val.mae);
  return line;
}

std::string format_percent(const MeanStd& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f\u00b1%.2f", 100 * m.mean, 100 * m.std);
  return buf;
}

std::pair<Tensor<float>, Tensor<float>> make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                                   std::size_t begin, std::size_t end) {
  const auto& first = samples[order[begin]];
  const std::size_t c = first.image.extent(0), h = first.image.extent(1), w = first.image.extent(2);
  const std::size_t b = end - begin;
  Tensor<float> images({b, c, h, w});
  Tensor<float> masks({b, 1, h, w});
  for (std::size_t k = 0; k < b; ++k) {
    const Sample& s = samples[order[begin + k]];
    if (s.image.shape() != first.image.shape() || s.mask.shape() != Shape{1, h, w}) {
      throw std::invalid_argument("batch: sample '" + s.id + "' does not match the batch geometry");
    }
    std::copy(s.image.values().begin(), s.image.values().end(), images.data() + k * c * h * w);
    std::copy(s.mask.values().begin(), s.mask.values().end(), masks.data() + k * h * w);
  }
  return {std::move(images), std::move(masks)};
}

std::vector<Tensor<float>> predict(UNetV2<float>& model, std::span<const Sample> samples, std::size_t batch_size) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor<float>> out;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    auto [images, masks] = make_batch(samples, order, begin, end);
    Graph<float> g;
    const Tensor<float>& logits = model.forward(g.constant(std::move(images))).value();
    const Dims4 d = Dims4::of(logits.shape());
    for (std::size_t k = 0; k < d.n; ++k) {
      Tensor<float> prob({1, d.h, d.w});
      for (std::size_t p = 0; p < d.plane(); ++p) prob[p] = 1.0f / (1.0f + std::exp(-logits[k * d.plane() + p]));
      out.push_back(std::move(prob));
    }
  }
  return out;
}

Evaluation evaluate(UNetV2<float>& model, std::span<const Sample> samples, std::size_t batch_size) {
  Evaluation e;
  const auto probs = predict(model, samples, batch_size);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    e.per_image.push_back(compute_metrics(probs[k].values(), samples[k].mask.values()));
  }
  e.mean = mean_metrics(e.per_image);
  return e;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const std::optional<TrainOutputs>& outputs) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  UNetV2<float> model(model_config, splitmix64(config.seed));
  auto registry = model.parameters();
  TrainState state{Adam<float>({config.beta1, config.beta2, config.eps}), 0, 0, Rng(splitmix64(config.seed + 1))};
  const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.max_epochs;

  std::ofstream log_file;
  if (outputs && !outputs->log.empty()) {
    log_file.open(outputs->log, std::ios::trunc);
    if (!log_file) throw std::runtime_error("train: cannot write log " + outputs->log.string());
    log_file << kLogHeader << '\n';
  }

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (state.epoch = 1; state.epoch <= config.max_epochs; ++state.epoch) {
    for (std::size_t i = order.size(); i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(uniform_int(state.rng, 0, static_cast<std::int64_t>(i)))]);
    }
    double loss_sum = 0;
    double lr = config.lr0;
    for (std::size_t batch = 0; batch < steps_per_epoch; ++batch) {
      const std::size_t begin = batch * config.batch_size;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      auto [images, masks] = make_batch(train_set, order, begin, end);
      try {
        Graph<float> g;
        Var<float> loss =
            dice_bce_loss(model.forward(g.constant(std::move(images))), g.constant(std::move(masks)), config.loss);
        const float value = loss.value()[0];
        if (!std::isfinite(value)) throw NonFiniteError("loss is not finite");
        model.zero_grad();
        g.backward(loss);
        lr = poly_lr(state.step, total_steps, config.lr0, config.poly_power);
        state.optimizer.step(registry, lr);
        ++state.step;
        loss_sum += static_cast<double>(value) * static_cast<double>(end - begin);
      } catch (const std::exception& e) {
        if (!dynamic_cast<const NonFiniteError*>(&e) && !dynamic_cast<const std::domain_error*>(&e)) throw;
        if (outputs && !outputs->abort_checkpoint.empty()) save_checkpoint(model.state(), outputs->abort_checkpoint);
        throw TrainingAborted("train: epoch " + std::to_string(state.epoch) + ", batch " + std::to_string(batch) +
                                  ": " + e.what(),
                              state.epoch, batch);
      }
    }

    EpochRecord record{state.epoch, lr, loss_sum / static_cast<double>(train_set.size()), {}};
    if (!val_set.empty()) record.val = evaluate(model, val_set, config.batch_size).mean;
    result.log.push_back(record);
    if (log_file.is_open()) log_file << format_log_line(record) << std::endl;
    if (outputs && outputs->on_epoch) outputs->on_epoch(record);

    if (record.val.dsc > result.best_dsc) {
      result.best_dsc = record.val.dsc;
      result.best_epoch = state.epoch;
      result.best_state = model.state();
      if (outputs && !outputs->best_checkpoint.empty()) save_checkpoint(result.best_state, outputs->best_checkpoint);
    }
  }
  result.final_state = model.state();
  return result;
}

}  // namespace unetv2
