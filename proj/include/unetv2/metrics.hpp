#ifndef UNETV2_METRICS_HPP
#define UNETV2_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <stdexcept>

namespace unetv2 {

struct Confusion {
  std::size_t intersection = 0;  // |P and G|
  std::size_t predicted = 0;     // |P|
  std::size_t truth = 0;         // |G|
};

/// DSC, IoU and MAE as fractions in [0, 1]. DSC and IoU are 1 when both
/// prediction and ground truth are empty.
struct MetricsRecord {
  double dsc = 0;
  double iou = 0;
  double mae = 0;
};

inline double dice_from(const Confusion& c) {
  const std::size_t denom = c.predicted + c.truth;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.intersection) / static_cast<double>(denom);
}

inline double iou_from(const Confusion& c) {
  const std::size_t uni = c.predicted + c.truth - c.intersection;
  return uni == 0 ? 1.0 : static_cast<double>(c.intersection) / static_cast<double>(uni);
}

/// `prob` is binarized with `>= threshold`; MAE uses the raw probabilities.
template <typename T>
MetricsRecord compute_metrics(std::span<const T> prob, std::span<const T> target, double threshold = 0.5) {
  if (prob.size() != target.size() || prob.empty()) {
    throw std::invalid_argument("compute_metrics: prediction and target must be nonempty and equally sized");
  }
  Confusion c;
  double abs_err = 0;
  for (std::size_t k = 0; k < prob.size(); ++k) {
    const bool p = static_cast<double>(prob[k]) >= threshold;
    const bool g = target[k] >= T{0.5};
    c.intersection += p && g;
    c.predicted += p;
    c.truth += g;
    abs_err += std::abs(static_cast<double>(prob[k]) - static_cast<double>(target[k]));
  }
  return {dice_from(c), iou_from(c), abs_err / static_cast<double>(prob.size())};
}

inline MetricsRecord mean_metrics(std::span<const MetricsRecord> records) {
  MetricsRecord m;
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.dsc += r.dsc;
    m.iou += r.iou;
    m.mae += r.mae;
  }
  const auto n = static_cast<double>(records.size());
  return {m.dsc / n, m.iou / n, m.mae / n};
}

struct MeanStd {
  double mean = 0;
  /// Sample standard deviation (n - 1 denominator); 0 for a single value.
  double std = 0;
};

inline MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double ss = 0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return r;
}

/// Fractions as percentages, "90.21±0.13".
std::string format_percent(const MeanStd& m);

}  // namespace unetv2

#endif  // UNETV2_METRICS_HPP
