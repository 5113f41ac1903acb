#ifndef UNETV2_CONFIG_HPP
#define UNETV2_CONFIG_HPP

#include "unetv2/data.hpp"
#include "unetv2/model.hpp"
#include "unetv2/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unetv2 {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a CLI command needs. Settings come from defaults, then a
/// `key = value` file, then command-line flags; later sources win.
struct RunConfig {
  // model
  std::size_t levels = 4;
  std::size_t fusion_channels = 32;
  /// Empty means 32, 64, 128, ... doubling per level.
  std::vector<std::size_t> encoder_channels;
  std::vector<std::size_t> decoder_channels;
  std::size_t stem_halvings = 2;
  std::size_t norm_groups = 8;
  bool shared_smoothing = false;
  Ablation ablation = Ablation::none;

  // training
  TrainConfig train;

  // data
  std::size_t size = 64;
  bool synthetic = false;
  bool hard = false;
  std::size_t count = 300;
  double val_fraction = 0.2;
  std::filesystem::path data_images;
  std::filesystem::path data_masks;
  /// Which part of the seeded split eval/predict use: val, train or all.
  std::string split = "val";

  // outputs
  std::filesystem::path out = "run";
  std::filesystem::path checkpoint;
  std::size_t repeats = 1;
  bool prob = false;

  ModelConfig model_config() const;
  SynthSpec synth_spec() const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Sets one key from its textual value; throws ConfigError for unknown keys
/// and malformed values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines, `#` starts a comment, blank lines ignored.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Every key with its effective value, in a form apply_config_text accepts.
std::string dump_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace unetv2

#endif  // UNETV2_CONFIG_HPP
