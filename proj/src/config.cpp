#include "unetv2/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace unetv2 {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_uint(key, trim(item)));
  return out;
}

std::string show(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string show(bool v) { return v ? "true" : "false"; }

std::string show(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define UNETV2_SIZE_KEY(key, field)                                                       \
  Key {                                                                                   \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_uint(key, v); },        \
        [](const RunConfig& c) { return std::to_string(c.field); }                        \
  }
#define UNETV2_DOUBLE_KEY(key, field)                                                     \
  Key {                                                                                   \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); },      \
        [](const RunConfig& c) { return show(c.field); }                                  \
  }
#define UNETV2_BOOL_KEY(key, field)                                                       \
  Key {                                                                                   \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); },        \
        [](const RunConfig& c) { return show(c.field); }                                  \
  }
#define UNETV2_LIST_KEY(key, field)                                                       \
  Key {                                                                                   \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_list(key, v); },        \
        [](const RunConfig& c) { return show(c.field); }                                  \
  }
#define UNETV2_PATH_KEY(key, field)                                                       \
  Key {                                                                                   \
    key, [](RunConfig& c, const std::string& v) { c.field = v; },                         \
        [](const RunConfig& c) { return c.field.string(); }                               \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      UNETV2_SIZE_KEY("levels", levels),
      UNETV2_SIZE_KEY("c", fusion_channels),
      UNETV2_LIST_KEY("encoder_channels", encoder_channels),
      UNETV2_LIST_KEY("decoder_channels", decoder_channels),
      UNETV2_SIZE_KEY("stem_halvings", stem_halvings),
      UNETV2_SIZE_KEY("norm_groups", norm_groups),
      UNETV2_BOOL_KEY("shared_smoothing", shared_smoothing),
      Key{"ablation",
          [](RunConfig& c, const std::string& v) {
            try {
              c.ablation = parse_ablation(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(std::string("ablation: ") + e.what());
            }
          },
          [](const RunConfig& c) { return to_string(c.ablation); }},
      UNETV2_DOUBLE_KEY("lr", train.lr0),
      UNETV2_DOUBLE_KEY("beta1", train.beta1),
      UNETV2_DOUBLE_KEY("beta2", train.beta2),
      UNETV2_DOUBLE_KEY("adam_eps", train.eps),
      UNETV2_DOUBLE_KEY("poly_power", train.poly_power),
      UNETV2_SIZE_KEY("epochs", train.max_epochs),
      UNETV2_SIZE_KEY("batch", train.batch_size),
      UNETV2_SIZE_KEY("seed", train.seed),
      UNETV2_DOUBLE_KEY("bce_weight", train.loss.bce),
      UNETV2_DOUBLE_KEY("dice_weight", train.loss.dice),
      UNETV2_SIZE_KEY("size", size),
      UNETV2_BOOL_KEY("synthetic", synthetic),
      UNETV2_BOOL_KEY("hard", hard),
      UNETV2_SIZE_KEY("count", count),
      UNETV2_DOUBLE_KEY("val_fraction", val_fraction),
      UNETV2_PATH_KEY("data_images", data_images),
      UNETV2_PATH_KEY("data_masks", data_masks),
      Key{"split",
          [](RunConfig& c, const std::string& v) {
            if (v != "val" && v != "train" && v != "all") {
              throw ConfigError("split: expected val, train or all, got '" + v + "'");
            }
            c.split = v;
          },
          [](const RunConfig& c) { return c.split; }},
      UNETV2_PATH_KEY("out", out),
      UNETV2_PATH_KEY("checkpoint", checkpoint),
      UNETV2_SIZE_KEY("repeats", repeats),
      UNETV2_BOOL_KEY("prob", prob),
  };
  return table;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.levels = levels;
  m.fusion_channels = fusion_channels;
  m.encoder_channels = encoder_channels;
  if (m.encoder_channels.empty()) {
    for (std::size_t i = 0; i < levels; ++i) m.encoder_channels.push_back(std::size_t{32} << i);
  }
  m.decoder_channels = decoder_channels;
  m.stem_halvings = stem_halvings;
  m.norm_groups = norm_groups;
  m.shared_smoothing = shared_smoothing;
  return with_ablation(m, ablation);
}

SynthSpec RunConfig::synth_spec() const {
  SynthSpec s = hard ? SynthSpec::hard(count, size, train.seed) : SynthSpec{};
  s.count = count;
  s.size = size;
  s.seed = train.seed;
  return s;
}

void RunConfig::validate() const {
  try {
    const ModelConfig m = model_config();
    m.validate();
    m.validate_input(size, size);
    train.validate();
    if (synthetic) synth_spec().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (levels > 16) throw ConfigError("levels: at most 16 supported");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction: must lie in [0, 1)");
  if (repeats == 0) throw ConfigError("repeats: must be at least 1");
  if (synthetic && !(data_images.empty() && data_masks.empty())) {
    throw ConfigError("choose either synthetic data or data directories, not both");
  }
  if (!data_masks.empty() && data_images.empty()) throw ConfigError("data_masks given without data_images");
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::size_t number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str(), path.string());
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

}  // namespace unetv2
