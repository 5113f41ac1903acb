#include "unetv2/checkpoint.hpp"
#include "unetv2/config.hpp"
#include "unetv2/data.hpp"
#include "unetv2/gradcheck.hpp"
#include "unetv2/model.hpp"
#include "unetv2/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace unetv2;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<Sample> train, val;

  std::vector<Sample> select(const std::string& split) const {
    if (split == "train") return train;
    if (split == "val") return val;
    std::vector<Sample> all = train;
    all.insert(all.end(), val.begin(), val.end());
    return all;
  }
};

Dataset load_dataset(const RunConfig& cfg, bool masks_required = true) {
  std::vector<Sample> samples;
  if (cfg.synthetic) {
    samples = synth_generate(cfg.synth_spec());
  } else if (!cfg.data_images.empty()) {
    if (!cfg.data_masks.empty()) {
      samples = load_pairs(cfg.data_images, cfg.data_masks, cfg.size);
    } else if (!masks_required) {
      samples = load_images(cfg.data_images, cfg.size);
    } else {
      throw ConfigError("--data-masks is required for this command");
    }
  } else {
    throw ConfigError("no data source: pass --synthetic or --data-images/--data-masks");
  }
  const Split split = split_indices(samples.size(), cfg.train.seed, cfg.val_fraction);
  return {gather<Sample>(samples, split.train), gather<Sample>(samples, split.val)};
}

fs::path checkpoint_path(const RunConfig& cfg) { return cfg.checkpoint.empty() ? cfg.out / "best.ckpt" : cfg.checkpoint; }

UNetV2<float> load_model(const RunConfig& cfg) {
  UNetV2<float> model(cfg.model_config(), 0);
  try {
    model.load_state(load_checkpoint(checkpoint_path(cfg)));
  } catch (const std::invalid_argument& e) {
    throw RuntimeFailure(checkpoint_path(cfg).string() + " does not fit the configured model: " + e.what());
  }
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw RuntimeFailure("cannot write " + path.string());
}

int cmd_train(const RunConfig& cfg) {
  Dataset data = load_dataset(cfg);
  if (data.train.empty()) throw RuntimeFailure("training set is empty");
  fs::create_directories(cfg.out);
  write_text(cfg.out / "config.txt", dump_config(cfg));

  std::vector<double> dsc, iou;
  for (std::size_t k = 0; k < cfg.repeats; ++k) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + k;
    const fs::path dir = cfg.repeats == 1 ? cfg.out : cfg.out / ("seed" + std::to_string(tc.seed));
    fs::create_directories(dir);
    TrainOutputs outputs;
    outputs.best_checkpoint = cfg.repeats == 1 ? checkpoint_path(cfg) : dir / "best.ckpt";
    outputs.log = dir / "metrics.csv";
    outputs.abort_checkpoint = dir / "abort.ckpt";
    outputs.on_epoch = [&](const EpochRecord& r) {
      std::printf("seed %llu  %s\n", static_cast<unsigned long long>(tc.seed), format_log_line(r).c_str());
      std::fflush(stdout);
    };
    const TrainResult result = train(cfg.model_config(), tc, data.train, data.val, outputs);
    const MetricsRecord& best = result.log.at(result.best_epoch - 1).val;
    dsc.push_back(best.dsc);
    iou.push_back(best.iou);
    std::printf("seed %llu best val DSC %.4f at epoch %zu -> %s\n", static_cast<unsigned long long>(tc.seed),
                best.dsc, result.best_epoch, outputs.best_checkpoint.c_str());
  }
  if (cfg.repeats > 1) {
    std::printf("\n%-28s %-14s %-14s\n", "Method", "DSC (%)", "IoU (%)");
    std::string name = "U-Net v2";
    if (cfg.ablation == Ablation::no_sdi) name += " w/o SDI";
    if (cfg.ablation == Ablation::no_sc) name += " w/o SC";
    name += " (" + std::to_string(cfg.repeats) + " seeds)";
    std::printf("%-28s %-14s %-14s\n", name.c_str(), format_percent(mean_std(dsc)).c_str(),
                format_percent(mean_std(iou)).c_str());
  }
  return kOk;
}

int cmd_eval(const RunConfig& cfg) {
  const std::vector<Sample> samples = load_dataset(cfg).select(cfg.synthetic ? cfg.split : "all");
  if (samples.empty()) throw RuntimeFailure("evaluation set is empty");
  UNetV2<float> model = load_model(cfg);
  const Evaluation e = evaluate(model, samples, cfg.train.batch_size);

  fs::create_directories(cfg.out);
  std::ofstream csv(cfg.out / "eval.csv", std::ios::trunc);
  if (!csv) throw RuntimeFailure("cannot write " + (cfg.out / "eval.csv").string());
  csv << "id,dsc,iou,mae\n";
  char line[256];
  std::printf("%-24s %10s %10s %10s\n", "id", "DSC", "IoU", "MAE");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& r = e.per_image[i];
    std::printf("%-24s %10.6f %10.6f %10.6f\n", samples[i].id.c_str(), r.dsc, r.iou, r.mae);
    std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g\n", samples[i].id.c_str(), r.dsc, r.iou, r.mae);
    csv << line;
  }
  std::printf("%-24s %10.6f %10.6f %10.6f\n", "mean", e.mean.dsc, e.mean.iou, e.mean.mae);
  std::snprintf(line, sizeof line, "mean,%.17g,%.17g,%.17g\n", e.mean.dsc, e.mean.iou, e.mean.mae);
  csv << line;
  if (!csv.flush()) throw RuntimeFailure("cannot write " + (cfg.out / "eval.csv").string());
  return kOk;
}

int cmd_predict(const RunConfig& cfg) {
  const std::vector<Sample> samples = load_dataset(cfg, false).select(cfg.synthetic ? cfg.split : "all");
  if (samples.empty()) throw RuntimeFailure("no images to predict");
  UNetV2<float> model = load_model(cfg);
  const auto probs = predict(model, samples, cfg.train.batch_size);
  fs::create_directories(cfg.out / "pred");
  if (cfg.prob) fs::create_directories(cfg.out / "prob");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Tensor<float> mask = probs[i];
    for (auto& v : mask.values()) v = v >= 0.5f ? 1.0f : 0.0f;
    encode_png(mask, cfg.out / "pred" / (samples[i].id + ".png"));
    if (cfg.prob) encode_png(probs[i], cfg.out / "prob" / (samples[i].id + ".png"));
  }
  std::printf("wrote %zu masks to %s\n", samples.size(), (cfg.out / "pred").c_str());
  return kOk;
}

int cmd_gradcheck(const std::string& scope) {
  const auto results = run_gradcheck_suite(parse_gradcheck_scope(scope));
  bool ok = true;
  std::printf("%-22s %12s %9s %6s  %s\n", "operator", "max rel err", "probes", "kinks", "status");
  for (const auto& r : results) {
    std::printf("%-22s %12.3e %9zu %6zu  %s\n", r.name.c_str(), r.max_rel_error, r.coords, r.kinks,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kOk : kRuntime;
}

int cmd_info(const RunConfig& cfg, std::size_t batch) {
  const ModelConfig m = cfg.model_config();
  UNetV2<float> model(m, 0);
  const ParamBreakdown p = model.param_breakdown();
  const FlopReport f = estimate_flops(m, batch, cfg.size, cfg.size);
  const std::string input = std::to_string(batch) + "x" + std::to_string(m.input_channels) + "x" +
                            std::to_string(cfg.size) + "x" + std::to_string(cfg.size);
  auto row = [&](const std::string& name, std::size_t params, flops::Count count) {
    std::printf("%-22s %-16s %12zu %10.6f %16llu %10.6f\n", name.c_str(), input.c_str(), params, params / 1e6,
                static_cast<unsigned long long>(count), static_cast<double>(count) / 1e9);
  };
  std::printf("%-22s %-16s %12s %10s %16s %10s\n", "Model", "Input size", "Params", "Params (M)", "FLOPs",
              "FLOPs (G)");
  row("encoder", p.encoder, f.encoder);
  row(m.sdi_enabled ? "SDI" : "skip projection", p.skip, f.skip);
  row("decoder", p.decoder, f.decoder);
  row("head", p.head, f.head);
  std::string name = "U-Net v2";
  if (cfg.ablation == Ablation::no_sdi) name += " w/o SDI";
  if (cfg.ablation == Ablation::no_sc) name += " w/o SC";
  row(name, p.total(), f.total());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-Net v2 segmentation: train, evaluate, predict, check gradients, inspect models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::size_t info_batch = 1;
  std::string scope = "all";

  auto setting = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
                                          help);
  };
  auto switch_flag = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_flag_callback(flag, [&overrides, key] { overrides.emplace_back(key, "true"); }, help);
  };
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file (flags override it)");
    setting(sub, "--seed", "seed", "Random seed");
    setting(sub, "--size", "size", "Square input size in pixels");
    setting(sub, "--c", "c", "SDI fusion width");
    setting(sub, "--levels", "levels", "Pyramid levels M");
    setting(sub, "--ablation", "ablation", "none, no-sdi or no-sc");
    setting(sub, "--batch", "batch", "Batch size");
    switch_flag(sub, "--synthetic", "synthetic", "Use the generated dataset");
    switch_flag(sub, "--hard", "hard", "Generated dataset with small objects and heavy noise");
    setting(sub, "--count", "count", "Number of generated samples");
    setting(sub, "--data-images", "data_images", "Directory of <id>.png images");
    setting(sub, "--data-masks", "data_masks", "Directory of <id>.png masks");
    setting(sub, "--checkpoint", "checkpoint", "Checkpoint path (default <out>/best.ckpt)");
    setting(sub, "--out", "out", "Output directory");
    sub->add_option_function<std::vector<std::string>>(
        "--set",
        [&overrides](const std::vector<std::string>& items) {
          for (const auto& item : items) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + item);
            overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
          }
        },
        "Any config key, as key=value");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best validation checkpoint");
  common(train_cmd);
  setting(train_cmd, "--epochs", "epochs", "Training epochs");
  setting(train_cmd, "--lr", "lr", "Initial learning rate");
  setting(train_cmd, "--repeats", "repeats", "Train K seeds and report mean and std");

  auto* eval_cmd = app.add_subcommand("eval", "Per-image and mean DSC, IoU and MAE");
  common(eval_cmd);
  setting(eval_cmd, "--split", "split", "val, train or all (generated data)");

  auto* predict_cmd = app.add_subcommand("predict", "Write thresholded masks as PNG");
  common(predict_cmd);
  setting(predict_cmd, "--split", "split", "val, train or all (generated data)");
  switch_flag(predict_cmd, "--prob", "prob", "Also write 8-bit probability maps");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward rule");
  grad_cmd->add_option("scope", scope, "ops, sdi, model or all")->check(CLI::IsMember({"ops", "sdi", "model", "all"}));

  auto* info_cmd = app.add_subcommand("info", "Parameter and FLOP counts per module");
  common(info_cmd);
  info_cmd->add_option("--flops-batch", info_batch, "Batch size for the FLOP count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return kOk;
    std::cerr << "\n" << app.help();
    return kUsage;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& [key, value] : overrides) apply_setting(cfg, key, value);
    if (!grad_cmd->parsed()) cfg.validate();
    for (const fs::path& dir : {cfg.data_images, cfg.data_masks}) {
      if (!dir.empty() && !fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (predict_cmd->parsed()) return cmd_predict(cfg);
    if (grad_cmd->parsed()) return cmd_gradcheck(scope);
    if (info_cmd->parsed()) return cmd_info(cfg, info_batch);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
