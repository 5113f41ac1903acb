#include "unetv2/checkpoint.hpp"
#include "unetv2/config.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace unetv2;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "unetv2_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path tmp = fs::temp_directory_path() / "unetv2_test_cli";
  fs::create_directories(tmp);
  const fs::path out = tmp / "stdout.txt", err = tmp / "stderr.txt";
  const std::string command =
      std::string("'") + UNETV2_CLI_PATH + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(command.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small model and data so every command runs in about a second.
const std::string kToy =
    "--synthetic --size 32 --count 24 --levels 3 --c 4 --batch 8 --set encoder_channels=4,8,8 --set norm_groups=2";

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config defaults") {
  RunConfig c;
  const auto m = c.model_config();
  CHECK(m.levels == 4);
  CHECK(m.fusion_channels == 32);
  CHECK(m.encoder_channels == std::vector<std::size_t>{32, 64, 128, 256});
  CHECK(m.sdi_enabled);
  CHECK(m.attention_enabled);
  CHECK(c.train.lr0 == 1e-3);
  CHECK(c.size == 64);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config precedence and parsing") {
  RunConfig c;
  apply_config_text(c,
                    "# comment line\n"
                    "levels = 3   # trailing comment\n"
                    "\n"
                    "c=8\n"
                    "  lr = 0.005\n"
                    "ablation = no-sc\n"
                    "encoder_channels = 8, 16, 16\n"
                    "synthetic = true\n");
  CHECK(c.levels == 3);
  CHECK(c.fusion_channels == 8);
  CHECK(c.train.lr0 == 0.005);
  CHECK(c.synthetic);
  CHECK(c.model_config().encoder_channels == std::vector<std::size_t>{8, 16, 16});
  CHECK_FALSE(c.model_config().attention_enabled);
  CHECK(c.model_config().sdi_enabled);

  apply_setting(c, "lr", "0.01");
  apply_setting(c, "ablation", "no-sdi");
  CHECK(c.train.lr0 == 0.01);
  CHECK_FALSE(c.model_config().sdi_enabled);

  CHECK_THROWS_AS(apply_setting(c, "learning_rate", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "levels", "three"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "levels", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "lr", "1e-3x"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "synthetic", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "ablation", "w/o"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "split", "test"), ConfigError);
  CHECK_THROWS_WITH_AS(apply_config_text(c, "levels = 3\nbogus = 1\n", "run.cfg"), doctest::Contains("run.cfg:2"),
                       ConfigError);
  CHECK_THROWS_AS(apply_config_text(c, "levels 3\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_file(c, "/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("config validation") {
  RunConfig c;
  c.size = 48;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.encoder_channels = {8, 8};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.train.lr0 = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.synthetic = true;
  c.data_images = "/tmp";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.repeats = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config round trip") {
  RunConfig c;
  apply_config_text(c, "levels = 3\nencoder_channels = 4,8,8\nlr = 0.0007\npoly_power = 0.85\nbce_weight = 0.3\n"
                        "out = some/dir\nshared_smoothing = true\nhard = true\nval_fraction = 0.1\n");
  const std::string dumped = dump_config(c);
  RunConfig d;
  apply_config_text(d, dumped);
  CHECK(dump_config(d) == dumped);
  CHECK(d.train.lr0 == c.train.lr0);
  CHECK(d.train.loss.bce == 0.3);
  CHECK(d.out == "some/dir");
  for (const auto& key : config_keys()) CHECK(dumped.find(key + " = ") != std::string::npos);
}

TEST_CASE("cli usage errors") {
  auto r = cli("");
  CHECK(r.code == 1);
  r = cli("train --no-such-flag");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = cli("frobnicate");
  CHECK(r.code == 1);
  r = cli("train --synthetic --size 30");
  CHECK(r.code == 1);
  CHECK(r.err.find("config error") != std::string::npos);
  r = cli("train --synthetic --set nonsense=1");
  CHECK(r.code == 1);
  r = cli("train --synthetic --ablation w/o");
  CHECK(r.code == 1);
  r = cli("train --size 32");
  CHECK(r.code == 1);
  r = cli("eval --synthetic --data-images /nonexistent/dir");
  CHECK(r.code == 1);
  r = cli("gradcheck everything");
  CHECK(r.code == 1);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("cli train, eval, predict") {
  const fs::path dir = work_dir("pipeline");
  const fs::path run = dir / "run";
  auto r = cli("train " + kToy + " --epochs 3 --seed 5 --out '" + run.string() + "'");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "config.txt"));
  const auto log = read_csv(run / "metrics.csv");
  REQUIRE(log.size() == 4);
  CHECK(log[0] == std::vector<std::string>{"epoch", "lr", "train_loss", "val_dsc", "val_iou", "val_mae"});
  double best_val = 0;
  for (std::size_t i = 1; i < log.size(); ++i) best_val = std::max(best_val, std::stod(log[i][3]));

  SUBCASE("effective config reproduces the run bitwise") {
    const fs::path again = dir / "again";
    r = cli("train --config '" + (run / "config.txt").string() + "' --out '" + again.string() + "'");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(again / "best.ckpt") == slurp(run / "best.ckpt"));
    CHECK(slurp(again / "metrics.csv") == slurp(run / "metrics.csv"));
  }
  SUBCASE("eval") {
    r = cli("eval --config '" + (run / "config.txt").string() + "'");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto rows = read_csv(run / "eval.csv");
    REQUIRE(rows.size() == 2 + 4);  // header, 4 validation images, mean
    CHECK(rows[0] == std::vector<std::string>{"id", "dsc", "iou", "mae"});
    for (std::size_t col = 1; col <= 3; ++col) {
      double sum = 0;
      for (std::size_t i = 1; i + 1 < rows.size(); ++i) sum += std::stod(rows[i][col]);
      CHECK(std::abs(sum / 4 - std::stod(rows.back()[col])) <= 1e-9);
    }
    CHECK(rows.back()[0] == "mean");
    CHECK(std::abs(std::stod(rows.back()[1]) - best_val) <= 1e-6);

    r = cli("eval --config '" + (run / "config.txt").string() + "' --split train");
    REQUIRE(r.code == 0);
    CHECK(read_csv(run / "eval.csv").size() == 2 + 20);
  }
  SUBCASE("predict") {
    const fs::path out1 = dir / "p1", out2 = dir / "p2";
    const std::string base = "predict --config '" + (run / "config.txt").string() + "' --checkpoint '" +
                             (run / "best.ckpt").string() + "' --split all --prob --out ";
    REQUIRE(cli(base + "'" + out1.string() + "'").code == 0);
    REQUIRE(cli(base + "'" + out2.string() + "'").code == 0);
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(out1 / "pred")) {
      ++count;
      const auto mask = decode_png(e.path());
      CHECK(mask.shape() == Shape{1, 32, 32});
      for (float v : mask.values()) CHECK((v == 0.0f || v == 1.0f));
      CHECK(slurp(e.path()) == slurp(out2 / "pred" / e.path().filename()));
      CHECK(decode_png(out1 / "prob" / e.path().filename()).shape() == Shape{1, 32, 32});
    }
    CHECK(count == 24);
  }
  SUBCASE("runtime failures") {
    r = cli("eval " + kToy + " --checkpoint '" + (dir / "missing.ckpt").string() + "' --out '" + dir.string() + "'");
    CHECK(r.code == 2);
    std::ofstream(dir / "corrupt.ckpt") << "JUNKJUNKJUNK";
    r = cli("eval " + kToy + " --checkpoint '" + (dir / "corrupt.ckpt").string() + "' --out '" + dir.string() + "'");
    CHECK(r.code == 2);
    CHECK(r.err.find("bad magic") != std::string::npos);
    r = cli("eval " + kToy + " --set c=8 --checkpoint '" + (run / "best.ckpt").string() + "' --out '" + dir.string() +
            "'");
    CHECK(r.code == 2);

    const fs::path images = dir / "empty_images", masks = dir / "empty_masks";
    fs::create_directories(images);
    fs::create_directories(masks);
    r = cli("eval --size 32 --levels 3 --c 4 --set encoder_channels=4,8,8 --set norm_groups=2 --data-images '" +
            images.string() + "' --data-masks '" + masks.string() + "' --checkpoint '" + (run / "best.ckpt").string() +
            "' --out '" + dir.string() + "'");
    CHECK(r.code == 2);
    CHECK(r.err.find("empty") != std::string::npos);
  }
}

TEST_CASE("cli directory data") {
  const fs::path dir = work_dir("dirs");
  SynthSpec spec;
  spec.count = 10;
  spec.size = 32;
  spec.seed = 8;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (const auto& s : synth_generate(spec)) {
    encode_png(s.image, dir / "images" / (s.id + ".png"));
    encode_png(s.mask, dir / "masks" / (s.id + ".png"));
  }
  const std::string data = " --size 32 --levels 3 --c 4 --set encoder_channels=4,8,8 --set norm_groups=2 --data-images '" +
                           (dir / "images").string() + "' --data-masks '" + (dir / "masks").string() + "' --out '" +
                           (dir / "run").string() + "'";
  auto r = cli("train --epochs 1" + data);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli("eval" + data);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_csv(dir / "run" / "eval.csv").size() == 12);
  r = cli("predict --size 32 --levels 3 --c 4 --set encoder_channels=4,8,8 --set norm_groups=2 --data-images '" +
          (dir / "images").string() + "' --out '" + (dir / "run").string() + "'");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t count = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "run" / "pred")) ++count;
  CHECK(count == 10);
}

TEST_CASE("cli repeats table") {
  const fs::path dir = work_dir("repeats");
  auto r = cli("train " + kToy + " --epochs 1 --repeats 2 --out '" + dir.string() + "'");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "seed0" / "best.ckpt"));
  CHECK(fs::exists(dir / "seed1" / "best.ckpt"));
  CHECK(r.out.find("DSC (%)") != std::string::npos);
  CHECK(r.out.find("±") != std::string::npos);
}

TEST_CASE("cli info") {
  auto parse = [](const std::string& text) {
    std::vector<std::pair<unsigned long long, unsigned long long>> rows;
    for (const auto& line : lines_of(text)) {
      std::stringstream ss(line);
      std::vector<std::string> cells;
      for (std::string cell; ss >> cell;) cells.push_back(cell);
      if (cells.size() < 6 || cells[0] == "Model") continue;
      rows.emplace_back(std::stoull(cells[cells.size() - 4]), std::stoull(cells[cells.size() - 2]));
    }
    return rows;
  };
  auto full = cli("info --size 256");
  REQUIRE(full.code == 0);
  const auto rows = parse(full.out);
  REQUIRE(rows.size() == 5);
  unsigned long long params = 0, flops = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    params += rows[i].first;
    flops += rows[i].second;
  }
  CHECK(rows[4].first == params);
  CHECK(rows[4].second == flops);
  CHECK(full.out.find("256") != std::string::npos);

  const auto no_sc = parse(cli("info --size 256 --ablation no-sc").out);
  REQUIRE(no_sc.size() == 5);
  CHECK(no_sc[4].first < rows[4].first);
  const auto no_sdi = cli("info --size 256 --ablation no-sdi");
  CHECK(no_sdi.out.find("w/o SDI") != std::string::npos);

  const auto batch2 = parse(cli("info --size 256 --flops-batch 2").out);
  REQUIRE(batch2.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(batch2[i].second == 2 * rows[i].second);
    CHECK(batch2[i].first == rows[i].first);
  }
}

TEST_CASE("cli gradcheck") {
  auto r = cli("gradcheck sdi");
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("sdi_forward") != std::string::npos);
}

TEST_CASE("cli eval on training data is at least the logged validation DSC") {
  for (int seed : {1, 2, 3}) {
    const fs::path dir = work_dir("direction" + std::to_string(seed));
    auto r = cli("train --synthetic --size 32 --count 200 --levels 3 --c 8 --set encoder_channels=8,16,16 "
                 "--set norm_groups=4 --set stem_halvings=1 --epochs 40 --lr 0.003 --seed " +
                 std::to_string(seed) + " --out '" + dir.string() + "'");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto log = read_csv(dir / "metrics.csv");
    double best_val = 0;
    for (std::size_t i = 1; i < log.size(); ++i) best_val = std::max(best_val, std::stod(log[i][3]));
    r = cli("eval --config '" + (dir / "config.txt").string() + "' --split train");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const double train_dsc = std::stod(read_csv(dir / "eval.csv").back()[1]);
    INFO("seed " << seed << " train " << train_dsc << " best val " << best_val);
    CHECK(train_dsc >= best_val);
  }
}
