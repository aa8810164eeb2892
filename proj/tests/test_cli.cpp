#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pcrobust-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

Outcome cli(const fs::path& root, const std::string& args) {
  const auto out = root / "stdout.txt";
  const auto err = root / "stderr.txt";
  const std::string cmd = "PCR_OUTPUT_ROOT='" + root.string() + "' '" PCR_CLI_PATH "' " + args +
                          " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  o.out = trimmed(slurp(out));
  o.err = slurp(err);
  fs::remove(out);
  fs::remove(err);
  return o;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTiny = R"({
  "name": "cli",
  "dataset": {"classes": ["sphere", "cube", "cone"], "points_per_cloud": 32,
              "clouds_per_class": 20},
  "classifier": {"encoder_widths": [16, 32], "pooled_dim": 32, "head_width": 16,
                 "num_classes": 3},
  "attacks": {"pgd": {"kind": "pgd", "epsilon": 0.05, "steps": 2, "step_size": 0.02}},
  "probe_attack": "pgd",
  "mine": {"hidden": [16]},
  "advisor": {"window": 32},
  "training": {"steps": 20, "batch_size": 8, "probe_every": 10},
  "arms": ["baseline", "at_mine_ct"],
  "seeds": [0, 1]
})";

}  // namespace

TEST_CASE("run honours the output root, --seed and --serial") {
  const auto root = scratch("run");
  const auto cfg = write_config(root, "tiny.json", kTiny);
  const auto o = cli(root, "run '" + cfg.string() + "' --serial --seed 3");
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const fs::path dir(o.out);
  CHECK(dir.parent_path() == root / "runs");
  CHECK(fs::is_directory(dir / "baseline-s3"));
  CHECK(fs::is_directory(dir / "at_mine_ct-s3"));
  CHECK_FALSE(fs::exists(dir / "baseline-s0"));
  CHECK(slurp(dir / "config.json").find("\"serial\": true") != std::string::npos);

  SUBCASE("plots regenerates the plot data") {
    fs::remove_all(dir / "plots");
    const auto p = cli(root, "plots '" + dir.string() + "'");
    CHECK_MESSAGE(p.code == 0, p.err);
    CHECK(fs::is_regular_file(dir / "plots" / "accuracy.csv"));
  }
  SUBCASE("bench writes a report") {
    const auto b = cli(root, "bench '" + cfg.string() + "' --checkpoint '" +
                                 (dir / "baseline-s3" / "checkpoint.bin").string() + "'");
    REQUIRE_MESSAGE(b.code == 0, b.err);
    CHECK(fs::is_regular_file(fs::path(b.out) / "bench.json"));
  }
  SUBCASE("bench with a missing checkpoint is a runtime failure") {
    const auto b = cli(root, "bench '" + cfg.string() + "' --checkpoint '" +
                                 (root / "missing.bin").string() + "'");
    CHECK(b.code == 1);
    CHECK(b.err.find("missing.bin") != std::string::npos);
  }
  SUBCASE("plots on a broken run directory is a runtime failure") {
    fs::remove(dir / "summary.json");
    CHECK(cli(root, "plots '" + dir.string() + "'").code == 1);
  }
}

TEST_CASE("validation failures exit 2 with the field path and no output") {
  const auto root = scratch("invalid");
  std::string text = kTiny;
  text.replace(text.find("\"steps\": 20"), 11, "\"steps\": 0");
  const auto cfg = write_config(root, "bad.json", text);
  const auto o = cli(root, "run '" + cfg.string() + "'");
  CHECK(o.code == 2);
  CHECK(o.err.find("training.steps") != std::string::npos);
  CHECK_FALSE(fs::exists(root / "runs"));

  const auto mangled = write_config(root, "mangled.json", "{\"name\": [");
  CHECK(cli(root, "run '" + mangled.string() + "'").code == 2);
  CHECK(cli(root, "run '" + (root / "absent.json").string() + "'").code == 2);
  CHECK_FALSE(fs::exists(root / "runs"));
}

TEST_CASE("argument errors exit 2") {
  const auto root = scratch("args");
  CHECK(cli(root, "").code == 2);
  CHECK(cli(root, "frobnicate").code == 2);
  CHECK(cli(root, "bench '" PCR_CONFIG_DIR "/minimal.json'").code == 2);
  CHECK(cli(root, "run '" PCR_CONFIG_DIR "/minimal.json' --seed notanumber").code == 2);
}

TEST_CASE("an unwritable output root is a runtime failure") {
  const auto root = scratch("unwritable");
  const auto cfg = write_config(root, "tiny.json", kTiny);
  std::ofstream(root / "runs") << "a file where the runs directory should be";
  CHECK(cli(root, "run '" + cfg.string() + "'").code == 1);
}
