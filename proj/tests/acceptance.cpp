// Acceptance gate: one PASS/FAIL line per criterion. Criterion 9 is
// informational. Exit status is non-zero when any gated criterion fails.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "pcrobust/attacks.hpp"
#include "pcrobust/curriculum.hpp"
#include "pcrobust/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

using namespace pcr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs <= limit_s;
  const bool pass = v.pass && in_time;
  if (!pass) ++failures;
  std::printf("criterion %2d %-4s %s | %s | %.1fs (limit %.0fs)\n", id, pass ? "PASS" : "FAIL",
              title, v.detail.c_str(), secs, limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Verdict gaussian_case(double rho) {
  const auto est = testing::gaussian_oracle_run(rho, 1);
  const double truth = testing::gaussian_mi(rho);
  const double err = std::abs(est.value - truth);
  return {err <= 0.1, "rho=" + fmt("%.1f", rho) + " est=" + fmt("%.4f", est.value) +
                          " truth=" + fmt("%.4f", truth) + " |err|=" + fmt("%.4f", err) + " <= 0.1"};
}

Verdict null_case() {
  MineConfig cfg;
  cfg.hidden = {64, 64};
  DualEstimators est(6, 4, cfg);
  Rng rng(21);
  auto stream = [](Rng& r) { return testing::null_perturbation_batch(128, r); };
  train_estimators(est, stream, 800, rng);
  double adv = 0.0;
  for (int k = 0; k < 10; ++k) adv += est.estimate(stream(rng), rng).adversarial.value / 10.0;
  return {std::abs(adv) <= 0.05, "I_A=" + fmt("%.4f", adv) + " in [-0.05, 0.05]"};
}

Verdict xor_case() {
  std::string detail;
  bool ok = true;
  for (double p : {0.1, 0.3, 0.5}) {
    const auto r = pinsker_xor_channel(p);
    ok = ok && r.delta_pe <= r.bound;
    detail += "p=" + fmt("%.1f", p) + ": " + fmt("%.4f", r.delta_pe) + "<=" + fmt("%.4f", r.bound) + " ";
  }
  return {ok, detail};
}

Verdict attack_contracts() {
  const auto data = generate_dataset(testing::small_spec(25));  // 100 clouds
  const auto model = testing::trained_classifier(data, 300);
  int violations = 0;
  std::map<std::string, int> by;
  auto bad = [&](const char* what) {
    ++violations;
    ++by[what];
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& cloud = data[i];
    const auto n = cloud.points.rows();
    const auto mask = saliency_mask(saliency_scores(model, cloud), 0.5);
    for (auto kind : {AttackKind::kPgd, AttackKind::kIfgm, AttackKind::kSia}) {
      AttackConfig cfg{kind, 0.05, 10, 0.01};
      cfg.seed = i;
      const auto rec = run_attack(model, cloud, cfg);
      if (rec.rho.cwiseAbs().maxCoeff() > cfg.epsilon + 1e-12) bad("box");
      for (Eigen::Index r = 0; r < n; ++r) {
        if (!mask[static_cast<std::size_t>(r)] && rec.rho.row(r).cwiseAbs().maxCoeff() != 0.0) bad("mask");
      }
      if (kind == AttackKind::kSia) {
        const Points normals = estimate_normals(cloud.points, 8);
        for (Eigen::Index r = 0; r < n; ++r) {
          if (!normals.row(r).allFinite()) continue;
          const double along = std::abs(rec.rho.row(r).dot(normals.row(r)));
          if (along > 1e-5 * rec.rho.row(r).norm() && along > 0.0) bad("tangent");
        }
      }
    }
    AttackConfig drop{AttackKind::kDrop};
    drop.k_points = 8;
    if (run_attack(model, cloud, drop).perturbed.points.rows() != n - 8) bad("drop");
    AttackConfig add{AttackKind::kAdd, 0.05, 10, 0.05};
    add.k_points = 8;
    add.seed = i;
    const auto added = run_attack(model, cloud, add);
    if (added.perturbed.points.rows() != n + 8 || added.perturbed.points.topRows(n) != cloud.points) bad("add");
  }
  std::string detail = std::to_string(data.size()) + " clouds x {pgd, ifgm, sia, drop, add}, violations=" +
                       std::to_string(violations);
  for (const auto& [k, v] : by) detail += " " + k + ":" + std::to_string(v);
  return {violations == 0, detail};
}

Verdict curriculum_algebra() {
  const std::array<double, 3> uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const double h = entropy_of(uniform);
  const double l_full = adaptive_lambda(1.0, 0.5, 1.0, 1.0);
  const double l_mid = adaptive_lambda(0.5, std::log(3.0), 2.0, 1.0);
  const bool ok = std::abs(h - std::log(3.0)) < 1e-12 && l_full == 0.0 &&
                  std::abs(l_mid - 1.0 / 3.0) < 1e-12;
  return {ok, "H(uniform)=" + fmt("%.12f", h) + " Lambda(f=1)=" + fmt("%g", l_full) +
                  " Lambda(2,1,0.5,ln3)=" + fmt("%.12f", l_mid)};
}

struct ArmStats {
  std::map<std::uint64_t, ArmOutcome> by_seed;
};

void desk_notes(const fs::path& run_dir);

std::map<std::string, ArmStats> desk_outcomes;
std::vector<std::uint64_t> desk_seeds;
double desk_seconds = 0.0;

void run_desk() {
  if (!desk_outcomes.empty()) return;
  const auto t0 = Clock::now();
  auto cfg = load_experiment(PCR_CONFIG_DIR "/desk.json");
  cfg.serial = true;
  desk_seeds = cfg.seeds;
  const auto root = testing::scratch_dir("acceptance-desk");
  const auto result = run_experiment(cfg, root);
  for (const auto& o : result.outcomes) desk_outcomes[o.arm].by_seed[o.seed] = o;
  desk_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("  desk run: %s (%.0fs)\n", result.run_dir.c_str(), desk_seconds);
  for (const auto& [arm, s] : desk_outcomes) {
    for (const auto& [seed, o] : s.by_seed) {
      std::printf("  %-10s seed %llu clean %.3f adv %.3f drawdown %.3f\n", arm.c_str(),
                  static_cast<unsigned long long>(seed), o.final_clean_acc, o.final_adv_acc,
                  o.forgetting.max_drawdown);
    }
  }
  desk_notes(result.run_dir);
}

/// Directional checks from the module examples that are not acceptance
/// criteria; printed for the record, never gated.
void desk_notes(const fs::path& run_dir) {
  std::ifstream in(run_dir / "plots" / "mi_histogram.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> hist;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    auto& h = hist[cells[0] + "-s" + cells[1]];
    h.first.push_back(std::stoi(cells[5]));
    h.second.push_back(std::stoi(cells[6]));
  }
  for (const auto& [job, h] : hist) {
    const auto mode = [](const std::vector<int>& v) {
      return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    std::printf("  note: %s MI histogram mode bin natural %d adversarial %d (%s)\n", job.c_str(),
                mode(h.first), mode(h.second), mode(h.second) < mode(h.first) ? "adversarial lower" : "not lower");
  }
  for (const auto& [seed, o] : desk_outcomes["at_mine"].by_seed) {
    std::printf("  note: at_mine seed %llu drawdown %.3f (module example expects >= 0.10)\n",
                static_cast<unsigned long long>(seed), o.forgetting.max_drawdown);
  }
  for (const auto& [seed, o] : desk_outcomes["at_mine_ct"].by_seed) {
    const auto& base = desk_outcomes["baseline"].by_seed[seed];
    const auto& at = desk_outcomes["at"].by_seed[seed];
    std::printf("  note: at_mine_ct seed %llu clean gap to baseline %.3f (<= 0.03), adv over at %.3f (>= 0.05)\n",
                static_cast<unsigned long long>(seed), base.final_clean_acc - o.final_clean_acc,
                o.final_adv_acc - at.final_adv_acc);
  }
}

double seed_mean(const std::string& arm, const std::function<double(const ArmOutcome&)>& f) {
  double total = 0.0;
  for (auto s : desk_seeds) total += f(desk_outcomes.at(arm).by_seed.at(s));
  return total / static_cast<double>(desk_seeds.size());
}

Verdict forgetting() {
  run_desk();
  const double mine = seed_mean("at_mine", [](const ArmOutcome& o) { return o.forgetting.max_drawdown; });
  const double ct = seed_mean("at_mine_ct", [](const ArmOutcome& o) { return o.forgetting.max_drawdown; });
  return {mine - ct >= 0.05, "mean drawdown at_mine=" + fmt("%.3f", mine) + " at_mine_ct=" +
                                 fmt("%.3f", ct) + " gap=" + fmt("%.3f", mine - ct) + " >= 0.05"};
}

Verdict robustness_gain() {
  run_desk();
  auto adv = [](const ArmOutcome& o) { return o.final_adv_acc; };
  auto clean = [](const ArmOutcome& o) { return o.final_clean_acc; };
  const double gain = seed_mean("at_mine_ct", adv) - seed_mean("baseline", adv);
  const double loss = seed_mean("baseline", clean) - seed_mean("at_mine_ct", clean);
  return {gain >= 0.05 && loss <= 0.03,
          "adv gain=" + fmt("%.3f", gain) + " >= 0.05, clean loss=" + fmt("%.3f", loss) + " <= 0.03"};
}

Verdict ablation_order() {
  run_desk();
  int holds = 0;
  std::string detail;
  for (auto s : desk_seeds) {
    const double b = desk_outcomes.at("baseline").by_seed.at(s).final_adv_acc;
    const double a = desk_outcomes.at("at").by_seed.at(s).final_adv_acc;
    const double m = desk_outcomes.at("at_mine").by_seed.at(s).final_adv_acc;
    const double c = desk_outcomes.at("at_mine_ct").by_seed.at(s).final_adv_acc;
    const bool ok = b <= a && a <= m && m <= c;
    holds += ok ? 1 : 0;
    detail += "s" + std::to_string(s) + "(" + fmt("%.3f", b) + "," + fmt("%.3f", a) + "," +
              fmt("%.3f", m) + "," + fmt("%.3f", c) + (ok ? ") ok " : ") no ");
  }
  return {holds >= 2 && desk_seconds <= 2700, detail + "holds on " + std::to_string(holds) + "/" +
                          std::to_string(desk_seeds.size()) + " >= 2"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  auto cfg = load_experiment(PCR_CONFIG_DIR "/minimal.json");
  cfg.serial = true;
  const auto root = testing::scratch_dir("acceptance-determinism");
  const auto a = run_experiment(cfg, root).run_dir;
  const auto b = run_experiment(cfg, root).run_dir;
  int files = 0, same = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (entry.path().filename() != "log.jsonl") continue;
    ++files;
    const auto rel = fs::relative(entry.path(), a);
    same += slurp(entry.path()) == slurp(b / rel) ? 1 : 0;
  }
  return {files > 0 && same == files,
          std::to_string(same) + "/" + std::to_string(files) + " logs byte-identical"};
}

}  // namespace

int main() {
  report(1, "MI oracle rho=0.0", 180, [] { return gaussian_case(0.0); });
  report(1, "MI oracle rho=0.5", 180, [] { return gaussian_case(0.5); });
  report(1, "MI oracle rho=0.9", 180, [] { return gaussian_case(0.9); });
  report(2, "disentanglement null case", 180, null_case);
  report(3, "Pinsker bound, XOR channel", 1, xor_case);
  report(4, "attack contracts", 120, attack_contracts);
  report(5, "curriculum algebra", 1, curriculum_algebra);
  report(6, "forgetting reproduction", 900, forgetting);
  report(7, "robustness gain", 900, robustness_gain);
  report(8, "ablation ordering", 2700, ablation_order);
  std::printf("criterion  9 INFO table-scale numbers need the full benchmarks and detectors; "
              "not an acceptance target (criteria 1-8 substitute)\n");
  report(10, "determinism", 120, determinism);
  std::printf("%s: %d gated criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
