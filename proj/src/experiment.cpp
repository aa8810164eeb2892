#include "pcrobust/experiment.hpp"

#include "pcrobust/json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

namespace pcr {

namespace fs = std::filesystem;

namespace {

Error config_error(const std::string& path, const std::string& what) {
  return Error(ErrorCode::kConfig, path + ": " + what);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig,
                what + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

std::string job_directory(const std::string& arm, std::uint64_t seed) {
  return arm + "-s" + std::to_string(seed);
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// A fresh directory under `parent` named prefix-stamp, suffixed on collision.
fs::path fresh_directory(const fs::path& parent, const std::string& prefix) {
  fs::create_directories(parent);
  const std::string base = prefix + "-" + utc_stamp();
  for (int k = 0;; ++k) {
    fs::path dir = parent / (k == 0 ? base : base + "-" + std::to_string(k));
    if (fs::create_directory(dir)) return dir;
  }
}

/// index.json: every file under run_dir except the index itself.
void write_index(const fs::path& run_dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel != "index.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  nlohmann::json j;
  j["files"] = nlohmann::json::array();
  for (const auto& f : files) {
    j["files"].push_back({{"path", f}, {"bytes", fs::file_size(run_dir / f)}});
  }
  write_file(run_dir / "index.json", j.dump(2) + "\n");
}

}  // namespace

void to_json(nlohmann::json& j, const TrainingConfig& v) {
  j = {{"steps", v.steps},
       {"batch_size", v.batch_size},
       {"learning_rate", v.learning_rate},
       {"mi_lambda", v.mi_lambda},
       {"probe_every", v.probe_every},
       {"probe_fraction", v.probe_fraction},
       {"mine_warmup_steps", v.mine_warmup_steps},
       {"mine_steps_early", v.mine_steps_early},
       {"mine_steps_late", v.mine_steps_late}};
}

void from_json(const nlohmann::json& j, TrainingConfig& v) {
  ConfigReader r(j);
  r.field("steps", v.steps);
  r.field("batch_size", v.batch_size);
  r.field("learning_rate", v.learning_rate);
  r.field("mi_lambda", v.mi_lambda);
  r.field("probe_every", v.probe_every);
  r.field("probe_fraction", v.probe_fraction);
  r.field("mine_warmup_steps", v.mine_warmup_steps);
  r.field("mine_steps_early", v.mine_steps_early);
  r.field("mine_steps_late", v.mine_steps_late);
  r.finish();
  if (v.steps < 1) throw Error(ErrorCode::kConfig, "steps: must be >= 1");
  if (v.batch_size < 2) throw Error(ErrorCode::kConfig, "batch_size: must be >= 2");
  if (!(v.learning_rate >= 0.0)) throw Error(ErrorCode::kConfig, "learning_rate: must be >= 0");
  if (!(v.mi_lambda >= 0.0)) throw Error(ErrorCode::kConfig, "mi_lambda: must be >= 0");
  if (v.probe_every < 1) throw Error(ErrorCode::kConfig, "probe_every: must be >= 1");
  if (!(v.probe_fraction > 0.0 && v.probe_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "probe_fraction: must be in (0, 1)");
  }
  if (v.mine_warmup_steps < 0) throw Error(ErrorCode::kConfig, "mine_warmup_steps: must be >= 0");
  if (v.mine_steps_early < 1) throw Error(ErrorCode::kConfig, "mine_steps_early: must be >= 1");
  if (v.mine_steps_late < 1) throw Error(ErrorCode::kConfig, "mine_steps_late: must be >= 1");
}

void to_json(nlohmann::json& j, const StepRecord& v) {
  j = {{"step", v.step},
       {"clean_loss", v.clean_loss},
       {"adv_loss", v.adv_loss},
       {"mi_term", v.mi_term},
       {"eta", v.eta},
       {"lambda_adaptive", v.lambda_adaptive},
       {"entropy_term", v.entropy_term},
       {"f_low", v.f_low},
       {"total", v.total},
       {"advisor_active", v.advisor_active},
       {"mi_natural", v.mi_natural},
       {"mi_adversarial", v.mi_adversarial}};
  j["clean_acc"] = v.clean_acc ? nlohmann::json(*v.clean_acc) : nlohmann::json(nullptr);
  j["adv_acc"] = v.adv_acc ? nlohmann::json(*v.adv_acc) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, StepRecord& v) {
  ConfigReader r(j);
  r.required("step", v.step);
  r.required("clean_loss", v.clean_loss);
  r.required("adv_loss", v.adv_loss);
  r.required("mi_term", v.mi_term);
  r.required("eta", v.eta);
  r.required("lambda_adaptive", v.lambda_adaptive);
  r.required("entropy_term", v.entropy_term);
  r.required("f_low", v.f_low);
  r.required("total", v.total);
  r.required("advisor_active", v.advisor_active);
  r.required("mi_natural", v.mi_natural);
  r.required("mi_adversarial", v.mi_adversarial);
  r.consume("clean_acc");
  r.consume("adv_acc");
  r.finish();
  for (auto [key, slot] : {std::pair{"clean_acc", &v.clean_acc}, std::pair{"adv_acc", &v.adv_acc}}) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorCode::kConfig, std::string(key) + ": required field missing");
    if (it->is_null()) {
      slot->reset();
    } else if (it->is_number()) {
      *slot = it->get<double>();
    } else {
      throw Error(ErrorCode::kConfig, std::string(key) + ": expected a number or null");
    }
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& v) {
  nlohmann::json attacks = nlohmann::json::object();
  for (const auto& [name, cfg] : v.attacks) attacks[name] = cfg;
  j = {{"name", v.name},
       {"dataset", v.dataset},
       {"classifier", v.classifier},
       {"attacks", attacks},
       {"train_attack", v.train_attack},
       {"probe_attack", v.probe_attack},
       {"bench_attacks", v.bench_attacks},
       {"mine", v.mine},
       {"advisor", v.advisor},
       {"training", v.training},
       {"arms", v.arms},
       {"seeds", v.seeds},
       {"output_dir", v.output_dir},
       {"serial", v.serial}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& v) {
  ConfigReader r(j);
  r.field("name", v.name);
  r.field("dataset", v.dataset);
  r.field("classifier", v.classifier);
  if (auto it = j.find("attacks"); it != j.end()) {
    if (!it->is_object()) throw config_error("attacks", "expected an object");
    v.attacks.clear();
    for (auto a = it->begin(); a != it->end(); ++a) {
      try {
        v.attacks[a.key()] = a.value().get<AttackConfig>();
      } catch (const Error& e) {
        const std::string what = e.what();
        throw Error(ErrorCode::kConfig,
                    "attacks." + a.key() + (what.rfind(":", 0) == 0 ? "" : ".") + what);
      } catch (const nlohmann::json::exception& e) {
        throw config_error("attacks." + a.key(), e.what());
      }
    }
  }
  r.consume("attacks");
  r.field("train_attack", v.train_attack);
  r.field("probe_attack", v.probe_attack);
  r.field("bench_attacks", v.bench_attacks);
  r.field("mine", v.mine);
  r.field("advisor", v.advisor);
  r.field("training", v.training);
  r.field("arms", v.arms);
  r.field("seeds", v.seeds);
  r.field("output_dir", v.output_dir);
  r.field("serial", v.serial);
  r.finish();
  v.validate();
}

void ExperimentConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw config_error("name", "must be a non-empty plain name");
  }
  if (classifier.num_classes != static_cast<int>(dataset.classes.size())) {
    throw config_error("classifier.num_classes",
                       "must equal the number of dataset classes (" +
                           std::to_string(dataset.classes.size()) + ")");
  }
  if (attacks.empty()) throw config_error("attacks", "at least one attack is required");
  for (const auto& [key, cfg] : attacks) {
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw config_error("attacks." + key, e.what());
    }
  }
  auto train = attacks.find(train_attack);
  if (train == attacks.end()) throw config_error("train_attack", "unknown attack '" + train_attack + "'");
  if (!is_shifting(train->second.kind)) {
    throw config_error("train_attack", "must name a shifting attack");
  }
  if (!attacks.count(probe_attack)) throw config_error("probe_attack", "unknown attack '" + probe_attack + "'");
  for (std::size_t i = 0; i < bench_attacks.size(); ++i) {
    if (!attacks.count(bench_attacks[i])) {
      throw config_error("bench_attacks[" + std::to_string(i) + "]",
                         "unknown attack '" + bench_attacks[i] + "'");
    }
  }
  if (arms.empty()) throw config_error("arms", "at least one arm is required");
  for (std::size_t i = 0; i < arms.size(); ++i) {
    try {
      TrainingArm::parse(arms[i]);
    } catch (const Error& e) {
      throw config_error("arms[" + std::to_string(i) + "]", e.what());
    }
    if (std::count(arms.begin(), arms.end(), arms[i]) > 1) {
      throw config_error("arms[" + std::to_string(i) + "]", "duplicate arm");
    }
  }
  if (seeds.empty()) throw config_error("seeds", "at least one seed is required");
  if (output_dir.empty()) throw config_error("output_dir", "must not be empty");
  try {
    advisor.validate();
  } catch (const Error& e) {
    throw config_error("advisor", e.what());
  }
  // Split sizes follow from the dataset shape alone.
  const int per_class = dataset.clouds_per_class;
  const auto probe_per_class = static_cast<int>(std::llround(training.probe_fraction * per_class));
  const auto train_total = static_cast<long long>(per_class - probe_per_class) *
                           static_cast<long long>(dataset.classes.size());
  if (probe_per_class < 1) throw config_error("training.probe_fraction", "leaves an empty probe split");
  if (train_total < training.batch_size) {
    throw config_error("training.batch_size", "larger than the training split (" +
                                                  std::to_string(train_total) + ")");
  }
  training_for(seeds.front()).validate();
}

TrainingConfig ExperimentConfig::training_for(std::uint64_t seed) const {
  TrainingConfig t = training;
  t.mine = mine;
  t.advisor = advisor;
  t.train_attack = attacks.at(train_attack);
  t.probe_attack = attacks.at(probe_attack);
  t.seed = seed;
  return t;
}

ExperimentConfig parse_experiment(const std::string& text) {
  const auto j = parse_json(text, "config");
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config: expected an object");
  ExperimentConfig cfg;
  try {
    from_json(j, cfg);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  return parse_experiment(text);
}

DatasetSplit experiment_data(const ExperimentConfig& config) {
  return split_dataset(generate_dataset(config.dataset), config.training.probe_fraction,
                       mix_seed(config.dataset.seed, 0x5eed));
}

namespace {

ArmOutcome run_job(const ExperimentConfig& config, const DatasetSplit& data,
                   const std::string& arm_name, std::uint64_t seed, const fs::path& run_dir) {
  const TrainingArm arm = TrainingArm::parse(arm_name);
  const std::string dir = job_directory(arm_name, seed);
  fs::create_directories(run_dir / dir);
  std::ofstream log(run_dir / dir / "log.jsonl", std::ios::binary | std::ios::trunc);
  if (!log) throw Error(ErrorCode::kIo, "cannot write " + (run_dir / dir / "log.jsonl").string());
  RunResult result = run_arm(data, arm, config.training_for(seed), config.classifier,
                             [&log](const StepRecord& rec) {
                               log << nlohmann::json(rec).dump() << '\n';
                             });
  log.close();
  result.model.save((run_dir / dir / "checkpoint.bin").string());

  ArmOutcome out;
  out.arm = arm_name;
  out.seed = seed;
  out.directory = dir;
  out.final_clean_acc = result.final_clean_acc;
  out.final_adv_acc = result.final_adv_acc;
  out.forgetting = forgetting_metrics(result.log);
  out.attack_calls = result.attack_calls;
  out.estimator_calls = result.estimator_calls;
  return out;
}

void write_summary(const ExperimentConfig& config, const std::vector<ArmOutcome>& outcomes,
                   int probe_size, const fs::path& run_dir) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& o : outcomes) {
    runs.push_back({{"arm", o.arm},
                    {"seed", o.seed},
                    {"directory", o.directory},
                    {"final_clean_acc", o.final_clean_acc},
                    {"final_adv_acc", o.final_adv_acc},
                    {"max_drawdown", o.forgetting.max_drawdown},
                    {"final_gap", o.forgetting.final_gap},
                    {"peak_clean_acc", o.forgetting.peak},
                    {"attack_calls", o.attack_calls},
                    {"estimator_calls", o.estimator_calls}});
  }
  // One row per arm with the AT / MINE / CT flags and seed-averaged accuracy.
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "arm,at,mine,ct,clean_acc,adv_acc,seeds\n";
  for (const auto& arm_name : config.arms) {
    const auto arm = TrainingArm::parse(arm_name);
    double clean = 0.0, adv = 0.0;
    int n = 0;
    for (const auto& o : outcomes) {
      if (o.arm != arm_name) continue;
      clean += o.final_clean_acc;
      adv += o.final_adv_acc;
      ++n;
    }
    if (n > 0) {
      clean /= n;
      adv /= n;
    }
    rows.push_back({{"arm", arm_name},
                    {"at", arm.use_adversarial},
                    {"mine", arm.use_mi_term},
                    {"ct", arm.use_curriculum},
                    {"clean_acc", clean},
                    {"adv_acc", adv},
                    {"seeds", n}});
    csv << arm_name << ',' << arm.use_adversarial << ',' << arm.use_mi_term << ','
        << arm.use_curriculum << ',' << clean << ',' << adv << ',' << n << '\n';
  }
  nlohmann::json summary = {{"name", config.name},
                            {"steps", config.training.steps},
                            {"probe_size", probe_size},
                            {"probe_attack", config.probe_attack},
                            {"runs", runs},
                            {"table", rows}};
  write_file(run_dir / "summary.json", summary.dump(2) + "\n");
  write_file(run_dir / "summary.csv", csv.str());
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& output_root) {
  config.validate();
  const DatasetSplit data = experiment_data(config);

  ExperimentResult result;
  result.run_dir = fresh_directory(output_root / config.output_dir, config.name);
  write_file(result.run_dir / "config.json", nlohmann::json(config).dump(2) + "\n");

  struct Job {
    std::string arm;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto seed : config.seeds) {
    for (const auto& arm : config.arms) jobs.push_back({arm, seed});
  }

  if (config.serial) {
    for (const auto& job : jobs) {
      result.outcomes.push_back(run_job(config, data, job.arm, job.seed, result.run_dir));
    }
  } else {
    // Jobs share nothing but read-only data; outcomes keep the job order.
    const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
    result.outcomes.resize(jobs.size());
    for (std::size_t start = 0; start < jobs.size(); start += width) {
      std::vector<std::future<ArmOutcome>> wave;
      const std::size_t end = std::min(jobs.size(), start + width);
      for (std::size_t i = start; i < end; ++i) {
        wave.push_back(std::async(std::launch::async, run_job, std::cref(config), std::cref(data),
                                  jobs[i].arm, jobs[i].seed, result.run_dir));
      }
      for (std::size_t i = start; i < end; ++i) result.outcomes[i] = wave[i - start].get();
    }
  }

  write_summary(config, result.outcomes, static_cast<int>(data.probe.size()), result.run_dir);
  emit_plots(result.run_dir);
  return result;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json acc = nlohmann::json::object();
    for (std::size_t i = 0; i < attacks.size(); ++i) acc[attacks[i]] = row.attack_acc[i];
    rows_j.push_back({{"model", row.model}, {"clean", row.clean_acc}, {"attacks", acc}});
  }
  return {{"columns", attacks}, {"probe_size", probe_size}, {"rows", rows_j}};
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "model,clean";
  for (const auto& a : attacks) out << ',' << a;
  out << '\n';
  for (const auto& row : rows) {
    out << row.model << ',' << row.clean_acc;
    for (double v : row.attack_acc) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

BenchReport benchmark_attacks(const ExperimentConfig& config,
                              const std::vector<std::string>& checkpoints) {
  config.validate();
  if (checkpoints.empty()) throw Error(ErrorCode::kConfig, "checkpoint: at least one is required");
  for (const auto& path : checkpoints) {
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::kIo, "checkpoint not found: " + path);
  }
  const DatasetSplit data = experiment_data(config);
  BenchReport report;
  report.probe_size = static_cast<int>(data.probe.size());
  if (config.bench_attacks.empty()) {
    for (const auto& [name, cfg] : config.attacks) report.attacks.push_back(name);
  } else {
    report.attacks = config.bench_attacks;
  }
  for (const auto& path : checkpoints) {
    const Classifier model = Classifier::load(path, config.classifier);
    BenchRow row;
    const auto parent = fs::path(path).parent_path().filename().string();
    row.model = parent.empty() ? fs::path(path).stem().string() : parent;
    row.clean_acc = accuracy(model, data.probe);
    for (const auto& name : report.attacks) {
      const AttackConfig& base = config.attacks.at(name);
      int hits = 0;
      for (std::size_t i = 0; i < data.probe.size(); ++i) {
        AttackConfig cfg = base;
        cfg.seed = mix_seed(base.seed, i);
        const auto rec = run_attack(model, data.probe[i], cfg);
        hits += model.predict(rec.perturbed.points) == data.probe[i].label ? 1 : 0;
      }
      row.attack_acc.push_back(static_cast<double>(hits) / static_cast<double>(data.probe.size()));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

fs::path write_bench(const ExperimentConfig& config, const BenchReport& report,
                     const fs::path& output_root) {
  const fs::path dir = fresh_directory(output_root / config.output_dir, config.name + "-bench");
  write_file(dir / "config.json", nlohmann::json(config).dump(2) + "\n");
  write_file(dir / "bench.json", report.to_json().dump(2) + "\n");
  write_file(dir / "bench.csv", report.to_csv());
  write_index(dir);
  return dir;
}

MIHistogram mi_histogram(std::span<const double> natural, std::span<const double> adversarial,
                         int bins) {
  if (bins < 1) throw Error(ErrorCode::kConfig, "bins must be >= 1");
  MIHistogram h;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto s : {natural, adversarial}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi <= lo) hi = lo + 1.0;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;
  auto fill = [&](std::span<const double> s, std::vector<int>& counts) {
    counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : s) {
      auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
      counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
    }
  };
  fill(natural, h.natural);
  fill(adversarial, h.adversarial);
  return h;
}

namespace {

template <class T>
T schema_field(const nlohmann::json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::kSchema, where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kSchema, where + ": field '" + key + "' has the wrong type");
  }
}

nlohmann::json read_json_file(const fs::path& path, ErrorCode code) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(code, path.filename().string() + ": parse error at byte " +
                          std::to_string(e.byte));
  }
}

}  // namespace

std::vector<std::string> emit_plots(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw Error(ErrorCode::kIo, "not a run directory: " + run_dir.string());
  const auto config_j = read_json_file(run_dir / "config.json", ErrorCode::kSchema);
  const auto summary = read_json_file(run_dir / "summary.json", ErrorCode::kSchema);
  const auto advisor_j = schema_field<nlohmann::json>(config_j, "advisor", "config.json");
  const auto window = schema_field<int>(advisor_j, "window", "config.json advisor");
  const auto runs = schema_field<nlohmann::json>(summary, "runs", "summary.json");

  std::ostringstream acc, eta, hist;
  acc << "arm,seed,step,clean_acc,adv_acc\n";
  eta << "arm,seed,step,eta\n";
  hist << "arm,seed,bin,lo,hi,natural,adversarial\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::string where = "summary.json runs[" + std::to_string(r) + "]";
    const auto arm_name = schema_field<std::string>(runs[r], "arm", where);
    const auto seed = schema_field<std::uint64_t>(runs[r], "seed", where);
    const auto dir = schema_field<std::string>(runs[r], "directory", where);
    const TrainingArm arm = TrainingArm::parse(arm_name);

    std::ifstream in(run_dir / dir / "log.jsonl");
    if (!in) throw Error(ErrorCode::kSchema, dir + "/log.jsonl: missing");
    std::vector<double> nat, adv;  // every proxy, trimmed to the window below
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      const std::string at = dir + "/log.jsonl line " + std::to_string(lineno);
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kSchema, at + ": parse error at byte " + std::to_string(e.byte));
      }
      const auto step = schema_field<int>(rec, "step", at);
      const auto clean_acc = schema_field<nlohmann::json>(rec, "clean_acc", at);
      const auto adv_acc = schema_field<nlohmann::json>(rec, "adv_acc", at);
      if (!clean_acc.is_null()) {
        acc << arm_name << ',' << seed << ',' << step << ',' << clean_acc.get<double>() << ','
            << (adv_acc.is_null() ? std::nan("") : adv_acc.get<double>()) << '\n';
      }
      const auto eta_v = schema_field<double>(rec, "eta", at);
      if (arm.use_curriculum) eta << arm_name << ',' << seed << ',' << step << ',' << eta_v << '\n';
      const auto n = schema_field<std::vector<double>>(rec, "mi_natural", at);
      const auto a = schema_field<std::vector<double>>(rec, "mi_adversarial", at);
      nat.insert(nat.end(), n.begin(), n.end());
      adv.insert(adv.end(), a.begin(), a.end());
    }
    if (!arm.use_mi_term) continue;
    const auto keep = [window](std::vector<double>& v) {
      if (v.size() > static_cast<std::size_t>(window)) {
        v.erase(v.begin(), v.end() - window);
      }
    };
    keep(nat);
    keep(adv);
    const auto h = mi_histogram(nat, adv);
    for (int b = 0; b < kHistogramBins; ++b) {
      const auto i = static_cast<std::size_t>(b);
      hist << arm_name << ',' << seed << ',' << b << ',' << h.edges[i] << ',' << h.edges[i + 1]
           << ',' << h.natural[i] << ',' << h.adversarial[i] << '\n';
    }
  }

  fs::create_directories(run_dir / "plots");
  const std::vector<std::string> written{"plots/accuracy.csv", "plots/eta.csv",
                                         "plots/mi_histogram.csv"};
  write_file(run_dir / written[0], acc.str());
  write_file(run_dir / written[1], eta.str());
  write_file(run_dir / written[2], hist.str());
  write_index(run_dir);
  return written;
}

}  // namespace pcr
