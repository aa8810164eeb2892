#include "pcrobust/pcrobust.h"

#include "pcrobust/experiment.hpp"

#include <cstring>
#include <new>
#include <string>

struct pcr_experiment {
  pcr::ExperimentConfig config;
};

struct pcr_dataset {
  std::vector<pcr::PointCloud> clouds;
  int num_classes = 0;
};

struct pcr_model {
  pcr::Classifier model;
};

namespace {

thread_local std::string last_error;

pcr_status fail(pcr_status status, const std::string& what) {
  last_error = what;
  return status;
}

template <class F>
pcr_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return PCR_OK;
  } catch (const pcr::Error& e) {
    return fail(static_cast<pcr_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(PCR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PCR_ERR_INTERNAL, e.what());
  }
}

pcr_status copy_out(const std::string& s, char* buf, std::size_t len) {
  if (buf == nullptr || len == 0) return PCR_OK;
  if (s.size() + 1 > len) return fail(PCR_ERR_INVALID_ARGUMENT, "output buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return PCR_OK;
}

#define PCR_REQUIRE(cond)                                                      \
  do {                                                                         \
    if (!(cond)) return fail(PCR_ERR_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* pcr_version(void) { return "0.1.0"; }

const char* pcr_last_error(void) { return last_error.c_str(); }

const char* pcr_status_name(pcr_status status) {
  switch (status) {
    case PCR_OK: return "ok";
    case PCR_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case PCR_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status >= PCR_ERR_CONFIG && status <= PCR_ERR_SCHEMA) {
    return pcr::error_code_name(static_cast<pcr::ErrorCode>(status));
  }
  return "unknown";
}

pcr_status pcr_experiment_load(const char* path, pcr_experiment** out) {
  PCR_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] { *out = new pcr_experiment{pcr::load_experiment(path)}; });
}

pcr_status pcr_experiment_parse(const char* json_text, pcr_experiment** out) {
  PCR_REQUIRE(json_text && out);
  *out = nullptr;
  return guarded([&] { *out = new pcr_experiment{pcr::parse_experiment(json_text)}; });
}

void pcr_experiment_free(pcr_experiment* exp) { delete exp; }

pcr_status pcr_experiment_set_seed(pcr_experiment* exp, uint64_t seed) {
  PCR_REQUIRE(exp);
  exp->config.seeds = {seed};
  return PCR_OK;
}

pcr_status pcr_experiment_set_serial(pcr_experiment* exp, int serial) {
  PCR_REQUIRE(exp);
  exp->config.serial = serial != 0;
  return PCR_OK;
}

pcr_status pcr_experiment_to_json(const pcr_experiment* exp, char* buf, size_t len,
                                  size_t* needed) {
  PCR_REQUIRE(exp);
  std::string text;
  const auto st = guarded([&] { text = nlohmann::json(exp->config).dump(2); });
  if (st != PCR_OK) return st;
  if (needed) *needed = text.size() + 1;
  return copy_out(text, buf, len);
}

pcr_status pcr_experiment_run(const pcr_experiment* exp, const char* output_root, char* run_dir,
                              size_t len) {
  PCR_REQUIRE(exp && output_root);
  std::string dir;
  const auto st = guarded([&] { dir = pcr::run_experiment(exp->config, output_root).run_dir.string(); });
  if (st != PCR_OK) return st;
  return copy_out(dir, run_dir, len);
}

pcr_status pcr_experiment_bench(const pcr_experiment* exp, const char* const* checkpoints,
                                size_t num_checkpoints, const char* output_root, char* report_dir,
                                size_t len) {
  PCR_REQUIRE(exp && output_root && (checkpoints || num_checkpoints == 0));
  std::string dir;
  const auto st = guarded([&] {
    std::vector<std::string> paths(checkpoints, checkpoints + num_checkpoints);
    const auto report = pcr::benchmark_attacks(exp->config, paths);
    dir = pcr::write_bench(exp->config, report, output_root).string();
  });
  if (st != PCR_OK) return st;
  return copy_out(dir, report_dir, len);
}

pcr_status pcr_emit_plots(const char* run_dir) {
  PCR_REQUIRE(run_dir);
  return guarded([&] { pcr::emit_plots(run_dir); });
}

pcr_status pcr_dataset_generate(const pcr_experiment* exp, pcr_dataset** out) {
  PCR_REQUIRE(exp && out);
  *out = nullptr;
  return guarded([&] {
    *out = new pcr_dataset{pcr::generate_dataset(exp->config.dataset),
                           static_cast<int>(exp->config.dataset.classes.size())};
  });
}

pcr_status pcr_dataset_load(const char* path, pcr_dataset** out) {
  PCR_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] {
    auto loaded = pcr::load_dataset(path);
    *out = new pcr_dataset{std::move(loaded.clouds), loaded.num_classes};
  });
}

pcr_status pcr_dataset_save(const pcr_dataset* ds, const char* path, int binary) {
  PCR_REQUIRE(ds && path);
  return guarded([&] {
    if (binary) {
      pcr::save_dataset_binary(path, ds->clouds, ds->num_classes);
    } else {
      pcr::save_dataset(path, ds->clouds, ds->num_classes);
    }
  });
}

void pcr_dataset_free(pcr_dataset* ds) { delete ds; }

size_t pcr_dataset_size(const pcr_dataset* ds) { return ds ? ds->clouds.size() : 0; }

int pcr_dataset_num_classes(const pcr_dataset* ds) { return ds ? ds->num_classes : 0; }

pcr_status pcr_dataset_cloud(const pcr_dataset* ds, size_t i, size_t* points, int* label,
                             double* coords, size_t coords_len) {
  PCR_REQUIRE(ds);
  if (i >= ds->clouds.size()) return fail(PCR_ERR_INVALID_ARGUMENT, "cloud index out of range");
  const auto& cloud = ds->clouds[i];
  const auto n = static_cast<size_t>(cloud.points.rows());
  if (points) *points = n;
  if (label) *label = cloud.label;
  if (coords) {
    if (coords_len < 3 * n) return fail(PCR_ERR_INVALID_ARGUMENT, "coordinate buffer too small");
    std::memcpy(coords, cloud.points.data(), 3 * n * sizeof(double));
  }
  return PCR_OK;
}

pcr_status pcr_model_load(const char* path, pcr_model** out) {
  PCR_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] { *out = new pcr_model{pcr::Classifier::load(path)}; });
}

void pcr_model_free(pcr_model* model) { delete model; }

int pcr_model_num_classes(const pcr_model* model) { return model ? model->model.num_classes() : 0; }

pcr_status pcr_model_predict(const pcr_model* model, const double* coords, size_t points,
                             int* label) {
  PCR_REQUIRE(model && coords && label);
  return guarded([&] {
    pcr::PointCloud cloud{Eigen::Map<const pcr::Points>(coords, static_cast<Eigen::Index>(points), 3), 0};
    pcr::validate_cloud(cloud, false);
    *label = model->model.predict(cloud.points);
  });
}

pcr_status pcr_model_accuracy(const pcr_model* model, const pcr_dataset* ds, double* accuracy) {
  PCR_REQUIRE(model && ds && accuracy);
  return guarded([&] { *accuracy = pcr::accuracy(model->model, ds->clouds); });
}

}  // extern "C"
