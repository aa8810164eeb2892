#pragma once

// JSON mapping for every configuration type. Readers are strict: unknown keys
// and type mismatches raise kConfig errors whose message starts with the
// dotted field path.

#include "pcrobust/attacks.hpp"
#include "pcrobust/classifier.hpp"
#include "pcrobust/core_data.hpp"
#include "pcrobust/curriculum.hpp"
#include "pcrobust/error.hpp"
#include "pcrobust/mi_estimation.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace pcr {

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& j) : j_(j) {
    if (!j_.is_object()) throw Error(ErrorCode::kConfig, ": expected an object");
  }

  template <class T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(key, *it, out);
  }

  template <class T>
  void required(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw Error(ErrorCode::kConfig, std::string(key) + ": required field missing");
    read(key, *it, out);
  }

  /// Marks a key the caller reads by hand.
  void consume(const char* key) { seen_.insert(key); }

  /// Rejects keys that no field() / required() call consumed.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(ErrorCode::kConfig, it.key() + ": unknown field");
      }
    }
  }

 private:
  template <class T>
  static void read(const char* key, const nlohmann::json& value, T& out) {
    try {
      out = value.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string(key) + ": " + e.what());
    } catch (const Error& e) {
      const std::string what = e.what();
      throw Error(ErrorCode::kConfig,
                  std::string(key) + (what.rfind(":", 0) == 0 ? "" : ".") + what);
    }
  }

  const nlohmann::json& j_;
  std::set<std::string> seen_;
};

/// Runs cfg.validate() and prefixes any message with ": " so ConfigReader
/// attributes it to the enclosing field.
template <class T>
void validate_here(const T& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string(": ") + e.what());
  }
}

void to_json(nlohmann::json& j, const SyntheticDatasetSpec& v);
void from_json(const nlohmann::json& j, SyntheticDatasetSpec& v);
void to_json(nlohmann::json& j, const ClassifierConfig& v);
void from_json(const nlohmann::json& j, ClassifierConfig& v);
void to_json(nlohmann::json& j, const AttackConfig& v);
void from_json(const nlohmann::json& j, AttackConfig& v);
void to_json(nlohmann::json& j, const MineConfig& v);
void from_json(const nlohmann::json& j, MineConfig& v);
void to_json(nlohmann::json& j, const AdvisorConfig& v);
void from_json(const nlohmann::json& j, AdvisorConfig& v);

}  // namespace pcr
