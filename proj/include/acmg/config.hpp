#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "acmg/model.hpp"
#include "acmg/synth.hpp"
#include "acmg/train.hpp"

namespace acmg {

struct EvalConfig {
  std::size_t folds = 5;
  std::size_t threads = 1;  // concurrent fold workers
  /// Samples (by id) to render as gate-trace plots; empty renders none.
  std::vector<std::string> plot_samples;

  void validate() const;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Everything a CLI run is parameterized by. Config files are JSON objects
/// with optional "synth", "model", "train" and "eval" sections; omitted keys
/// keep their defaults and unknown keys are rejected.
struct RunConfig {
  SynthSpec synth;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const SynthSpec& s);
nlohmann::json to_json(const ModelConfig& m);
nlohmann::json to_json(const TrainConfig& t);
nlohmann::json to_json(const EvalConfig& e);
nlohmann::json to_json(const RunConfig& r);

/// Overlay the keys present in `j` onto `out`. Throws ConfigError naming the
/// section and key on unknown keys or mistyped values.
void apply_json(const nlohmann::json& j, SynthSpec& out);
void apply_json(const nlohmann::json& j, ModelConfig& out);
void apply_json(const nlohmann::json& j, TrainConfig& out);
void apply_json(const nlohmann::json& j, EvalConfig& out);
void apply_json(const nlohmann::json& j, RunConfig& out);

ModelConfig model_config_from_json(const nlohmann::json& j);

/// Reads a config file; defaults fill anything the file leaves out.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text);

/// Serialized form used for effective_config.json; stable key order.
std::string dump_json(const nlohmann::json& j);

}  // namespace acmg
