#include "acmg/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "acmg/error.hpp"
#include "acmg/json_util.hpp"

namespace acmg {

using nlohmann::json;
using Reader = json_util::Reader<ConfigError>;

void EvalConfig::validate() const {
  if (folds < 2) throw ConfigError("eval.folds must be at least 2");
  if (threads == 0) throw ConfigError("eval.threads must be at least 1");
}

json to_json(const SynthSpec& s) {
  return {{"n_samples", s.n_samples},
          {"n_classes", s.n_classes},
          {"d_a", s.d_a},
          {"d_t", s.d_t},
          {"len_range_a", {s.len_range_a.first, s.len_range_a.second}},
          {"len_range_t", {s.len_range_t.first, s.len_range_t.second}},
          {"sparsity", s.sparsity},
          {"signal_gain", s.signal_gain},
          {"energy_coupling", s.energy_coupling},
          {"noise_sigma", s.noise_sigma},
          {"energy_base", s.energy_base},
          {"energy_drop", s.energy_drop},
          {"energy_jitter", s.energy_jitter},
          {"contiguous", s.contiguous},
          {"seed", s.seed}};
}

json to_json(const ModelConfig& m) {
  return {{"input_dim_a", m.input_dim_a},
          {"input_dim_t", m.input_dim_t},
          {"d_model", m.d_model},
          {"n_heads", m.n_heads},
          {"n_layers", m.n_layers},
          {"ff_mult", m.ff_mult},
          {"n_classes", m.n_classes},
          {"gating_mode", std::string(to_string(m.gating_mode))},
          {"dropout_rate", m.dropout_rate},
          {"positional_encoding", m.positional_encoding},
          {"seed", m.seed}};
}

json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"weight_decay", t.weight_decay},
          {"optimizer", std::string(to_string(t.optimizer))},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"adam_eps", t.adam_eps},
          {"class_weighting", t.class_weighting},
          {"val_fraction", t.val_fraction},
          {"seed", t.seed}};
}

json to_json(const EvalConfig& e) {
  return {{"folds", e.folds}, {"threads", e.threads}, {"plot_samples", e.plot_samples}};
}

json to_json(const RunConfig& r) {
  return {{"synth", to_json(r.synth)},
          {"model", to_json(r.model)},
          {"train", to_json(r.train)},
          {"eval", to_json(r.eval)}};
}

namespace {

std::size_t size_field(const Reader& r, const json& v, const std::string& key) {
  return static_cast<std::size_t>(r.u64(v, key));
}

std::pair<std::size_t, std::size_t> range_field(const Reader& r, const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(r.context + ": '" + key + "' must be [min, max]");
  return {size_field(r, v[0], key), size_field(r, v[1], key)};
}

// Applies each present key through its setter after rejecting unknown keys.
template <class Setters>
void apply_keys(const Reader& r, const json& j, const Setters& setters) {
  std::set<std::string> allowed;
  for (const auto& [k, _] : setters) allowed.insert(k);
  r.only_keys(j, allowed);
  for (const auto& [k, set] : setters) {
    if (auto it = j.find(k); it != j.end()) set(*it);
  }
}

using Setter = std::function<void(const json&)>;
using SetterList = std::vector<std::pair<std::string, Setter>>;

}  // namespace

void apply_json(const json& j, SynthSpec& s) {
  const Reader r{"config synth"};
  apply_keys(r, j, SetterList{
      {"n_samples", [&](const json& v) { s.n_samples = size_field(r, v, "n_samples"); }},
      {"n_classes", [&](const json& v) { s.n_classes = size_field(r, v, "n_classes"); }},
      {"d_a", [&](const json& v) { s.d_a = size_field(r, v, "d_a"); }},
      {"d_t", [&](const json& v) { s.d_t = size_field(r, v, "d_t"); }},
      {"len_range_a", [&](const json& v) { s.len_range_a = range_field(r, v, "len_range_a"); }},
      {"len_range_t", [&](const json& v) { s.len_range_t = range_field(r, v, "len_range_t"); }},
      {"sparsity", [&](const json& v) { s.sparsity = r.real(v, "sparsity"); }},
      {"signal_gain", [&](const json& v) { s.signal_gain = r.real(v, "signal_gain"); }},
      {"energy_coupling", [&](const json& v) { s.energy_coupling = r.real(v, "energy_coupling"); }},
      {"noise_sigma", [&](const json& v) { s.noise_sigma = r.real(v, "noise_sigma"); }},
      {"energy_base", [&](const json& v) { s.energy_base = r.real(v, "energy_base"); }},
      {"energy_drop", [&](const json& v) { s.energy_drop = r.real(v, "energy_drop"); }},
      {"energy_jitter", [&](const json& v) { s.energy_jitter = r.real(v, "energy_jitter"); }},
      {"contiguous", [&](const json& v) { s.contiguous = r.boolean(v, "contiguous"); }},
      {"seed", [&](const json& v) { s.seed = r.u64(v, "seed"); }},
  });
}

void apply_json(const json& j, ModelConfig& m) {
  const Reader r{"config model"};
  apply_keys(r, j, SetterList{
      {"input_dim_a", [&](const json& v) { m.input_dim_a = size_field(r, v, "input_dim_a"); }},
      {"input_dim_t", [&](const json& v) { m.input_dim_t = size_field(r, v, "input_dim_t"); }},
      {"d_model", [&](const json& v) { m.d_model = size_field(r, v, "d_model"); }},
      {"n_heads", [&](const json& v) { m.n_heads = size_field(r, v, "n_heads"); }},
      {"n_layers", [&](const json& v) { m.n_layers = size_field(r, v, "n_layers"); }},
      {"ff_mult", [&](const json& v) { m.ff_mult = size_field(r, v, "ff_mult"); }},
      {"n_classes", [&](const json& v) { m.n_classes = size_field(r, v, "n_classes"); }},
      {"gating_mode", [&](const json& v) { m.gating_mode = parse_gating_mode(r.str(v, "gating_mode")); }},
      {"dropout_rate", [&](const json& v) { m.dropout_rate = r.real(v, "dropout_rate"); }},
      {"positional_encoding", [&](const json& v) { m.positional_encoding = r.boolean(v, "positional_encoding"); }},
      {"seed", [&](const json& v) { m.seed = r.u64(v, "seed"); }},
  });
}

void apply_json(const json& j, TrainConfig& t) {
  const Reader r{"config train"};
  apply_keys(r, j, SetterList{
      {"learning_rate", [&](const json& v) { t.learning_rate = r.real(v, "learning_rate"); }},
      {"epochs", [&](const json& v) { t.epochs = size_field(r, v, "epochs"); }},
      {"batch_size", [&](const json& v) { t.batch_size = size_field(r, v, "batch_size"); }},
      {"weight_decay", [&](const json& v) { t.weight_decay = r.real(v, "weight_decay"); }},
      {"optimizer", [&](const json& v) { t.optimizer = parse_optimizer(r.str(v, "optimizer")); }},
      {"beta1", [&](const json& v) { t.beta1 = r.real(v, "beta1"); }},
      {"beta2", [&](const json& v) { t.beta2 = r.real(v, "beta2"); }},
      {"adam_eps", [&](const json& v) { t.adam_eps = r.real(v, "adam_eps"); }},
      {"class_weighting", [&](const json& v) { t.class_weighting = r.boolean(v, "class_weighting"); }},
      {"val_fraction", [&](const json& v) { t.val_fraction = r.real(v, "val_fraction"); }},
      {"seed", [&](const json& v) { t.seed = r.u64(v, "seed"); }},
  });
}

void apply_json(const json& j, EvalConfig& e) {
  const Reader r{"config eval"};
  apply_keys(r, j, SetterList{
      {"folds", [&](const json& v) { e.folds = size_field(r, v, "folds"); }},
      {"threads", [&](const json& v) { e.threads = size_field(r, v, "threads"); }},
      {"plot_samples",
       [&](const json& v) {
         if (!v.is_array()) throw ConfigError("config eval: 'plot_samples' must be a list of sample ids");
         e.plot_samples.clear();
         for (const auto& id : v) e.plot_samples.push_back(r.str(id, "plot_samples"));
       }},
  });
}

void apply_json(const json& j, RunConfig& c) {
  const Reader r{"config"};
  apply_keys(r, j, SetterList{
      {"synth", [&](const json& v) { apply_json(v, c.synth); }},
      {"model", [&](const json& v) { apply_json(v, c.model); }},
      {"train", [&](const json& v) { apply_json(v, c.train); }},
      {"eval", [&](const json& v) { apply_json(v, c.eval); }},
  });
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  apply_json(j, m);
  m.validate();
  return m;
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  RunConfig c;
  apply_json(j, c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace acmg
