#pragma once

// Experiment configuration files (YAML). Every key is optional except
// schema_version and run.seed; unknown keys are rejected by name.

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mural/rl/config.hpp"

namespace mural::experiment {

inline constexpr const char* kSchemaVersion = "mural-config-v1";

/// A schema violation; `key` is the offending key's dotted path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  std::string schema_version = kSchemaVersion;
  std::string output_dir = "runs";
  rl::RunConfig run;
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void reject_unknown(const YAML::Node& n, const std::string& prefix,
                           const std::set<std::string>& known) {
  if (!n.IsMap()) throw ConfigError(prefix, "config: '" + prefix + "' must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!known.count(key))
      throw ConfigError(join(prefix, key), "config: unknown key '" + join(prefix, key) + "'");
  }
}

template <class T>
void read(const YAML::Node& n, const std::string& prefix, const char* key, T& out) {
  if (!n[key]) return;
  try {
    out = n[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(join(prefix, key), "config: bad value for '" + join(prefix, key) + "'");
  }
}

template <class E, class Parse>
void read_enum(const YAML::Node& n, const std::string& prefix, const char* key, E& out,
               Parse parse) {
  if (!n[key]) return;
  std::string s;
  read(n, prefix, key, s);
  auto v = parse(s);
  if (!v) throw ConfigError(join(prefix, key), "config: unknown " + join(prefix, key) + " '" + s + "'");
  out = *v;
}

inline std::optional<nml::MetaGradient> parse_meta_gradient(const std::string& s) {
  if (s == "first_order") return nml::MetaGradient::first_order;
  if (s == "second_order") return nml::MetaGradient::second_order;
  return std::nullopt;
}

inline const char* to_string(nml::MetaGradient g) {
  return g == nml::MetaGradient::first_order ? "first_order" : "second_order";
}

}  // namespace detail

inline ExperimentConfig parse_config(const YAML::Node& root) {
  using namespace detail;
  if (!root.IsMap()) throw ConfigError("", "config: top level must be a mapping");
  reject_unknown(root, "", {"schema_version", "output_dir", "run", "meta_nml", "mle", "q"});
  ExperimentConfig c;
  if (!root["schema_version"])
    throw ConfigError("schema_version", "config: missing key 'schema_version'");
  read(root, "", "schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("schema_version", "config: unsupported schema_version '" +
                                            c.schema_version + "' (expected " + kSchemaVersion + ")");
  read(root, "", "output_dir", c.output_dir);

  rl::RunConfig& r = c.run;
  if (const auto n = root["run"]) {
    reject_unknown(n, "run",
                   {"method", "env", "layout", "seed", "epochs", "steps_per_epoch", "n_train",
                    "goal_examples", "negatives_capacity", "eval_rollouts", "eval_start_jitter",
                    "hidden_sizes", "meta_epochs_per_retrain", "checkpoint_every",
                    "log_wall_clock"});
    read_enum(n, "run", "method", r.method, rl::parse_method);
    read_enum(n, "run", "env", r.env, rl::parse_env_kind);
    read(n, "run", "layout", r.layout_path);
    if (n["seed"]) {
      std::uint64_t s = 0;
      read(n, "run", "seed", s);
      r.seed = s;
    }
    read(n, "run", "epochs", r.epochs);
    read(n, "run", "steps_per_epoch", r.steps_per_epoch);
    read(n, "run", "n_train", r.n_train);
    read(n, "run", "goal_examples", r.goal_examples);
    read(n, "run", "negatives_capacity", r.negatives_capacity);
    read(n, "run", "eval_rollouts", r.eval_rollouts);
    read(n, "run", "eval_start_jitter", r.eval_start_jitter);
    read(n, "run", "hidden_sizes", r.hidden_sizes);
    read(n, "run", "meta_epochs_per_retrain", r.meta_epochs_per_retrain);
    read(n, "run", "checkpoint_every", r.checkpoint_every);
    read(n, "run", "log_wall_clock", r.log_wall_clock);
  }
  if (!r.seed) throw ConfigError("run.seed", "config: missing key 'run.seed'");

  if (const auto n = root["meta_nml"]) {
    auto& m = r.meta;
    reject_unknown(n, "meta_nml",
                   {"inner_lr", "adaptation_batch_size", "tasks_per_epoch", "kernel_lambda_dist",
                    "query_steps", "retrain_interval", "meta_test_set_size", "outer_lr",
                    "meta_batch_size", "meta_gradient", "kernel_weighting",
                    "importance_weighting"});
    read(n, "meta_nml", "inner_lr", m.inner_lr);
    read(n, "meta_nml", "adaptation_batch_size", m.adaptation_batch_size);
    read(n, "meta_nml", "tasks_per_epoch", m.tasks_per_epoch);
    read(n, "meta_nml", "kernel_lambda_dist", m.kernel_lambda_dist);
    read(n, "meta_nml", "query_steps", m.query_steps);
    read(n, "meta_nml", "retrain_interval", m.retrain_interval);
    read(n, "meta_nml", "meta_test_set_size", m.meta_test_set_size);
    read(n, "meta_nml", "outer_lr", m.outer_lr);
    read(n, "meta_nml", "meta_batch_size", m.meta_batch_size);
    read_enum(n, "meta_nml", "meta_gradient", m.meta_gradient, parse_meta_gradient);
    read(n, "meta_nml", "kernel_weighting", m.kernel_weighting);
    read(n, "meta_nml", "importance_weighting", m.importance_weighting);
  }
  if (const auto n = root["mle"]) {
    auto& m = r.mle;
    reject_unknown(n, "mle", {"passes_per_epoch", "learning_rate", "batch_size", "mixup_alpha",
                              "weight_decay", "bonus_scale"});
    read(n, "mle", "passes_per_epoch", m.passes_per_epoch);
    read(n, "mle", "learning_rate", m.learning_rate);
    read(n, "mle", "batch_size", m.batch_size);
    read(n, "mle", "mixup_alpha", m.mixup_alpha);
    read(n, "mle", "weight_decay", m.weight_decay);
    read(n, "mle", "bonus_scale", m.bonus_scale);
  }
  if (const auto n = root["q"]) {
    auto& q = r.q;
    reject_unknown(n, "q", {"temperature", "learning_rate", "discount", "sweeps_per_epoch"});
    read(n, "q", "temperature", q.temperature);
    read(n, "q", "learning_rate", q.learning_rate);
    read(n, "q", "discount", q.discount);
    read(n, "q", "sweeps_per_epoch", q.sweeps_per_epoch);
  }

  try {
    r.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("run", e.what());
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("config: malformed YAML: ") + e.what());
  }
  return parse_config(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const ExperimentConfig& c) {
  const rl::RunConfig& r = c.run;
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
  e << YAML::Key << "output_dir" << YAML::Value << YAML::DoubleQuoted << c.output_dir;

  e << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "method" << YAML::Value << rl::to_string(r.method);
  e << YAML::Key << "env" << YAML::Value << rl::to_string(r.env);
  e << YAML::Key << "layout" << YAML::Value << YAML::DoubleQuoted << r.layout_path;
  e << YAML::Key << "seed" << YAML::Value << r.require_seed();
  e << YAML::Key << "epochs" << YAML::Value << r.epochs;
  e << YAML::Key << "steps_per_epoch" << YAML::Value << r.steps_per_epoch;
  e << YAML::Key << "n_train" << YAML::Value << r.n_train;
  e << YAML::Key << "goal_examples" << YAML::Value << r.goal_examples;
  e << YAML::Key << "negatives_capacity" << YAML::Value << r.negatives_capacity;
  e << YAML::Key << "eval_rollouts" << YAML::Value << r.eval_rollouts;
  e << YAML::Key << "eval_start_jitter" << YAML::Value << r.eval_start_jitter;
  e << YAML::Key << "hidden_sizes" << YAML::Value << YAML::Flow << r.hidden_sizes;
  e << YAML::Key << "meta_epochs_per_retrain" << YAML::Value << r.meta_epochs_per_retrain;
  e << YAML::Key << "checkpoint_every" << YAML::Value << r.checkpoint_every;
  e << YAML::Key << "log_wall_clock" << YAML::Value << r.log_wall_clock;
  e << YAML::EndMap;

  const auto& m = r.meta;
  e << YAML::Key << "meta_nml" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "inner_lr" << YAML::Value << m.inner_lr;
  e << YAML::Key << "adaptation_batch_size" << YAML::Value << m.adaptation_batch_size;
  e << YAML::Key << "tasks_per_epoch" << YAML::Value << m.tasks_per_epoch;
  e << YAML::Key << "kernel_lambda_dist" << YAML::Value << m.kernel_lambda_dist;
  e << YAML::Key << "query_steps" << YAML::Value << m.query_steps;
  e << YAML::Key << "retrain_interval" << YAML::Value << m.retrain_interval;
  e << YAML::Key << "meta_test_set_size" << YAML::Value << m.meta_test_set_size;
  e << YAML::Key << "outer_lr" << YAML::Value << m.outer_lr;
  e << YAML::Key << "meta_batch_size" << YAML::Value << m.meta_batch_size;
  e << YAML::Key << "meta_gradient" << YAML::Value << detail::to_string(m.meta_gradient);
  e << YAML::Key << "kernel_weighting" << YAML::Value << m.kernel_weighting;
  e << YAML::Key << "importance_weighting" << YAML::Value << m.importance_weighting;
  e << YAML::EndMap;

  const auto& b = r.mle;
  e << YAML::Key << "mle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "passes_per_epoch" << YAML::Value << b.passes_per_epoch;
  e << YAML::Key << "learning_rate" << YAML::Value << b.learning_rate;
  e << YAML::Key << "batch_size" << YAML::Value << b.batch_size;
  e << YAML::Key << "mixup_alpha" << YAML::Value << b.mixup_alpha;
  e << YAML::Key << "weight_decay" << YAML::Value << b.weight_decay;
  e << YAML::Key << "bonus_scale" << YAML::Value << b.bonus_scale;
  e << YAML::EndMap;

  const auto& q = r.q;
  e << YAML::Key << "q" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "temperature" << YAML::Value << q.temperature;
  e << YAML::Key << "learning_rate" << YAML::Value << q.learning_rate;
  e << YAML::Key << "discount" << YAML::Value << q.discount;
  e << YAML::Key << "sweeps_per_epoch" << YAML::Value << q.sweeps_per_epoch;
  e << YAML::EndMap;

  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace mural::experiment
