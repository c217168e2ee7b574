#pragma once

// On-disk run layout:
//
//   <out>/run_<seed>/config.yaml
//   <out>/run_<seed>/log.csv                  appended after every epoch
//   <out>/run_<seed>/epoch_<n>/classifier.ckpt
//   <out>/run_<seed>/epoch_<n>/qtable.bin
//   <out>/run_<seed>/epoch_<n>/log.csv        log prefix up to epoch n
//   <out>/run_<seed>/epoch_<n>/dataset.csv    the classifier dataset
//   <out>/run_<seed>/epoch_<n>/counts.csv
//   <out>/run_<seed>/epoch_<n>/manifest.yaml

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mural/experiment/config_io.hpp"
#include "mural/net/checkpoint.hpp"
#include "mural/rl/run.hpp"

namespace mural::experiment {

namespace fs = std::filesystem;

inline fs::path run_dir(const ExperimentConfig& c) {
  return fs::path(c.output_dir) / ("run_" + std::to_string(c.run.require_seed()));
}

inline fs::path epoch_dir(const ExperimentConfig& c, std::size_t epoch) {
  return run_dir(c) / ("epoch_" + std::to_string(epoch));
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
}

/// Epoch hook that appends the run log and writes checkpoints every
/// `checkpoint_every` epochs (0: only the final epoch).
class CheckpointWriter {
 public:
  explicit CheckpointWriter(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    const fs::path dir = run_dir(cfg_);
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
    write_text(dir / "config.yaml", serialize_config(cfg_));
    std::ofstream(dir / "log.csv", std::ios::binary) << rl::kLogHeader << '\n';
  }

  void operator()(const rl::EpochState& e) const {
    {
      std::ofstream f(run_dir(cfg_) / "log.csv", std::ios::binary | std::ios::app);
      f << rl::format_log_row(e.log->rows.back()) << '\n';
      if (!f) throw std::runtime_error("cannot append run log");
    }
    const std::size_t every = cfg_.run.checkpoint_every;
    const bool last = e.epoch == cfg_.run.epochs;
    if (last || (every > 0 && e.epoch % every == 0)) write_epoch(e);
  }

  void write_epoch(const rl::EpochState& e) const {
    const fs::path dir = epoch_dir(cfg_, e.epoch);
    fs::create_directories(dir);
    const rl::ClassifierState& c = *e.classifier;
    YAML::Emitter m;
    m << YAML::BeginMap;
    m << YAML::Key << "epoch" << YAML::Value << e.epoch;
    m << YAML::Key << "method" << YAML::Value << rl::to_string(c.method);
    m << YAML::Key << "meta_seed" << YAML::Value << c.meta_cfg.seed;
    m << YAML::Key << "classifier" << YAML::Value;
    if (c.meta) {
      net::save_checkpoint(*c.meta, (dir / "classifier.ckpt").string());
      m << "meta_nml";
      if (c.mle) net::save_checkpoint(*c.mle, (dir / "mle.ckpt").string());
    } else if (c.mle) {
      net::save_checkpoint(*c.mle, (dir / "classifier.ckpt").string());
      m << "mle";
    } else {
      m << "none";
    }
    m << YAML::EndMap;
    write_text(dir / "manifest.yaml", std::string(m.c_str()) + "\n");
    e.q->save((dir / "qtable.bin").string());
    {
      std::ofstream f(dir / "log.csv", std::ios::binary);
      e.log->write_csv(f);
    }
    {
      std::ofstream f(dir / "dataset.csv", std::ios::binary);
      nml::write_dataset_csv(c.meta_data, f);
    }
    {
      std::ofstream f(dir / "counts.csv", std::ios::binary);
      rl::write_counts_csv(c.counts, f);
    }
  }

 private:
  ExperimentConfig cfg_;
};

struct LoadedCheckpoint {
  ExperimentConfig config;
  std::size_t epoch = 0;
  rl::ClassifierState classifier;
};

/// Reads an epoch directory written by CheckpointWriter.
inline LoadedCheckpoint load_epoch_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint: no directory '" + dir.string() + "'");
  LoadedCheckpoint out;
  out.config = load_config((dir.parent_path() / "config.yaml").string());
  YAML::Node m;
  try {
    m = YAML::LoadFile((dir / "manifest.yaml").string());
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("checkpoint: bad manifest in '" + dir.string() + "': " + e.what());
  }
  out.epoch = m["epoch"].as<std::size_t>();
  rl::ClassifierState& c = out.classifier;
  c.method = out.config.run.method;
  c.meta_cfg = out.config.run.meta;
  c.meta_cfg.seed = m["meta_seed"].as<std::uint64_t>();
  c.bonus_scale = out.config.run.mle.bonus_scale;
  const auto kind = m["classifier"].as<std::string>();
  if (kind == "meta_nml") {
    c.meta = net::load_checkpoint((dir / "classifier.ckpt").string());
    if (fs::exists(dir / "mle.ckpt")) c.mle = net::load_checkpoint((dir / "mle.ckpt").string());
  } else if (kind == "mle") {
    c.mle = net::load_checkpoint((dir / "classifier.ckpt").string());
  }
  c.meta_data = nml::load_dataset_csv((dir / "dataset.csv").string());
  std::ifstream counts(dir / "counts.csv");
  if (!counts) throw std::runtime_error("checkpoint: missing counts.csv");
  c.counts = rl::read_counts_csv(counts);
  return out;
}

}  // namespace mural::experiment
