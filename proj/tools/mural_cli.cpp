// mural: experiment driver.
//
//   mural run --config cfg.yaml
//   mural validate-config --config cfg.yaml
//   mural export-reward-grid --checkpoint runs/run_0/epoch_200 --resolution 50
//   mural export-visitations --checkpoint runs/run_0/epoch_200
//   mural bench --hidden 64,64 --dataset-size 32 --queries 100
//   mural convergence --dataset data/reference_dataset.csv --steps 0,1,2,5
//
// Exit codes: 0 ok, 1 runtime failure, 2 config/schema error.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mural/experiment/analysis.hpp"
#include "mural/experiment/checkpoint_dir.hpp"
#include "mural/experiment/config_io.hpp"

namespace ex = mural::experiment;

namespace {

// Writes to `path`, or stdout when empty.
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  fn(f);
}

int cmd_run(const std::string& config_path, const std::string& output_override) {
  auto cfg = ex::load_config(config_path);
  if (!output_override.empty()) cfg.output_dir = output_override;
  ex::CheckpointWriter writer(cfg);
  const auto log = mural::rl::run(cfg.run, [&](const mural::rl::EpochState& e) { writer(e); });
  const auto& last = log.rows.back();
  std::cerr << "run " << mural::rl::to_string(cfg.run.method) << " seed " << *cfg.run.seed
            << ": epoch " << last.epoch << " success " << last.success_rate << " coverage "
            << last.coverage << " -> " << ex::run_dir(cfg).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MURAL experiment driver"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  auto* run = app.add_subcommand("run", "Run one training job from a config file");
  run->add_option("--config,-c", config_path, "YAML config")->required();
  run->add_option("--output-dir", output_dir, "Override output_dir from the config");

  std::string validate_path;
  bool print_canonical = false;
  auto* validate = app.add_subcommand("validate-config", "Check a config file against the schema");
  validate->add_option("--config,-c", validate_path, "YAML config")->required();
  validate->add_flag("--print", print_canonical, "Print the canonical serialization");

  std::string ckpt, out;
  std::size_t resolution = 50;
  std::string grid_classifier = "stored";
  auto* grid = app.add_subcommand("export-reward-grid", "Rewards on a grid over [-4,4]^2");
  grid->add_option("--checkpoint", ckpt, "epoch_<n> checkpoint directory")->required();
  grid->add_option("--resolution", resolution, "Grid points per axis");
  grid->add_option("--classifier", grid_classifier, "stored | tabular")
      ->check(CLI::IsMember({"stored", "tabular"}));
  grid->add_option("--out,-o", out, "Output CSV (default stdout)");

  auto* vis = app.add_subcommand("export-visitations", "Per-cell visit counts");
  vis->add_option("--checkpoint", ckpt, "epoch_<n> checkpoint directory")->required();
  vis->add_option("--out,-o", out, "Output CSV (default stdout)");

  ex::BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Per-query latency of the three classifiers");
  bench->add_option("--hidden", bo.hidden, "Hidden layer sizes")->delimiter(',');
  bench->add_option("--dataset-size", bo.dataset_size, "Synthetic dataset size");
  bench->add_option("--queries", bo.n_queries, "Queries for feedforward and meta-NML");
  bench->add_option("--naive-queries", bo.naive_queries, "Queries for naive CNML");
  bench->add_option("--seed", bo.seed, "Seed");
  bench->add_option("--out,-o", out, "Output CSV (the table goes to stderr)");

  std::string dataset_path;
  std::vector<std::size_t> steps{0, 1, 2, 5};
  auto* conv = app.add_subcommand("convergence", "Mean |meta - naive| gap per adaptation steps");
  conv->add_option("--dataset", dataset_path, "Dataset CSV")->required();
  conv->add_option("--steps", steps, "Adaptation step counts")->delimiter(',');
  conv->add_option("--out,-o", out, "Output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, output_dir);

    if (*validate) {
      const auto cfg = ex::load_config(validate_path);
      if (print_canonical) std::cout << ex::serialize_config(cfg);
      else std::cerr << validate_path << ": ok\n";
      return 0;
    }

    if (*grid) {
      const auto ck = ex::load_epoch_checkpoint(ckpt);
      const auto which =
          grid_classifier == "tabular" ? ex::GridClassifier::tabular : ex::GridClassifier::stored;
      const auto g = ex::reward_grid(ck, resolution, which);
      emit(out, [&](std::ostream& os) { ex::write_reward_grid_csv(g, os); });
      return 0;
    }

    if (*vis) {
      const auto ck = ex::load_epoch_checkpoint(ckpt);
      const auto world = mural::rl::make_world(ck.config.run);
      emit(out, [&](std::ostream& os) {
        mural::env::write_visitations_csv(ck.classifier.counts, world, os);
      });
      return 0;
    }

    if (*bench) {
      const auto rows = ex::bench(bo);
      std::cerr << std::left << std::setw(14) << "classifier" << std::setw(16) << "latency_s"
                << "per_epoch_s\n";
      for (const auto& r : rows)
        std::cerr << std::setw(14) << r.classifier << std::setw(16) << r.latency_s
                  << r.per_epoch_s << '\n';
      emit(out, [&](std::ostream& os) { ex::write_bench_csv(rows, os); });
      return 0;
    }

    if (*conv) {
      const auto data = mural::nml::load_dataset_csv(dataset_path);
      const auto gaps = ex::convergence_gaps(data, steps);
      emit(out, [&](std::ostream& os) {
        os << "steps,mean_abs_gap\n";
        os.precision(17);
        for (std::size_t i = 0; i < steps.size(); ++i) os << steps[i] << ',' << gaps[i] << '\n';
      });
      return 0;
    }
  } catch (const ex::ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
