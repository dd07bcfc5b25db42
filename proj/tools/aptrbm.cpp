// aptrbm: train RBMs with SML / SML-PT / SML-APT and run comparison grids.
//
//   aptrbm train [--config FILE] [--algo A] [--chains M] [--lr X] ... [--out DIR]
//   aptrbm grid  (--preset fig1_grid [--scale full|ci] [--hyper-grid] | --plan FILE) [--out DIR]
//   aptrbm summarize DIR
//
// Precedence for run settings: built-in defaults < --config file < flags.
// The output directory defaults to $APTRBM_OUT, then ./aptrbm_out.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "aptrbm/experiment.hpp"

namespace {

using namespace aptrbm;

struct Overrides {
  std::optional<std::string> algo;
  std::optional<std::uint64_t> chains;
  std::optional<double> lr;
  std::optional<double> beta_lr;
  std::optional<double> rmin;
  std::optional<std::uint64_t> updates;
  std::optional<std::uint64_t> minibatch;
  std::optional<std::uint64_t> k;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> hidden;
  std::optional<std::uint64_t> eval_interval;
  std::optional<std::uint64_t> post_sampling;
  std::optional<int> image_side;
  std::optional<std::uint64_t> eval_size;
  std::optional<std::string> ladder;
  bool wall_clock = false;

  void attach(CLI::App* app) {
    app->add_option("--algo", algo, "SML, SML_PT or SML_APT");
    app->add_option("--chains", chains, "initial number of tempered chains");
    app->add_option("--lr", lr, "SGD learning rate");
    app->add_option("--beta-lr", beta_lr, "learning rate on the inverse temperatures");
    app->add_option("--rmin", rmin, "minimum average swap rate before spawning");
    app->add_option("--updates", updates, "number of gradient updates");
    app->add_option("--minibatch", minibatch, "minibatch size");
    app->add_option("--k", k, "Gibbs steps per update");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--hidden", hidden, "number of hidden units");
    app->add_option("--eval-interval", eval_interval, "updates between metrics rows");
    app->add_option("--post-sampling", post_sampling, "sampling-only sweeps after training");
    app->add_option("--image-side", image_side, "side of the square synthetic images");
    app->add_option("--eval-size", eval_size, "examples in the likelihood evaluation set");
    app->add_option("--ladder", ladder, "initial ladder: linear or geometric");
    app->add_flag("--wall-clock", wall_clock, "fill the wall_clock_seconds column (breaks byte-reproducibility)");
  }

  void apply(RunConfig& rc) const {
    auto set = [&](const char* key, const auto& opt) {
      if (opt) {
        if constexpr (std::is_same_v<std::decay_t<decltype(*opt)>, std::string>) set_config_value(rc, key, *opt);
        else set_config_value(rc, key, format_value(*opt));
      }
    };
    set("algorithm", algo);
    set("initial_num_chains", chains);
    set("learning_rate", lr);
    set("beta_learning_rate", beta_lr);
    set("min_avg_swap_rate", rmin);
    set("num_updates", updates);
    set("minibatch_size", minibatch);
    set("gibbs_steps_per_update", k);
    set("seed", seed);
    set("num_hidden", hidden);
    set("eval_interval", eval_interval);
    set("post_sampling_steps", post_sampling);
    set("image_side", image_side);
    set("eval_set_size", eval_size);
    set("initial_ladder", ladder);
    if (wall_clock) rc.train.record_wall_clock = true;
  }

  template <typename T>
  static std::string format_value(T v) {
    if constexpr (std::is_floating_point_v<T>) return format_double(v);
    else return std::to_string(v);
  }
};

std::string default_output_dir() {
  if (const char* env = std::getenv("APTRBM_OUT"); env && *env) return env;
  return "aptrbm_out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic maximum likelihood RBM training with adaptive parallel tempering"};
  app.require_subcommand(1);

  std::string out_dir = default_output_dir();
  std::size_t jobs = 1;

  auto* train_cmd = app.add_subcommand("train", "single training run");
  std::optional<std::string> config_file;
  std::string label = "run";
  Overrides overrides;
  train_cmd->add_option("--config", config_file, "key = value config file");
  train_cmd->add_option("--label", label, "label used in file names and summaries");
  train_cmd->add_option("--out", out_dir, "output directory");
  overrides.attach(train_cmd);

  auto* grid_cmd = app.add_subcommand("grid", "run a preset comparison grid or a plan file");
  std::optional<std::string> preset, plan_file;
  std::string scale = "full";
  bool hyper_grid = false;
  std::size_t num_seeds = 5;
  std::optional<double> grid_lr, grid_beta_lr;
  grid_cmd->add_option("--preset", preset, "named preset (fig1_grid)");
  grid_cmd->add_option("--plan", plan_file, "JSON plan file");
  grid_cmd->add_option("--scale", scale, "full (28x28, 10 hidden) or ci (8x8, 5 hidden)")
      ->check(CLI::IsMember({"full", "ci"}));
  grid_cmd->add_flag("--hyper-grid", hyper_grid, "sweep lr {1e-3,1e-4} x beta-lr {1e-3,1e-4,1e-5}");
  grid_cmd->add_option("--seeds", num_seeds, "replicates per label");
  grid_cmd->add_option("--lr", grid_lr, "SGD learning rate (single cell)");
  grid_cmd->add_option("--beta-lr", grid_beta_lr, "beta learning rate (single cell)");
  grid_cmd->add_option("--jobs", jobs, "worker threads");
  grid_cmd->add_option("--out", out_dir, "output directory");

  auto* sum_cmd = app.add_subcommand("summarize", "print per-label summary of an output directory");
  std::string sum_dir;
  sum_cmd->add_option("dir", sum_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      RunConfig rc;
      if (config_file) rc = load_config(*config_file);
      overrides.apply(rc);
      ExperimentPlan plan;
      plan.output_dir = out_dir;
      plan.runs.push_back({label, rc, {rc.train.seed}});
      try {
        plan.validate();
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
      }
      const int status = run_experiment(plan, 1, &std::cerr);
      summarize(out_dir, std::cout, std::cerr);
      return status;
    }

    if (*grid_cmd) {
      ExperimentPlan plan;
      if (preset && plan_file) {
        std::cerr << "error: --preset and --plan are mutually exclusive\n";
        return 1;
      }
      if (preset) {
        if (*preset != "fig1_grid") {
          std::cerr << "error: unknown preset '" << *preset << "'\n";
          return 1;
        }
        GridOptions opt;
        opt.scale = scale == "ci" ? Scale::kCi : Scale::kFull;
        opt.num_seeds = num_seeds;
        if (hyper_grid) {
          opt.learning_rates = {1e-3, 1e-4};
          opt.beta_learning_rates = {1e-3, 1e-4, 1e-5};
        }
        if (grid_lr) opt.learning_rates = {*grid_lr};
        if (grid_beta_lr) opt.beta_learning_rates = {*grid_beta_lr};
        plan = fig1_grid(opt, out_dir);
      } else if (plan_file) {
        std::ifstream in(*plan_file);
        if (!in) {
          std::cerr << "error: cannot open plan file " << *plan_file << '\n';
          return 1;
        }
        nlohmann::json j;
        in >> j;
        const bool out_given = grid_cmd->get_option("--out")->count() > 0;
        plan = plan_from_json(j, out_given ? std::optional<fs::path>(out_dir) : std::nullopt);
      } else {
        std::cerr << "error: grid needs --preset or --plan\n";
        return 1;
      }
      try {
        plan.validate();
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
      }
      const int status = run_experiment(plan, jobs, &std::cerr);
      if (!plan.runs.empty()) summarize(plan.output_dir, std::cout, std::cerr);
      return status;
    }

    if (*sum_cmd) return summarize(sum_dir, std::cout, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
