#pragma once

// Experiment harness behind the command-line tool: flat key/value run
// configs, multi-run plans, per-run artifacts and summaries.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "aptrbm/dataset.hpp"
#include "aptrbm/rbm_io.hpp"
#include "aptrbm/training.hpp"

namespace aptrbm {

namespace fs = std::filesystem;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  TrainConfig train;
  int image_side = 28;
  std::uint64_t data_seed = 20110616;
  std::uint64_t eval_set_size = 10000;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    // allow 1e5-style counts
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos == v.size() && d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

// Applies one key = value setting. Keys mirror the TrainConfig field names.
inline void set_config_value(RunConfig& rc, const std::string& key, std::string value) {
  value = detail::trim(value);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
  auto& t = rc.train;
  auto& a = t.adaptation;
  try {
    if (key == "algorithm") t.algorithm = parse_algorithm(value);
    else if (key == "learning_rate") t.learning_rate = detail::parse_real(key, value);
    else if (key == "num_updates") t.num_updates = detail::parse_count(key, value);
    else if (key == "minibatch_size") t.minibatch_size = detail::parse_count(key, value);
    else if (key == "gibbs_steps_per_update") t.gibbs_steps_per_update = detail::parse_count(key, value);
    else if (key == "num_hidden") t.num_hidden = detail::parse_count(key, value);
    else if (key == "initial_num_chains") t.initial_num_chains = detail::parse_count(key, value);
    else if (key == "initial_ladder") t.initial_ladder = parse_ladder(value);
    else if (key == "geometric_beta_min") t.geometric_beta_min = detail::parse_real(key, value);
    else if (key == "beta_learning_rate") a.beta_learning_rate = detail::parse_real(key, value);
    else if (key == "min_avg_swap_rate") a.min_avg_swap_rate = detail::parse_real(key, value);
    else if (key == "spawn_check_interval") a.spawn_check_interval = detail::parse_count(key, value);
    else if (key == "burn_in_sweeps") a.burn_in_sweeps = detail::parse_count(key, value);
    else if (key == "max_chains") a.max_chains = detail::parse_count(key, value);
    else if (key == "post_sampling_steps") t.post_sampling_steps = detail::parse_count(key, value);
    else if (key == "eval_interval") t.eval_interval = detail::parse_count(key, value);
    else if (key == "seed") t.seed = detail::parse_count(key, value);
    else if (key == "record_wall_clock") t.record_wall_clock = detail::parse_bool(key, value);
    else if (key == "exact_cap") t.exact_cap = static_cast<int>(detail::parse_count(key, value));
    else if (key == "image_side") rc.image_side = static_cast<int>(detail::parse_count(key, value));
    else if (key == "data_seed") rc.data_seed = detail::parse_count(key, value);
    else if (key == "eval_set_size") rc.eval_set_size = detail::parse_count(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

// Reads '# comment' / 'key = value' lines on top of the given defaults.
inline RunConfig parse_config(std::istream& is, RunConfig rc = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(rc, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return rc;
}

inline RunConfig load_config(const fs::path& path, RunConfig rc = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, std::move(rc));
}

inline void write_config(std::ostream& os, const RunConfig& rc) {
  const auto& t = rc.train;
  const auto& a = t.adaptation;
  os << "algorithm = \"" << to_string(t.algorithm) << "\"\n"
     << "learning_rate = " << format_double(t.learning_rate) << '\n'
     << "num_updates = " << t.num_updates << '\n'
     << "minibatch_size = " << t.minibatch_size << '\n'
     << "gibbs_steps_per_update = " << t.gibbs_steps_per_update << '\n'
     << "num_hidden = " << t.num_hidden << '\n'
     << "initial_num_chains = " << t.initial_num_chains << '\n'
     << "initial_ladder = \"" << to_string(t.initial_ladder) << "\"\n"
     << "geometric_beta_min = " << format_double(t.geometric_beta_min) << '\n'
     << "beta_learning_rate = " << format_double(a.beta_learning_rate) << '\n'
     << "min_avg_swap_rate = " << format_double(a.min_avg_swap_rate) << '\n'
     << "spawn_check_interval = " << a.spawn_check_interval << '\n'
     << "burn_in_sweeps = " << a.burn_in_sweeps << '\n'
     << "max_chains = " << a.max_chains << '\n'
     << "post_sampling_steps = " << t.post_sampling_steps << '\n'
     << "eval_interval = " << t.eval_interval << '\n'
     << "seed = " << t.seed << '\n'
     << "record_wall_clock = " << (t.record_wall_clock ? "true" : "false") << '\n'
     << "exact_cap = " << t.exact_cap << '\n'
     << "image_side = " << rc.image_side << '\n'
     << "data_seed = " << rc.data_seed << '\n'
     << "eval_set_size = " << rc.eval_set_size << '\n';
}

// Dataset, evaluation snapshot and training for one seeded run. The mixture
// and the evaluation set depend on data_seed only; the training stream, the
// initial parameters and the sampler on train.seed.
inline TrainResult run_single(const RunConfig& rc) {
  const MixtureSpec spec = standard_spec_from_seed(rc.data_seed, rc.image_side);
  Rng eval_rng = make_stream(rc.data_seed, 1);
  const BinaryMatrix eval_set = sample_batch(spec, static_cast<std::size_t>(rc.eval_set_size), eval_rng);
  MixtureStream stream(spec, make_stream(rc.train.seed, 2));
  return train(rc.train, stream, eval_set);
}

struct PlannedRun {
  std::string label;
  RunConfig config;
  std::vector<std::uint64_t> seeds;
};

struct ExperimentPlan {
  std::vector<PlannedRun> runs;
  fs::path output_dir;

  void validate() const {
    std::set<std::string> labels;
    for (const auto& r : runs) {
      if (r.label.empty()) throw ConfigError("plan: empty run label");
      if (!labels.insert(r.label).second) throw ConfigError("plan: duplicate label '" + r.label + "'");
      std::set<std::uint64_t> seeds(r.seeds.begin(), r.seeds.end());
      if (seeds.size() != r.seeds.size()) throw ConfigError("plan: repeated seed under '" + r.label + "'");
      if (r.seeds.empty()) throw ConfigError("plan: no seeds for '" + r.label + "'");
      r.config.train.validate();
    }
  }
};

enum class Scale { kFull, kCi };

// Base run settings for one scale of the comparison grid.
inline RunConfig fig1_base_config(Scale scale) {
  RunConfig rc;
  auto& t = rc.train;
  if (scale == Scale::kFull) {
    rc.image_side = 28;
    t.num_hidden = 10;
    t.num_updates = 100000;
    t.post_sampling_steps = 20000;
    t.eval_interval = 1000;
    t.adaptation.spawn_check_interval = 1000;
  } else {
    rc.image_side = 8;
    t.num_hidden = 5;
    t.num_updates = 20000;
    t.post_sampling_steps = 4000;
    t.eval_interval = 200;
    t.adaptation.spawn_check_interval = 200;
  }
  t.minibatch_size = 5;
  t.adaptation.min_avg_swap_rate = 0.4;
  return rc;
}

struct GridOptions {
  Scale scale = Scale::kFull;
  std::vector<double> learning_rates{1e-3};
  std::vector<double> beta_learning_rates{1e-4};
  std::size_t num_seeds = 5;
  std::uint64_t first_seed = 1;
};

inline std::string short_real(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// SML, SML-PT with 10/20/50 chains and SML-APT started from 10 chains. With
// one learning rate and one beta rate this is five labels; larger grids get
// one label per hyper-parameter cell.
inline ExperimentPlan fig1_grid(const GridOptions& opt, fs::path output_dir) {
  ExperimentPlan plan;
  plan.output_dir = std::move(output_dir);
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < opt.num_seeds; ++s) seeds.push_back(opt.first_seed + s);
  const bool single_cell = opt.learning_rates.size() == 1 && opt.beta_learning_rates.size() == 1;

  auto add = [&](std::string label, Algorithm algo, std::uint64_t chains, double lr, std::optional<double> blr) {
    RunConfig rc = fig1_base_config(opt.scale);
    rc.train.algorithm = algo;
    rc.train.initial_num_chains = chains;
    rc.train.learning_rate = lr;
    if (blr) rc.train.adaptation.beta_learning_rate = *blr;
    if (!single_cell) {
      label += " lr=" + short_real(lr);
      if (blr) label += " blr=" + short_real(*blr);
    }
    plan.runs.push_back({std::move(label), rc, seeds});
  };

  for (double lr : opt.learning_rates) {
    add("SML", Algorithm::kSml, 1, lr, std::nullopt);
    for (std::uint64_t m : {10u, 20u, 50u}) {
      add("SML-PT(" + std::to_string(m) + ")", Algorithm::kSmlPt, m, lr, std::nullopt);
    }
    for (double blr : opt.beta_learning_rates) add("SML-APT", Algorithm::kSmlApt, 10, lr, blr);
  }
  return plan;
}

inline std::string slugify(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') out += c;
    else if (c == '(' || c == ')' || c == ' ' || c == '=' || c == '_') {
      if (!out.empty() && out.back() != '_') out += '_';
    } else {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "run" : out;
}

inline nlohmann::json config_to_json(const RunConfig& rc) {
  std::ostringstream os;
  write_config(os, rc);
  nlohmann::json j = nlohmann::json::object();
  std::istringstream is(os.str());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    auto value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"') value = value.substr(1, value.size() - 2);
    j[detail::trim(line.substr(0, eq))] = value;
  }
  return j;
}

// Plan file: {"output_dir": ..., "runs": [{"label", "seeds", "config": {key: value}}]}.
inline ExperimentPlan plan_from_json(const nlohmann::json& j, std::optional<fs::path> output_dir = {}) {
  ExperimentPlan plan;
  plan.output_dir = output_dir ? *output_dir : fs::path(j.value("output_dir", std::string("aptrbm_out")));
  for (const auto& r : j.at("runs")) {
    PlannedRun run;
    run.label = r.at("label").get<std::string>();
    run.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
    if (r.contains("config")) {
      for (const auto& [key, value] : r.at("config").items()) {
        set_config_value(run.config, key, value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
    plan.runs.push_back(std::move(run));
  }
  return plan;
}

struct RunSummary {
  std::string label;
  std::size_t runs = 0;
  std::optional<double> loglik_mean;
  double loglik_se = 0.0;
  double tau_hat_mean = 0.0;
  double tau_hat_se = 0.0;
  double num_chains_mean = 0.0;
  double wall_clock_mean = 0.0;
  std::size_t diverged = 0;
};

inline std::pair<double, double> mean_and_se(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(xs.size()))};
}

struct RunOutcome {
  std::string label;
  std::uint64_t seed = 0;
  std::string csv;
  std::optional<double> final_loglik;
  double final_tau_hat = 1.0;
  std::size_t final_chains = 1;
  double wall_clock_seconds = 0.0;
  std::optional<Divergence> divergence;
  std::string error;
};

inline RunSummary summarize_outcomes(const std::string& label, const std::vector<RunOutcome>& outs) {
  RunSummary s;
  s.label = label;
  std::vector<double> ll, tau, chains, wall;
  for (const auto& o : outs) {
    if (!o.error.empty()) continue;
    ++s.runs;
    if (o.final_loglik) ll.push_back(*o.final_loglik);
    tau.push_back(o.final_tau_hat);
    chains.push_back(static_cast<double>(o.final_chains));
    wall.push_back(o.wall_clock_seconds);
    if (o.divergence) ++s.diverged;
  }
  if (!ll.empty()) {
    const auto [mean, se] = mean_and_se(ll);
    s.loglik_mean = mean;
    s.loglik_se = se;
  }
  std::tie(s.tau_hat_mean, s.tau_hat_se) = mean_and_se(tau);
  s.num_chains_mean = mean_and_se(chains).first;
  s.wall_clock_mean = mean_and_se(wall).first;
  return s;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j{{"label", s.label},
                   {"runs", s.runs},
                   {"final_loglik_se", s.loglik_se},
                   {"tau_hat_mean", s.tau_hat_mean},
                   {"tau_hat_se", s.tau_hat_se},
                   {"num_chains_mean", s.num_chains_mean},
                   {"wall_clock_mean", s.wall_clock_mean},
                   {"diverged_runs", s.diverged}};
  j["final_loglik_mean"] = s.loglik_mean ? nlohmann::json(*s.loglik_mean) : nlohmann::json(nullptr);
  return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Writes every artifact of one finished run; returns the outcome row.
inline RunOutcome persist_run(const fs::path& dir, const std::string& label, const RunConfig& rc,
                              const TrainResult& result) {
  const std::string stem = slugify(label) + "_seed" + std::to_string(rc.train.seed);
  const fs::path runs = dir / "runs";

  std::ostringstream csv;
  write_metrics_csv(csv, result.metrics);
  write_text(runs / (stem + ".csv"), csv.str());

  std::ostringstream cfg;
  write_config(cfg, rc);
  write_text(runs / (stem + ".cfg"), cfg.str());

  {
    std::ofstream bin(runs / (stem + ".params.bin"), std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write parameter snapshot");
    write_params_binary(bin, result.params);
  }
  nlohmann::json final_state{{"params", params_to_json(result.params)},
                             {"betas", result.ensemble.betas},
                             {"num_chains", result.ensemble.size()}};
  write_text(runs / (stem + ".final.json"), final_state.dump(1) + "\n");

  std::string spawns(kSpawnCsvHeader);
  spawns += '\n';
  for (const auto& e : result.spawns) spawns += format_spawn_row(e) + '\n';
  write_text(runs / (stem + ".spawns.csv"), spawns);

  RunOutcome o;
  o.label = label;
  o.seed = rc.train.seed;
  o.csv = "runs/" + stem + ".csv";
  const auto& last = result.metrics.back();
  o.final_loglik = last.train_loglik;
  o.final_tau_hat = last.tau_hat;
  o.final_chains = last.num_chains;
  o.wall_clock_seconds = result.wall_clock_seconds;
  o.divergence = result.divergence;
  return o;
}

// Runs every (label, seed) pair of the plan on up to `jobs` worker threads and
// writes per-run CSVs, per-label summaries and manifest.json. Returns 0 on
// success, 2 if any run or write failed.
inline int run_experiment(const ExperimentPlan& plan, std::size_t jobs = 1, std::ostream* log = nullptr) {
  plan.validate();
  std::error_code ec;
  fs::create_directories(plan.output_dir / "runs", ec);
  if (ec) throw std::runtime_error("cannot create " + (plan.output_dir / "runs").string() + ": " + ec.message());

  struct Task {
    std::size_t run;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < plan.runs.size(); ++r)
    for (auto seed : plan.runs[r].seeds) tasks.push_back({r, seed});

  std::vector<RunOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& planned = plan.runs[tasks[i].run];
      RunConfig rc = planned.config;
      rc.train.seed = tasks[i].seed;
      try {
        outcomes[i] = persist_run(plan.output_dir, planned.label, rc, run_single(rc));
      } catch (const std::exception& e) {
        outcomes[i].label = planned.label;
        outcomes[i].seed = tasks[i].seed;
        outcomes[i].error = e.what();
      }
      if (log) {
        std::lock_guard lock(log_mutex);
        *log << "[" << planned.label << " seed " << tasks[i].seed << "] "
             << (outcomes[i].error.empty() ? "done" : "failed: " + outcomes[i].error) << '\n';
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  nlohmann::json manifest{{"runs", nlohmann::json::array()}, {"summaries", nlohmann::json::array()}};
  bool failed = false;
  for (const auto& o : outcomes) {
    nlohmann::json row{{"label", o.label}, {"seed", o.seed}, {"csv", o.csv},
                       {"wall_clock_seconds", o.wall_clock_seconds}};
    if (o.divergence) row["diverged_at"] = o.divergence->update_index;
    if (!o.error.empty()) {
      row["error"] = o.error;
      failed = true;
    }
    manifest["runs"].push_back(row);
  }
  for (const auto& planned : plan.runs) {
    std::vector<RunOutcome> group;
    for (const auto& o : outcomes) if (o.label == planned.label) group.push_back(o);
    const auto name = "summary_" + slugify(planned.label) + ".json";
    write_text(plan.output_dir / name, summary_to_json(summarize_outcomes(planned.label, group)).dump(1) + "\n");
    manifest["summaries"].push_back(name);
  }
  write_text(plan.output_dir / "manifest.json", manifest.dump(1) + "\n");
  return failed ? 2 : 0;
}

// Last data row of a metrics CSV, split on commas.
inline std::optional<std::vector<std::string>> last_csv_row(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line, last;
  std::getline(in, line);  // header
  while (std::getline(in, line)) if (!line.empty()) last = line;
  if (last.empty()) return std::nullopt;
  std::vector<std::string> cells;
  std::stringstream ss(last);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

// Per-label table from manifest.json and the run CSVs. Missing files are
// listed on `err`; returns 0 if everything was found, 2 otherwise.
inline int summarize(const fs::path& output_dir, std::ostream& out, std::ostream& err) {
  std::ifstream in(output_dir / "manifest.json");
  if (!in) {
    err << "no manifest.json in " << output_dir.string() << '\n';
    return 2;
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    err << "malformed manifest.json: " << e.what() << '\n';
    return 2;
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<RunOutcome>> groups;
  int status = 0;
  for (const auto& row : manifest.at("runs")) {
    RunOutcome o;
    o.label = row.at("label").get<std::string>();
    o.seed = row.at("seed").get<std::uint64_t>();
    o.wall_clock_seconds = row.value("wall_clock_seconds", 0.0);
    if (!groups.contains(o.label)) order.push_back(o.label);
    auto& group = groups[o.label];
    const auto csv = row.value("csv", std::string());
    const auto cells = csv.empty() ? std::nullopt : last_csv_row(output_dir / csv);
    if (!cells || cells->size() < 6) {
      err << "missing or empty: " << (csv.empty() ? o.label + " seed " + std::to_string(o.seed) : csv) << '\n';
      status = 2;
      continue;
    }
    const auto& c = *cells;
    if (c[2] != "n/a") o.final_loglik = std::stod(c[2]);
    o.final_tau_hat = std::stod(c[3]);
    o.final_chains = std::stoul(c[5]);
    if (row.contains("diverged_at")) o.divergence = Divergence{row.at("diverged_at").get<std::uint64_t>(), ""};
    group.push_back(o);
  }

  out << std::left << std::setw(28) << "label" << std::right << std::setw(6) << "runs" << std::setw(14)
      << "loglik_mean" << std::setw(12) << "loglik_se" << std::setw(12) << "tau_hat" << std::setw(10)
      << "chains" << std::setw(12) << "wall_s" << '\n';
  out << std::fixed;
  for (const auto& label : order) {
    const auto s = summarize_outcomes(label, groups[label]);
    out << std::left << std::setw(28) << label << std::right << std::setw(6) << s.runs << std::setw(14);
    if (s.loglik_mean) out << std::setprecision(4) << *s.loglik_mean;
    else out << "n/a";
    out << std::setw(12) << std::setprecision(4) << s.loglik_se << std::setw(12) << std::setprecision(2)
        << s.tau_hat_mean << std::setw(10) << std::setprecision(2) << s.num_chains_mean << std::setw(12)
        << std::setprecision(2) << s.wall_clock_mean << '\n';
  }
  return status;
}

}  // namespace aptrbm
