#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mppi/errors.hpp"
#include "mppi/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mppi::config_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int run_one(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& out_path) {
  mppi::ExperimentConfig config = mppi::config_from_json(read_file(config_path));
  if (seed_set) config.seed = seed;
  mppi::EpisodeLog log;
  mppi::EpisodeResult result = mppi::run_episode(config, config.seed, &log);
  if (!out_path.empty()) {
    mppi::write_episode_log(log, out_path);
    result.log_path = out_path;
  }
  std::cout << "seed " << result.seed << ": " << mppi::outcome_name(result.outcome) << " after "
            << result.steps << " steps (" << result.mean_plan_ms << " ms/step planning)";
  if (!result.note.empty()) std::cout << " [" << result.note << "]";
  std::cout << "\n";
  return 0;
}

int run_batch_cmd(const std::string& config_path, int runs, int threads,
                  const std::string& out_dir) {
  mppi::ExperimentConfig config = mppi::config_from_json(read_file(config_path));
  if (runs > 0) config.runs = runs;
  if (threads > 0) config.threads = threads;
  const mppi::AggregateStats stats = mppi::run_batch(config);
  if (!out_dir.empty()) mppi::write_batch_results(stats, config, out_dir);
  std::cout << "runs " << stats.runs << ": " << stats.collisions << " collisions, "
            << stats.timeouts << " timeouts, " << stats.successes << " successes, failure "
            << stats.failure_pct << "%, mean plan " << stats.mean_plan_ms << " ms/step\n";
  return 0;
}

int export_cmd(const std::string& log_path, const std::string& format, std::string out_prefix) {
  const mppi::EpisodeLog log = mppi::read_episode_log(log_path);
  if (out_prefix.empty()) {
    const std::filesystem::path p(log_path);
    out_prefix = (p.parent_path() / p.stem()).string();
  }
  if (format == "csv") {
    std::ostringstream csv;
    mppi::export_trajectory_csv(log, csv);
    write_file(out_prefix + ".trajectory.csv", csv.str());
    std::cout << out_prefix + ".trajectory.csv\n";
  } else if (format == "json") {
    std::ostringstream clusters, forecasts;
    mppi::export_clusters_json(log, clusters);
    mppi::export_forecasts_json(log, forecasts);
    write_file(out_prefix + ".clusters.json", clusters.str());
    write_file(out_prefix + ".forecasts.json", forecasts.str());
    std::cout << out_prefix + ".clusters.json\n" << out_prefix + ".forecasts.json\n";
  } else {
    throw mppi::config_error("unknown export format '" + format + "'");
  }
  return 0;
}

int value_slice_cmd(const std::string& config_path, double dev_min, double dev_max, int steps,
                    const std::string& out_path) {
  const mppi::ExperimentConfig config = mppi::config_from_json(read_file(config_path));
  const auto slice = mppi::value_slice(config, dev_min, dev_max, steps);
  std::ostringstream csv;
  mppi::export_value_slice_csv(slice, csv);
  if (out_path.empty())
    std::cout << csv.str();
  else
    write_file(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based MPPI planner harness: baseline, clustered and "
               "dynamic-obstacle variants"};
  app.require_subcommand(1);

  std::string config_path, out_path, out_dir, log_path, format = "csv";
  std::uint64_t seed = 0;
  int runs = 0, threads = 0, slice_steps = 101;
  double dev_min = -1.0, dev_max = 1.0;

  CLI::App* run = app.add_subcommand("run", "Run one closed-loop episode");
  run->add_option("--config", config_path, "Experiment config JSON")->required();
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Episode seed (overrides config)");
  run->add_option("--out", out_path, "Episode log JSON to write");

  CLI::App* batch = app.add_subcommand("batch", "Run a batch of episodes");
  batch->add_option("--config", config_path, "Experiment config JSON")->required();
  batch->add_option("--runs", runs, "Episode count (overrides config)");
  batch->add_option("--out-dir", out_dir, "Directory for results.json / timings.json");
  batch->add_option("--threads", threads, "Worker threads (overrides config)");

  CLI::App* exp = app.add_subcommand("export", "Convert an episode log to plot data");
  exp->add_option("--log", log_path, "Episode log JSON")->required();
  exp->add_option("--format", format, "csv | json")->required();
  exp->add_option("--out", out_path, "Output path prefix");

  CLI::App* slice = app.add_subcommand("value-slice",
                                       "Cost/value table over constant control deviations");
  slice->add_option("--config", config_path, "Experiment config JSON")->required();
  slice->add_option("--deviation-min", dev_min, "Smallest deviation (rad/s)");
  slice->add_option("--deviation-max", dev_max, "Largest deviation (rad/s)");
  slice->add_option("--steps", slice_steps, "Grid size");
  slice->add_option("--out", out_path, "CSV output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
    if (run->parsed()) return run_one(config_path, seed, seed_opt->count() > 0, out_path);
    if (batch->parsed()) return run_batch_cmd(config_path, runs, threads, out_dir);
    if (exp->parsed()) return export_cmd(log_path, format, out_path);
    if (slice->parsed()) return value_slice_cmd(config_path, dev_min, dev_max, slice_steps, out_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mppi::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
