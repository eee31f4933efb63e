// Command-line front end: training, evaluation, reporting, rendering, and
// the standalone matrix-based MI estimator.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cgrl/harness/config.hpp"
#include "cgrl/harness/metrics.hpp"
#include "cgrl/harness/mi_table.hpp"
#include "cgrl/harness/report.hpp"
#include "cgrl/harness/render.hpp"
#include "cgrl/harness/training.hpp"

namespace {

using namespace cgrl;
using namespace cgrl::harness;

int cmd_train(const std::string& config_path, const std::string& model, const std::string& task,
              std::uint64_t seed, const std::string& out_dir) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  cfg.model = model;
  cfg.task = task;
  cfg.seed = seed;
  model_spec(model);          // validate id
  task_from_string(task);     // validate task
  TrainingResult result = run_training(cfg, out_dir);
  double final_third = 0.0;
  for (const EpisodeLog& r : result.rows) final_third += r.reward;
  std::printf("trained %zu episodes, mean reward %.4f, log %s/episodes.csv\n",
              result.rows.size(),
              result.rows.empty() ? 0.0 : final_third / static_cast<double>(result.rows.size()),
              out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& task, long episodes,
             std::uint64_t seed, const std::string& metrics_out, const std::string& rows_out,
             const std::string& trajectory_out) {
  EvalResult result = run_eval(checkpoint, task, episodes, seed, !trajectory_out.empty());
  std::fputs(episode_csv(result.rows).c_str(), stdout);
  std::printf("REPORT model=%s task=%s seed=%llu episodes=%ld cr=%.4f ar=%.6f av=%.6f\n",
              result.report.model.c_str(), task.c_str(),
              static_cast<unsigned long long>(seed), episodes, result.report.collision_rate,
              result.report.avg_reward, result.report.avg_velocity);
  if (!metrics_out.empty()) {
    std::ofstream os(metrics_out, std::ios::trunc);
    if (!os) throw FormatError("eval: cannot write " + metrics_out);
    os << kMetricsCsvHeader << "\n" << metrics_csv_row(result.report);
  }
  if (!rows_out.empty()) {
    std::ofstream os(rows_out, std::ios::trunc);
    if (!os) throw FormatError("eval: cannot write " + rows_out);
    os << episode_csv(result.rows);
  }
  if (!trajectory_out.empty()) {
    std::ofstream os(trajectory_out, std::ios::trunc);
    if (!os) throw FormatError("eval: cannot write " + trajectory_out);
    os << trajectory_csv(result.first_episode);
  }
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_path) {
  std::vector<MetricsReport> reports;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() >= 12 && name.substr(name.size() - 12) == ".metrics.csv") {
      for (const MetricsReport& r : read_metrics_csv(entry.path().string()))
        reports.push_back(r);
    }
  }
  if (reports.empty())
    throw ConfigError("report: no *.metrics.csv files under " + in_dir);
  const std::string table = export_table(reports);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw FormatError("report: cannot write " + out_path);
  os << table;
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_render(const std::string& log_path, const std::string& out_dir) {
  const auto frames = read_trajectory_csv(log_path);
  // lane geometry matches the simulator defaults used when recording
  const std::size_t n = render_episode(frames, 4.0, 30.0, out_dir);
  std::printf("wrote %zu frames to %s\n", n, out_dir.c_str());
  return 0;
}

int cmd_mi(const std::string& input, double alpha) {
  const MiTable table = read_numeric_table(input);
  const MiEstimate est = mi_estimate(table, alpha);
  for (std::size_t k = 0; k < est.names.size(); ++k)
    std::printf("S_alpha(%s) = %.6f bits\n", est.names[k].c_str(), est.entropies[k]);
  std::printf("I_alpha(%s; %s) = %.6f bits\n", est.names[0].c_str(), est.names[1].c_str(),
              est.mi);
  if (est.has_conditional)
    std::printf("I_alpha(%s; %s | %s) = %.6f bits\n", est.names[0].c_str(),
                est.names[1].c_str(), est.names[2].c_str(), est.conditional_mi);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causality-inspired graph RL lab for an unsignalized intersection"};
  app.require_subcommand(1);

  std::string config_path, model, task = "straight", out_dir, checkpoint;
  std::string metrics_out, rows_out, trajectory_out, in_dir, log_path, input_path;
  std::uint64_t seed = 0;
  long episodes = 200;
  double alpha = 2.0;

  auto* train = app.add_subcommand("train", "train one (model, task, seed) cell");
  train->add_option("--config", config_path, "config file (defaults used when omitted)");
  train->add_option("--model", model, "model id")->required();
  train->add_option("--task", task, "left|straight|right")->required();
  train->add_option("--seed", seed, "master seed")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--task", task, "left|straight|right")->required();
  eval->add_option("--episodes", episodes, "episode count")->required();
  eval->add_option("--seed", seed, "evaluation seed")->required();
  eval->add_option("--out", metrics_out, "write a *.metrics.csv report row");
  eval->add_option("--rows", rows_out, "write per-episode rows CSV");
  eval->add_option("--trajectory", trajectory_out, "record episode 0 trajectory CSV");

  auto* report = app.add_subcommand("report", "aggregate metrics into the summary table");
  report->add_option("--in", in_dir, "directory of *.metrics.csv files")->required();
  report->add_option("--out", out_dir, "table output path")->required();

  auto* render = app.add_subcommand("render", "render a trajectory log to SVG frames");
  render->add_option("--log", log_path, "trajectory CSV")->required();
  render->add_option("--out", out_dir, "frame output directory")->required();

  auto* mi = app.add_subcommand("mi-estimate", "matrix-based Renyi entropy / MI of a table");
  mi->add_option("--input", input_path, "delimited numeric table with block header")->required();
  mi->add_option("--alpha", alpha, "Renyi order (default 2)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, model, task, seed, out_dir);
    if (eval->parsed()) return cmd_eval(checkpoint, task, episodes, seed, metrics_out, rows_out,
                                        trajectory_out);
    if (report->parsed()) return cmd_report(in_dir, out_dir);
    if (render->parsed()) return cmd_render(log_path, out_dir);
    if (mi->parsed()) return cmd_mi(input_path, alpha);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
