// iqn: train, evaluate and sweep distributional agents on small environments.
//
// Exit status: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "iqn/iqn.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> steps;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Run a single seed instead of run.seeds");
    cmd->add_option("--jobs", jobs, "Parallel runs");
    cmd->add_option("--out-dir", out_dir, "Output directory");
    cmd->add_option("--steps", steps, "Environment steps per run");
  }

  void apply(iqn::ExperimentConfig& c) const {
    if (seed) c.seeds = {*seed};
    if (jobs) c.jobs = *jobs;
    if (out_dir) c.out_dir = *out_dir;
    if (steps) c.steps = *steps;
    iqn::validate(c);
  }
};

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

iqn::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto c = iqn::load_config(path);
  o.apply(c);
  return c;
}

int cmd_train(const std::string& path, const Overrides& o, const std::string& cmdline) {
  const auto c = load(path, o);
  const auto report = iqn::run_train(c, cmdline);
  for (const auto& r : report.runs) {
    if (r.ok) {
      std::printf("%s: final eval return %.6g over %zu episodes\n", r.run_id.c_str(),
                  r.run->final_eval.mean_return, r.run->final_eval.episodes);
    } else {
      std::fprintf(stderr, "%s failed: %s\n", r.run_id.c_str(), r.error.c_str());
    }
  }
  std::printf("wrote %s/metrics.csv\n", c.out_dir.c_str());
  return report.all_ok() ? kOk : kRuntimeError;
}

int cmd_eval(const std::string& path, const std::string& checkpoint, std::size_t episodes,
             const Overrides& o) {
  const auto c = load(path, o);
  auto env = iqn::make_environment(c.env);
  auto agent = iqn::bind_environment(c.resolved_agent(c.seeds.front()), *env);
  const auto ck = iqn::load_checkpoint(checkpoint);
  const auto net = iqn::make_network(agent, ck.tensors);
  const auto ev = iqn::evaluate_greedy(net, *env, agent, episodes,
                                       iqn::mix_seed(agent.seed, iqn::stream::kEval),
                                       agent.final_eval_steps);
  std::printf("episodes,steps,mean_return,falls,first_actions\n%zu,%zu,%s,%zu,%s\n", ev.episodes,
              ev.steps, iqn::csv_number(ev.mean_return).c_str(), ev.falls,
              iqn::first_action_counts(ev).c_str());
  return kOk;
}

int cmd_ablate(const std::string& path, const Overrides& o, const std::string& cmdline) {
  const auto c = load(path, o);
  const auto cells = iqn::run_ablation_nn(c, cmdline);
  iqn::write_ablation_summary(std::cout, cells);
  for (const auto& cell : cells) {
    if (!cell.ok) return kRuntimeError;
  }
  return kOk;
}

int cmd_risk(const std::string& path, const Overrides& o, const std::string& cmdline) {
  const auto c = load(path, o);
  const auto cells = iqn::run_risk_sweep(c, cmdline);
  iqn::write_risk_summary(std::cout, cells);
  for (const auto& cell : cells) {
    if (!cell.ok) return kRuntimeError;
  }
  return kOk;
}

int cmd_plot(const std::string& csv, const std::string& out, const std::string& x,
             const std::string& y, const std::string& group) {
  std::ifstream in(csv);
  if (!in) throw iqn::Error("cannot open '" + csv + "'");
  const auto series = iqn::read_series(in, x, y, group);
  std::ofstream svg(out);
  if (!svg) throw iqn::Error("cannot write '" + out + "'");
  iqn::write_svg_chart(svg, series, x, y, csv);
  return kOk;
}

int cmd_score(double agent, double human, double random) {
  const double score = iqn::human_normalized_score({agent, human, random});
  std::printf("score %.6f\ngap %.6f\n", score, iqn::human_gap(score));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit quantile network experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, csv_path, svg_path;
  std::string x_col = "step", y_col = "eval_return", group_col = "run_id";
  std::size_t episodes = 100;
  double agent = 0, human = 0, random = 0;
  Overrides train_o, eval_o, ablate_o, risk_o;

  auto* train = app.add_subcommand("train", "Train one agent per seed");
  train->add_option("config", config_path, "Config file")->required();
  train_o.attach(train);

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("config", config_path, "Config file")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes");
  eval_o.attach(eval);

  auto* ablate = app.add_subcommand("ablate-nn", "Grid over N and N'");
  ablate->add_option("config", config_path, "Config file")->required();
  ablate_o.attach(ablate);

  auto* risk = app.add_subcommand("risk-sweep", "One run per distortion measure and seed");
  risk->add_option("config", config_path, "Config file")->required();
  risk_o.attach(risk);

  auto* plot = app.add_subcommand("plot", "SVG line chart from a metrics CSV");
  plot->add_option("csv", csv_path, "Input CSV")->required();
  plot->add_option("--out", svg_path, "Output SVG")->required();
  plot->add_option("--x", x_col, "x column");
  plot->add_option("--y", y_col, "y column");
  plot->add_option("--group", group_col, "Column naming each line");

  auto* score = app.add_subcommand("score", "Human-normalized score and gap");
  score->add_option("--agent", agent, "Agent score")->required();
  score->add_option("--human", human, "Human score")->required();
  score->add_option("--random", random, "Random score")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  const std::string cmdline = command_line(argc, argv);
  try {
    if (*train) return cmd_train(config_path, train_o, cmdline);
    if (*eval) return cmd_eval(config_path, checkpoint, episodes, eval_o);
    if (*ablate) return cmd_ablate(config_path, ablate_o, cmdline);
    if (*risk) return cmd_risk(config_path, risk_o, cmdline);
    if (*plot) return cmd_plot(csv_path, svg_path, x_col, y_col, group_col);
    if (*score) return cmd_score(agent, human, random);
  } catch (const iqn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kConfigError;
}
