#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iqn/config.hpp"
#include "iqn/experiments.hpp"
#include "iqn/metrics.hpp"
#include "iqn/plot.hpp"
#include "iqn/random.hpp"

using namespace iqn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("iqn_harness_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Shell {
  int status = -1;
  std::string output;  // stdout and stderr
};

Shell run_cli(const std::string& args) {
  const std::string cmd = std::string(IQN_CLI_PATH) + " " + args + " 2>&1";
  Shell r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

// Seconds-scale bandit run.
const char* kTinyConfig = R"(# tiny
[env]
name = bandit:risky

[agent]
steps = 120
warmup = 40
batch = 8
buffer = 200
target_sync = 10
eval_period = 10
eval_episodes = 4
final_eval_episodes = 10
epsilon_decay = 80

[loss]
n = 4
n_prime = 4
k = 4

[architecture]
psi_hidden = 8
feature_dim = 8
embedding_dim = 8

[sweep]
n = 1, 8
n_prime = 1, 8
measures = neutral, cvar:0.25

[run]
seeds = 1, 2
)";

std::size_t vm_hwm_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) return std::stoul(line.substr(6));
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

TEST(Config, SectionsAndQualifiedKeys) {
  const auto c = parse_config_text(
      "[loss]\nkappa = 0.5\nmeasure = cvar:0.25\nagent.steps = 5000\n"
      "[architecture]\npsi_hidden = 16, 16\nhead_hidden = none\n");
  EXPECT_DOUBLE_EQ(c.agent.loss.kappa, 0.5);
  EXPECT_EQ(c.agent.loss.policy_measure, DistortionMeasure::cvar(0.25));
  EXPECT_EQ(c.steps, 5000u);
  EXPECT_EQ(c.agent.architecture.psi_hidden, (std::vector<std::size_t>{16, 16}));
  EXPECT_TRUE(c.agent.architecture.head_hidden.empty());
}

TEST(Config, CommentsAndBlankLinesIgnored) {
  const auto c = parse_config_text("\n  # nothing\n[run]\nseeds = 4, 5 # trailing\n\n");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
}

TEST(Config, UnknownKeyNamesKeyAndLine) {
  std::istringstream in("[agent]\nsteps = 100\nlearning_rat = 0.1\n");
  try {
    parse_config(in, "exp.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("exp.cfg:3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("agent.learning_rat"), std::string::npos) << msg;
  }
}

TEST(Config, MalformedInputsRejected) {
  EXPECT_THROW(parse_config_text("[agent\n"), ConfigError);
  EXPECT_THROW(parse_config_text("steps 100\n"), ConfigError);
  EXPECT_THROW(parse_config_text("= 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("agent.steps = -4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("agent.steps = 12x\n"), ConfigError);
  EXPECT_THROW(parse_config_text("loss.measure = cvar:2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("env.name = maze\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.seeds = 1,,2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("agent.eval_with_measure = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("architecture.merge = sum\n"), ConfigError);
}

TEST(Config, BadValueMessageNamesKey) {
  try {
    parse_config_text("[loss]\nkappa = soft\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("loss.kappa"), std::string::npos) << e.what();
  }
}

TEST(Config, CrossFieldValidation) {
  EXPECT_THROW(parse_config_text("agent.steps = 10\nagent.warmup = 50\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.jobs = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("sweep.n = 0, 8\n"), ConfigError);
  EXPECT_THROW(parse_config_text("loss.gamma = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("agent.epsilon_end = 1.5\n"), ConfigError);
}

TEST(Config, GammaFollowsEnvUnlessSet) {
  auto c = parse_config_text("env.name = bandit:risky\n");
  EXPECT_DOUBLE_EQ(c.resolved_agent(0).loss.gamma, 0.9);
  c = parse_config_text("env.name = cliff:p=0.1\n");
  EXPECT_DOUBLE_EQ(c.resolved_agent(0).loss.gamma, 0.99);
  c = parse_config_text("env.name = cliff:p=0.1\nloss.gamma = 0.5\n");
  EXPECT_DOUBLE_EQ(c.resolved_agent(0).loss.gamma, 0.5);
}

TEST(Config, ResolvedTextRoundTrips) {
  const auto c = parse_config_text(kTinyConfig);
  const std::string text = resolved_config_text(c);
  EXPECT_EQ(resolved_config_text(parse_config_text(text)), text);
  for (const auto& [key, h] : detail::key_table()) {
    const auto dot = key.find('.');
    EXPECT_NE(text.find("\n" + key.substr(dot + 1) + " = "), std::string::npos) << key;
  }
}

TEST(Config, DefaultMeasureListParses) {
  ExperimentConfig c;
  ASSERT_EQ(c.measures.size(), 7u);
  for (const auto& m : c.measures) EXPECT_NO_THROW(parse_measure(m)) << m;
}

// ---------------------------------------------------------------------------
// metrics CSV

TEST(MetricsCsv, HeaderExact) {
  EXPECT_STREQ(kMetricsHeader,
               "run_id,seed,env,algorithm,measure,n_online,n_target,step,behavior_return,"
               "eval_return,loss,epsilon,aux");
}

TEST(MetricsCsv, EmptyRunIsHeaderOnly) {
  std::ostringstream os;
  emit_metrics(os, {});
  EXPECT_EQ(os.str(), std::string(kMetricsHeader) + "\n");
}

TEST(MetricsCsv, NumbersAtNineDigits) {
  EXPECT_EQ(csv_number(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(csv_number(0.1), "0.1");
  EXPECT_EQ(csv_number(-123456789.25), "-123456789");
  EXPECT_EQ(csv_number(2.5e-12), "2.5e-12");
  EXPECT_EQ(csv_number(kMissing), "");
}

TEST(MetricsCsv, QuotingFollowsRfc4180) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(split_csv_line("\"a,b\",\"x\"\"y\",,z"),
            (std::vector<std::string>{"a,b", "x\"y", "", "z"}));
  EXPECT_THROW(split_csv_line("\"open"), Error);
}

TEST(MetricsCsv, RowRoundTrips) {
  MetricsRow r;
  r.run_id = "iqn,\"cvar\"-s3";
  r.seed = 18446744073709551615ULL;
  r.env = "bandit:bernoulli,p=0.55";
  r.algorithm = "iqn";
  r.measure = "cvar:0.25";
  r.n_online = 8;
  r.n_target = 64;
  r.step = 123456;
  r.behavior_return = -13.25;
  r.eval_return = kMissing;
  r.loss = 0.0625;
  r.epsilon = 0.05;
  r.aux = "train_falls=3;eval_falls=0";
  std::ostringstream os;
  emit_metrics(os, {r});
  std::istringstream in(os.str());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header, kMetricsHeader);
  EXPECT_TRUE(parse_metrics_row(line) == r);
  EXPECT_THROW(parse_metrics_row("a,b,c"), Error);
}

TEST(MetricsCsv, StreamingMillionRowsStaysSmall) {
  const fs::path dir = scratch_dir("stream");
  {
    std::ofstream out(dir / "big.csv", std::ios::binary);
    CsvWriter w(out);
    MetricsRow r;
    r.run_id = "stream";
    r.env = "chain:L=5";
    r.algorithm = "iqn";
    r.measure = "neutral";
    r.n_online = 8;
    r.n_target = 8;
    r.aux = "x";
    for (std::size_t i = 0; i < 1000000; ++i) {
      r.step = i;
      r.loss = 1.0 / static_cast<double>(i + 1);
      r.eval_return = std::sin(static_cast<double>(i));
      w.write(r);
    }
  }
  EXPECT_GT(fs::file_size(dir / "big.csv"), 50u * 1000 * 1000);
  const std::size_t hwm = vm_hwm_kb();
  ASSERT_GT(hwm, 0u);
  EXPECT_LT(hwm, 100u * 1024) << "peak resident " << hwm << " kB";
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// scores

struct GameRow {
  const char* game;
  double random, human, agent;
  double score, gap;  // reference values, exact rational arithmetic
};

// Raw scores: random, human, IQN.
const GameRow kGames[] = {
    {"Pong", -20.7, 14.6, 21.0, 1.1813031161, 0.0},
    {"Alien", 227.8, 7127.7, 7022, 0.9846809374, 0.0153190626},
    {"Breakout", 1.7, 30.5, 734, 25.4270833333, 0.0},
    {"Double Dunk", -18.6, -16.4, 5.6, 11.0, 0.0},
    {"Skiing", -17098.1, -4336.9, -9289, 0.6119408833, 0.3880591167},
    {"Asteroids", 719.1, 47388.7, 2898, 0.0466877796, 0.9533122204},
    {"Montezuma's Revenge", 0.0, 4753.3, 0.0, 0.0, 1.0},
    {"Private Eye", 24.9, 69571.3, 200, 0.0025177435, 0.9974822565},
    {"Ice Hockey", -11.2, 0.9, 0.2, 0.9421487603, 0.0578512397},
    {"Venture", 0.0, 1187.5, 1318, 1.1098947368, 0.0},
};

TEST(Scores, GameRowsToFourDecimals) {
  for (const auto& g : kGames) {
    const double s = human_normalized_score({g.agent, g.human, g.random});
    EXPECT_NEAR(s, g.score, 5e-5) << g.game;
    EXPECT_NEAR(human_gap(s), g.gap, 5e-5) << g.game;
    const double gap = human_gap(s);
    EXPECT_GE(gap, 0.0);
    EXPECT_LE(gap, 1.0);
    EXPECT_DOUBLE_EQ(human_normalized_score({g.human, g.human, g.random}), 1.0) << g.game;
    EXPECT_EQ(human_normalized_score({g.random, g.human, g.random}), 0.0) << g.game;
  }
}

TEST(Scores, GapExamples) {
  EXPECT_EQ(human_gap(1.2), 0.0);
  EXPECT_NEAR(human_gap(0.3), 0.7, 1e-15);
  EXPECT_EQ(human_gap(-0.5), 1.0);
  EXPECT_EQ(human_gap(1.0), 0.0);
  EXPECT_EQ(human_gap(0.0), 1.0);
}

TEST(Scores, DegenerateTripleRejected) {
  EXPECT_THROW(human_normalized_score({3.0, 2.0, 2.0}), DomainError);
}

// ---------------------------------------------------------------------------
// wasserstein1

TEST(Wasserstein, Examples) {
  EXPECT_EQ(wasserstein1({1.0, 2.0, 3.0}, {3.0, 1.0, 2.0}), 0.0);
  EXPECT_EQ(wasserstein1({0.0}, {3.0}), 3.0);
  EXPECT_EQ(wasserstein1({0.0, 1.0}, {1.0, 2.0}), 1.0);
  EXPECT_THROW(wasserstein1({1.0}, {1.0, 2.0}), ShapeError);
  EXPECT_THROW(wasserstein1({}, {}), ShapeError);
}

TEST(Wasserstein, MetricAxiomsOnRandomTriples) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> a(n), b(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = normal_inv_cdf(rng.uniform()) * 3.0;
      b[i] = rng.uniform() * 10.0 - 5.0;
      c[i] = std::exp(rng.uniform() * 2.0);
    }
    const double ab = wasserstein1(a, b), ba = wasserstein1(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(wasserstein1(a, a), 0.0, 1e-12);
    EXPECT_LE(ab, wasserstein1(a, c) + wasserstein1(c, b) + 1e-12);
  }
}

// ---------------------------------------------------------------------------
// experiments

TEST(Experiments, RunParallelKeepsErrorsPerSlot) {
  std::vector<int> done(6, 0);
  std::vector<std::function<void()>> tasks;
  for (int i = 0; i < 6; ++i) {
    tasks.push_back([&, i] {
      if (i == 2) throw ConfigError("cell two");
      done[i] = 1;
    });
  }
  const auto errors = run_parallel(tasks, 3);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(static_cast<bool>(errors[i]), i == 2);
    EXPECT_EQ(done[i], i == 2 ? 0 : 1);
  }
  EXPECT_EQ(error_message(errors[2]), "cell two");
}

TEST(Experiments, PhaseMeansUseFirstAndLastTenth) {
  MetricsSeries rows;
  for (std::size_t s = 100; s <= 1000; s += 100) {
    MetricsRow r;
    r.step = s;
    r.eval_return = static_cast<double>(s);
    rows.push_back(r);
  }
  const auto p = phase_means(rows, 1000);
  EXPECT_EQ(p.early, 100.0);
  EXPECT_EQ(p.late, 1000.0);
  EXPECT_TRUE(std::isnan(phase_means({}, 1000).early));
}

TEST(Experiments, AblationGridCardinalityAndFiles) {
  auto c = parse_config_text(kTinyConfig);
  c.out_dir = scratch_dir("ablate").string();
  const auto cells = run_ablation_nn(c);
  ASSERT_EQ(cells.size(), 8u);
  std::size_t k = 0;
  for (std::size_t n : {1, 8}) {
    for (std::size_t np : {1, 8}) {
      for (std::uint64_t seed : {1, 2}) {
        EXPECT_EQ(cells[k].n_online, n);
        EXPECT_EQ(cells[k].n_target, np);
        EXPECT_EQ(cells[k].seed, seed);
        EXPECT_TRUE(cells[k].ok) << cells[k].error;
        EXPECT_FALSE(std::isnan(cells[k].phases.early));
        EXPECT_FALSE(std::isnan(cells[k].phases.late));
        ++k;
      }
    }
  }
  const std::string summary = slurp(fs::path(c.out_dir) / "ablation_summary.csv");
  std::istringstream in(summary);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 9u);
  EXPECT_EQ(summary.substr(0, summary.find('\n')), kAblationHeader);

  // Same seeds, same bytes.
  const std::string first = slurp(fs::path(c.out_dir) / "metrics.csv");
  run_ablation_nn(c);
  EXPECT_EQ(slurp(fs::path(c.out_dir) / "ablation_summary.csv"), summary);
  EXPECT_EQ(slurp(fs::path(c.out_dir) / "metrics.csv"), first);
  fs::remove_all(c.out_dir);
}

TEST(Experiments, AblationParallelMatchesSerial) {
  auto c = parse_config_text(kTinyConfig);
  c.sweep_n = {1, 4};
  c.sweep_n_prime = {2};
  std::ostringstream serial, parallel;
  write_ablation_summary(serial, run_ablation_nn(c, "t", false));
  c.jobs = 3;
  write_ablation_summary(parallel, run_ablation_nn(c, "t", false));
  EXPECT_EQ(serial.str(), parallel.str());
}

TEST(Experiments, RiskSweepOneCellPerMeasureAndSeed) {
  auto c = parse_config_text(kTinyConfig);
  c.out_dir = scratch_dir("risk").string();
  const auto cells = run_risk_sweep(c);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].measure, "neutral");
  EXPECT_EQ(cells[3].measure, "cvar:0.25");
  for (const auto& cell : cells) {
    ASSERT_TRUE(cell.ok) << cell.error;
    EXPECT_EQ(cell.final_eval.episodes, 10u);
    EXPECT_DOUBLE_EQ(cell.action_frequency(0) + cell.action_frequency(1), 1.0);
    EXPECT_EQ(cell.fall_rate(), 0.0);
  }
  const std::string summary = slurp(fs::path(c.out_dir) / "risk_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), kRiskHeader);
  fs::remove_all(c.out_dir);
}

TEST(Experiments, TrainWritesProvenanceAndOrderedRows) {
  auto c = parse_config_text(kTinyConfig);
  c.out_dir = scratch_dir("train").string();
  const auto report = run_train(c, "iqn train tiny.cfg");
  ASSERT_TRUE(report.all_ok());
  const fs::path dir(c.out_dir);

  const std::string resolved = slurp(dir / "resolved.cfg");
  EXPECT_EQ(resolved, resolved_config_text(c));
  EXPECT_EQ(resolved_config_text(load_config((dir / "resolved.cfg").string())), resolved);

  const std::string prov = slurp(dir / "provenance.txt");
  EXPECT_NE(prov.find("build " + std::string(kBuildId)), std::string::npos);
  EXPECT_NE(prov.find("command iqn train tiny.cfg"), std::string::npos);
  EXPECT_NE(prov.find("seeds 1 2"), std::string::npos);

  std::ifstream csv(dir / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, kMetricsHeader);
  std::string run;
  std::size_t last = 0, rows = 0;
  while (std::getline(csv, line)) {
    const auto r = parse_metrics_row(line);
    if (r.run_id != run) {
      run = r.run_id;
      last = 0;
    }
    EXPECT_GT(r.step, last);
    last = r.step;
    ++rows;
  }
  EXPECT_EQ(rows, 24u);  // 12 eval points per seed
  EXPECT_TRUE(fs::exists(dir / "iqn-neutral-s1.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "iqn-neutral-s2.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "final_eval.csv"));
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// plot

TEST(Plot, SeriesGroupedAndSvgWritten) {
  std::istringstream in(
      "run_id,step,eval_return\n"
      "a,1,0.5\n"
      "b,1,0.25\n"
      "a,2,0.75\n"
      "b,2,\n"
      "\"c,d\",3,1\n");
  const auto series = read_series(in, "step", "eval_return");
  ASSERT_EQ(series.size(), 3u);
  EXPECT_EQ(series[0].label, "a");
  EXPECT_EQ(series[0].y, (std::vector<double>{0.5, 0.75}));
  EXPECT_EQ(series[1].x.size(), 1u);
  EXPECT_EQ(series[2].label, "c,d");
  std::ostringstream svg;
  write_svg_chart(svg, series, "step", "eval <return>");
  const std::string s = svg.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("eval &lt;return&gt;"), std::string::npos);
  std::size_t lines = 0;
  for (auto p = s.find("<polyline"); p != std::string::npos; p = s.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 3u);
}

TEST(Plot, MissingColumnRejected) {
  std::istringstream in("run_id,step\na,1\n");
  EXPECT_THROW(read_series(in, "step", "loss"), Error);
  std::istringstream empty("");
  EXPECT_THROW(read_series(empty, "step", "loss"), Error);
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, ScoreSubcommand) {
  const auto r = run_cli("score --agent 21.0 --human 14.6 --random -20.7");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("score 1.181303"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("gap 0.000000"), std::string::npos) << r.output;
  EXPECT_EQ(run_cli("score --agent 1 --human 2 --random 2").status, 2);
}

TEST(Cli, MalformedConfigExitsOneAndEchoesKey) {
  const fs::path dir = scratch_dir("cli_bad");
  spit(dir / "bad.cfg", "[agent]\nsteps = 100\nwarmpu = 10\n");
  auto r = run_cli("train " + (dir / "bad.cfg").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("agent.warmpu"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("bad.cfg:3"), std::string::npos) << r.output;

  spit(dir / "bad2.cfg", "[loss]\nthis line has no equals sign\n");
  r = run_cli("ablate-nn " + (dir / "bad2.cfg").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("this line has no equals sign"), std::string::npos) << r.output;

  EXPECT_EQ(run_cli("train " + (dir / "missing.cfg").string()).status, 1);
  EXPECT_EQ(run_cli("frobnicate").status, 1);
  EXPECT_EQ(run_cli("train").status, 1);
  fs::remove_all(dir);
}

TEST(Cli, TrainDeterministicAndPlot) {
  const fs::path dir = scratch_dir("cli_train");
  spit(dir / "tiny.cfg", kTinyConfig);
  const std::string base = "train " + (dir / "tiny.cfg").string() + " --seed 7 --out-dir ";
  auto r = run_cli(base + (dir / "a").string());
  ASSERT_EQ(r.status, 0) << r.output;
  r = run_cli(base + (dir / "b").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string a = slurp(dir / "a" / "metrics.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "metrics.csv"));
  EXPECT_NE(slurp(dir / "a" / "provenance.txt").find("seeds 7"), std::string::npos);

  r = run_cli("plot " + (dir / "a" / "metrics.csv").string() + " --out " +
              (dir / "a.svg").string());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(dir / "a.svg").rfind("<svg", 0), 0u);
  r = run_cli("plot " + (dir / "a" / "metrics.csv").string() + " --y nope --out " +
              (dir / "b.svg").string());
  EXPECT_EQ(r.status, 2);

  r = run_cli("eval " + (dir / "tiny.cfg").string() + " --checkpoint " +
              (dir / "a" / "iqn-neutral-s7.ckpt").string() + " --episodes 20");
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("episodes,steps,mean_return"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(IQN_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".cfg") continue;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 6u);
}
