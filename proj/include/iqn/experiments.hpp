#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "iqn/agent.hpp"
#include "iqn/checkpoint.hpp"
#include "iqn/config.hpp"
#include "iqn/metrics.hpp"

#ifndef IQN_BUILD_ID
#define IQN_BUILD_ID "unknown"
#endif

namespace iqn {

inline constexpr const char* kBuildId = IQN_BUILD_ID;

// Runs tasks[i] for every i on up to `jobs` threads. Each task owns its
// state; an exception stays with its task slot and is returned, not thrown.
inline std::vector<std::exception_ptr> run_parallel(const std::vector<std::function<void()>>& tasks,
                                                    std::size_t jobs) {
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return errors;
}

inline std::string error_message(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

// ---------------------------------------------------------------------------
// Provenance

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

// resolved.cfg, provenance.txt (build id, command, seeds) in `dir`.
inline void write_provenance(const ExperimentConfig& c, const std::string& command) {
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "resolved.cfg", resolved_config_text(c));
  std::ostringstream p;
  p << "build " << kBuildId << '\n';
  p << "command " << command << '\n';
  p << "seeds";
  for (auto s : c.seeds) p << ' ' << s;
  p << '\n';
  write_text_file(dir / "provenance.txt", p.str());
}

// ---------------------------------------------------------------------------
// Per-run summaries

struct PhaseSummary {
  double early = kMissing;  // mean eval return, first 10% of steps
  double late = kMissing;   // mean eval return, last 10% of steps
};

inline PhaseSummary phase_means(const MetricsSeries& rows, std::size_t total_steps) {
  double se = 0, sl = 0;
  std::size_t ne = 0, nl = 0;
  for (const auto& r : rows) {
    if (std::isnan(r.eval_return)) continue;
    if (r.step * 10 <= total_steps) {
      se += r.eval_return;
      ++ne;
    }
    if (r.step * 10 > total_steps * 9) {
      sl += r.eval_return;
      ++nl;
    }
  }
  PhaseSummary s;
  if (ne) s.early = se / static_cast<double>(ne);
  if (nl) s.late = sl / static_cast<double>(nl);
  return s;
}

inline std::string run_id_for(const std::string& label, std::uint64_t seed) {
  return label + "-s" + std::to_string(seed);
}

struct RunOutcome {
  std::string run_id;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<TrainingRun> run;
};

inline std::vector<RunOutcome> run_many(const std::vector<std::pair<std::string, AgentConfig>>& specs,
                                        const std::string& env, std::size_t steps,
                                        std::size_t jobs) {
  std::vector<RunOutcome> out(specs.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out[i].run_id = specs[i].first;
    out[i].seed = specs[i].second.seed;
    tasks.push_back([&, i] {
      out[i].run = run_training(env, specs[i].second, steps, specs[i].first);
      out[i].ok = true;
    });
  }
  const auto errors = run_parallel(tasks, jobs);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i]) out[i].error = error_message(errors[i]);
  }
  return out;
}

inline std::string first_action_counts(const EvalResult& ev) {
  std::string s;
  for (std::size_t a = 0; a < ev.first_actions.size(); ++a) {
    if (a) s += ';';
    s += "a" + std::to_string(a) + "=" + std::to_string(ev.first_actions[a]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// train

struct TrainReport {
  std::vector<RunOutcome> runs;
  bool all_ok() const {
    for (const auto& r : runs) {
      if (!r.ok) return false;
    }
    return true;
  }
};

// One run per seed. Writes metrics.csv (runs in seed-list order),
// final_eval.csv and one checkpoint per seed into out_dir.
inline TrainReport run_train(const ExperimentConfig& c, const std::string& command = "train") {
  validate(c);
  write_provenance(c, command);
  std::vector<std::pair<std::string, AgentConfig>> specs;
  const std::string label = std::string(to_string(c.agent.algorithm)) + "-" +
                            to_string(c.agent.loss.policy_measure);
  for (auto seed : c.seeds) specs.emplace_back(run_id_for(label, seed), c.resolved_agent(seed));
  TrainReport report{run_many(specs, c.env, c.steps, c.jobs)};

  const std::filesystem::path dir(c.out_dir);
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  CsvWriter writer(csv);
  std::ofstream fin(dir / "final_eval.csv", std::ios::binary);
  fin << "run_id,seed,status,episodes,steps,mean_return,falls,first_actions,param_hash,error\n";
  for (const auto& r : report.runs) {
    if (r.ok) {
      writer.write_all(r.run->rows);
      const auto& ev = r.run->final_eval;
      fin << csv_field(r.run_id) << ',' << r.seed << ",ok," << ev.episodes << ',' << ev.steps << ','
          << csv_number(ev.mean_return) << ',' << ev.falls << ',' << first_action_counts(ev) << ','
          << parameter_hash(parameters(r.run->state.online)) << ",\n";
      Checkpoint ck;
      ck.meta["algorithm"] = to_string(c.agent.algorithm);
      ck.meta["env"] = c.env;
      ck.meta["seed"] = std::to_string(r.seed);
      ck.meta["steps"] = std::to_string(c.steps);
      ck.tensors = parameters(r.run->state.online);
      save_checkpoint((dir / (r.run_id + ".ckpt")).string(), ck);
    } else {
      fin << csv_field(r.run_id) << ',' << r.seed << ",failed,,,,,,," << csv_field(r.error) << '\n';
    }
  }
  if (!csv || !fin) throw Error("failed writing results in '" + c.out_dir + "'");
  return report;
}

// ---------------------------------------------------------------------------
// N / N' ablation

struct AblationCell {
  std::size_t n_online = 0;
  std::size_t n_target = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  PhaseSummary phases;
  double final_return = kMissing;
};

inline constexpr const char* kAblationHeader =
    "n_online,n_target,seed,status,early_eval_return,late_eval_return,final_eval_return,error";

inline void write_ablation_summary(std::ostream& os, const std::vector<AblationCell>& cells) {
  os << kAblationHeader << '\n';
  for (const auto& c : cells) {
    os << c.n_online << ',' << c.n_target << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ','
       << csv_number(c.phases.early) << ',' << csv_number(c.phases.late) << ','
       << csv_number(c.final_return) << ',' << csv_field(c.error) << '\n';
  }
}

// One IQN run per (N, N', seed). When out_dir is non-empty the summary and
// the per-step metrics are written there.
inline std::vector<AblationCell> run_ablation_nn(const ExperimentConfig& c,
                                                 const std::string& command = "ablate-nn",
                                                 bool write_files = true) {
  validate(c);
  if (c.sweep_n.empty() || c.sweep_n_prime.empty()) throw ConfigError("sweep.n and sweep.n_prime must be non-empty");
  std::vector<AblationCell> cells;
  std::vector<std::pair<std::string, AgentConfig>> specs;
  for (std::size_t n : c.sweep_n) {
    for (std::size_t np : c.sweep_n_prime) {
      for (auto seed : c.seeds) {
        AgentConfig a = c.resolved_agent(seed);
        a.algorithm = Algorithm::kIqn;
        a.loss.n_online = n;
        a.loss.n_target = np;
        specs.emplace_back("n" + std::to_string(n) + "-np" + std::to_string(np) + "-s" +
                               std::to_string(seed),
                           a);
        cells.push_back({n, np, seed, false, {}, {}, kMissing});
      }
    }
  }
  const auto runs = run_many(specs, c.env, c.steps, c.jobs);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    cells[i].ok = runs[i].ok;
    cells[i].error = runs[i].error;
    if (runs[i].ok) {
      cells[i].phases = phase_means(runs[i].run->rows, c.steps);
      cells[i].final_return = runs[i].run->final_eval.mean_return;
    }
  }
  if (write_files) {
    write_provenance(c, command);
    const std::filesystem::path dir(c.out_dir);
    std::ofstream sum(dir / "ablation_summary.csv", std::ios::binary);
    write_ablation_summary(sum, cells);
    std::ofstream csv(dir / "metrics.csv", std::ios::binary);
    CsvWriter w(csv);
    for (const auto& r : runs) {
      if (r.ok) w.write_all(r.run->rows);
    }
    if (!sum || !csv) throw Error("failed writing results in '" + c.out_dir + "'");
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Distortion-measure sweep

struct RiskCell {
  std::string measure;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalResult final_eval;
  double fall_rate() const {
    return final_eval.episodes
               ? static_cast<double>(final_eval.falls) / static_cast<double>(final_eval.episodes)
               : kMissing;
  }
  double action_frequency(std::size_t a) const {
    if (a >= final_eval.first_actions.size() || final_eval.episodes == 0) return kMissing;
    return static_cast<double>(final_eval.first_actions[a]) /
           static_cast<double>(final_eval.episodes);
  }
};

inline constexpr const char* kRiskHeader =
    "measure,seed,status,eval_episodes,eval_steps,eval_return,cliff_falls,fall_rate,first_actions,error";

inline void write_risk_summary(std::ostream& os, const std::vector<RiskCell>& cells) {
  os << kRiskHeader << '\n';
  for (const auto& c : cells) {
    const auto& ev = c.final_eval;
    os << csv_field(c.measure) << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ',';
    if (c.ok) {
      os << ev.episodes << ',' << ev.steps << ',' << csv_number(ev.mean_return) << ',' << ev.falls
         << ',' << csv_number(c.fall_rate()) << ',' << first_action_counts(ev) << ',';
    } else {
      os << ",,,,,,";
    }
    os << csv_field(c.error) << '\n';
  }
}

// One run per (measure, seed). Returns are scored risk-neutrally; acting
// uses the measure.
inline std::vector<RiskCell> run_risk_sweep(const ExperimentConfig& c,
                                            const std::string& command = "risk-sweep",
                                            bool write_files = true) {
  validate(c);
  if (c.measures.empty()) throw ConfigError("sweep.measures must be non-empty");
  std::vector<DistortionMeasure> parsed;
  for (const auto& m : c.measures) parsed.push_back(parse_measure(m));
  std::vector<RiskCell> cells;
  std::vector<std::pair<std::string, AgentConfig>> specs;
  for (std::size_t k = 0; k < parsed.size(); ++k) {
    for (auto seed : c.seeds) {
      AgentConfig a = c.resolved_agent(seed);
      a.loss.policy_measure = parsed[k];
      specs.emplace_back(to_string(parsed[k]) + "-s" + std::to_string(seed), a);
      RiskCell cell;
      cell.measure = to_string(parsed[k]);
      cell.seed = seed;
      cells.push_back(std::move(cell));
    }
  }
  const auto runs = run_many(specs, c.env, c.steps, c.jobs);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    cells[i].ok = runs[i].ok;
    cells[i].error = runs[i].error;
    if (runs[i].ok) cells[i].final_eval = runs[i].run->final_eval;
  }
  if (write_files) {
    write_provenance(c, command);
    const std::filesystem::path dir(c.out_dir);
    std::ofstream sum(dir / "risk_summary.csv", std::ios::binary);
    write_risk_summary(sum, cells);
    std::ofstream csv(dir / "metrics.csv", std::ios::binary);
    CsvWriter w(csv);
    for (const auto& r : runs) {
      if (r.ok) w.write_all(r.run->rows);
    }
    if (!sum || !csv) throw Error("failed writing results in '" + c.out_dir + "'");
  }
  return cells;
}

}  // namespace iqn
