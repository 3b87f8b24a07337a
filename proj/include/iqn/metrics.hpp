#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "iqn/error.hpp"

namespace iqn {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct MetricsRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string env;
  std::string algorithm;
  std::string measure;
  std::size_t n_online = 0;
  std::size_t n_target = 0;
  std::size_t step = 0;
  double behavior_return = kMissing;
  double eval_return = kMissing;
  double loss = kMissing;
  double epsilon = kMissing;
  std::string aux;
};

using MetricsSeries = std::vector<MetricsRow>;

inline constexpr const char* kMetricsHeader =
    "run_id,seed,env,algorithm,measure,n_online,n_target,step,behavior_return,"
    "eval_return,loss,epsilon,aux";

// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// Nine significant digits; missing values are empty fields.
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

// Streams rows as they arrive; nothing is buffered beyond the ostream.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) { os_ << kMetricsHeader << '\n'; check(); }

  void write(const MetricsRow& r) {
    os_ << csv_field(r.run_id) << ',' << r.seed << ',' << csv_field(r.env) << ','
        << csv_field(r.algorithm) << ',' << csv_field(r.measure) << ',' << r.n_online << ','
        << r.n_target << ',' << r.step << ',' << csv_number(r.behavior_return) << ','
        << csv_number(r.eval_return) << ',' << csv_number(r.loss) << ','
        << csv_number(r.epsilon) << ',' << csv_field(r.aux) << '\n';
    check();
  }

  void write_all(const MetricsSeries& rows) {
    for (const auto& r : rows) write(r);
  }

 private:
  void check() {
    if (!os_) throw Error("failed writing metrics CSV");
  }
  std::ostream& os_;
};

inline void emit_metrics(std::ostream& os, const MetricsSeries& rows) {
  CsvWriter w(os);
  w.write_all(rows);
}

inline MetricsRow parse_metrics_row(const std::string& line) {
  const auto f = split_csv_line(line);
  if (f.size() != 13) {
    throw Error("metrics row has " + std::to_string(f.size()) + " fields, expected 13");
  }
  auto num = [](const std::string& s) { return s.empty() ? kMissing : std::strtod(s.c_str(), nullptr); };
  auto uint = [](const std::string& s) { return static_cast<std::uint64_t>(std::strtoull(s.c_str(), nullptr, 10)); };
  MetricsRow r;
  r.run_id = f[0];
  r.seed = uint(f[1]);
  r.env = f[2];
  r.algorithm = f[3];
  r.measure = f[4];
  r.n_online = uint(f[5]);
  r.n_target = uint(f[6]);
  r.step = uint(f[7]);
  r.behavior_return = num(f[8]);
  r.eval_return = num(f[9]);
  r.loss = num(f[10]);
  r.epsilon = num(f[11]);
  r.aux = f[12];
  return r;
}

inline bool same_value(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

inline bool operator==(const MetricsRow& a, const MetricsRow& b) {
  return a.run_id == b.run_id && a.seed == b.seed && a.env == b.env &&
         a.algorithm == b.algorithm && a.measure == b.measure && a.n_online == b.n_online &&
         a.n_target == b.n_target && a.step == b.step &&
         same_value(a.behavior_return, b.behavior_return) &&
         same_value(a.eval_return, b.eval_return) && same_value(a.loss, b.loss) &&
         same_value(a.epsilon, b.epsilon) && a.aux == b.aux;
}

// ---------------------------------------------------------------------------
// Score utilities

struct ScoreTriple {
  double agent = 0.0;
  double human = 0.0;
  double random = 0.0;
};

// (agent - random) / (human - random)
inline double human_normalized_score(const ScoreTriple& t) {
  if (t.human == t.random) throw DomainError("human and random scores coincide");
  return (t.agent - t.random) / (t.human - t.random);
}

// max(1 - score, 0), clipped above at 1.
inline double human_gap(double score) { return std::clamp(1.0 - score, 0.0, 1.0); }

// W1 between two equal-weight empirical measures of the same size: mean
// absolute difference of the sorted samples.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw ShapeError("wasserstein1 needs equal sample counts");
  if (a.empty()) throw ShapeError("wasserstein1 needs at least one sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace iqn
