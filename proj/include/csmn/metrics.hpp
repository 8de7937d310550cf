#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace csmn {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rank-sum (Mann-Whitney) AUC with half credit per tied pair, O(n log n).
// Throws on single-class input; the grouped reporters catch that and mark
// the group undefined instead.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auc: scores and labels must be nonempty, equal length");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0/1");
    pos += static_cast<std::size_t>(y);
  }
  std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0)
    throw MetricError("auc: undefined for single-class input");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // average ranks over tied blocks
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

struct GroupAuc {
  std::size_t n = 0;
  bool defined = false;
  double value = 0.0;
};

// Per-scenario AUC plus the pooled Overall. A single-class scenario is
// reported as undefined; Overall is computed on the pooled set regardless
// (and is itself undefined only if the pool is single-class).
inline std::map<std::string, GroupAuc> auc_per_scenario(
    const std::vector<double>& scores, const std::vector<int>& labels,
    const std::vector<std::string>& scenario_ids) {
  if (scores.size() != labels.size() || scores.size() != scenario_ids.size())
    throw std::invalid_argument("auc_per_scenario: length mismatch");
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& g = groups[scenario_ids[i]];
    g.first.push_back(scores[i]);
    g.second.push_back(labels[i]);
  }
  std::map<std::string, GroupAuc> out;
  for (auto& [sid, g] : groups) {
    GroupAuc r;
    r.n = g.first.size();
    try {
      r.value = auc(g.first, g.second);
      r.defined = true;
    } catch (const MetricError&) {
      r.defined = false;
    }
    out[sid] = r;
  }
  GroupAuc overall;
  overall.n = scores.size();
  try {
    overall.value = auc(scores, labels);
    overall.defined = true;
  } catch (const MetricError&) {
    overall.defined = false;
  }
  out["Overall"] = overall;
  return out;
}

// Relative improvement of a target AUC over a baseline AUC, in percent:
// ((t - 0.5) / (b - 0.5) - 1) * 100. Only defined for baselines that beat
// random.
inline double ri(double auc_target, double auc_base) {
  if (!(auc_base > 0.5))
    throw MetricError("ri: baseline AUC must exceed 0.5");
  return ((auc_target - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

// ---- report rendering ----------------------------------------------------

struct RunMetrics {
  std::string run;  // e.g. "full_seed3"
  std::map<std::string, GroupAuc> by_scenario;  // includes "Overall"
};

inline std::string format_auc(const GroupAuc& g) {
  if (!g.defined) return "undef";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", g.value);
  return buf;
}

// Machine-readable rows. Column order is fixed: run,scenario,n,auc,ri.
// auc is "undef" for single-class groups; ri is empty when no baseline is
// given or undefined.
inline std::string metrics_csv(const std::vector<RunMetrics>& runs,
                               const RunMetrics* baseline = nullptr) {
  std::ostringstream out;
  out << "run,scenario,n,auc,ri\n";
  for (const auto& r : runs) {
    for (const auto& [sid, g] : r.by_scenario) {
      out << r.run << ',' << sid << ',' << g.n << ',' << format_auc(g) << ',';
      if (baseline && g.defined) {
        auto it = baseline->by_scenario.find(sid);
        if (it != baseline->by_scenario.end() && it->second.defined &&
            it->second.value > 0.5) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "%.2f", ri(g.value, it->second.value));
          out << buf;
        }
      }
      out << '\n';
    }
  }
  return out.str();
}

// Aligned text table, one scenario per row, one run per column; appends an
// RI row against the named baseline when present. Scenario sets that differ
// across runs are surfaced explicitly.
inline std::string metrics_table(const std::vector<RunMetrics>& runs,
                                 const RunMetrics* baseline = nullptr) {
  if (runs.empty()) throw std::invalid_argument("metrics_table: no runs");
  std::vector<std::string> scenarios;
  for (const auto& [sid, g] : runs.front().by_scenario)
    if (sid != "Overall") scenarios.push_back(sid);
  std::ostringstream diff;
  for (const auto& r : runs) {
    std::vector<std::string> s2;
    for (const auto& [sid, g] : r.by_scenario)
      if (sid != "Overall") s2.push_back(sid);
    if (s2 != scenarios) {
      diff << "  run " << r.run << " scenarios differ from " << runs.front().run << ": {";
      for (const auto& s : s2) diff << ' ' << s;
      diff << " } vs {";
      for (const auto& s : scenarios) diff << ' ' << s;
      diff << " }\n";
    }
  }
  std::ostringstream out;
  if (!diff.str().empty()) out << "WARNING: scenario sets differ across runs\n" << diff.str();
  std::size_t w = 10;
  for (const auto& r : runs) w = std::max(w, r.run.size() + 2);
  out << std::left << std::setw(10) << "scenario";
  for (const auto& r : runs) out << std::right << std::setw(static_cast<int>(w)) << r.run;
  out << '\n';
  scenarios.push_back("Overall");
  for (const auto& sid : scenarios) {
    out << std::left << std::setw(10) << sid;
    for (const auto& r : runs) {
      auto it = r.by_scenario.find(sid);
      out << std::right << std::setw(static_cast<int>(w))
          << (it == r.by_scenario.end() ? std::string("-") : format_auc(it->second));
    }
    out << '\n';
  }
  if (baseline) {
    auto bit = baseline->by_scenario.find("Overall");
    if (bit != baseline->by_scenario.end() && bit->second.defined &&
        bit->second.value > 0.5) {
      out << std::left << std::setw(10) << "RI";
      for (const auto& r : runs) {
        auto it = r.by_scenario.find("Overall");
        if (it != r.by_scenario.end() && it->second.defined) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "%.2f%%", ri(it->second.value, bit->second.value));
          out << std::right << std::setw(static_cast<int>(w)) << buf;
        } else {
          out << std::right << std::setw(static_cast<int>(w)) << "-";
        }
      }
      out << "  (vs " << baseline->run << ")\n";
    }
  }
  return out.str();
}

}  // namespace csmn
