#pragma once

#include "xview/bench/episode.hpp"
#include "xview/training/loss.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace xview::bench {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for k successes out of n (z = 1.96 for 95%).
inline Interval wilson_interval(int k, int n, double z = 1.96) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct Cell {
  int episodes = 0;
  int successes = 0;
  int wrong_instance = 0;

  double rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
  Interval interval() const { return wilson_interval(successes, episodes); }
  /// Share of interaction-ending episodes that hit the correct instance.
  std::optional<double> correct_instance_share() const {
    const int ended = successes + wrong_instance;
    if (ended == 0) return std::nullopt;
    return static_cast<double>(successes) / ended;
  }
  void add(const EpisodeResult& r) {
    ++episodes;
    successes += r.success ? 1 : 0;
    wrong_instance += r.wrong_instance ? 1 : 0;
  }
};

/// Success table: one row per variant, one column per task plus "Avg.".
struct ResultsTable {
  std::vector<std::string> task_ids;
  std::vector<std::string> variants;
  std::map<std::string, std::vector<Cell>> rows;  // cells per task, then the pooled average
  std::vector<EpisodeResult> episodes;            // every episode, in run order, with its variant
  std::vector<std::string> episode_variants;

  const Cell& average(const std::string& variant) const { return rows.at(variant).back(); }
};

inline std::string format_table(const ResultsTable& t) {
  std::vector<std::string> header{"variant"};
  header.insert(header.end(), t.task_ids.begin(), t.task_ids.end());
  header.push_back("Avg.");
  std::vector<std::vector<std::string>> lines{header};
  for (const auto& v : t.variants) {
    std::vector<std::string> row{v};
    for (const auto& c : t.rows.at(v)) {
      char buf[64];
      const auto ci = c.interval();
      std::snprintf(buf, sizeof buf, "%.2f [%.2f,%.2f]", c.rate(), ci.low, ci.high);
      row.emplace_back(buf);
    }
    lines.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& l : lines)
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  std::ostringstream out;
  for (const auto& l : lines) {
    for (std::size_t i = 0; i < l.size(); ++i) {
      out << l[i] << std::string(width[i] - l[i].size(), ' ') << (i + 1 < l.size() ? "  " : "\n");
    }
  }
  return out.str();
}

/// Line-delimited records: one per (variant, task) cell including "Avg.".
inline std::string format_jsonl(const ResultsTable& t) {
  std::ostringstream out;
  for (const auto& v : t.variants) {
    const auto& cells = t.rows.at(v);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      const auto ci = c.interval();
      nlohmann::json j{{"variant", v},
                       {"task", i < t.task_ids.size() ? t.task_ids[i] : std::string("Avg.")},
                       {"episodes", c.episodes},
                       {"successes", c.successes},
                       {"wrong_instance", c.wrong_instance},
                       {"success_rate", c.rate()},
                       {"ci_low", ci.low},
                       {"ci_high", ci.high}};
      out << j.dump() << "\n";
    }
  }
  return out.str();
}

/// Builds a fresh agent for one episode.
using AgentFactory = std::function<std::unique_ptr<Agent>()>;

struct MatrixOptions {
  int episodes_per_task = 32;
  std::uint64_t seed = 0;
  int workers = 1;
  EpisodeOptions episode;
  std::function<void(const std::string& variant, const EpisodeResult&)> on_episode;
};

inline std::uint64_t bench_episode_seed(std::uint64_t base, int e) {
  return base * 1000003ull + static_cast<std::uint64_t>(e) + 1;
}

/// Evaluates every variant on every task with the same episode seeds.
inline ResultsTable run_matrix(const std::vector<BenchTask>& suite,
                               const std::vector<std::pair<std::string, AgentFactory>>& variants,
                               const MatrixOptions& opt) {
  if (opt.episodes_per_task < 1) throw ConfigError("episodes_per_task must be >= 1");
  ResultsTable table;
  for (const auto& t : suite) table.task_ids.push_back(t.task_id);
  struct Job {
    std::size_t variant;
    std::size_t task;
    int episode;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    table.variants.push_back(variants[v].first);
    table.rows[variants[v].first].assign(suite.size() + 1, Cell{});
    for (std::size_t t = 0; t < suite.size(); ++t)
      for (int e = 0; e < opt.episodes_per_task; ++e) jobs.push_back({v, t, e});
  }
  std::vector<EpisodeResult> results(jobs.size());
  std::mutex report;
  auto run_one = [&](std::size_t j) {
    const auto& job = jobs[j];
    auto agent = variants[job.variant].second();
    results[j] = run_episode(suite[job.task], *agent, bench_episode_seed(opt.seed, job.episode), opt.episode);
    if (opt.on_episode) {
      std::lock_guard lock(report);
      opt.on_episode(variants[job.variant].first, results[j]);
    }
  };
  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_one(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t j = next++; j < jobs.size(); j = next++) run_one(j);
        } catch (...) {
          std::lock_guard lock(report);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& name = variants[jobs[j].variant].first;
    auto& row = table.rows[name];
    row[jobs[j].task].add(results[j]);
    row.back().add(results[j]);
    table.episodes.push_back(results[j]);
    table.episode_variants.push_back(name);
  }
  return table;
}

/// The three-variant ablation over policies that differ only in the
/// auxiliary objectives they were trained with.
inline ResultsTable run_ablation_matrix(
    const std::vector<BenchTask>& suite,
    const std::map<training::Ablation, std::shared_ptr<const policy::Policy<float>>>& checkpoints,
    const MatrixOptions& opt, const runtime::Sampling& sampling = {}) {
  std::vector<std::pair<std::string, AgentFactory>> variants;
  for (auto a : {training::Ablation::bc_only, training::Ablation::bc_vis, training::Ablation::full}) {
    const auto it = checkpoints.find(a);
    if (it == checkpoints.end() || !it->second) {
      throw NotFoundError("missing checkpoint for variant " + std::string(training::to_string(a)));
    }
    auto model = it->second;
    variants.emplace_back(std::string(training::to_string(a)), [model, sampling, &opt]() -> std::unique_ptr<Agent> {
      auto o = runtime::benchmark_options(opt.seed);
      o.sampling = sampling;
      return std::make_unique<PolicyAgent>(model, o);
    });
  }
  return run_matrix(suite, variants, opt);
}

}  // namespace xview::bench
