#include "fedmon/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>

#include "fedmon/errors.hpp"
#include "fedmon/fcom_policy.hpp"

namespace fedmon::harness {

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg, std::size_t rep) {
  const std::uint64_t seed = cfg.base_seed + rep;
  if (const auto* syn = std::get_if<SyntheticConfig>(&cfg.environment)) {
    SyntheticConfig env_cfg = *syn;
    env_cfg.horizon = cfg.horizon;
    return std::make_unique<SyntheticEnvironment>(env_cfg, seed);
  }
  const auto& spec = std::get<PanelSpec>(cfg.environment);
  LongitudinalPanel pool;
  if (spec.csv.empty()) {
    pool = generate_mmse_panel(spec.generated_pool, spec.generated_seed);
  } else {
    pool = load_longitudinal_csv(spec.csv, spec.columns, spec.range).panel;
  }
  LongitudinalPanel panel =
      spec.subjects == 0 ? std::move(pool) : sample_subjects(pool, spec.subjects, seed);
  return std::make_unique<PanelEnvironment>(std::move(panel), cfg.horizon, spec.degree,
                                            spec.transform);
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const Environment& env,
                                    std::uint64_t seed, Execution exec) {
  const std::size_t n = env.units();
  const std::size_t p = env.dims();
  switch (spec.kind) {
    case PolicyKind::kFcom:
      return std::make_unique<fcom::FcomPolicy>(n, p, spec.fcom, seed, exec);
    case PolicyKind::kClucb:
      return std::make_unique<baselines::ClucbPolicy>(n, p, spec.fcom, seed, exec);
    case PolicyKind::kLinUcb:
      return std::make_unique<baselines::LinUcbPolicy>(n, p, spec.linucb, exec);
    case PolicyKind::kSyncLinUcb:
      return std::make_unique<baselines::SyncLinUcbPolicy>(n, p, spec.sync, exec);
    case PolicyKind::kOracle:
      return std::make_unique<OraclePolicy>(env);
  }
  throw ConfigError("unknown policy kind");
}

Vector OraclePolicy::score(std::size_t t, const FeatureMatrix& /*features*/) {
  return env_.trial(t).expected;
}

double regret_oracle(const Vector& expected, std::size_t m) {
  const auto top = select_top_m(std::span<const double>(expected.data(), expected.size()), m);
  double sum = 0.0;
  for (const std::size_t i : top) {
    sum += expected(static_cast<Eigen::Index>(i));
  }
  return sum;
}

bool keep_row(std::size_t trial, std::size_t horizon, bool full_trace) {
  return full_trace || trial <= 1000 || trial % 10 == 0 || trial == horizon;
}

ReplicationResult run_policy(const Environment& env, Policy& policy, std::size_t m, bool full_trace,
                             const RoundCallback& on_round) {
  ReplicationResult result;
  result.policy = policy.name();
  const std::size_t horizon = env.horizon();
  double cum = 0.0;
  double cum_realized = 0.0;
  std::size_t nonconverged = 0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const TrialData data = env.trial(t);
    const Vector scores = policy.score(t, data.features);
    const auto selected = select_top_m(std::span<const double>(scores.data(), scores.size()), m);
    std::vector<double> rewards(selected.size());
    for (std::size_t k = 0; k < selected.size(); ++k) {
      rewards[k] = data.observed(static_cast<Eigen::Index>(selected[k]));
    }
    const RoundStats stats = policy.update(t, data.features, selected, rewards);

    const auto best = select_top_m(
        std::span<const double>(data.expected.data(), data.expected.size()), m);
    RoundRecord record;
    record.trial = t;
    if (best != selected) {
      double oracle = 0.0;
      double oracle_realized = 0.0;
      for (const std::size_t i : best) {
        oracle += data.expected(static_cast<Eigen::Index>(i));
        oracle_realized += data.observed(static_cast<Eigen::Index>(i));
      }
      double got = 0.0;
      double got_realized = 0.0;
      for (const std::size_t i : selected) {
        got += data.expected(static_cast<Eigen::Index>(i));
        got_realized += data.observed(static_cast<Eigen::Index>(i));
      }
      record.inst_regret = std::max(0.0, oracle - got);
      record.inst_regret_realized = oracle_realized - got_realized;
    }
    record.selected = selected;
    record.uploads = stats.uploads;
    record.downloads = stats.downloads;
    record.scalars = stats.scalars;
    record.als_nonconverged = stats.als_nonconverged;

    cum += record.inst_regret;
    cum_realized += record.inst_regret_realized;
    result.uploads += stats.uploads;
    result.downloads += stats.downloads;
    result.scalars += stats.scalars;
    nonconverged += stats.als_nonconverged ? 1 : 0;
    if (on_round) {
      on_round(record);
    }
    if (keep_row(t, horizon, full_trace)) {
      result.rows.push_back(TraceRow{result.policy, 0, t, cum, record.inst_regret, cum_realized,
                                     result.uploads, result.downloads, result.scalars,
                                     selected.size(), nonconverged});
    }
  }
  result.final_regret = cum;
  result.final_regret_realized = cum_realized;
  if (const auto* fcom_policy = dynamic_cast<const fcom::FcomPolicy*>(&policy)) {
    result.trigger_events = fcom_policy->total_uploads();
  } else {
    result.trigger_events = result.uploads;
  }
  return result;
}

std::pair<double, double> mean_sd(const std::vector<double>& values) {
  if (values.empty()) {
    return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  }
  double mean = 0.0;
  for (double v : values) {
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) {
    return {mean, 0.0};
  }
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

namespace {

ReplicationResult run_job(const ExperimentConfig& cfg, const PolicySpec& spec, std::size_t rep,
                          Execution exec) {
  const std::uint64_t seed = cfg.base_seed + rep;
  ReplicationResult result;
  try {
    const auto env = make_environment(cfg, rep);
    const auto policy = make_policy(spec, *env, seed, exec);
    result = run_policy(*env, *policy, cfg.budget.resolve(env->units()), cfg.full_trace);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    result = ReplicationResult{};
    result.failed = true;
    result.error = e.what();
  }
  result.policy = spec.label;
  result.rep = rep;
  result.seed = seed;
  for (auto& row : result.rows) {
    row.policy = spec.label;
    row.rep = rep;
  }
  return result;
}

// Runs jobs either concurrently (one job per thread, serial kernels inside)
// or one at a time with the configured kernel execution.
std::vector<ReplicationResult> run_jobs(const ExperimentConfig& cfg,
                                        const std::vector<std::pair<PolicySpec, std::size_t>>& jobs) {
  std::vector<ReplicationResult> results(jobs.size());
  const bool across_jobs = cfg.execution == Execution::kParallel && jobs.size() > 1;
  const Execution inner = across_jobs ? Execution::kSerial : cfg.execution;
  for_each_index(across_jobs ? Execution::kParallel : Execution::kSerial, jobs.size(),
                 [&](std::size_t j) {
                   results[j] = run_job(cfg, jobs[j].first, jobs[j].second, inner);
                 });
  return results;
}

}  // namespace

double tune_alpha(const ExperimentConfig& cfg, const PolicySpec& spec) {
  ExperimentConfig tuning = cfg;
  tuning.base_seed = cfg.tuning.seed;
  tuning.full_trace = false;
  if (cfg.tuning.horizon != 0) {
    tuning.horizon = cfg.tuning.horizon;
  }
  std::vector<std::pair<PolicySpec, std::size_t>> jobs;
  for (double alpha : cfg.tuning.grid) {
    PolicySpec candidate = spec;
    set_alpha(candidate, alpha);
    candidate.tune = false;
    jobs.emplace_back(candidate, 0);
  }
  const auto results = run_jobs(tuning, jobs);
  double best_alpha = cfg.tuning.grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < results.size(); ++k) {
    if (!results[k].failed && results[k].final_regret < best) {
      best = results[k].final_regret;
      best_alpha = cfg.tuning.grid[k];
    }
  }
  return best_alpha;
}

ResultTable run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  ResultTable table;
  table.config = cfg.source;

  std::vector<PolicySpec> specs = cfg.policies;
  std::vector<std::optional<double>> tuned(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (specs[k].tune) {
      const double alpha = tune_alpha(cfg, specs[k]);
      set_alpha(specs[k], alpha);
      tuned[k] = alpha;
    }
  }

  std::vector<std::pair<PolicySpec, std::size_t>> jobs;
  for (const auto& spec : specs) {
    for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
      jobs.emplace_back(spec, rep);
    }
  }
  table.replications = run_jobs(cfg, jobs);
  for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
    table.seeds.push_back(cfg.base_seed + rep);
  }

  for (std::size_t k = 0; k < specs.size(); ++k) {
    PolicySummary summary;
    summary.policy = specs[k].label;
    summary.tuned_alpha = tuned[k];
    std::vector<double> finals;
    std::vector<double> uploads;
    for (const auto& r : table.replications) {
      if (r.policy != summary.policy) {
        continue;
      }
      ++summary.reps;
      if (r.failed) {
        ++summary.failures;
        continue;
      }
      finals.push_back(r.final_regret);
      uploads.push_back(static_cast<double>(r.uploads));
    }
    std::tie(summary.mean_regret, summary.sd_regret) = mean_sd(finals);
    summary.mean_uploads = mean_sd(uploads).first;
    table.summaries.push_back(summary);
  }
  table.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return table;
}

}  // namespace fedmon::harness
