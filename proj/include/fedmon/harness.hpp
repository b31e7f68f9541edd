#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fedmon/baselines.hpp"
#include "fedmon/environment.hpp"
#include "fedmon/fcom.hpp"
#include "fedmon/panel.hpp"
#include "fedmon/parallel.hpp"
#include "fedmon/policy.hpp"

namespace fedmon::harness {

struct PanelSpec {
  std::string csv;                   // empty: generate an MMSE-like cohort
  std::size_t generated_pool = 648;  // cohort size when generating
  std::uint64_t generated_seed = 2024;
  CsvColumns columns;
  std::optional<ValueRange> range = ValueRange{};
  std::size_t degree = 5;
  std::size_t subjects = 100;  // per replication, without replacement; 0 keeps all
  RewardTransform transform;
};

using EnvironmentSpec = std::variant<SyntheticConfig, PanelSpec>;

enum class PolicyKind { kFcom, kLinUcb, kSyncLinUcb, kClucb, kOracle };

PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind kind);

struct PolicySpec {
  PolicyKind kind = PolicyKind::kFcom;
  std::string label;  // defaults to the policy name
  fcom::FcomConfig fcom;
  baselines::LinUcbConfig linucb;
  baselines::SyncLinUcbConfig sync;
  bool tune = false;  // pick alphas from the tuning grid
};

// Sets every exploration weight of the policy to `alpha`.
void set_alpha(PolicySpec& spec, double alpha);

struct Budget {
  double value = 33.0;
  bool percent = true;
  // round(N·pct/100) with a floor of 1, or the absolute count.
  std::size_t resolve(std::size_t units) const;
};

struct TuningSpec {
  std::vector<double> grid{0.1, 0.5, 1.0};
  std::uint64_t seed = 9999;
  std::size_t horizon = 0;  // 0: same as the experiment
};

struct ExperimentConfig {
  EnvironmentSpec environment = SyntheticConfig{};
  std::vector<PolicySpec> policies;
  std::size_t horizon = 30000;
  Budget budget;
  std::size_t reps = 3;
  std::uint64_t base_seed = 1;
  std::string output = "results";
  Execution execution = Execution::kParallel;
  bool full_trace = false;
  TuningSpec tuning;
  nlohmann::json source;  // the document this config was parsed from
};

// Parses and validates. Unknown keys and bad values raise ConfigError whose
// message starts with the offending field path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& cfg);

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg, std::size_t rep);
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const Environment& env,
                                    std::uint64_t seed, Execution exec);

// Scores every unit with its noiseless expected reward.
class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(const Environment& env) : env_(env) {}
  std::string name() const override { return "oracle"; }
  Vector score(std::size_t t, const FeatureMatrix& features) override;
  RoundStats update(std::size_t, const FeatureMatrix&, std::span<const std::size_t>,
                    std::span<const double>) override {
    return {};
  }

 private:
  const Environment& env_;
};

// Sum of the M largest expected rewards, with the shared tie-break.
double regret_oracle(const Vector& expected, std::size_t m);

struct RoundRecord {
  std::size_t trial = 0;
  std::vector<std::size_t> selected;
  double inst_regret = 0.0;
  double inst_regret_realized = 0.0;
  std::size_t uploads = 0;
  std::size_t downloads = 0;
  std::size_t scalars = 0;
  bool als_nonconverged = false;
};

// One CSV row. Communication and non-convergence columns are cumulative.
struct TraceRow {
  std::string policy;
  std::size_t rep = 0;
  std::size_t trial = 0;
  double cum_regret = 0.0;
  double inst_regret = 0.0;
  double cum_regret_realized = 0.0;
  std::size_t uploads = 0;
  std::size_t downloads = 0;
  std::size_t scalars_sent = 0;
  std::size_t selected_count = 0;
  std::size_t als_nonconverged = 0;

  bool operator==(const TraceRow&) const = default;
};

struct ReplicationResult {
  std::string policy;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  double final_regret = 0.0;
  double final_regret_realized = 0.0;
  std::size_t uploads = 0;
  std::size_t downloads = 0;
  std::size_t scalars = 0;
  std::size_t trigger_events = 0;  // as counted by the policy's own records
  bool failed = false;
  std::string error;
};

using RoundCallback = std::function<void(const RoundRecord&)>;

// Rows are kept for every trial up to 1000, every 10th after, and the last;
// `full_trace` keeps all.
bool keep_row(std::size_t trial, std::size_t horizon, bool full_trace);

// The trial loop for a single policy and environment.
ReplicationResult run_policy(const Environment& env, Policy& policy, std::size_t m,
                             bool full_trace = false, const RoundCallback& on_round = {});

struct PolicySummary {
  std::string policy;
  std::size_t reps = 0;
  double mean_regret = 0.0;
  double sd_regret = 0.0;  // sample standard deviation, 0 for one rep
  double mean_uploads = 0.0;
  std::size_t failures = 0;
  std::optional<double> tuned_alpha;
};

struct ResultTable {
  std::vector<ReplicationResult> replications;
  std::vector<PolicySummary> summaries;
  std::vector<std::uint64_t> seeds;
  double wall_seconds = 0.0;
  nlohmann::json config;
};

// Mean and sample standard deviation.
std::pair<double, double> mean_sd(const std::vector<double>& values);

// Runs every (policy, replication) pair. Replication r uses base_seed + r
// for both environment and policy.
ResultTable run_experiment(const ExperimentConfig& cfg);

// Grid search of one policy's alphas on the tuning seed; returns the value
// with the lowest final regret (first on ties).
double tune_alpha(const ExperimentConfig& cfg, const PolicySpec& spec);

inline constexpr const char* kResultsHeader =
    "policy,rep,trial,cum_regret,inst_regret,cum_regret_realized,uploads,downloads,"
    "scalars_sent,selected_count,als_nonconverged";

// Writes <dir>/results.csv and <dir>/manifest.json. Throws DataError with
// the path on I/O failure.
void emit_results(const ResultTable& table, const std::filesystem::path& dir);
void write_results_csv(const std::vector<TraceRow>& rows, const std::filesystem::path& path);
std::vector<TraceRow> read_results_csv(const std::filesystem::path& path);
nlohmann::json make_manifest(const ResultTable& table);

std::string git_describe();

}  // namespace fedmon::harness
