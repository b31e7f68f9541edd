#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fedmon/errors.hpp"
#include "fedmon/harness.hpp"

using namespace fedmon;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct RunArgs {
  std::string config;
  std::string policy;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  bool full_trace = false;
};

int run(const RunArgs& args) {
  harness::ExperimentConfig cfg = harness::load_config(args.config);
  if (!args.policy.empty()) {
    std::vector<harness::PolicySpec> kept;
    for (const auto& spec : cfg.policies) {
      if (spec.label == args.policy || harness::to_string(spec.kind) == args.policy) {
        kept.push_back(spec);
      }
    }
    if (kept.empty()) {
      throw ConfigError("--policy: no policy named '" + args.policy + "' in the config");
    }
    cfg.policies = std::move(kept);
  }
  if (args.seed) {
    cfg.base_seed = *args.seed;
  }
  if (args.reps) {
    cfg.reps = *args.reps;
  }
  if (args.full_trace) {
    cfg.full_trace = true;
  }
  const std::string out = args.out.empty() ? cfg.output : args.out;
  harness::validate(cfg);

  const auto table = harness::run_experiment(cfg);
  harness::emit_results(table, out);

  std::printf("%-16s %6s %14s %12s %12s\n", "policy", "reps", "mean_regret", "sd", "uploads");
  std::size_t failures = 0;
  for (const auto& s : table.summaries) {
    std::printf("%-16s %6zu %14.2f %12.2f %12.1f", s.policy.c_str(), s.reps, s.mean_regret,
                s.sd_regret, s.mean_uploads);
    if (s.tuned_alpha) {
      std::printf("  alpha=%g", *s.tuned_alpha);
    }
    std::printf("\n");
    failures += s.failures;
  }
  for (const auto& r : table.replications) {
    if (r.failed) {
      std::fprintf(stderr, "%s rep %zu failed: %s\n", r.policy.c_str(), r.rep, r.error.c_str());
    }
  }
  std::printf("wrote %s/results.csv (%.1fs)\n", out.c_str(), table.wall_seconds);
  return failures == 0 ? 0 : kExitRuntime;
}

int gen_fixture(const std::string& kind, const std::string& out, std::uint64_t seed) {
  if (kind == "synthetic") {
    SyntheticConfig cfg;
    const auto truth =
        gen_ground_truth(cfg.dims, cfg.rank, cfg.units, cfg.sigma2, seed, cfg.priors, cfg.noise_sd);
    std::ofstream file(out);
    if (!file) {
      throw DataError("cannot write " + out);
    }
    file << ground_truth_to_json(truth).dump(2) << '\n';
  } else {
    write_longitudinal_csv(generate_mmse_panel(648, seed), out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated online monitoring experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write results");
  run_cmd->add_option("--config", run_args.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--policy", run_args.policy, "Run only this policy");
  run_cmd->add_option("--out", run_args.out, "Output directory");
  run_cmd->add_option("--seed", run_args.seed, "Base seed");
  run_cmd->add_option("--reps", run_args.reps, "Number of replications");
  run_cmd->add_flag("--full-trace", run_args.full_trace, "Keep a row for every trial");

  std::string validate_config;
  auto* validate_cmd = app.add_subcommand("validate", "Check a config file");
  validate_cmd->add_option("--config", validate_config, "Experiment config (JSON)")->required();

  std::string fixture_kind;
  std::string fixture_out;
  std::uint64_t fixture_seed = 1;
  auto* fixture_cmd = app.add_subcommand("gen-fixture", "Write a reproducible test fixture");
  fixture_cmd->add_option("--kind", fixture_kind, "synthetic or panel")
      ->required()
      ->check(CLI::IsMember({"synthetic", "panel"}));
  fixture_cmd->add_option("--out", fixture_out, "Output file")->required();
  fixture_cmd->add_option("--seed", fixture_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) {
      return run(run_args);
    }
    if (*validate_cmd) {
      const auto cfg = harness::load_config(validate_config);
      std::printf("%s: ok (%zu policies, T=%zu, %zu reps)\n", validate_config.c_str(),
                  cfg.policies.size(), cfg.horizon, cfg.reps);
      return 0;
    }
    return gen_fixture(fixture_kind, fixture_out, fixture_seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
