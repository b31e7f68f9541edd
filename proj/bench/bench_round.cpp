// Round throughput of the per-unit kernels, serial versus OpenMP.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <memory>

#include <omp.h>

#include "fedmon/baselines.hpp"
#include "fedmon/environment.hpp"
#include "fedmon/fcom_policy.hpp"

using namespace fedmon;

namespace {

template <typename MakePolicy>
double rounds_per_second(const SyntheticEnvironment& env, std::size_t m, MakePolicy make) {
  auto policy = make();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t t = 1; t <= env.horizon(); ++t) {
    const TrialData data = env.trial(t);
    const Vector scores = policy->score(t, data.features);
    const auto selected = select_top_m(std::span<const double>(scores.data(), scores.size()), m);
    std::vector<double> rewards;
    for (const std::size_t i : selected) {
      rewards.push_back(data.observed(static_cast<Eigen::Index>(i)));
    }
    policy->update(t, data.features, selected, rewards);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return static_cast<double>(env.horizon()) / secs;
}

}  // namespace

int main(int argc, char** argv) {
  SyntheticConfig cfg;
  cfg.units = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 100;
  cfg.horizon = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 2000;
  const SyntheticEnvironment env(cfg, 7);
  const std::size_t m = std::max<std::size_t>(1, cfg.units / 3);

  std::printf("N=%zu p=%zu K=%zu T=%zu M=%zu threads=%d\n", cfg.units, cfg.dims, cfg.rank,
              cfg.horizon, m, omp_get_max_threads());
  std::printf("%-12s %14s %14s %8s\n", "policy", "serial r/s", "parallel r/s", "speedup");
  const auto report = [&](const char* name, auto make_serial, auto make_parallel) {
    const double serial = rounds_per_second(env, m, make_serial);
    const double parallel = rounds_per_second(env, m, make_parallel);
    std::printf("%-12s %14.1f %14.1f %8.2f\n", name, serial, parallel, parallel / serial);
  };
  report(
      "fcom",
      [&] { return std::make_unique<fcom::FcomPolicy>(cfg.units, cfg.dims, fcom::FcomConfig{}, 7,
                                                      Execution::kSerial); },
      [&] { return std::make_unique<fcom::FcomPolicy>(cfg.units, cfg.dims, fcom::FcomConfig{}, 7,
                                                      Execution::kParallel); });
  report(
      "linucb",
      [&] { return std::make_unique<baselines::LinUcbPolicy>(
                cfg.units, cfg.dims, baselines::LinUcbConfig{}, Execution::kSerial); },
      [&] { return std::make_unique<baselines::LinUcbPolicy>(
                cfg.units, cfg.dims, baselines::LinUcbConfig{}, Execution::kParallel); });
  report(
      "sync-linucb",
      [&] { return std::make_unique<baselines::SyncLinUcbPolicy>(
                cfg.units, cfg.dims, baselines::SyncLinUcbConfig{}, Execution::kSerial); },
      [&] { return std::make_unique<baselines::SyncLinUcbPolicy>(
                cfg.units, cfg.dims, baselines::SyncLinUcbConfig{}, Execution::kParallel); });
  return 0;
}
