#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fedmon/fcom.hpp"
#include "fedmon/parallel.hpp"
#include "fedmon/policy.hpp"

namespace fedmon::baselines {

// Ridge regression state for one linear model: V = λI + Σxxᵀ, u = Σxy.
struct RidgeArmState {
  Matrix v;
  Vector u;
  Vector theta;
  SpdFactor factor;
};

RidgeArmState make_ridge_arm(std::size_t dims, double ridge);
void ridge_update(RidgeArmState& arm, const Vector& x, double y);
// θ̂ᵀx + α √(xᵀV⁻¹x)
double ridge_ucb(const RidgeArmState& arm, const Vector& x, double alpha);

struct LinUcbConfig {
  double alpha = 0.5;
  double ridge = 1.0;
};

// Independent ridge model per unit, no communication.
class LinUcbPolicy final : public Policy {
 public:
  LinUcbPolicy(std::size_t units, std::size_t dims, LinUcbConfig cfg,
               Execution exec = Execution::kParallel);

  std::string name() const override { return "linucb"; }
  Vector score(std::size_t t, const FeatureMatrix& features) override;
  RoundStats update(std::size_t t, const FeatureMatrix& features,
                    std::span<const std::size_t> selected, std::span<const double> rewards) override;

  // Sets every unit's θ̂ to beta.col(i), as if learned with λ-weighted prior.
  void preload(const Matrix& beta);
  const std::vector<RidgeArmState>& arms() const { return arms_; }

 private:
  LinUcbConfig cfg_;
  Execution exec_;
  std::vector<RidgeArmState> arms_;
};

struct SyncLinUcbConfig {
  double alpha_fixed = 0.5;
  double alpha_random = 0.5;
  double ridge_fixed = 1.0;
  double ridge_random = 0.01;  // noise-to-random-effect variance ratio
  double gamma = 2.0;
};

// Statistics of the shared fixed effect as last broadcast.
struct FixedEffectSnapshot {
  Matrix v;
  Vector u;
  Vector theta;
  SpdFactor factor;
};

// Per-unit view of the mixed model: prediction xᵀ(θ_g + θ_i).
struct MixedModelUnit {
  std::shared_ptr<const FixedEffectSnapshot> base;
  Matrix delta_v;  // pending fixed-effect statistics
  Vector delta_u;
  Vector uploaded;  // fixed-effect contribution as of the last upload
  std::size_t pending_observations = 0;
  SpdFactor fixed_factor;  // of base.v + delta_v
  Vector theta_fixed;      // local view of θ_g
  RidgeArmState random;    // random effect, fitted to y − xᵀθ_g
  Vector moment;           // Σxy of the unit's own observations
};

// Federated mixed model fitted by backfitting. The random effect is refitted
// locally against y − xᵀθ_g; each unit's fixed-effect contribution is
// Σx(y − xᵀθ_i) over its data, sent as a delta against what it last uploaded
// when the determinant trigger fires.
class SyncLinUcbPolicy final : public Policy {
 public:
  SyncLinUcbPolicy(std::size_t units, std::size_t dims, SyncLinUcbConfig cfg,
                   Execution exec = Execution::kParallel);

  std::string name() const override { return "sync_linucb"; }
  Vector score(std::size_t t, const FeatureMatrix& features) override;
  RoundStats update(std::size_t t, const FeatureMatrix& features,
                    std::span<const std::size_t> selected, std::span<const double> rewards) override;

  // θ_g = 0 and θ_i = beta.col(i).
  void preload(const Matrix& beta);
  const std::vector<MixedModelUnit>& units() const { return units_; }
  const FixedEffectSnapshot& server() const { return server_; }

 private:
  Vector contribution(const MixedModelUnit& unit) const;
  void sync_local(MixedModelUnit& unit) const;
  void refit_random(MixedModelUnit& unit) const;

  SyncLinUcbConfig cfg_;
  std::size_t dims_;
  Execution exec_;
  FixedEffectSnapshot server_;
  std::vector<MixedModelUnit> units_;
};

// FCOM without federation: one central representation state fed with every
// selected unit's observation each trial, no trigger and no pending deltas.
// Communication is reported as one raw-observation upload per selected unit.
class ClucbPolicy final : public Policy {
 public:
  ClucbPolicy(std::size_t units, std::size_t dims, fcom::FcomConfig cfg, std::uint64_t seed,
              Execution exec = Execution::kParallel);

  std::string name() const override { return "clucb"; }
  Vector score(std::size_t t, const FeatureMatrix& features) override;
  RoundStats update(std::size_t t, const FeatureMatrix& features,
                    std::span<const std::size_t> selected, std::span<const double> rewards) override;

  void preload(const Matrix& q, const Matrix& c);
  const fcom::ServerState& central() const { return central_; }
  const std::vector<fcom::UnitState>& units() const { return units_; }

 private:
  fcom::FcomConfig cfg_;
  std::size_t dims_;
  Execution exec_;
  fcom::ServerState central_;
  std::vector<fcom::UnitState> units_;
};

}  // namespace fedmon::baselines
