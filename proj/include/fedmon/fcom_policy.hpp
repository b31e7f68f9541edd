#pragma once

#include <cstdint>
#include <vector>

#include "fedmon/fcom.hpp"
#include "fedmon/policy.hpp"

namespace fedmon::fcom {

// One FCOM trial loop: score every unit, and after selection run local ALS on
// the selected units, upload on trigger, and broadcast if anything uploaded.
class FcomPolicy final : public Policy {
 public:
  FcomPolicy(std::size_t units, std::size_t dims, FcomConfig cfg, std::uint64_t seed,
             Execution exec = Execution::kParallel);

  std::string name() const override { return "fcom"; }
  Vector score(std::size_t t, const FeatureMatrix& features) override;
  RoundStats update(std::size_t t, const FeatureMatrix& features,
                    std::span<const std::size_t> selected, std::span<const double> rewards) override;

  // Starts from known parameters: q̂ = vec(q) everywhere, ĉᵢ = c.col(i). Both
  // ridges are centred on these values so exact data keeps them fixed.
  void preload(const Matrix& q, const Matrix& c);

  const std::vector<UnitState>& units() const { return units_; }
  const ServerState& server() const { return server_; }
  const FcomConfig& config() const { return cfg_; }
  std::size_t total_uploads() const { return total_uploads_; }
  std::size_t total_broadcasts() const { return total_broadcasts_; }
  bool warm_started() const { return warm_started_; }

  // Payload of one statistics message, Kp² + Kp scalars.
  std::size_t message_scalars() const;

 private:
  void warm_start(RoundStats& stats);

  FcomConfig cfg_;
  std::size_t dims_;
  Execution exec_;
  std::uint64_t seed_;
  ServerState server_;
  std::vector<UnitState> units_;
  std::size_t total_uploads_ = 0;
  std::size_t total_broadcasts_ = 0;
  bool warm_started_ = false;
};

struct LineClusters {
  std::vector<std::size_t> labels;  // per row
  Matrix directions;                // k×p, unit norm
};

// k-means over lines through the origin: rows are compared by 1 − cos², so a
// vector and its negation fall in the same cluster. k-means++ seeding.
LineClusters line_kmeans(const Matrix& rows, std::size_t k, Rng& rng, std::size_t max_iter = 100);

}  // namespace fedmon::fcom
