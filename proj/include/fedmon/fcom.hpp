#pragma once

// Federated representation-learning bandit: per-unit alternating least
// squares over a shared representation q = vec(Q) (p×K, column-stacked) and a
// private membership vector c (K), with determinant-triggered uploads of
// representation statistics and server broadcasts.
//
// Compact storage: a unit keeps only its own K×K membership block and the
// sufficient statistics Σxxᵀ, Σxy of its observations. The design vectors
// are z = Qᵀx (membership) and w = c ⊗ x (representation), so
//   Σ zzᵀ = Qᵀ(Σxxᵀ)Q   and   Σ wwᵀ = (ccᵀ) ⊗ (Σxxᵀ).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>

#include "fedmon/linalg.hpp"
#include "fedmon/parallel.hpp"
#include "fedmon/random.hpp"

namespace fedmon::fcom {

// Constants of the confidence radii. v + eps must lie in (0, 1).
struct BoundConstants {
  double feature_norm = 1.0;     // S
  double q_norm = 1.0;           // L
  double c_norm = 1.0;           // P
  double v1 = 0.5;
  double eps1 = 0.0;
  double v2 = 0.5;
  double eps2 = 0.0;
  double delta = 0.1;
};

enum class AlphaMode { kConstant, kLemma1 };
enum class MembershipInit { kSphere, kKMeans };

struct FcomConfig {
  std::size_t rank = 3;
  double eta1 = 1.0;
  double eta2 = 1.0;
  double gamma = 2.0;  // upload trigger threshold, >= 1
  AlphaMode alpha_mode = AlphaMode::kConstant;
  double alpha_q = 0.5;
  double alpha_c = 0.5;
  double als_tol = 1e-6;
  std::size_t als_max_iter = 50;
  BoundConstants bounds;
  // Refit cᵢ from stored history when q̂ᵢ changed since the last fit.
  bool refresh_membership = true;
  MembershipInit init = MembershipInit::kSphere;
  // k-means warm start fires once every unit has this many observations.
  std::size_t warm_start_window = 20;
};

void validate(const FcomConfig& cfg);

struct Alphas {
  double q = 0.0;
  double c = 0.0;
};

// Confidence radii for the representation and membership estimates at
// trial t. Throws ConfigError when a constant is out of range.
Alphas lemma1_bounds(const FcomConfig& cfg, std::size_t t, std::size_t units, std::size_t rank,
                     std::size_t dims);

// Exploration weights in effect at trial t.
Alphas alphas_at(const FcomConfig& cfg, std::size_t t, std::size_t units, std::size_t dims);

struct CompactDesign {
  Vector z;  // Qᵀx, K
  Vector w;  // c ⊗ x, Kp
};

CompactDesign make_design(const Vector& q, const Vector& c, const Vector& x);

// Global representation statistics as published by a broadcast. Shared
// read-only by every unit that has synchronized to it.
struct RepresentationSnapshot {
  Matrix a;
  Vector b;
  Vector q_hat;
  SpdFactor factor;
};

struct UnitState {
  std::size_t dims = 0;
  std::size_t rank = 0;

  // Representation: A = base.a + delta_a, b = base.b + delta_b.
  std::shared_ptr<const RepresentationSnapshot> base;
  Matrix delta_a;  // pending upload, (ccᵀ) ⊗ gram_pending
  Vector delta_b;  // pending upload, c ⊗ moment_pending
  std::shared_ptr<const SpdFactor> a_factor;
  Vector q_hat;

  // Membership: D = η₂I + Q̂ᵀ gram_all Q̂, d = Q̂ᵀ moment_all + η₂ c_prior.
  Matrix d;
  Vector d_moment;
  SpdFactor d_factor;
  Vector c_hat;
  Vector c_prior;  // centre of the membership ridge, zero unless preloaded

  // Observation history as sufficient statistics.
  Matrix gram_all;
  Vector moment_all;
  Matrix gram_pending;  // since the last upload
  Vector moment_pending;
  std::size_t observations = 0;
  std::size_t pending_observations = 0;

  bool membership_stale = false;

  Matrix gram() const;    // A_i
  Vector moment() const;  // b_i
};

struct ServerState {
  Matrix a;
  Vector b;
  Vector q_hat;
  SpdFactor factor;
};

ServerState make_server(std::size_t dims, const FcomConfig& cfg);
std::shared_ptr<const RepresentationSnapshot> publish(const ServerState& server);

// Fresh unit synchronized to `base`, membership drawn uniformly on the unit
// sphere from `init`.
UnitState make_unit(std::size_t dims, const FcomConfig& cfg,
                    std::shared_ptr<const RepresentationSnapshot> base, Rng& init);

// ĉᵀz + α_c √(zᵀD⁻¹z) + α_q √(wᵀA⁻¹w). Throws NumericalError on non-finite x.
double ucb_score(const UnitState& unit, const Vector& x, Alphas alphas);

// Membership half-step with q̂ᵢ held fixed.
void update_membership(UnitState& unit, const FcomConfig& cfg);
// Representation half-step with ĉᵢ held fixed. Rebuilds the pending deltas
// from the pending history so each pending observation enters once.
void update_local_representation(UnitState& unit, const FcomConfig& cfg);

enum class HalfStep { kRepresentation, kMembership };
using HalfStepObserver = std::function<void(const UnitState&, HalfStep)>;

struct AlsOutcome {
  std::size_t iterations = 0;
  bool converged = false;
};

// Records (x, y) then alternates representation and membership half-steps
// until max(|Δĉ|∞, |Δq̂|∞) < als_tol or als_max_iter passes. Ends with a
// representation half-step so the pending deltas match the final ĉ.
AlsOutcome local_als(UnitState& unit, const Vector& x, double y, const FcomConfig& cfg,
                     const HalfStepObserver& observer = {});

// det(a) > gamma · det(a − delta_a), compared as log-determinants. Throws
// NumericalError when a − delta_a is not positive definite.
bool should_upload(const Matrix& a, const Matrix& delta_a, double gamma);
bool should_upload(const UnitState& unit, const FcomConfig& cfg);

// A_g += dA, b_g += db, q̂_g = A_g⁻¹ b_g. Throws ConfigError on shape mismatch.
void server_aggregate(ServerState& server, const Matrix& delta_a, const Vector& delta_b);
// Aggregates the unit's pending deltas and resets them.
void server_aggregate(ServerState& server, UnitState& uploader);

// Synchronizes every unit to the server. Units holding pending statistics
// keep them on top of the new base.
void broadcast(const ServerState& server, std::span<UnitState> units,
               Execution exec = Execution::kSerial);

}  // namespace fedmon::fcom
