#include "fedmon/fcom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedmon/errors.hpp"

namespace fedmon::fcom {
namespace {

Matrix identity(std::size_t n, double scale) {
  return scale * Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

// out = (ccᵀ) ⊗ g, filling the upper triangle of blocks and mirroring.
void kron_outer(const Vector& c, const Matrix& g, Matrix& out) {
  const Eigen::Index k = c.size();
  const Eigen::Index p = g.rows();
  out.resize(k * p, k * p);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index s = r; s < k; ++s) {
      out.block(r * p, s * p, p, p) = (c(r) * c(s)) * g;
      if (s != r) {
        out.block(s * p, r * p, p, p) = out.block(r * p, s * p, p, p);
      }
    }
  }
}

double inf_norm_diff(const Vector& a, const Vector& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

std::shared_ptr<const SpdFactor> base_factor(const std::shared_ptr<const RepresentationSnapshot>& base) {
  return std::shared_ptr<const SpdFactor>(base, &base->factor);
}

void check_geometric_rate(double v, double eps, const char* name) {
  const double rate = v + eps;
  if (!(rate > 0.0 && rate < 1.0) || !(eps >= 0.0)) {
    throw ConfigError(std::string("lemma1 bounds: ") + name + " must lie in (0, 1)");
  }
}

double geometric_term(double rate, std::size_t t) {
  return rate * (1.0 - std::pow(rate, static_cast<double>(t))) / (1.0 - rate);
}

}  // namespace

void validate(const FcomConfig& cfg) {
  if (cfg.rank == 0) {
    throw ConfigError("fcom: rank K must be positive");
  }
  if (!(cfg.eta1 > 0.0) || !(cfg.eta2 > 0.0)) {
    throw ConfigError("fcom: eta1 and eta2 must be positive");
  }
  if (!(cfg.gamma >= 1.0)) {
    throw ConfigError("fcom: gamma must be >= 1");
  }
  if (!(cfg.alpha_q >= 0.0) || !(cfg.alpha_c >= 0.0)) {
    throw ConfigError("fcom: alpha_q and alpha_c must be nonnegative");
  }
  if (!(cfg.als_tol > 0.0)) {
    throw ConfigError("fcom: als_tol must be positive");
  }
  if (cfg.als_max_iter == 0) {
    throw ConfigError("fcom: als_max_iter must be positive");
  }
  if (cfg.alpha_mode == AlphaMode::kLemma1) {
    lemma1_bounds(cfg, 0, 1, cfg.rank, 1);
  }
}

Alphas lemma1_bounds(const FcomConfig& cfg, std::size_t t, std::size_t units, std::size_t rank,
                     std::size_t dims) {
  const BoundConstants& bc = cfg.bounds;
  check_geometric_rate(bc.v1, bc.eps1, "v1 + eps1");
  check_geometric_rate(bc.v2, bc.eps2, "v2 + eps2");
  if (!(bc.delta > 0.0 && bc.delta <= 1.0)) {
    throw ConfigError("lemma1 bounds: delta must lie in (0, 1]");
  }
  if (!(bc.feature_norm >= 0.0) || !(bc.q_norm >= 0.0) || !(bc.c_norm >= 0.0)) {
    throw ConfigError("lemma1 bounds: norm bounds must be nonnegative");
  }
  if (units == 0 || rank == 0 || dims == 0) {
    throw ConfigError("lemma1 bounds: N, K and p must be positive");
  }
  const double s = bc.feature_norm;
  const double l = bc.q_norm;
  const double p = bc.c_norm;
  const double time = static_cast<double>(t);

  const double kp = static_cast<double>(rank * dims);
  const double q_log = std::log((cfg.eta1 * kp + time * s * s * p * p) / (cfg.eta1 * kp * bc.delta));
  const double alpha_q = std::sqrt(kp * q_log) +
                         2.0 * s * p * l / std::sqrt(cfg.eta1) * geometric_term(bc.v1 + bc.eps1, t) +
                         std::sqrt(cfg.eta1) * l;

  const double nk = static_cast<double>(units * rank);
  const double c_log = std::log((cfg.eta2 * nk + time * s * s * l * l) / (cfg.eta2 * nk * bc.delta));
  const double alpha_c = std::sqrt(nk * c_log) +
                         2.0 * s * p * l / std::sqrt(cfg.eta2) * geometric_term(bc.v2 + bc.eps2, t) +
                         std::sqrt(cfg.eta2) * p;
  return {alpha_q, alpha_c};
}

Alphas alphas_at(const FcomConfig& cfg, std::size_t t, std::size_t units, std::size_t dims) {
  if (cfg.alpha_mode == AlphaMode::kLemma1) {
    return lemma1_bounds(cfg, t, units, cfg.rank, dims);
  }
  return {cfg.alpha_q, cfg.alpha_c};
}

CompactDesign make_design(const Vector& q, const Vector& c, const Vector& x) {
  const Eigen::Index p = x.size();
  const Eigen::Index k = c.size();
  if (q.size() != p * k) {
    throw ConfigError("make_design: q has " + std::to_string(q.size()) + " entries, expected " +
                      std::to_string(p * k));
  }
  const Eigen::Map<const Matrix> q_mat(q.data(), p, k);
  return {q_mat.transpose() * x, kron(c, x)};
}

Matrix UnitState::gram() const {
  if (pending_observations == 0) {
    return base->a;
  }
  return base->a + delta_a;
}

Vector UnitState::moment() const {
  if (pending_observations == 0) {
    return base->b;
  }
  return base->b + delta_b;
}

ServerState make_server(std::size_t dims, const FcomConfig& cfg) {
  const std::size_t kp = dims * cfg.rank;
  ServerState server;
  server.a = identity(kp, cfg.eta1);
  server.b = Vector::Zero(static_cast<Eigen::Index>(kp));
  server.q_hat = Vector::Zero(static_cast<Eigen::Index>(kp));
  server.factor = SpdFactor(server.a);
  return server;
}

std::shared_ptr<const RepresentationSnapshot> publish(const ServerState& server) {
  return std::make_shared<const RepresentationSnapshot>(
      RepresentationSnapshot{server.a, server.b, server.q_hat, server.factor});
}

UnitState make_unit(std::size_t dims, const FcomConfig& cfg,
                    std::shared_ptr<const RepresentationSnapshot> base, Rng& init) {
  const auto p = static_cast<Eigen::Index>(dims);
  const auto k = static_cast<Eigen::Index>(cfg.rank);
  if (base->a.rows() != p * k) {
    throw ConfigError("make_unit: snapshot shape does not match p·K");
  }
  UnitState unit;
  unit.dims = dims;
  unit.rank = cfg.rank;
  unit.base = std::move(base);
  unit.delta_a = Matrix::Zero(p * k, p * k);
  unit.delta_b = Vector::Zero(p * k);
  unit.a_factor = base_factor(unit.base);
  unit.q_hat = unit.base->q_hat;

  unit.d = identity(cfg.rank, cfg.eta2);
  unit.d_moment = Vector::Zero(k);
  unit.c_prior = Vector::Zero(k);
  unit.d_factor = SpdFactor(unit.d);
  std::normal_distribution<double> normal;
  unit.c_hat.resize(k);
  do {
    for (Eigen::Index r = 0; r < k; ++r) {
      unit.c_hat(r) = normal(init);
    }
  } while (unit.c_hat.norm() == 0.0);
  unit.c_hat.normalize();

  unit.gram_all = Matrix::Zero(p, p);
  unit.moment_all = Vector::Zero(p);
  unit.gram_pending = Matrix::Zero(p, p);
  unit.moment_pending = Vector::Zero(p);
  return unit;
}

double ucb_score(const UnitState& unit, const Vector& x, Alphas alphas) {
  if (!x.allFinite()) {
    throw NumericalError("ucb_score: feature vector has non-finite entries");
  }
  // A unit without data scores with its closed-form membership D⁻¹d; the
  // random ĉ only seeds its first ALS pass.
  const Vector c = unit.observations == 0 ? unit.d_factor.solve(unit.d_moment) : unit.c_hat;
  const CompactDesign design = make_design(unit.q_hat, c, x);
  const double mean = c.dot(design.z);
  double score = mean;
  if (alphas.c != 0.0) {
    score += alphas.c * std::sqrt(unit.d_factor.inverse_quadratic(design.z));
  }
  if (alphas.q != 0.0) {
    score += alphas.q * std::sqrt(unit.a_factor->inverse_quadratic(design.w));
  }
  if (!std::isfinite(score)) {
    throw NumericalError("ucb_score: score is not finite");
  }
  return score;
}

void update_membership(UnitState& unit, const FcomConfig& cfg) {
  const auto p = static_cast<Eigen::Index>(unit.dims);
  const auto k = static_cast<Eigen::Index>(unit.rank);
  const Eigen::Map<const Matrix> q_mat(unit.q_hat.data(), p, k);
  const Matrix gq = unit.gram_all * q_mat;
  unit.d.noalias() = q_mat.transpose() * gq;
  unit.d.diagonal().array() += cfg.eta2;
  unit.d = 0.5 * (unit.d + unit.d.transpose());
  unit.d_moment.noalias() = q_mat.transpose() * unit.moment_all;
  unit.d_moment += cfg.eta2 * unit.c_prior;
  unit.d_factor = SpdFactor(unit.d);
  unit.c_hat = unit.d_factor.solve(unit.d_moment);
  unit.membership_stale = false;
}

void update_local_representation(UnitState& unit, const FcomConfig& /*cfg*/) {
  if (unit.pending_observations == 0) {
    unit.delta_a.setZero();
    unit.delta_b.setZero();
    unit.a_factor = base_factor(unit.base);
    unit.q_hat = unit.base->q_hat;
    return;
  }
  kron_outer(unit.c_hat, unit.gram_pending, unit.delta_a);
  unit.delta_b = kron(unit.c_hat, unit.moment_pending);
  auto factor = std::make_shared<SpdFactor>(unit.base->a + unit.delta_a);
  unit.q_hat = factor->solve(unit.base->b + unit.delta_b);
  unit.a_factor = std::move(factor);
}

AlsOutcome local_als(UnitState& unit, const Vector& x, double y, const FcomConfig& cfg,
                     const HalfStepObserver& observer) {
  if (!x.allFinite() || !std::isfinite(y)) {
    throw NumericalError("local_als: non-finite observation");
  }
  if (static_cast<std::size_t>(x.size()) != unit.dims) {
    throw ConfigError("local_als: feature dimension mismatch");
  }
  unit.gram_all.noalias() += x * x.transpose();
  unit.moment_all += y * x;
  unit.gram_pending.noalias() += x * x.transpose();
  unit.moment_pending += y * x;
  ++unit.observations;
  ++unit.pending_observations;

  AlsOutcome outcome;
  for (std::size_t iter = 0; iter < cfg.als_max_iter; ++iter) {
    const Vector c_prev = unit.c_hat;
    const Vector q_prev = unit.q_hat;
    update_local_representation(unit, cfg);
    if (observer) {
      observer(unit, HalfStep::kRepresentation);
    }
    update_membership(unit, cfg);
    if (observer) {
      observer(unit, HalfStep::kMembership);
    }
    ++outcome.iterations;
    const double change =
        std::max(inf_norm_diff(unit.c_hat, c_prev), inf_norm_diff(unit.q_hat, q_prev));
    if (change < cfg.als_tol) {
      outcome.converged = true;
      break;
    }
  }
  update_local_representation(unit, cfg);
  if (observer) {
    observer(unit, HalfStep::kRepresentation);
  }
  return outcome;
}

bool should_upload(const Matrix& a, const Matrix& delta_a, double gamma) {
  if (a.rows() != delta_a.rows() || a.cols() != delta_a.cols()) {
    throw ConfigError("should_upload: shape mismatch");
  }
  if (!(gamma >= 1.0)) {
    throw ConfigError("should_upload: gamma must be >= 1");
  }
  const double log_det_a = log_det_spd(a);
  double log_det_rest = 0.0;
  try {
    log_det_rest = log_det_spd(a - delta_a);
  } catch (const NumericalError&) {
    throw NumericalError("should_upload: A - dA is not positive definite");
  }
  return log_det_a - log_det_rest > std::log(gamma);
}

bool should_upload(const UnitState& unit, const FcomConfig& cfg) {
  if (unit.pending_observations == 0) {
    return false;
  }
  // A − ΔA is the synchronized base, whose factor is already known.
  return unit.a_factor->log_det() - unit.base->factor.log_det() > std::log(cfg.gamma);
}

void server_aggregate(ServerState& server, const Matrix& delta_a, const Vector& delta_b) {
  if (delta_a.rows() != server.a.rows() || delta_a.cols() != server.a.cols() ||
      delta_b.size() != server.b.size()) {
    throw ConfigError("server_aggregate: delta shape does not match server statistics");
  }
  server.a += delta_a;
  server.b += delta_b;
  server.factor = SpdFactor(server.a);
  server.q_hat = server.factor.solve(server.b);
}

void server_aggregate(ServerState& server, UnitState& uploader) {
  server_aggregate(server, uploader.delta_a, uploader.delta_b);
  uploader.delta_a.setZero();
  uploader.delta_b.setZero();
  uploader.gram_pending.setZero();
  uploader.moment_pending.setZero();
  uploader.pending_observations = 0;
}

void broadcast(const ServerState& server, std::span<UnitState> units, Execution exec) {
  const auto snapshot = publish(server);
  for_each_index(exec, units.size(), [&](std::size_t i) {
    UnitState& unit = units[i];
    unit.base = snapshot;
    if (unit.pending_observations == 0) {
      unit.a_factor = base_factor(snapshot);
      unit.q_hat = snapshot->q_hat;
    } else {
      auto factor = std::make_shared<SpdFactor>(snapshot->a + unit.delta_a);
      unit.q_hat = factor->solve(snapshot->b + unit.delta_b);
      unit.a_factor = std::move(factor);
    }
    if (unit.observations > 0) {
      unit.membership_stale = true;
    }
  });
}

}  // namespace fedmon::fcom
