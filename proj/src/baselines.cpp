#include "fedmon/baselines.hpp"

#include <cmath>

#include "fedmon/errors.hpp"

namespace fedmon::baselines {
namespace {

void check_shapes(std::size_t units, std::size_t dims, const FeatureMatrix& features) {
  if (static_cast<std::size_t>(features.rows()) != units ||
      static_cast<std::size_t>(features.cols()) != dims) {
    throw ConfigError("feature matrix shape mismatch");
  }
}

void check_feedback(std::span<const std::size_t> selected, std::span<const double> rewards,
                    std::size_t units) {
  if (selected.size() != rewards.size()) {
    throw ConfigError("selected and rewards differ in length");
  }
  for (const std::size_t i : selected) {
    if (i >= units) {
      throw ConfigError("selected unit index out of range");
    }
  }
}

}  // namespace

RidgeArmState make_ridge_arm(std::size_t dims, double ridge) {
  if (!(ridge > 0.0)) {
    throw ConfigError("ridge weight must be positive");
  }
  const auto p = static_cast<Eigen::Index>(dims);
  RidgeArmState arm;
  arm.v = ridge * Matrix::Identity(p, p);
  arm.u = Vector::Zero(p);
  arm.theta = Vector::Zero(p);
  arm.factor = SpdFactor(arm.v);
  return arm;
}

void ridge_update(RidgeArmState& arm, const Vector& x, double y) {
  arm.v.noalias() += x * x.transpose();
  arm.u += y * x;
  arm.factor = SpdFactor(arm.v);
  arm.theta = arm.factor.solve(arm.u);
}

double ridge_ucb(const RidgeArmState& arm, const Vector& x, double alpha) {
  if (!x.allFinite()) {
    throw NumericalError("ridge_ucb: feature vector has non-finite entries");
  }
  double score = arm.theta.dot(x);
  if (alpha != 0.0) {
    score += alpha * std::sqrt(arm.factor.inverse_quadratic(x));
  }
  return score;
}

// LinUCB -------------------------------------------------------------------

LinUcbPolicy::LinUcbPolicy(std::size_t units, std::size_t dims, LinUcbConfig cfg, Execution exec)
    : cfg_(cfg), exec_(exec) {
  if (units == 0 || dims == 0) {
    throw ConfigError("linucb: N and p must be positive");
  }
  if (!(cfg_.alpha >= 0.0)) {
    throw ConfigError("linucb: alpha must be nonnegative");
  }
  arms_.assign(units, make_ridge_arm(dims, cfg_.ridge));
}

void LinUcbPolicy::preload(const Matrix& beta) {
  if (beta.cols() != static_cast<Eigen::Index>(arms_.size()) ||
      beta.rows() != arms_.front().theta.size()) {
    throw ConfigError("linucb preload: beta shape mismatch");
  }
  for (std::size_t i = 0; i < arms_.size(); ++i) {
    arms_[i].u = arms_[i].v * beta.col(static_cast<Eigen::Index>(i));
    arms_[i].theta = arms_[i].factor.solve(arms_[i].u);
  }
}

Vector LinUcbPolicy::score(std::size_t /*t*/, const FeatureMatrix& features) {
  check_shapes(arms_.size(), static_cast<std::size_t>(arms_.front().theta.size()), features);
  Vector scores(static_cast<Eigen::Index>(arms_.size()));
  for_each_index(exec_, arms_.size(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    scores(row) = ridge_ucb(arms_[i], features.row(row).transpose(), cfg_.alpha);
  });
  return scores;
}

RoundStats LinUcbPolicy::update(std::size_t /*t*/, const FeatureMatrix& features,
                                std::span<const std::size_t> selected,
                                std::span<const double> rewards) {
  check_feedback(selected, rewards, arms_.size());
  for_each_index(exec_, selected.size(), [&](std::size_t k) {
    const std::size_t i = selected[k];
    ridge_update(arms_[i], features.row(static_cast<Eigen::Index>(i)).transpose(), rewards[k]);
  });
  return {};
}

// Sync-LinUCB ----------------------------------------------------------------

SyncLinUcbPolicy::SyncLinUcbPolicy(std::size_t units, std::size_t dims, SyncLinUcbConfig cfg,
                                   Execution exec)
    : cfg_(cfg), dims_(dims), exec_(exec) {
  if (units == 0 || dims == 0) {
    throw ConfigError("sync_linucb: N and p must be positive");
  }
  if (!(cfg_.alpha_fixed >= 0.0) || !(cfg_.alpha_random >= 0.0)) {
    throw ConfigError("sync_linucb: alphas must be nonnegative");
  }
  if (!(cfg_.gamma >= 1.0)) {
    throw ConfigError("sync_linucb: gamma must be >= 1");
  }
  const auto p = static_cast<Eigen::Index>(dims);
  const RidgeArmState fixed = make_ridge_arm(dims, cfg_.ridge_fixed);
  server_ = FixedEffectSnapshot{fixed.v, fixed.u, fixed.theta, fixed.factor};
  const auto snapshot = std::make_shared<const FixedEffectSnapshot>(server_);
  MixedModelUnit unit;
  unit.base = snapshot;
  unit.delta_v = Matrix::Zero(p, p);
  unit.delta_u = Vector::Zero(p);
  unit.fixed_factor = snapshot->factor;
  unit.theta_fixed = snapshot->theta;
  unit.random = make_ridge_arm(dims, cfg_.ridge_random);
  unit.moment = Vector::Zero(p);
  unit.uploaded = Vector::Zero(p);
  units_.assign(units, unit);
}

void SyncLinUcbPolicy::preload(const Matrix& beta) {
  if (beta.cols() != static_cast<Eigen::Index>(units_.size()) ||
      beta.rows() != static_cast<Eigen::Index>(dims_)) {
    throw ConfigError("sync_linucb preload: beta shape mismatch");
  }
  for (std::size_t i = 0; i < units_.size(); ++i) {
    MixedModelUnit& unit = units_[i];
    unit.moment = unit.random.v * beta.col(static_cast<Eigen::Index>(i));
    refit_random(unit);
    unit.uploaded = contribution(unit);
  }
}

Vector SyncLinUcbPolicy::contribution(const MixedModelUnit& unit) const {
  const RidgeArmState& arm = unit.random;
  return unit.moment - arm.v * arm.theta + cfg_.ridge_random * arm.theta;
}

void SyncLinUcbPolicy::sync_local(MixedModelUnit& unit) const {
  unit.delta_u = contribution(unit) - unit.uploaded;
  if (unit.pending_observations == 0) {
    unit.fixed_factor = unit.base->factor;
  } else {
    unit.fixed_factor = SpdFactor(unit.base->v + unit.delta_v);
  }
  unit.theta_fixed = unit.fixed_factor.solve(unit.base->u + unit.delta_u);
}

void SyncLinUcbPolicy::refit_random(MixedModelUnit& unit) const {
  RidgeArmState& arm = unit.random;
  arm.u = unit.moment - arm.v * unit.theta_fixed + cfg_.ridge_random * unit.theta_fixed;
  arm.theta = arm.factor.solve(arm.u);
}

Vector SyncLinUcbPolicy::score(std::size_t /*t*/, const FeatureMatrix& features) {
  check_shapes(units_.size(), dims_, features);
  Vector scores(static_cast<Eigen::Index>(units_.size()));
  for_each_index(exec_, units_.size(), [&](std::size_t i) {
    const MixedModelUnit& unit = units_[i];
    const auto row = static_cast<Eigen::Index>(i);
    const Vector x = features.row(row).transpose();
    if (!x.allFinite()) {
      throw NumericalError("sync_linucb: feature vector has non-finite entries");
    }
    double s = x.dot(unit.theta_fixed + unit.random.theta);
    if (cfg_.alpha_fixed != 0.0) {
      s += cfg_.alpha_fixed * std::sqrt(unit.fixed_factor.inverse_quadratic(x));
    }
    if (cfg_.alpha_random != 0.0) {
      s += cfg_.alpha_random * std::sqrt(unit.random.factor.inverse_quadratic(x));
    }
    scores(row) = s;
  });
  return scores;
}

RoundStats SyncLinUcbPolicy::update(std::size_t /*t*/, const FeatureMatrix& features,
                                    std::span<const std::size_t> selected,
                                    std::span<const double> rewards) {
  check_feedback(selected, rewards, units_.size());
  for_each_index(exec_, selected.size(), [&](std::size_t k) {
    MixedModelUnit& unit = units_[selected[k]];
    const Vector x = features.row(static_cast<Eigen::Index>(selected[k])).transpose();
    const double y = rewards[k];
    unit.random.v.noalias() += x * x.transpose();
    unit.random.factor = SpdFactor(unit.random.v);
    unit.moment += y * x;
    unit.delta_v.noalias() += x * x.transpose();
    ++unit.pending_observations;
    // One backfitting sweep: the fixed effect sees the residual of the random
    // effect the decision was made with, then the random effect is refitted.
    sync_local(unit);
    refit_random(unit);
  });

  RoundStats stats;
  const std::size_t message = dims_ * dims_ + dims_;
  bool server_changed = false;
  for (const std::size_t i : selected) {
    MixedModelUnit& unit = units_[i];
    if (unit.pending_observations == 0) {
      continue;
    }
    if (unit.fixed_factor.log_det() - unit.base->factor.log_det() > std::log(cfg_.gamma)) {
      server_.v += unit.delta_v;
      server_.u += unit.delta_u;
      unit.uploaded += unit.delta_u;
      unit.delta_v.setZero();
      unit.delta_u.setZero();
      unit.pending_observations = 0;
      server_changed = true;
      ++stats.uploads;
      stats.scalars += message;
    }
  }
  if (server_changed) {
    server_.factor = SpdFactor(server_.v);
    server_.theta = server_.factor.solve(server_.u);
    const auto snapshot = std::make_shared<const FixedEffectSnapshot>(server_);
    for_each_index(exec_, units_.size(), [&](std::size_t i) {
      units_[i].base = snapshot;
      sync_local(units_[i]);
      refit_random(units_[i]);
    });
    stats.downloads += units_.size();
    stats.scalars += units_.size() * message;
  }
  return stats;
}

// CLUCB ----------------------------------------------------------------------

ClucbPolicy::ClucbPolicy(std::size_t units, std::size_t dims, fcom::FcomConfig cfg,
                         std::uint64_t seed, Execution exec)
    : cfg_(cfg), dims_(dims), exec_(exec) {
  fcom::validate(cfg_);
  if (units == 0 || dims == 0) {
    throw ConfigError("clucb: N and p must be positive");
  }
  if (cfg_.rank > dims) {
    throw ConfigError("clucb: rank K exceeds feature dimension p");
  }
  central_ = fcom::make_server(dims_, cfg_);
  const auto snapshot = fcom::publish(central_);
  // Same init stream as FCOM so that both start from identical memberships.
  Rng init = make_rng(seed, Stream::kPolicyInit);
  units_.reserve(units);
  for (std::size_t i = 0; i < units; ++i) {
    units_.push_back(fcom::make_unit(dims_, cfg_, snapshot, init));
  }
}

void ClucbPolicy::preload(const Matrix& q, const Matrix& c) {
  if (q.rows() != static_cast<Eigen::Index>(dims_) ||
      q.cols() != static_cast<Eigen::Index>(cfg_.rank) ||
      c.cols() != static_cast<Eigen::Index>(units_.size())) {
    throw ConfigError("clucb preload: parameter shapes do not match the policy");
  }
  central_.b = cfg_.eta1 * vec(q);
  central_.q_hat = central_.factor.solve(central_.b);
  const auto snapshot = fcom::publish(central_);
  for (std::size_t i = 0; i < units_.size(); ++i) {
    fcom::UnitState& unit = units_[i];
    unit.base = snapshot;
    unit.a_factor = std::shared_ptr<const SpdFactor>(snapshot, &snapshot->factor);
    unit.q_hat = snapshot->q_hat;
    unit.c_hat = c.col(static_cast<Eigen::Index>(i));
    unit.c_prior = unit.c_hat;
    unit.d_moment = cfg_.eta2 * unit.c_prior;
  }
}

Vector ClucbPolicy::score(std::size_t t, const FeatureMatrix& features) {
  check_shapes(units_.size(), dims_, features);
  const fcom::Alphas alphas = fcom::alphas_at(cfg_, t, units_.size(), dims_);
  Vector scores(static_cast<Eigen::Index>(units_.size()));
  for_each_index(exec_, units_.size(), [&](std::size_t i) {
    fcom::UnitState& unit = units_[i];
    if (cfg_.refresh_membership && unit.membership_stale) {
      fcom::update_membership(unit, cfg_);
    }
    const auto row = static_cast<Eigen::Index>(i);
    scores(row) = fcom::ucb_score(unit, features.row(row).transpose(), alphas);
  });
  return scores;
}

RoundStats ClucbPolicy::update(std::size_t /*t*/, const FeatureMatrix& features,
                               std::span<const std::size_t> selected,
                               std::span<const double> rewards) {
  check_feedback(selected, rewards, units_.size());
  std::vector<fcom::AlsOutcome> outcomes(selected.size());
  for_each_index(exec_, selected.size(), [&](std::size_t k) {
    const std::size_t i = selected[k];
    outcomes[k] = fcom::local_als(units_[i], features.row(static_cast<Eigen::Index>(i)).transpose(),
                                  rewards[k], cfg_);
  });
  RoundStats stats;
  for (const auto& outcome : outcomes) {
    stats.als_nonconverged = stats.als_nonconverged || !outcome.converged;
  }
  for (const std::size_t i : selected) {
    fcom::server_aggregate(central_, units_[i]);
    ++stats.uploads;
    stats.scalars += dims_ + 1;
  }
  if (!selected.empty()) {
    fcom::broadcast(central_, units_, exec_);
  }
  return stats;
}

}  // namespace fedmon::baselines
