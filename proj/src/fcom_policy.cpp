#include "fedmon/fcom_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedmon/errors.hpp"

namespace fedmon::fcom {

FcomPolicy::FcomPolicy(std::size_t units, std::size_t dims, FcomConfig cfg, std::uint64_t seed,
                       Execution exec)
    : cfg_(cfg), dims_(dims), exec_(exec), seed_(seed) {
  validate(cfg_);
  if (units == 0 || dims == 0) {
    throw ConfigError("fcom: N and p must be positive");
  }
  if (cfg_.rank > dims) {
    throw ConfigError("fcom: rank K exceeds feature dimension p");
  }
  server_ = make_server(dims_, cfg_);
  const auto snapshot = publish(server_);
  Rng init = make_rng(seed_, Stream::kPolicyInit);
  units_.reserve(units);
  for (std::size_t i = 0; i < units; ++i) {
    units_.push_back(make_unit(dims_, cfg_, snapshot, init));
  }
}

std::size_t FcomPolicy::message_scalars() const {
  const std::size_t kp = cfg_.rank * dims_;
  return kp * kp + kp;
}

void FcomPolicy::preload(const Matrix& q, const Matrix& c) {
  const auto p = static_cast<Eigen::Index>(dims_);
  const auto k = static_cast<Eigen::Index>(cfg_.rank);
  if (q.rows() != p || q.cols() != k || c.rows() != k ||
      c.cols() != static_cast<Eigen::Index>(units_.size())) {
    throw ConfigError("fcom preload: parameter shapes do not match the policy");
  }
  // A = η₁I, b = η₁ vec(q) so that A⁻¹b = vec(q).
  server_.b = cfg_.eta1 * vec(q);
  server_.q_hat = server_.factor.solve(server_.b);
  const auto snapshot = publish(server_);
  for (std::size_t i = 0; i < units_.size(); ++i) {
    UnitState& unit = units_[i];
    unit.base = snapshot;
    unit.a_factor = std::shared_ptr<const SpdFactor>(snapshot, &snapshot->factor);
    unit.q_hat = snapshot->q_hat;
    unit.c_hat = c.col(static_cast<Eigen::Index>(i));
    unit.c_prior = unit.c_hat;
    unit.d_moment = cfg_.eta2 * unit.c_prior;
  }
}

Vector FcomPolicy::score(std::size_t t, const FeatureMatrix& features) {
  if (static_cast<std::size_t>(features.rows()) != units_.size() ||
      static_cast<std::size_t>(features.cols()) != dims_) {
    throw ConfigError("fcom score: feature matrix shape mismatch");
  }
  const Alphas alphas = alphas_at(cfg_, t, units_.size(), dims_);
  Vector scores(static_cast<Eigen::Index>(units_.size()));
  for_each_index(exec_, units_.size(), [&](std::size_t i) {
    UnitState& unit = units_[i];
    if (cfg_.refresh_membership && unit.membership_stale) {
      update_membership(unit, cfg_);
    }
    const auto row = static_cast<Eigen::Index>(i);
    scores(row) = ucb_score(unit, features.row(row).transpose(), alphas);
  });
  return scores;
}

RoundStats FcomPolicy::update(std::size_t /*t*/, const FeatureMatrix& features,
                              std::span<const std::size_t> selected,
                              std::span<const double> rewards) {
  if (selected.size() != rewards.size()) {
    throw ConfigError("fcom update: selected and rewards differ in length");
  }
  std::vector<AlsOutcome> outcomes(selected.size());
  for_each_index(exec_, selected.size(), [&](std::size_t k) {
    const std::size_t i = selected[k];
    outcomes[k] = local_als(units_.at(i), features.row(static_cast<Eigen::Index>(i)).transpose(),
                            rewards[k], cfg_);
  });

  RoundStats stats;
  for (const auto& outcome : outcomes) {
    stats.als_nonconverged = stats.als_nonconverged || !outcome.converged;
  }
  // Serial barrier: uploads in ascending unit order.
  for (const std::size_t i : selected) {
    if (should_upload(units_[i], cfg_)) {
      server_aggregate(server_, units_[i]);
      ++stats.uploads;
      stats.scalars += message_scalars();
    }
  }
  if (stats.uploads > 0) {
    broadcast(server_, units_, exec_);
    stats.downloads += units_.size();
    stats.scalars += units_.size() * message_scalars();
    ++total_broadcasts_;
  }
  total_uploads_ += stats.uploads;

  if (cfg_.init == MembershipInit::kKMeans && !warm_started_) {
    const bool ready = std::all_of(units_.begin(), units_.end(), [&](const UnitState& u) {
      return u.observations >= cfg_.warm_start_window;
    });
    if (ready) {
      warm_start(stats);
    }
  }
  return stats;
}

// Per-unit ridge estimates β̂ᵢ are clustered by direction; cluster means give
// the initial Q̂ and least squares of β̂ᵢ on Q̂ gives ĉᵢ. The server statistics
// are then rebuilt from every unit's full history under the new memberships.
void FcomPolicy::warm_start(RoundStats& stats) {
  const auto p = static_cast<Eigen::Index>(dims_);
  const auto k = static_cast<Eigen::Index>(cfg_.rank);
  const auto n = static_cast<Eigen::Index>(units_.size());
  Matrix beta(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const UnitState& unit = units_[static_cast<std::size_t>(i)];
    Matrix v = unit.gram_all;
    v.diagonal().array() += cfg_.eta1;
    beta.row(i) = SpdFactor(v).solve(unit.moment_all).transpose();
  }
  Rng rng = make_rng(seed_, Stream::kPolicyInit, 1);
  const LineClusters clusters = line_kmeans(beta, cfg_.rank, rng);

  // Column r: cluster direction scaled by the RMS projection of its members.
  Matrix q = Matrix::Zero(p, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    double sum_sq = 0.0;
    double count = 0.0;
    const Vector dir = clusters.directions.row(r).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (clusters.labels[static_cast<std::size_t>(i)] == static_cast<std::size_t>(r)) {
        const double proj = beta.row(i).dot(dir);
        sum_sq += proj * proj;
        count += 1.0;
      }
    }
    q.col(r) = dir * (count > 0.0 ? std::sqrt(sum_sq / count) : 1.0);
  }
  Matrix qtq = q.transpose() * q;
  qtq.diagonal().array() += 1e-8 + cfg_.eta2 * 1e-6;
  const SpdFactor qtq_factor(qtq);

  server_ = make_server(dims_, cfg_);
  Matrix outer;
  for (Eigen::Index i = 0; i < n; ++i) {
    UnitState& unit = units_[static_cast<std::size_t>(i)];
    unit.c_hat = qtq_factor.solve(q.transpose() * beta.row(i).transpose());
    Matrix block(p * k, p * k);
    for (Eigen::Index r = 0; r < k; ++r) {
      for (Eigen::Index s = 0; s < k; ++s) {
        block.block(r * p, s * p, p, p) = (unit.c_hat(r) * unit.c_hat(s)) * unit.gram_all;
      }
    }
    server_.a += block;
    server_.b += kron(unit.c_hat, unit.moment_all);
    unit.delta_a.setZero();
    unit.delta_b.setZero();
    unit.gram_pending.setZero();
    unit.moment_pending.setZero();
    unit.pending_observations = 0;
  }
  server_.factor = SpdFactor(server_.a);
  server_.q_hat = server_.factor.solve(server_.b);
  broadcast(server_, units_, exec_);
  for (auto& unit : units_) {
    update_membership(unit, cfg_);
  }
  stats.uploads += units_.size();
  stats.downloads += units_.size();
  stats.scalars += 2 * units_.size() * message_scalars();
  total_uploads_ += units_.size();
  ++total_broadcasts_;
  warm_started_ = true;
}

LineClusters line_kmeans(const Matrix& rows, std::size_t k, Rng& rng, std::size_t max_iter) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index p = rows.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0 || kk > n) {
    throw ConfigError("line_kmeans: need 1 <= k <= number of rows");
  }
  Matrix x = rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) {
      x.row(i) /= norm;
    }
  }
  const auto line_distance = [&](Eigen::Index i, const Matrix& dirs, Eigen::Index j) {
    const double cos = x.row(i).dot(dirs.row(j));
    return 1.0 - cos * cos;
  };

  // k-means++ seeding on the line distance.
  LineClusters out;
  out.directions.resize(kk, p);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  out.directions.row(0) = x.row(first(rng));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index c = 1; c < kk; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < c; ++j) {
        best = std::min(best, line_distance(i, out.directions, j));
      }
      dist[static_cast<std::size_t>(i)] = std::max(best, 0.0);
      total += dist[static_cast<std::size_t>(i)];
    }
    Eigen::Index chosen = first(rng);
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> pick(dist.begin(), dist.end());
      chosen = pick(rng);
    }
    out.directions.row(c) = x.row(chosen);
  }

  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best_label = 0;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < kk; ++j) {
        const double d = line_distance(i, out.directions, j);
        if (d < best) {
          best = d;
          best_label = static_cast<std::size_t>(j);
        }
      }
      if (out.labels[static_cast<std::size_t>(i)] != best_label) {
        out.labels[static_cast<std::size_t>(i)] = best_label;
        changed = true;
      }
    }
    if (!changed) {
      break;
    }
    // New direction: principal eigenvector of the members' scatter matrix.
    for (Eigen::Index j = 0; j < kk; ++j) {
      Matrix scatter = Matrix::Zero(p, p);
      bool any = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (out.labels[static_cast<std::size_t>(i)] == static_cast<std::size_t>(j)) {
          scatter.noalias() += x.row(i).transpose() * x.row(i);
          any = true;
        }
      }
      if (any) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter);
        out.directions.row(j) = eig.eigenvectors().col(p - 1).transpose();
      }
    }
  }
  return out;
}

}  // namespace fedmon::fcom
