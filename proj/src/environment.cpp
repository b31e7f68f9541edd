#include "fedmon/environment.hpp"

#include <cmath>
#include <string>

#include "fedmon/errors.hpp"

namespace fedmon {

double normalized_time(std::size_t t, std::size_t horizon) {
  if (horizon <= 1) {
    return 0.0;
  }
  return static_cast<double>(t - 1) / static_cast<double>(horizon - 1);
}

double sigmoid_feature(const SigmoidFeatureParams& params, double t) {
  return params.offset + params.range / (1.0 + std::exp(-params.rate * (t - params.inflection)));
}

std::vector<SigmoidFeatureParams> draw_sigmoid_params(std::size_t p, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kFeatureParams);
  std::normal_distribution<double> normal;
  std::vector<SigmoidFeatureParams> params(p);
  for (auto& param : params) {
    param.offset = normal(rng);
    param.range = normal(rng);
    param.rate = normal(rng);
    param.inflection = normal(rng);
  }
  return params;
}

FeatureMatrix sigmoid_features_at(const std::vector<SigmoidFeatureParams>& params, std::size_t units,
                                  std::size_t t, std::size_t horizon, std::uint64_t seed,
                                  double noise_sd, FeatureNoise mode) {
  const double time = normalized_time(t, horizon);
  const auto p = static_cast<Eigen::Index>(params.size());
  Vector trend(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    trend(j) = sigmoid_feature(params[static_cast<std::size_t>(j)], time);
  }
  FeatureMatrix x(static_cast<Eigen::Index>(units), p);
  Rng rng = make_rng(seed, Stream::kFeatureNoise, t);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x.row(i) = trend.transpose();
    if (noise_sd == 0.0) {
      continue;
    }
    if (mode == FeatureNoise::kShared) {
      x.row(i).array() += noise_sd * normal(rng);
    } else {
      for (Eigen::Index j = 0; j < p; ++j) {
        x(i, j) += noise_sd * normal(rng);
      }
    }
  }
  return x;
}

FeatureTensor gen_sigmoid_features(std::size_t p, std::size_t units, std::size_t horizon,
                                   std::uint64_t seed, double noise_sd, FeatureNoise mode) {
  if (p == 0 || units == 0 || horizon == 0) {
    throw ConfigError("gen_sigmoid_features: p, N and T must be positive");
  }
  const auto params = draw_sigmoid_params(p, seed);
  FeatureTensor tensor{units, horizon, p, std::vector<double>(units * horizon * p)};
  for (std::size_t t = 1; t <= horizon; ++t) {
    const FeatureMatrix x = sigmoid_features_at(params, units, t, horizon, seed, noise_sd, mode);
    for (std::size_t i = 0; i < units; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        tensor.data[(i * horizon + (t - 1)) * p + j] =
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return tensor;
}

GroundTruth gen_ground_truth(std::size_t p, std::size_t k, std::size_t units, double sigma2,
                             std::uint64_t seed, const std::vector<double>& priors,
                             double noise_sd) {
  if (k == 0 || k > p) {
    throw ConfigError("gen_ground_truth: rank K must satisfy 1 <= K <= p (K=" + std::to_string(k) +
                      ", p=" + std::to_string(p) + ")");
  }
  if (units == 0) {
    throw ConfigError("gen_ground_truth: N must be positive");
  }
  if (!(sigma2 > 0.0)) {
    throw ConfigError("gen_ground_truth: sigma2 must be positive");
  }
  if (!(noise_sd >= 0.0)) {
    throw ConfigError("gen_ground_truth: noise_sd must be nonnegative");
  }
  if (!priors.empty() && priors.size() != k) {
    throw ConfigError("gen_ground_truth: priors must have K entries");
  }

  Rng rng = make_rng(seed, Stream::kGroundTruth);
  std::normal_distribution<double> normal;
  GroundTruth truth;
  truth.noise_sd = noise_sd;
  truth.sigma2 = sigma2;
  truth.q.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
  // Column-major fill keeps the draw order tied to vec(Q).
  for (Eigen::Index col = 0; col < truth.q.cols(); ++col) {
    for (Eigen::Index row = 0; row < truth.q.rows(); ++row) {
      truth.q(row, col) = normal(rng);
    }
  }

  std::vector<double> weights = priors.empty() ? std::vector<double>(k, 1.0) : priors;
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  const double dominant_sd = std::sqrt(sigma2);
  truth.c.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(units));
  truth.component.resize(units);
  for (std::size_t i = 0; i < units; ++i) {
    const std::size_t comp = pick(rng);
    truth.component[i] = comp;
    for (std::size_t r = 0; r < k; ++r) {
      const double sd = r == comp ? dominant_sd : 1.0;
      truth.c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = sd * normal(rng);
    }
  }
  truth.beta = truth.q * truth.c;
  return truth;
}

double expected_reward(const GroundTruth& truth, const Vector& x, std::size_t unit) {
  if (unit >= truth.units()) {
    throw ConfigError("expected_reward: unit index " + std::to_string(unit) + " out of range");
  }
  if (static_cast<std::size_t>(x.size()) != truth.dims()) {
    throw ConfigError("expected_reward: feature dimension mismatch");
  }
  return truth.beta.col(static_cast<Eigen::Index>(unit)).dot(x);
}

double sample_reward(const GroundTruth& truth, const Vector& x, std::size_t unit, Rng& noise) {
  const double mean = expected_reward(truth, x, unit);
  if (truth.noise_sd == 0.0) {
    return mean;
  }
  std::normal_distribution<double> normal(0.0, truth.noise_sd);
  return mean + normal(noise);
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows) {
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = n_rows == 0 ? 0 : static_cast<Eigen::Index>(rows.at(0).size());
  Matrix m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != n_cols) {
      throw DataError("ragged matrix in ground-truth JSON");
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
  return {{"Q", matrix_to_json(truth.q)},
          {"C", matrix_to_json(truth.c)},
          {"beta", matrix_to_json(truth.beta)},
          {"noise_sd", truth.noise_sd},
          {"sigma2", truth.sigma2},
          {"component", truth.component}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& doc) {
  GroundTruth truth;
  truth.q = matrix_from_json(doc.at("Q"));
  truth.c = matrix_from_json(doc.at("C"));
  truth.beta = matrix_from_json(doc.at("beta"));
  truth.noise_sd = doc.at("noise_sd").get<double>();
  truth.sigma2 = doc.at("sigma2").get<double>();
  truth.component = doc.at("component").get<std::vector<std::size_t>>();
  return truth;
}

void validate(const SyntheticConfig& cfg) {
  if (cfg.units == 0 || cfg.dims == 0 || cfg.horizon == 0) {
    throw ConfigError("synthetic environment: N, p and T must be positive");
  }
  if (cfg.rank == 0 || cfg.rank > cfg.dims) {
    throw ConfigError("synthetic environment: K must satisfy 1 <= K <= p");
  }
  if (!(cfg.sigma2 > 0.0)) {
    throw ConfigError("synthetic environment: sigma2 must be positive");
  }
  if (!(cfg.noise_sd >= 0.0) || !(cfg.feature_noise_sd >= 0.0)) {
    throw ConfigError("synthetic environment: noise scales must be nonnegative");
  }
  if (!cfg.priors.empty()) {
    if (cfg.priors.size() != cfg.rank) {
      throw ConfigError("synthetic environment: priors must have K entries");
    }
    for (double w : cfg.priors) {
      if (!(w >= 0.0)) {
        throw ConfigError("synthetic environment: priors must be nonnegative");
      }
    }
  }
}

SyntheticEnvironment::SyntheticEnvironment(const SyntheticConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
  validate(cfg_);
  params_ = draw_sigmoid_params(cfg_.dims, seed_);
  truth_ = gen_ground_truth(cfg_.dims, cfg_.rank, cfg_.units, cfg_.sigma2, seed_, cfg_.priors,
                            cfg_.noise_sd);
}

TrialData SyntheticEnvironment::trial(std::size_t t) const {
  TrialData data;
  data.features = sigmoid_features_at(params_, cfg_.units, t, cfg_.horizon, seed_,
                                      cfg_.feature_noise_sd, cfg_.feature_noise);
  data.expected.resize(static_cast<Eigen::Index>(cfg_.units));
  for (Eigen::Index i = 0; i < data.expected.size(); ++i) {
    data.expected(i) = data.features.row(i).dot(truth_.beta.col(i));
  }
  data.observed = data.expected;
  if (truth_.noise_sd > 0.0) {
    Rng rng = make_rng(seed_, Stream::kRewardNoise, t);
    std::normal_distribution<double> normal(0.0, truth_.noise_sd);
    for (Eigen::Index i = 0; i < data.observed.size(); ++i) {
      data.observed(i) += normal(rng);
    }
  }
  return data;
}

}  // namespace fedmon
