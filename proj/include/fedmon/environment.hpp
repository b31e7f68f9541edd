#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fedmon/linalg.hpp"
#include "fedmon/random.hpp"

namespace fedmon {

// One trial as seen by the harness. Policies only ever receive `features`
// and the `observed` entries of the units they selected.
struct TrialData {
  FeatureMatrix features;  // N×p
  Vector expected;         // noiseless βᵢᵀxᵢ
  Vector observed;         // expected + reward noise
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t units() const = 0;
  virtual std::size_t dims() const = 0;
  virtual std::size_t horizon() const = 0;
  // t is 1-based. Deterministic: the same t always yields the same data.
  virtual TrialData trial(std::size_t t) const = 0;
};

// Trial index 1..T mapped onto [0, 1].
double normalized_time(std::size_t t, std::size_t horizon);

struct SigmoidFeatureParams {
  double offset = 0.0;      // a
  double range = 0.0;       // r
  double rate = 0.0;        // d
  double inflection = 0.0;  // c, on the normalized time scale
};

// a + r / (1 + exp(-d (t - c))), noiseless.
double sigmoid_feature(const SigmoidFeatureParams& params, double t);

// kShared draws one ε per (unit, trial) added to every coordinate, as the
// feature model is written. kIndependent draws one ε per coordinate.
enum class FeatureNoise { kShared, kIndependent };

struct FeatureTensor {
  std::size_t units = 0;
  std::size_t trials = 0;
  std::size_t dims = 0;
  std::vector<double> data;

  double operator()(std::size_t unit, std::size_t trial, std::size_t dim) const {
    return data[(unit * trials + trial) * dims + dim];
  }
};

std::vector<SigmoidFeatureParams> draw_sigmoid_params(std::size_t p, std::uint64_t seed);

// Features of every unit at trial t (1-based).
FeatureMatrix sigmoid_features_at(const std::vector<SigmoidFeatureParams>& params, std::size_t units,
                                  std::size_t t, std::size_t horizon, std::uint64_t seed,
                                  double noise_sd, FeatureNoise mode);

// Full unit × trial × dimension tensor. Trial index 0 in the tensor is trial 1.
FeatureTensor gen_sigmoid_features(std::size_t p, std::size_t units, std::size_t horizon,
                                   std::uint64_t seed, double noise_sd = 1.0,
                                   FeatureNoise mode = FeatureNoise::kShared);

struct GroundTruth {
  Matrix q;       // p×K representation
  Matrix c;       // K×N memberships, column per unit
  Matrix beta;    // p×N, column i = q * c.col(i)
  double noise_sd = 1.0;
  double sigma2 = 100.0;
  std::vector<std::size_t> component;  // mixture component drawn for each unit

  std::size_t units() const { return static_cast<std::size_t>(c.cols()); }
  std::size_t dims() const { return static_cast<std::size_t>(q.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(q.cols()); }
};

// Q ~ iid N(0,1). Each cᵢ picks a component k from `priors` (uniform when
// empty) then draws N(0, diag) with σ² at position k and 1 elsewhere.
GroundTruth gen_ground_truth(std::size_t p, std::size_t k, std::size_t units, double sigma2,
                             std::uint64_t seed, const std::vector<double>& priors = {},
                             double noise_sd = 1.0);

double expected_reward(const GroundTruth& truth, const Vector& x, std::size_t unit);
double sample_reward(const GroundTruth& truth, const Vector& x, std::size_t unit, Rng& noise);

nlohmann::json ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& doc);

struct SyntheticConfig {
  std::size_t units = 100;
  std::size_t dims = 10;
  std::size_t rank = 3;
  double sigma2 = 100.0;
  double noise_sd = 1.0;
  double feature_noise_sd = 1.0;
  FeatureNoise feature_noise = FeatureNoise::kShared;
  std::vector<double> priors;
  std::size_t horizon = 30000;
};

void validate(const SyntheticConfig& cfg);

class SyntheticEnvironment final : public Environment {
 public:
  SyntheticEnvironment(const SyntheticConfig& cfg, std::uint64_t seed);

  std::size_t units() const override { return cfg_.units; }
  std::size_t dims() const override { return cfg_.dims; }
  std::size_t horizon() const override { return cfg_.horizon; }
  TrialData trial(std::size_t t) const override;

  const GroundTruth& ground_truth() const { return truth_; }
  const std::vector<SigmoidFeatureParams>& feature_params() const { return params_; }

 private:
  SyntheticConfig cfg_;
  std::uint64_t seed_;
  std::vector<SigmoidFeatureParams> params_;
  GroundTruth truth_;
};

}  // namespace fedmon
