#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "fedmon/environment.hpp"
#include "fedmon/errors.hpp"

using namespace fedmon;

namespace {

double logistic(double a, double r, double d, double c, double t) {
  return a + r * (1.0 / (1.0 + std::exp(-d * (t - c))));
}

}  // namespace

TEST_CASE("sigmoid feature curve") {
  CHECK(sigmoid_feature({0.0, 1.0, 0.0, -3.0}, 0.2) == 0.5);
  CHECK(sigmoid_feature({0.0, 1.0, 0.0, 7.0}, 0.9) == 0.5);
  CHECK(sigmoid_feature({2.0, 0.0, 5.0, 0.3}, 0.1) == 2.0);
  CHECK(sigmoid_feature({2.0, 0.0, -1.0, 0.0}, 1.0) == 2.0);
  CHECK(sigmoid_feature({0.0, 1.0, 4.0, 0.5}, 0.5) == 0.5);
  CHECK(sigmoid_feature({0.0, 1.0, 4.0, 0.5}, 1e3) == doctest::Approx(1.0).epsilon(1e-15));
  for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    CHECK(sigmoid_feature({-0.4, 1.7, 2.2, 0.35}, t) ==
          doctest::Approx(logistic(-0.4, 1.7, 2.2, 0.35, t)).epsilon(1e-15));
  }
}

TEST_CASE("normalized time spans the unit interval") {
  CHECK(normalized_time(1, 100) == 0.0);
  CHECK(normalized_time(100, 100) == 1.0);
  CHECK(normalized_time(51, 101) == 0.5);
  CHECK(normalized_time(1, 1) == 0.0);
}

TEST_CASE("generated features") {
  SUBCASE("noiseless tensor follows the drawn curves") {
    const auto params = draw_sigmoid_params(4, 8);
    const FeatureTensor x = gen_sigmoid_features(4, 3, 50, 8, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t t = 0; t < 50; ++t) {
        const double s = static_cast<double>(t) / 49.0;
        for (std::size_t j = 0; j < 4; ++j) {
          const auto& p = params[j];
          CHECK(x(i, t, j) ==
                doctest::Approx(logistic(p.offset, p.range, p.rate, p.inflection, s)).epsilon(1e-14));
        }
      }
    }
  }
  SUBCASE("shared noise shifts every coordinate of a unit by one standard normal draw") {
    const FeatureTensor clean = gen_sigmoid_features(5, 40, 200, 3, 0.0);
    const FeatureTensor noisy = gen_sigmoid_features(5, 40, 200, 3, 1.0);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    double spread = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t t = 0; t < 200; ++t) {
        const double e = noisy(i, t, 0) - clean(i, t, 0);
        for (std::size_t j = 1; j < 5; ++j) {
          spread = std::max(spread, std::abs(noisy(i, t, j) - clean(i, t, j) - e));
        }
        sum += e;
        sum_sq += e * e;
        ++n;
      }
    }
    CHECK(spread < 1e-12);
    const double mean = sum / static_cast<double>(n);
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(sum_sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("independent noise varies across coordinates") {
    const FeatureTensor clean = gen_sigmoid_features(3, 2, 20, 3, 0.0);
    const FeatureTensor noisy = gen_sigmoid_features(3, 2, 20, 3, 1.0, FeatureNoise::kIndependent);
    CHECK(noisy(0, 0, 0) - clean(0, 0, 0) != noisy(0, 0, 1) - clean(0, 0, 1));
  }
  SUBCASE("deterministic given the seed") {
    CHECK(gen_sigmoid_features(4, 5, 30, 11).data == gen_sigmoid_features(4, 5, 30, 11).data);
    CHECK(gen_sigmoid_features(4, 5, 30, 11).data != gen_sigmoid_features(4, 5, 30, 12).data);
  }
  CHECK_THROWS_AS(gen_sigmoid_features(0, 5, 30, 1), ConfigError);
}

TEST_CASE("ground truth generator") {
  SUBCASE("shapes and beta = QC") {
    const GroundTruth gt = gen_ground_truth(6, 3, 40, 100.0, 5);
    CHECK(gt.q.rows() == 6);
    CHECK(gt.q.cols() == 3);
    CHECK(gt.c.cols() == 40);
    CHECK((gt.beta - gt.q * gt.c).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("rank of beta is at most K") {
    for (std::size_t k : {1u, 2u, 3u}) {
      const GroundTruth gt = gen_ground_truth(6, k, 12, 100.0, 17 + k);
      Eigen::JacobiSVD<Matrix> svd(gt.beta);
      const Vector sv = svd.singularValues();
      for (Eigen::Index r = static_cast<Eigen::Index>(k); r < sv.size(); ++r) {
        CHECK(sv(r) < 1e-8 * sv(0));
      }
      CHECK(sv(static_cast<Eigen::Index>(k) - 1) > 1e-6 * sv(0));
    }
  }
  SUBCASE("rank one population shares a direction") {
    const GroundTruth gt = gen_ground_truth(5, 1, 10, 100.0, 6);
    const Vector q = gt.q.col(0);
    for (Eigen::Index i = 0; i < 10; ++i) {
      const Vector b = gt.beta.col(i);
      CHECK((b - gt.c(0, i) * q).norm() < 1e-12 * (1.0 + b.norm()));
    }
  }
  SUBCASE("the dominant coordinate matches the component at the exact rate") {
    // P(σ|Z₀| > max_j |Z_j|) = ∫ g(s) F(s)^{K−1} ds with g the half-normal
    // density of scale σ and F(s) = erf(s/√2), by Simpson's rule.
    const auto success = [](double sigma, int k) {
      const int n = 20000;
      const double hi = 12.0 * sigma;
      const double h = hi / n;
      double total = 0.0;
      for (int m = 0; m <= n; ++m) {
        const double s = m * h;
        const double g = 2.0 / (sigma * std::sqrt(2.0 * M_PI)) * std::exp(-s * s / (2 * sigma * sigma));
        const double f = std::pow(std::erf(s / std::sqrt(2.0)), k - 1);
        const double w = (m == 0 || m == n) ? 1.0 : (m % 2 == 1 ? 4.0 : 2.0);
        total += w * g * f;
      }
      return total * h / 3.0;
    };
    const auto empirical = [](double sigma2, std::uint64_t seed) {
      const GroundTruth gt = gen_ground_truth(10, 3, 2000, sigma2, seed);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < 2000; ++i) {
        Eigen::Index arg = 0;
        gt.c.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff(&arg);
        hits += static_cast<std::size_t>(arg) == gt.component[i];
      }
      return static_cast<double>(hits) / 2000.0;
    };
    // At σ² = 100 the exact rate is about 0.91, so the dominant coordinate
    // identifies the component for fewer than 95% of units.
    const double p100 = success(10.0, 3);
    CHECK(p100 == doctest::Approx(0.91).epsilon(0.01));
    CHECK(std::abs(empirical(100.0, 21) - p100) < 4.0 * std::sqrt(p100 * (1 - p100) / 2000.0));
    const double p1e4 = success(100.0, 3);
    CHECK(p1e4 > 0.95);
    CHECK(empirical(1e4, 21) >= 0.95);
  }
  SUBCASE("per-component variances match the mixture") {
    const GroundTruth gt = gen_ground_truth(10, 3, 3000, 100.0, 22);
    for (std::size_t comp = 0; comp < 3; ++comp) {
      std::vector<Eigen::Index> members;
      for (std::size_t i = 0; i < 3000; ++i) {
        if (gt.component[i] == comp) {
          members.push_back(static_cast<Eigen::Index>(i));
        }
      }
      CHECK(members.size() > 800);
      for (Eigen::Index r = 0; r < 3; ++r) {
        double sum = 0.0, sum_sq = 0.0;
        for (Eigen::Index i : members) {
          sum += gt.c(r, i);
          sum_sq += gt.c(r, i) * gt.c(r, i);
        }
        const double n = static_cast<double>(members.size());
        const double var = (sum_sq - sum * sum / n) / (n - 1.0);
        const double expected = static_cast<std::size_t>(r) == comp ? 100.0 : 1.0;
        CHECK(var == doctest::Approx(expected).epsilon(0.2));
      }
    }
  }
  SUBCASE("priors steer the component draw") {
    const GroundTruth gt = gen_ground_truth(4, 2, 500, 100.0, 23, {0.0, 1.0});
    for (std::size_t comp : gt.component) {
      CHECK(comp == 1);
    }
  }
  CHECK_THROWS_AS(gen_ground_truth(3, 4, 10, 100.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_ground_truth(3, 0, 10, 100.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_ground_truth(3, 2, 10, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_ground_truth(3, 2, 10, 100.0, 1, {1.0}), ConfigError);
}

TEST_CASE("expected and sampled rewards") {
  GroundTruth gt = gen_ground_truth(4, 2, 3, 100.0, 9);
  SUBCASE("zero coefficients give zero") {
    gt.beta.col(1).setZero();
    CHECK(expected_reward(gt, Vector::Constant(4, 3.7), 1) == 0.0);
  }
  SUBCASE("unit coefficient projects a coordinate") {
    gt.beta.col(2) = Vector::Unit(4, 0);
    Vector x(4);
    x << 3.0, -1.0, 8.0, 2.0;
    CHECK(expected_reward(gt, x, 2) == 3.0);
  }
  SUBCASE("matches a naive dot product") {
    Rng rng = make_rng(1, Stream::kFixture);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 20; ++rep) {
      Vector x(4);
      for (Eigen::Index j = 0; j < 4; ++j) {
        x(j) = normal(rng);
      }
      for (std::size_t i = 0; i < 3; ++i) {
        double naive = 0.0;
        for (Eigen::Index j = 0; j < 4; ++j) {
          naive += gt.beta(j, static_cast<Eigen::Index>(i)) * x(j);
        }
        CHECK(std::abs(expected_reward(gt, x, i) - naive) <= 1e-12 * (1.0 + std::abs(naive)));
      }
    }
  }
  SUBCASE("noise-free sampling returns the mean") {
    gt.noise_sd = 0.0;
    Rng rng = make_rng(2, Stream::kRewardNoise);
    const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    CHECK(sample_reward(gt, x, 0, rng) == expected_reward(gt, x, 0));
  }
  SUBCASE("sample mean concentrates on the expectation") {
    gt.noise_sd = 1.5;
    Rng rng = make_rng(3, Stream::kRewardNoise);
    const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    const double mean = expected_reward(gt, x, 1);
    double sum = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
      sum += sample_reward(gt, x, 1, rng);
    }
    CHECK(std::abs(sum / n - mean) < 4.0 * 1.5 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("replays bit for bit") {
    gt.noise_sd = 1.0;
    Rng a = make_rng(4, Stream::kRewardNoise);
    Rng b = make_rng(4, Stream::kRewardNoise);
    const Vector x = Vector::Ones(4);
    for (int k = 0; k < 100; ++k) {
      CHECK(sample_reward(gt, x, 0, a) == sample_reward(gt, x, 0, b));
    }
  }
  CHECK_THROWS_AS(expected_reward(gt, Vector::Ones(4), 3), ConfigError);
  CHECK_THROWS_AS(expected_reward(gt, Vector::Ones(5), 0), ConfigError);
}

TEST_CASE("ground truth JSON round trip") {
  const GroundTruth gt = gen_ground_truth(5, 2, 7, 100.0, 31, {}, 0.5);
  const auto doc = ground_truth_to_json(gt);
  const GroundTruth back = ground_truth_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.q == gt.q);
  CHECK(back.c == gt.c);
  CHECK(back.beta == gt.beta);
  CHECK(back.noise_sd == gt.noise_sd);
  CHECK(back.sigma2 == gt.sigma2);
  CHECK(back.component == gt.component);
  CHECK(doc.at("Q").size() == 5);
  CHECK(doc.at("Q").at(0).size() == 2);
}

TEST_CASE("synthetic environment") {
  SyntheticConfig cfg;
  cfg.units = 8;
  cfg.dims = 4;
  cfg.rank = 2;
  cfg.horizon = 60;
  const SyntheticEnvironment a(cfg, 3);
  const SyntheticEnvironment b(cfg, 3);
  SUBCASE("trials replay exactly and in any order") {
    for (std::size_t t : {60u, 1u, 17u, 30u}) {
      const TrialData x = a.trial(t);
      const TrialData y = b.trial(t);
      CHECK(x.features == y.features);
      CHECK(x.observed == y.observed);
      CHECK(x.features == a.trial(t).features);
    }
  }
  SUBCASE("expected rewards are the noiseless linear model") {
    const TrialData d = a.trial(9);
    for (Eigen::Index i = 0; i < 8; ++i) {
      const Vector x = d.features.row(i).transpose();
      CHECK(d.expected(i) == expected_reward(a.ground_truth(), x, static_cast<std::size_t>(i)));
    }
    CHECK(d.observed != d.expected);
  }
  SUBCASE("features agree with the tensor generator") {
    const FeatureTensor tensor = gen_sigmoid_features(4, 8, 60, 3, 1.0);
    const TrialData d = a.trial(25);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
              tensor(i, 24, j));
      }
    }
  }
  SUBCASE("zero noise observes the expectation") {
    SyntheticConfig quiet = cfg;
    quiet.noise_sd = 0.0;
    const SyntheticEnvironment env(quiet, 3);
    for (std::size_t t = 1; t <= 60; ++t) {
      const TrialData d = env.trial(t);
      CHECK(d.observed == d.expected);
    }
  }
  SUBCASE("validation") {
    SyntheticConfig bad = cfg;
    bad.rank = 5;
    CHECK_THROWS_AS(SyntheticEnvironment(bad, 1), ConfigError);
    bad = cfg;
    bad.noise_sd = -1.0;
    CHECK_THROWS_AS(SyntheticEnvironment(bad, 1), ConfigError);
  }
}

TEST_CASE("random streams are independent and addressable") {
  Rng a = make_rng(1, Stream::kFeatureNoise, 5);
  Rng b = make_rng(1, Stream::kFeatureNoise, 5);
  Rng c = make_rng(1, Stream::kRewardNoise, 5);
  Rng d = make_rng(1, Stream::kFeatureNoise, 6);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}
