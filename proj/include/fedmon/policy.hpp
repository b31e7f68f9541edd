#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedmon/linalg.hpp"

namespace fedmon {

// Communication and solver events produced by one trial's update.
struct RoundStats {
  std::size_t uploads = 0;
  std::size_t downloads = 0;
  std::size_t scalars = 0;
  bool als_nonconverged = false;
};

// score → select → feedback → update. Every policy sees the same features
// and only the rewards of the units it selected.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  // One score per unit for trial t (1-based).
  virtual Vector score(std::size_t t, const FeatureMatrix& features) = 0;
  // `selected` is in ascending unit order; rewards[k] belongs to selected[k].
  virtual RoundStats update(std::size_t t, const FeatureMatrix& features,
                            std::span<const std::size_t> selected,
                            std::span<const double> rewards) = 0;
};

// The M highest scores, ties broken toward the lower unit index. The result
// is returned in ascending unit order. Throws ConfigError when M > N and
// NumericalError on non-finite scores.
std::vector<std::size_t> select_top_m(std::span<const double> scores, std::size_t m);

}  // namespace fedmon
