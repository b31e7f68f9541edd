#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedmon/errors.hpp"
#include "fedmon/parallel.hpp"
#include "fedmon/policy.hpp"

namespace fedmon {

std::vector<std::size_t> select_top_m(std::span<const double> scores, std::size_t m) {
  if (m > scores.size()) {
    throw ConfigError("select_top_m: M=" + std::to_string(m) + " exceeds N=" +
                      std::to_string(scores.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw NumericalError("select_top_m: score of unit " + std::to_string(i) + " is not finite");
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    better);
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

Execution parse_execution(std::string_view name) {
  if (name == "serial") {
    return Execution::kSerial;
  }
  if (name == "parallel" || name == "openmp") {
    return Execution::kParallel;
  }
  throw ConfigError("unknown execution mode '" + std::string(name) + "'");
}

std::string_view to_string(Execution exec) {
  return exec == Execution::kSerial ? "serial" : "parallel";
}

}  // namespace fedmon
