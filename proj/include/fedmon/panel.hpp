#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedmon/environment.hpp"

namespace fedmon {

struct Observation {
  double time = 0.0;  // months
  double value = 0.0;
};

struct Subject {
  std::string id;
  std::vector<Observation> points;  // strictly increasing in time
};

struct LongitudinalPanel {
  std::vector<Subject> subjects;
};

struct CsvColumns {
  std::string id = "subject_id";
  std::string time = "month";
  std::string value = "mmse";
};

struct ValueRange {
  double min = 0.0;
  double max = 30.0;
};

struct LoadSummary {
  std::size_t rows = 0;
  std::size_t subjects_kept = 0;
  std::size_t subjects_dropped = 0;  // fewer than two observations
};

struct PanelLoad {
  LongitudinalPanel panel;
  LoadSummary summary;
};

// Long-format CSV, one observation per row. Subjects appear in order of
// first occurrence; points are sorted by time.
PanelLoad load_longitudinal_csv(const std::filesystem::path& path, const CsvColumns& columns = {},
                                std::optional<ValueRange> range = std::nullopt);

void write_longitudinal_csv(const LongitudinalPanel& panel, const std::filesystem::path& path,
                            const CsvColumns& columns = {});

// Piecewise-linear through the subject's observations, held constant
// outside [first, last].
double interpolate(const Subject& subject, double time);

// reward = scale * outcome + offset. Defaults turn MMSE into a severity score.
struct RewardTransform {
  double scale = -1.0;
  double offset = 30.0;
  double operator()(double outcome) const { return scale * outcome + offset; }
};

// Features are the polynomial basis (1, s, ..., s^degree) of normalized grid
// time s, shared by every subject. Rewards are replayed without noise.
class PanelEnvironment final : public Environment {
 public:
  PanelEnvironment(LongitudinalPanel panel, std::size_t horizon, std::size_t degree,
                   RewardTransform transform);

  std::size_t units() const override { return panel_.subjects.size(); }
  std::size_t dims() const override { return degree_ + 1; }
  std::size_t horizon() const override { return horizon_; }
  TrialData trial(std::size_t t) const override;

  // Month corresponding to trial t.
  double grid_time(std::size_t t) const;
  double outcome(std::size_t unit, std::size_t t) const;
  const LongitudinalPanel& panel() const { return panel_; }

 private:
  LongitudinalPanel panel_;
  std::size_t horizon_;
  std::size_t degree_;
  RewardTransform transform_;
  double first_ = 0.0;
  double last_ = 0.0;
};

Vector polynomial_basis(double s, std::size_t degree);

PanelEnvironment panel_to_environment(const LongitudinalPanel& panel, std::size_t horizon,
                                      std::size_t degree = 5, RewardTransform transform = {});

// `count` subjects drawn without replacement, kept in original order.
LongitudinalPanel sample_subjects(const LongitudinalPanel& panel, std::size_t count,
                                  std::uint64_t seed);

// MMSE-like cohort: visits every 12 months to month 60 with random missed
// visits; healthy, MCI and dementia trajectories; integer scores in 0..30.
LongitudinalPanel generate_mmse_panel(std::size_t subjects, std::uint64_t seed);

}  // namespace fedmon
