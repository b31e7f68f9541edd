#include "fedmon/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <unordered_map>

#include "fedmon/errors.hpp"

namespace fedmon {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& text, std::size_t line, const std::string& column) {
  const std::string s = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line) + ": cannot parse '" + s + "' in column '" +
                    column + "' as a number");
  }
  return value;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw DataError("missing column '" + name + "'");
  }
  return static_cast<std::size_t>(std::distance(header.begin(), it));
}

}  // namespace

PanelLoad load_longitudinal_csv(const std::filesystem::path& path, const CsvColumns& columns,
                                std::optional<ValueRange> range) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path.string() + ": empty file");
  }
  if (line.starts_with("\xEF\xBB\xBF")) {
    line.erase(0, 3);
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) {
    h = trim(h);
  }
  const std::size_t id_col = find_column(header, columns.id);
  const std::size_t time_col = find_column(header, columns.time);
  const std::size_t value_col = find_column(header, columns.value);
  const std::size_t needed = std::max({id_col, time_col, value_col}) + 1;

  PanelLoad result;
  std::vector<Subject> subjects;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (trim(line).empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() < needed) {
      throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(needed) + " fields, got " + std::to_string(fields.size()));
    }
    const std::string id = trim(fields[id_col]);
    const double time = parse_number(fields[time_col], line_no, columns.time);
    const double value = parse_number(fields[value_col], line_no, columns.value);
    if (range && (value < range->min || value > range->max)) {
      throw DataError("line " + std::to_string(line_no) + ": value " + std::to_string(value) +
                      " outside [" + std::to_string(range->min) + ", " +
                      std::to_string(range->max) + "]");
    }
    auto [it, inserted] = index.try_emplace(id, subjects.size());
    if (inserted) {
      subjects.push_back(Subject{id, {}});
    }
    subjects[it->second].points.push_back({time, value});
    ++result.summary.rows;
  }

  for (auto& subject : subjects) {
    std::stable_sort(subject.points.begin(), subject.points.end(),
                     [](const Observation& a, const Observation& b) { return a.time < b.time; });
    for (std::size_t k = 1; k < subject.points.size(); ++k) {
      if (subject.points[k].time == subject.points[k - 1].time) {
        throw DataError("subject '" + subject.id + "' has two observations at time " +
                        std::to_string(subject.points[k].time));
      }
    }
    if (subject.points.size() < 2) {
      ++result.summary.subjects_dropped;
    } else {
      result.panel.subjects.push_back(std::move(subject));
    }
  }
  result.summary.subjects_kept = result.panel.subjects.size();
  return result;
}

void write_longitudinal_csv(const LongitudinalPanel& panel, const std::filesystem::path& path,
                            const CsvColumns& columns) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << columns.id << ',' << columns.time << ',' << columns.value << '\n';
  for (const auto& subject : panel.subjects) {
    for (const auto& point : subject.points) {
      out << subject.id << ',' << point.time << ',' << point.value << '\n';
    }
  }
  if (!out) {
    throw DataError("write failed for " + path.string());
  }
}

double interpolate(const Subject& subject, double time) {
  const auto& pts = subject.points;
  if (pts.empty()) {
    throw DataError("subject '" + subject.id + "' has no observations");
  }
  if (time <= pts.front().time) {
    return pts.front().value;
  }
  if (time >= pts.back().time) {
    return pts.back().value;
  }
  const auto upper = std::upper_bound(pts.begin(), pts.end(), time,
                                      [](double v, const Observation& o) { return v < o.time; });
  const auto lower = upper - 1;
  if (lower->time == time) {
    return lower->value;
  }
  const double w = (time - lower->time) / (upper->time - lower->time);
  return lower->value + w * (upper->value - lower->value);
}

Vector polynomial_basis(double s, std::size_t degree) {
  Vector basis(static_cast<Eigen::Index>(degree + 1));
  double power = 1.0;
  for (Eigen::Index k = 0; k < basis.size(); ++k) {
    basis(k) = power;
    power *= s;
  }
  return basis;
}

PanelEnvironment::PanelEnvironment(LongitudinalPanel panel, std::size_t horizon, std::size_t degree,
                                   RewardTransform transform)
    : panel_(std::move(panel)), horizon_(horizon), degree_(degree), transform_(transform) {
  if (horizon_ < 2) {
    throw ConfigError("panel environment: T must be at least 2");
  }
  if (panel_.subjects.empty()) {
    throw ConfigError("panel environment: no subjects");
  }
  first_ = panel_.subjects.front().points.front().time;
  last_ = panel_.subjects.front().points.back().time;
  for (const auto& subject : panel_.subjects) {
    if (subject.points.size() < 2) {
      throw ConfigError("panel environment: subject '" + subject.id +
                        "' has fewer than two observations");
    }
    first_ = std::min(first_, subject.points.front().time);
    last_ = std::max(last_, subject.points.back().time);
  }
  if (!(last_ > first_)) {
    throw ConfigError("panel environment: observation times span zero length");
  }
}

double PanelEnvironment::grid_time(std::size_t t) const {
  if (t == horizon_) {
    return last_;
  }
  return first_ + normalized_time(t, horizon_) * (last_ - first_);
}

double PanelEnvironment::outcome(std::size_t unit, std::size_t t) const {
  return interpolate(panel_.subjects.at(unit), grid_time(t));
}

TrialData PanelEnvironment::trial(std::size_t t) const {
  const Vector basis = polynomial_basis(normalized_time(t, horizon_), degree_);
  TrialData data;
  const auto n = static_cast<Eigen::Index>(units());
  data.features = basis.transpose().replicate(n, 1);
  data.expected.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.expected(i) = transform_(outcome(static_cast<std::size_t>(i), t));
  }
  data.observed = data.expected;
  return data;
}

PanelEnvironment panel_to_environment(const LongitudinalPanel& panel, std::size_t horizon,
                                      std::size_t degree, RewardTransform transform) {
  return PanelEnvironment(panel, horizon, degree, transform);
}

LongitudinalPanel sample_subjects(const LongitudinalPanel& panel, std::size_t count,
                                  std::uint64_t seed) {
  if (count > panel.subjects.size()) {
    throw ConfigError("sample_subjects: requested " + std::to_string(count) + " of " +
                      std::to_string(panel.subjects.size()) + " subjects");
  }
  std::vector<std::size_t> order(panel.subjects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, Stream::kSubjects);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  LongitudinalPanel out;
  out.subjects.reserve(count);
  for (std::size_t idx : order) {
    out.subjects.push_back(panel.subjects[idx]);
  }
  return out;
}

LongitudinalPanel generate_mmse_panel(std::size_t subjects, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kFixture);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  const double visits[] = {0.0, 12.0, 24.0, 36.0, 48.0, 60.0};

  LongitudinalPanel panel;
  panel.subjects.reserve(subjects);
  for (std::size_t s = 0; s < subjects; ++s) {
    // Baseline score, linear decline per year, and acceleration per year².
    const double group = unit(rng);
    double baseline = 0.0;
    double slope = 0.0;
    double accel = 0.0;
    if (group < 0.5) {
      baseline = 28.5 + 1.0 * unit(rng);
      slope = -0.1 * unit(rng);
      accel = 0.0;
    } else if (group < 0.8) {
      baseline = 25.0 + 2.5 * unit(rng);
      slope = -(0.3 + 1.2 * unit(rng));
      accel = -0.15 * unit(rng);
    } else {
      baseline = 19.0 + 5.0 * unit(rng);
      slope = -(1.5 + 2.0 * unit(rng));
      accel = -0.3 * unit(rng);
    }
    Subject subject{"S" + std::to_string(1000 + s), {}};
    for (std::size_t v = 0; v < std::size(visits); ++v) {
      if (v >= 2 && unit(rng) < 0.15) {
        continue;  // missed visit; baseline and month 12 always kept
      }
      const double years = visits[v] / 12.0;
      const double mean = baseline + slope * years + accel * years * years;
      const double score = std::clamp(std::round(mean + 0.8 * normal(rng)), 0.0, 30.0);
      subject.points.push_back({visits[v], score});
    }
    panel.subjects.push_back(std::move(subject));
  }
  return panel;
}

}  // namespace fedmon
