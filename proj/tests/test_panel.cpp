#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <string>

#include "fedmon/errors.hpp"
#include "fedmon/panel.hpp"

using namespace fedmon;

namespace {

const std::filesystem::path kData = FEDMON_TEST_DATA;

bool same_panel(const LongitudinalPanel& a, const LongitudinalPanel& b) {
  if (a.subjects.size() != b.subjects.size()) {
    return false;
  }
  for (std::size_t s = 0; s < a.subjects.size(); ++s) {
    const auto& x = a.subjects[s];
    const auto& y = b.subjects[s];
    if (x.id != y.id || x.points.size() != y.points.size()) {
      return false;
    }
    for (std::size_t k = 0; k < x.points.size(); ++k) {
      if (x.points[k].time != y.points[k].time || x.points[k].value != y.points[k].value) {
        return false;
      }
    }
  }
  return true;
}

Subject two_points() { return {"s", {{0.0, 30.0}, {12.0, 24.0}}}; }

}  // namespace

TEST_CASE("loading a longitudinal CSV") {
  const PanelLoad sorted = load_longitudinal_csv(kData / "panel_sorted.csv");
  SUBCASE("subjects, points and the drop count") {
    CHECK(sorted.summary.rows == 9);
    CHECK(sorted.summary.subjects_kept == 3);
    CHECK(sorted.summary.subjects_dropped == 1);
    const auto& a = sorted.panel.subjects.at(0);
    CHECK(a.id == "A");
    REQUIRE(a.points.size() == 3);
    CHECK(a.points[0].time == 0.0);
    CHECK(a.points[1].time == 12.0);
    CHECK(a.points[2].time == 24.0);
    CHECK(a.points[2].value == 26.0);
    CHECK(sorted.panel.subjects.at(1).id == "B");
    CHECK(sorted.panel.subjects.at(2).id == "D");
  }
  SUBCASE("row order does not matter") {
    const PanelLoad shuffled = load_longitudinal_csv(kData / "panel_shuffled.csv");
    // Subjects keep first-occurrence order, so compare after sorting by id.
    auto by_id = [](LongitudinalPanel p) {
      std::sort(p.subjects.begin(), p.subjects.end(),
                [](const Subject& x, const Subject& y) { return x.id < y.id; });
      return p;
    };
    CHECK(same_panel(by_id(shuffled.panel), by_id(sorted.panel)));
    CHECK(shuffled.summary.subjects_dropped == 1);
  }
  SUBCASE("missing column names the column") {
    try {
      load_longitudinal_csv(kData / "panel_missing_column.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("month") != std::string::npos);
    }
  }
  SUBCASE("unparseable cell names the line") {
    try {
      load_longitudinal_csv(kData / "panel_bad_number.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("values outside the instrument range are rejected") {
    CHECK_THROWS_AS(load_longitudinal_csv(kData / "panel_sorted.csv", {}, ValueRange{0.0, 29.0}),
                    DataError);
  }
  SUBCASE("custom column names and quoted ids") {
    const PanelLoad custom = load_longitudinal_csv(kData / "panel_custom_columns.csv",
                                                   {"rid", "viscode_months", "score"});
    REQUIRE(custom.panel.subjects.size() == 1);
    CHECK(custom.panel.subjects[0].id == "P,1");
    CHECK(custom.panel.subjects[0].points[1].value == 24.0);
  }
  CHECK_THROWS_AS(load_longitudinal_csv(kData / "does_not_exist.csv"), DataError);
}

TEST_CASE("write and reload a panel") {
  const LongitudinalPanel panel = generate_mmse_panel(25, 4);
  const auto path = std::filesystem::temp_directory_path() / "fedmon_panel_roundtrip.csv";
  write_longitudinal_csv(panel, path);
  const PanelLoad back = load_longitudinal_csv(path);
  CHECK(same_panel(back.panel, panel));
  std::filesystem::remove(path);
}

TEST_CASE("linear interpolation") {
  const Subject s = two_points();
  CHECK(interpolate(s, 6.0) == 27.0);
  CHECK(interpolate(s, 0.0) == 30.0);
  CHECK(interpolate(s, 12.0) == 24.0);
  CHECK(interpolate(s, -5.0) == 30.0);
  CHECK(interpolate(s, 40.0) == 24.0);
  const Subject many{"m", {{0.0, 28.0}, {12.0, 29.0}, {24.0, 22.0}, {48.0, 10.0}}};
  for (const auto& p : many.points) {
    CHECK(interpolate(many, p.time) == p.value);
  }
  for (double t = 0.0; t <= 48.0; t += 0.37) {
    const auto upper = std::find_if(many.points.begin(), many.points.end(),
                                    [&](const Observation& o) { return o.time >= t; });
    const auto lower = upper == many.points.begin() ? upper : upper - 1;
    const double v = interpolate(many, t);
    CHECK(v >= std::min(lower->value, upper->value) - 1e-12);
    CHECK(v <= std::max(lower->value, upper->value) + 1e-12);
  }
}

TEST_CASE("polynomial basis") {
  const Vector ones = polynomial_basis(1.0, 5);
  CHECK(ones == Vector::Ones(6));
  const Vector half = polynomial_basis(0.5, 3);
  CHECK(half(0) == 1.0);
  CHECK(half(3) == 0.125);
  CHECK(polynomial_basis(0.0, 2) == Vector::Unit(3, 0));
}

TEST_CASE("panel environment") {
  LongitudinalPanel panel;
  panel.subjects.push_back({"a", {{0.0, 30.0}, {12.0, 24.0}}});
  panel.subjects.push_back({"b", {{6.0, 20.0}, {24.0, 11.0}}});
  const PanelEnvironment env = panel_to_environment(panel, 5, 5);
  CHECK(env.units() == 2);
  CHECK(env.dims() == 6);
  // Grid 0, 6, 12, 18, 24 months.
  CHECK(env.grid_time(1) == 0.0);
  CHECK(env.grid_time(2) == 6.0);
  CHECK(env.grid_time(5) == 24.0);
  CHECK(env.outcome(0, 2) == 27.0);
  CHECK(env.outcome(1, 1) == 20.0);
  CHECK(env.outcome(1, 4) == doctest::Approx(14.0).epsilon(1e-14));
  const TrialData last = env.trial(5);
  CHECK(last.features.row(0).transpose() == Vector::Ones(6));
  CHECK(last.features.row(1).transpose() == Vector::Ones(6));
  CHECK(last.expected(0) == 30.0 - 24.0);
  CHECK(last.expected(1) == 30.0 - 11.0);
  CHECK(last.observed == last.expected);
  const TrialData first = env.trial(1);
  CHECK(first.features.row(0).transpose() == Vector::Unit(6, 0));

  const PanelEnvironment raw = panel_to_environment(panel, 5, 2, {1.0, 0.0});
  CHECK(raw.trial(2).expected(0) == 27.0);

  CHECK_THROWS_AS(panel_to_environment(panel, 1, 5), ConfigError);
  CHECK_THROWS_AS(panel_to_environment(LongitudinalPanel{}, 5, 5), ConfigError);
}

TEST_CASE("subject sampling") {
  const LongitudinalPanel pool = generate_mmse_panel(60, 2);
  const LongitudinalPanel a = sample_subjects(pool, 20, 7);
  const LongitudinalPanel b = sample_subjects(pool, 20, 7);
  const LongitudinalPanel c = sample_subjects(pool, 20, 8);
  CHECK(same_panel(a, b));
  CHECK_FALSE(same_panel(a, c));
  REQUIRE(a.subjects.size() == 20);
  for (std::size_t k = 1; k < a.subjects.size(); ++k) {
    CHECK(a.subjects[k - 1].id < a.subjects[k].id);  // original order, no repeats
  }
  CHECK_THROWS_AS(sample_subjects(pool, 61, 1), ConfigError);
}

TEST_CASE("generated MMSE cohort") {
  const LongitudinalPanel panel = generate_mmse_panel(300, 5);
  CHECK(panel.subjects.size() == 300);
  for (const auto& s : panel.subjects) {
    REQUIRE(s.points.size() >= 2);
    CHECK(s.points[0].time == 0.0);
    CHECK(s.points[1].time == 12.0);
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      const double v = s.points[k].value;
      CHECK(v >= 0.0);
      CHECK(v <= 30.0);
      CHECK(v == std::round(v));
      if (k > 0) {
        CHECK(s.points[k].time > s.points[k - 1].time);
      }
    }
  }
  CHECK(same_panel(panel, generate_mmse_panel(300, 5)));
}
