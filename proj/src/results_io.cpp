#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedmon/errors.hpp"
#include "fedmon/harness.hpp"

#ifndef FEDMON_GIT_DESCRIBE
#define FEDMON_GIT_DESCRIBE "unknown"
#endif

namespace fedmon::harness {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

}  // namespace

void write_results_csv(const std::vector<TraceRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.policy << ',' << r.rep << ',' << r.trial << ',' << format_double(r.cum_regret) << ','
        << format_double(r.inst_regret) << ',' << format_double(r.cum_regret_realized) << ','
        << r.uploads << ',' << r.downloads << ',' << r.scalars_sent << ',' << r.selected_count
        << ',' << r.als_nonconverged << '\n';
  }
  if (!out) {
    throw DataError("write failed for " + path.string());
  }
}

std::vector<TraceRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw DataError(path.string() + ": unexpected header");
  }
  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 11) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected 11 fields");
    }
    try {
      TraceRow r;
      r.policy = f[0];
      r.rep = std::stoull(f[1]);
      r.trial = std::stoull(f[2]);
      r.cum_regret = std::stod(f[3]);
      r.inst_regret = std::stod(f[4]);
      r.cum_regret_realized = std::stod(f[5]);
      r.uploads = std::stoull(f[6]);
      r.downloads = std::stoull(f[7]);
      r.scalars_sent = std::stoull(f[8]);
      r.selected_count = std::stoull(f[9]);
      r.als_nonconverged = std::stoull(f[10]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": cannot parse");
    }
  }
  return rows;
}

nlohmann::json make_manifest(const ResultTable& table) {
  nlohmann::json doc;
  doc["config"] = table.config;
  doc["git_describe"] = git_describe();
  doc["wall_clock_seconds"] = table.wall_seconds;
  doc["seeds"] = table.seeds;
  auto summaries = nlohmann::json::array();
  for (const auto& s : table.summaries) {
    nlohmann::json entry{{"policy", s.policy},
                         {"reps", s.reps},
                         {"mean_regret", s.mean_regret},
                         {"sd_regret", s.sd_regret},
                         {"mean_uploads", s.mean_uploads},
                         {"failures", s.failures}};
    if (s.tuned_alpha) {
      entry["tuned_alpha"] = *s.tuned_alpha;
    }
    summaries.push_back(std::move(entry));
  }
  doc["summaries"] = std::move(summaries);
  auto failures = nlohmann::json::array();
  for (const auto& r : table.replications) {
    if (r.failed) {
      failures.push_back({{"policy", r.policy}, {"rep", r.rep}, {"error", r.error}});
    }
  }
  doc["failures"] = std::move(failures);
  return doc;
}

void emit_results(const ResultTable& table, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw DataError("cannot create " + dir.string() + ": " + ec.message());
  }
  std::vector<TraceRow> rows;
  for (const auto& r : table.replications) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  }
  write_results_csv(rows, dir / "results.csv");
  const auto manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) {
    throw DataError("cannot write " + manifest_path.string());
  }
  out << make_manifest(table).dump(2) << '\n';
}

std::string git_describe() { return FEDMON_GIT_DESCRIBE; }

}  // namespace fedmon::harness
