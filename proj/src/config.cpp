#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "fedmon/errors.hpp"
#include "fedmon/harness.hpp"

namespace fedmon::harness {
namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects whatever it did not read.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError(where() + ": expected an object");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
      return fallback;
    }
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
      return fallback;
    }
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(field(key) + ": expected a nonnegative integer");
    }
    return v.get<std::size_t>();
  }

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
      return fallback;
    }
    const json& v = obj_.at(key);
    if (!v.is_number()) {
      throw ConfigError(field(key) + ": expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      throw ConfigError(field(key) + ": must be finite");
    }
    return d;
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }
  const std::string& where() const { return path_; }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.contains(item.key())) {
        throw ConfigError(field(item.key()) + ": unknown key");
      }
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

SyntheticConfig parse_synthetic(ObjectReader& r) {
  SyntheticConfig cfg;
  cfg.units = r.count("N", cfg.units);
  cfg.dims = r.count("p", cfg.dims);
  cfg.rank = r.count("K", cfg.rank);
  cfg.sigma2 = r.number("sigma2", cfg.sigma2);
  cfg.noise_sd = r.number("noise_sd", cfg.noise_sd);
  cfg.feature_noise_sd = r.number("feature_noise_sd", cfg.feature_noise_sd);
  const auto mode = r.get<std::string>("feature_noise", "shared");
  if (mode == "shared") {
    cfg.feature_noise = FeatureNoise::kShared;
  } else if (mode == "independent") {
    cfg.feature_noise = FeatureNoise::kIndependent;
  } else {
    throw ConfigError(r.field("feature_noise") + ": expected 'shared' or 'independent'");
  }
  cfg.priors = r.get<std::vector<double>>("priors", {});
  return cfg;
}

PanelSpec parse_panel(ObjectReader& r) {
  PanelSpec spec;
  spec.csv = r.get<std::string>("csv", "");
  spec.generated_pool = r.count("generated_pool", spec.generated_pool);
  spec.generated_seed = r.count("generated_seed", spec.generated_seed);
  spec.columns.id = r.get<std::string>("id_column", spec.columns.id);
  spec.columns.time = r.get<std::string>("time_column", spec.columns.time);
  spec.columns.value = r.get<std::string>("value_column", spec.columns.value);
  if (r.has("range")) {
    const json& range = r.raw("range");
    if (range.is_null()) {
      spec.range.reset();
    } else if (range.is_array() && range.size() == 2 && range[0].is_number() &&
               range[1].is_number()) {
      spec.range = ValueRange{range[0].get<double>(), range[1].get<double>()};
    } else {
      throw ConfigError(r.field("range") + ": expected [min, max] or null");
    }
  }
  spec.degree = r.count("degree", spec.degree);
  spec.subjects = r.count("subjects", spec.subjects);
  spec.transform.scale = r.number("reward_scale", spec.transform.scale);
  spec.transform.offset = r.number("reward_offset", spec.transform.offset);
  return spec;
}

fcom::FcomConfig parse_fcom(ObjectReader& r, bool with_trigger) {
  fcom::FcomConfig cfg;
  cfg.rank = r.count("K", cfg.rank);
  cfg.eta1 = r.number("eta1", cfg.eta1);
  cfg.eta2 = r.number("eta2", cfg.eta2);
  if (with_trigger) {
    cfg.gamma = r.number("gamma", cfg.gamma);
  }
  cfg.alpha_q = r.number("alpha_q", cfg.alpha_q);
  cfg.alpha_c = r.number("alpha_c", cfg.alpha_c);
  const auto mode = r.get<std::string>("alpha_mode", "constant");
  if (mode == "constant") {
    cfg.alpha_mode = fcom::AlphaMode::kConstant;
  } else if (mode == "lemma1") {
    cfg.alpha_mode = fcom::AlphaMode::kLemma1;
  } else {
    throw ConfigError(r.field("alpha_mode") + ": expected 'constant' or 'lemma1'");
  }
  cfg.als_tol = r.number("als_tol", cfg.als_tol);
  cfg.als_max_iter = r.count("als_max_iter", cfg.als_max_iter);
  cfg.refresh_membership = r.get<bool>("refresh_membership", cfg.refresh_membership);
  const auto init = r.get<std::string>("init", "sphere");
  if (init == "sphere") {
    cfg.init = fcom::MembershipInit::kSphere;
  } else if (init == "kmeans") {
    cfg.init = fcom::MembershipInit::kKMeans;
  } else {
    throw ConfigError(r.field("init") + ": expected 'sphere' or 'kmeans'");
  }
  cfg.warm_start_window = r.count("warm_start_window", cfg.warm_start_window);
  if (r.has("bounds")) {
    ObjectReader b(r.raw("bounds"), r.field("bounds"));
    auto& bc = cfg.bounds;
    bc.feature_norm = b.number("S", bc.feature_norm);
    bc.q_norm = b.number("L", bc.q_norm);
    bc.c_norm = b.number("P", bc.c_norm);
    bc.v1 = b.number("v1", bc.v1);
    bc.eps1 = b.number("eps1", bc.eps1);
    bc.v2 = b.number("v2", bc.v2);
    bc.eps2 = b.number("eps2", bc.eps2);
    bc.delta = b.number("delta", bc.delta);
    b.finish();
  }
  return cfg;
}

PolicySpec parse_policy(const json& obj, const std::string& path) {
  ObjectReader r(obj, path);
  if (!r.has("name")) {
    throw ConfigError(r.field("name") + ": required");
  }
  PolicySpec spec;
  const auto name = r.get<std::string>("name", "");
  try {
    spec.kind = parse_policy_kind(name);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field("name") + ": " + e.what());
  }
  spec.label = r.get<std::string>("label", name);
  spec.tune = r.get<bool>("tune", false);
  switch (spec.kind) {
    case PolicyKind::kFcom:
      spec.fcom = parse_fcom(r, true);
      break;
    case PolicyKind::kClucb:
      spec.fcom = parse_fcom(r, false);
      spec.fcom.gamma = 1.0;
      break;
    case PolicyKind::kLinUcb:
      spec.linucb.alpha = r.number("alpha", spec.linucb.alpha);
      spec.linucb.ridge = r.number("ridge", spec.linucb.ridge);
      break;
    case PolicyKind::kSyncLinUcb:
      spec.sync.alpha_fixed = r.number("alpha_fixed", spec.sync.alpha_fixed);
      spec.sync.alpha_random = r.number("alpha_random", spec.sync.alpha_random);
      spec.sync.ridge_fixed = r.number("ridge_fixed", spec.sync.ridge_fixed);
      spec.sync.ridge_random = r.number("ridge_random", spec.sync.ridge_random);
      spec.sync.gamma = r.number("gamma", spec.sync.gamma);
      break;
    case PolicyKind::kOracle:
      break;
  }
  r.finish();
  return spec;
}

}  // namespace

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "fcom") return PolicyKind::kFcom;
  if (name == "linucb") return PolicyKind::kLinUcb;
  if (name == "sync_linucb") return PolicyKind::kSyncLinUcb;
  if (name == "clucb") return PolicyKind::kClucb;
  if (name == "oracle") return PolicyKind::kOracle;
  throw ConfigError("unknown policy '" + name + "'");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFcom: return "fcom";
    case PolicyKind::kLinUcb: return "linucb";
    case PolicyKind::kSyncLinUcb: return "sync_linucb";
    case PolicyKind::kClucb: return "clucb";
    case PolicyKind::kOracle: return "oracle";
  }
  return "unknown";
}

void set_alpha(PolicySpec& spec, double alpha) {
  switch (spec.kind) {
    case PolicyKind::kFcom:
    case PolicyKind::kClucb:
      spec.fcom.alpha_q = alpha;
      spec.fcom.alpha_c = alpha;
      break;
    case PolicyKind::kLinUcb:
      spec.linucb.alpha = alpha;
      break;
    case PolicyKind::kSyncLinUcb:
      spec.sync.alpha_fixed = alpha;
      spec.sync.alpha_random = alpha;
      break;
    case PolicyKind::kOracle:
      break;
  }
}

std::size_t Budget::resolve(std::size_t units) const {
  if (!percent) {
    return static_cast<std::size_t>(value);
  }
  const auto m = static_cast<long long>(std::llround(static_cast<double>(units) * value / 100.0));
  return static_cast<std::size_t>(std::max(1LL, m));
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  ObjectReader top(doc, "config");
  ExperimentConfig cfg;
  cfg.source = doc;

  if (!top.has("environment")) {
    throw ConfigError("config.environment: required");
  }
  {
    ObjectReader env(top.raw("environment"), "config.environment");
    const auto type = env.get<std::string>("type", "synthetic");
    if (type == "synthetic") {
      cfg.environment = parse_synthetic(env);
    } else if (type == "panel") {
      cfg.environment = parse_panel(env);
    } else {
      throw ConfigError("config.environment.type: expected 'synthetic' or 'panel'");
    }
    env.finish();
  }

  if (!top.has("policies")) {
    throw ConfigError("config.policies: required");
  }
  const json& policies = top.raw("policies");
  if (!policies.is_array() || policies.empty()) {
    throw ConfigError("config.policies: expected a non-empty array");
  }
  for (std::size_t k = 0; k < policies.size(); ++k) {
    cfg.policies.push_back(parse_policy(policies[k], "config.policies[" + std::to_string(k) + "]"));
  }

  cfg.horizon = top.count("T", cfg.horizon);
  if (top.has("M")) {
    const json& m = top.raw("M");
    if (m.is_string()) {
      std::string text = m.get<std::string>();
      if (text.empty() || text.back() != '%') {
        throw ConfigError("config.M: expected an integer or a percentage like \"33%\"");
      }
      text.pop_back();
      try {
        std::size_t used = 0;
        cfg.budget.value = std::stod(text, &used);
        if (used != text.size()) {
          throw std::invalid_argument("trailing characters");
        }
      } catch (const std::exception&) {
        throw ConfigError("config.M: cannot parse percentage '" + m.get<std::string>() + "'");
      }
      cfg.budget.percent = true;
    } else if (m.is_number_integer() && m.get<long long>() > 0) {
      cfg.budget.value = m.get<double>();
      cfg.budget.percent = false;
    } else {
      throw ConfigError("config.M: expected a positive integer or a percentage");
    }
  }
  cfg.reps = top.count("reps", cfg.reps);
  cfg.base_seed = top.count("base_seed", cfg.base_seed);
  cfg.output = top.get<std::string>("output", cfg.output);
  try {
    cfg.execution = parse_execution(top.get<std::string>("execution", "parallel"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config.execution: ") + e.what());
  }
  cfg.full_trace = top.get<bool>("full_trace", cfg.full_trace);
  if (top.has("tuning")) {
    ObjectReader tuning(top.raw("tuning"), "config.tuning");
    cfg.tuning.grid = tuning.get<std::vector<double>>("grid", cfg.tuning.grid);
    cfg.tuning.seed = tuning.count("seed", cfg.tuning.seed);
    cfg.tuning.horizon = tuning.count("T", cfg.tuning.horizon);
    tuning.finish();
  }
  top.finish();
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.horizon < 1) {
    throw ConfigError("config.T: must be positive");
  }
  if (cfg.reps < 1) {
    throw ConfigError("config.reps: must be positive");
  }
  if (cfg.policies.empty()) {
    throw ConfigError("config.policies: at least one policy required");
  }
  if (cfg.tuning.grid.empty()) {
    throw ConfigError("config.tuning.grid: must not be empty");
  }
  if (cfg.budget.percent && !(cfg.budget.value > 0.0 && cfg.budget.value <= 100.0)) {
    throw ConfigError("config.M: percentage must lie in (0, 100]");
  }

  std::size_t units = 0;
  std::size_t dims = 0;
  if (const auto* syn = std::get_if<SyntheticConfig>(&cfg.environment)) {
    SyntheticConfig copy = *syn;
    copy.horizon = cfg.horizon;
    try {
      fedmon::validate(copy);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config.environment: ") + e.what());
    }
    units = syn->units;
    dims = syn->dims;
  } else {
    const auto& panel = std::get<PanelSpec>(cfg.environment);
    if (cfg.horizon < 2) {
      throw ConfigError("config.T: panel environments need T >= 2");
    }
    if (!panel.csv.empty() && !std::filesystem::exists(panel.csv)) {
      throw ConfigError("config.environment.csv: file not found: " + panel.csv);
    }
    if (panel.csv.empty() && panel.generated_pool < 2) {
      throw ConfigError("config.environment.generated_pool: must be at least 2");
    }
    if (panel.csv.empty() && panel.subjects > panel.generated_pool) {
      throw ConfigError("config.environment.subjects: exceeds generated_pool");
    }
    units = panel.subjects != 0 ? panel.subjects
                                : (panel.csv.empty() ? panel.generated_pool : 0);
    dims = panel.degree + 1;
  }
  if (units != 0) {
    const std::size_t m = cfg.budget.resolve(units);
    if (m < 1 || m > units) {
      throw ConfigError("config.M: resolves to " + std::to_string(m) + " but N=" +
                        std::to_string(units));
    }
  }
  for (std::size_t k = 0; k < cfg.policies.size(); ++k) {
    const PolicySpec& spec = cfg.policies[k];
    const std::string path = "config.policies[" + std::to_string(k) + "]";
    try {
      switch (spec.kind) {
        case PolicyKind::kFcom:
        case PolicyKind::kClucb:
          fcom::validate(spec.fcom);
          if (spec.fcom.rank > dims) {
            throw ConfigError("K exceeds feature dimension p=" + std::to_string(dims));
          }
          break;
        case PolicyKind::kLinUcb:
          if (!(spec.linucb.alpha >= 0.0) || !(spec.linucb.ridge > 0.0)) {
            throw ConfigError("alpha must be >= 0 and ridge > 0");
          }
          break;
        case PolicyKind::kSyncLinUcb:
          if (!(spec.sync.alpha_fixed >= 0.0) || !(spec.sync.alpha_random >= 0.0) ||
              !(spec.sync.ridge_fixed > 0.0) || !(spec.sync.ridge_random > 0.0) ||
              !(spec.sync.gamma >= 1.0)) {
            throw ConfigError("alphas must be >= 0, ridges > 0 and gamma >= 1");
          }
          break;
        case PolicyKind::kOracle:
          break;
      }
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
}

}  // namespace fedmon::harness
