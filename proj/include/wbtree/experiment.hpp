#pragma once

// JSON experiment specs, dispatch to the simulation modules, result writers
// (results.csv, report.json, manifest.json) and the verify suites.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbtree/analysis.hpp"
#include "wbtree/contracts.hpp"
#include "wbtree/dynamics.hpp"
#include "wbtree/error.hpp"
#include "wbtree/graphical.hpp"
#include "wbtree/montecarlo.hpp"
#include "wbtree/tree.hpp"

namespace wbtree {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Formatting

inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// JSON has no NaN / inf; those become null.
inline json real_json(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const EstimatorResult& r) {
  return json{{"n", r.n},
              {"used", r.used},
              {"mean", real_json(r.mean)},
              {"stderr", real_json(r.std_error)},
              {"ci95", json::array({real_json(r.ci95.lo), real_json(r.ci95.hi)})},
              {"truncated_count", r.truncated_count}};
}

inline json to_json(const TwoSampleReport& r) {
  json cells = json::object();
  for (const auto& [k, v] : r.cells) cells[k] = json::array({v.first, v.second});
  return json{{"statistic", r.statistic},   {"cells", cells},
              {"chi_square", real_json(r.chi_square)}, {"dof", r.dof},
              {"p_value", real_json(r.p_value)},       {"exact_match", r.exact_match},
              {"pooled_cells", r.pooled_cells}};
}

// ---------------------------------------------------------------------------
// Outcomes

struct ResultRow {
  std::string experiment;
  std::string metric;
  std::optional<double> lambda;
  int d = 3;
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n = 0;
  std::uint64_t truncated = 0;
};

struct Check {
  std::string name;
  bool passed = true;
  std::string detail;
  /// Gating checks decide the exit status; the rest are informational.
  bool gating = true;
};

struct ExperimentOutcome {
  std::string name;
  std::string experiment;
  std::vector<ResultRow> rows;
  json report = json::object();
  std::vector<Check> checks;
  std::uint64_t truncated = 0;
  /// Extra CSV artifacts (file name -> contents).
  std::map<std::string, std::string> artifacts;

  [[nodiscard]] bool passed() const {
    for (const auto& c : checks) {
      if (c.gating && !c.passed) return false;
    }
    return true;
  }
};

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string s = "experiment,metric,lambda,d,value,stderr,n,truncated\n";
  for (const auto& r : rows) {
    s += r.experiment + "," + r.metric + "," + (r.lambda ? format_real(*r.lambda) : "") + "," +
         std::to_string(r.d) + "," + format_real(r.value) + "," + format_real(r.std_error) + "," +
         std::to_string(r.n) + "," + std::to_string(r.truncated) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Spec parsing

namespace detail {

[[noreturn]] inline void spec_error(const std::string& what) {
  throw Error(ErrorCode::SpecInvalid, what);
}

/// Typed access to one JSON object with a whitelist of keys.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) spec_error(where_ + ": expected an object");
  }

  void allow(const std::set<std::string>& keys) const {
    for (const auto& [k, v] : j_.items()) {
      if (!keys.contains(k)) spec_error(where_ + ": unknown field '" + k + "'");
    }
  }
  [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k); }
  [[nodiscard]] const json& at(const std::string& k) const {
    if (!has(k)) spec_error(where_ + ": missing field '" + k + "'");
    return j_.at(k);
  }

  [[nodiscard]] double real(const std::string& k) const {
    const auto& v = at(k);
    if (!v.is_number()) spec_error(where_ + "." + k + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) spec_error(where_ + "." + k + ": must be finite");
    return x;
  }
  [[nodiscard]] double real_or(const std::string& k, double def) const {
    return has(k) ? real(k) : def;
  }
  [[nodiscard]] std::uint64_t count(const std::string& k) const {
    const auto& v = at(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      spec_error(where_ + "." + k + ": expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }
  [[nodiscard]] std::uint64_t count_or(const std::string& k, std::uint64_t def) const {
    return has(k) ? count(k) : def;
  }
  [[nodiscard]] bool flag_or(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const auto& v = at(k);
    if (!v.is_boolean()) spec_error(where_ + "." + k + ": expected true or false");
    return v.get<bool>();
  }
  [[nodiscard]] std::string text(const std::string& k) const {
    const auto& v = at(k);
    if (!v.is_string()) spec_error(where_ + "." + k + ": expected a string");
    return v.get<std::string>();
  }
  [[nodiscard]] std::string text_or(const std::string& k, const std::string& def) const {
    return has(k) ? text(k) : def;
  }
  [[nodiscard]] std::vector<double> reals(const std::string& k) const {
    const auto& v = at(k);
    if (!v.is_array() || v.empty()) spec_error(where_ + "." + k + ": expected a nonempty array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) {
        spec_error(where_ + "." + k + ": expected finite numbers");
      }
      out.push_back(x.get<double>());
    }
    return out;
  }
  [[nodiscard]] std::vector<std::string> texts(const std::string& k) const {
    const auto& v = at(k);
    if (!v.is_array()) spec_error(where_ + "." + k + ": expected an array");
    std::vector<std::string> out;
    for (const auto& x : v) {
      if (!x.is_string()) spec_error(where_ + "." + k + ": expected strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }
  [[nodiscard]] Fields object(const std::string& k) const { return Fields(at(k), where_ + "." + k); }
  [[nodiscard]] const std::string& where() const noexcept { return where_; }

 private:
  const json& j_;
  std::string where_;
};

inline VertexAddr parse_vertex(const std::string& s, const TreeParams& params) {
  try {
    return parse_address(s, params);
  } catch (const Error& e) {
    spec_error(std::string("bad vertex address ") + e.what());
  }
}

inline std::vector<VertexAddr> parse_vertices(const Fields& f, const std::string& k,
                                              const TreeParams& params) {
  std::vector<VertexAddr> out;
  for (const auto& s : f.texts(k)) out.push_back(parse_vertex(s, params));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::uint32_t radius_of(const Fields& f, const std::string& k) {
  const auto r = f.count(k);
  if (r > 64) spec_error(f.where() + "." + k + ": radius above 64 is not supported");
  return static_cast<std::uint32_t>(r);
}

inline Region parse_region(const Fields& f, const TreeParams& params) {
  const auto kind = f.text("kind");
  auto opt_depth = [&]() -> std::optional<std::uint32_t> {
    if (!f.has("depth")) return std::nullopt;
    return radius_of(f, "depth");
  };
  auto vertex_or_origin = [&](const std::string& k) {
    return f.has(k) ? parse_vertex(f.text(k), params) : VertexAddr::origin();
  };
  if (kind == "whole") {
    f.allow({"kind"});
    return WholeTree{};
  }
  if (kind == "ball") {
    f.allow({"kind", "center", "radius"});
    return Ball{vertex_or_origin("center"), radius_of(f, "radius")};
  }
  if (kind == "subtree") {
    f.allow({"kind", "root", "depth"});
    return Subtree{vertex_or_origin("root"), opt_depth()};
  }
  if (kind == "subtree_minus_below") {
    f.allow({"kind", "top", "bottom", "depth"});
    try {
      return SubtreeMinusBelow{parse_vertex(f.text("top"), params),
                               parse_vertex(f.text("bottom"), params), opt_depth()};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SpecInvalid) throw;
      spec_error(f.where() + ": " + e.what());
    }
  }
  if (kind == "explicit") {
    f.allow({"kind", "vertices"});
    return Region::explicit_set(parse_vertices(f, "vertices", params));
  }
  spec_error(f.where() + ".kind: expected whole, ball, subtree, subtree_minus_below or explicit");
}

inline BoundarySpec parse_boundary(const Fields& f, const TreeParams& params) {
  const auto kind = f.text("kind");
  if (kind == "none") {
    f.allow({"kind"});
    return BoundarySpec::none();
  }
  f.allow({"kind", "region"});
  const Region g = parse_region(f.object("region"), params);
  if (kind == "plus") return BoundarySpec::plus(g);
  if (kind == "minus") return BoundarySpec::minus(g);
  spec_error(f.where() + ".kind: expected none, plus or minus");
}

inline InitSpec parse_init(const Fields& f, const TreeParams& params) {
  const auto kind = f.text("kind");
  if (kind == "origin") {
    f.allow({"kind"});
    return OriginInit{};
  }
  if (kind == "explicit") {
    f.allow({"kind", "vertices"});
    return ExplicitInit{parse_vertices(f, "vertices", params)};
  }
  if (kind == "bernoulli_ball") {
    f.allow({"kind", "p", "radius"});
    const double p = f.real("p");
    if (p < 0 || p > 1) spec_error(f.where() + ".p: must lie in [0, 1]");
    return BernoulliBallInit{p, radius_of(f, "radius")};
  }
  spec_error(f.where() + ".kind: expected origin, explicit or bernoulli_ball");
}

inline StopCondition parse_stop(const Fields& f, const TreeParams& params) {
  f.allow({"t_max", "max_events", "extinction", "size_reaches", "includes_set"});
  StopCondition s;
  if (f.has("t_max")) {
    s.t_max = f.real("t_max");
    if (*s.t_max < 0) spec_error(f.where() + ".t_max: must be nonnegative");
  }
  if (f.has("max_events")) {
    if (f.at("max_events").is_null()) {
      s.max_events.reset();
    } else {
      s.max_events = f.count("max_events");
    }
  }
  s.extinction = f.flag_or("extinction", false);
  if (f.has("size_reaches")) s.size_reaches = f.count("size_reaches");
  if (f.has("includes_set")) s.includes_set = parse_vertices(f, "includes_set", params);
  if (!s.t_max && !s.max_events) spec_error(f.where() + ": needs t_max or max_events");
  return s;
}

inline SurvivalProxy parse_proxy(const Fields& f, const TreeParams& params) {
  const auto kind = f.text("kind");
  auto horizon = [&] {
    const double T = f.real("T");
    if (!(T >= 0)) spec_error(f.where() + ".T: must be nonnegative");
    return T;
  };
  if (kind == "extinct_before_size") {
    f.allow({"kind", "N"});
    return ExtinctBeforeSize{f.count("N")};
  }
  if (kind == "origin_occupied_at") {
    f.allow({"kind", "T"});
    return OriginOccupiedAt{horizon()};
  }
  if (kind == "origin_reinfections") {
    f.allow({"kind", "T", "threshold"});
    return OriginReinfections{horizon(), f.count_or("threshold", 1)};
  }
  if (kind == "includes_set_by") {
    f.allow({"kind", "U", "T"});
    return IncludesSetBy{parse_vertices(f, "U", params), horizon()};
  }
  spec_error(f.where() +
             ".kind: expected extinct_before_size, origin_occupied_at, origin_reinfections or "
             "includes_set_by");
}

}  // namespace detail

struct Contract {
  std::string metric;
  double target = 0.0;
  double within_stderr = 3.0;
  double abs_tol = 0.0;
};

/// A parsed, validated experiment. `source` keeps the JSON after overrides and
/// feeds spec_hash.
struct ExperimentSpec {
  json source;
  std::string name = "experiment";
  std::string model;
  std::string experiment;
  int d = 3;
  std::optional<double> lambda;
  std::vector<double> lambda_grid;
  InitSpec init = OriginInit{};
  BoundarySpec boundary;
  StopCondition stop;
  std::uint64_t replicas = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::vector<std::string> observables;
  std::vector<double> snapshot_times;
  std::optional<std::string> output;

  double t = 1.0;
  std::vector<double> t_grid;
  std::uint32_t radius = 8;
  std::vector<std::uint32_t> radii;
  double p = 0.5;
  double h = 0.05;
  double tolerance = 0.1;
  std::uint64_t steps = 100000;
  std::uint64_t cases = 10000;
  std::optional<SurvivalProxy> proxy;
  Configuration set_a;
  Configuration set_b;
  std::vector<std::pair<int, double>> pairs;
  std::optional<Contract> contract;

  [[nodiscard]] double lambda_value() const { return lambda.value_or(1.0); }
};

namespace detail {

struct ExperimentKind {
  std::string model;
  bool statistical;
  std::set<std::string> keys;
};

inline const std::map<std::string, ExperimentKind>& experiment_kinds() {
  static const std::map<std::string, ExperimentKind> kinds{
      {"simulate",
       {"wb|bcrw", false,
        {"lambda", "init", "boundary", "stop", "observables", "snapshot_times", "contract"}}},
      {"drift", {"wb", true, {"lambda", "lambda_grid", "steps"}}},
      {"thinning", {"wb", true, {"lambda", "init", "t", "radius"}}},
      {"rho_delta", {"wb", true, {"lambda", "p", "h", "radius", "tolerance"}}},
      {"event_rate", {"wb", true, {"lambda", "p", "t", "radius"}}},
      {"dual_statistical", {"wb", true, {"lambda", "boundary", "a", "b", "t"}}},
      {"threshold_scan", {"wb", false, {"lambda_grid", "proxy", "radius"}}},
      {"occupancy_curve", {"bcrw", false, {"lambda", "t_grid", "radius"}}},
      {"inclusion_tail", {"bcrw", false, {"lambda", "t_grid", "radius"}}},
      {"growth_curve", {"bcrw", false, {"lambda", "t_grid"}}},
      {"local_inclusion", {"bcrw", false, {"lambda", "radii", "t_grid"}}},
      {"law_agreement", {"graphical", true, {"lambda", "radius", "a", "b", "t"}}},
      {"duality", {"graphical", false, {"cases"}}},
      {"monotone", {"graphical", false, {"cases"}}},
      {"radial_drift", {"analysis", false, {"pairs", "cases"}}},
      {"boundary_sum", {"analysis", false, {"pairs", "cases"}}},
      {"bounds", {"analysis", false, {}}},
      {"gamblers_ruin", {"analysis", false, {"lambda", "k", "N"}}},
  };
  return kinds;
}

inline bool model_matches(const std::string& allowed, const std::string& model) {
  std::size_t start = 0;
  while (start <= allowed.size()) {
    const auto bar = allowed.find('|', start);
    const auto part = allowed.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    if (part == model) return true;
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return false;
}

}  // namespace detail

inline bool is_statistical(const ExperimentSpec& s) {
  return detail::experiment_kinds().at(s.experiment).statistical || s.contract.has_value();
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<unsigned> workers;
};

inline ExperimentSpec parse_spec(json j, const Overrides& ov = {}) {
  using namespace detail;
  if (!j.is_object()) spec_error("spec: expected a JSON object");
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.replicas) j["replicas"] = *ov.replicas;
  if (ov.workers) j["workers"] = *ov.workers;
  const Fields f(j, "spec");

  ExperimentSpec s;
  s.model = f.text("model");
  if (s.model != "wb" && s.model != "bcrw" && s.model != "graphical" && s.model != "analysis") {
    spec_error("spec.model: expected wb, bcrw, graphical or analysis");
  }
  s.experiment = f.text_or("experiment", "simulate");
  const auto& kinds = experiment_kinds();
  const auto it = kinds.find(s.experiment);
  if (it == kinds.end()) spec_error("spec.experiment: unknown experiment '" + s.experiment + "'");
  if (!model_matches(it->second.model, s.model)) {
    spec_error("spec: experiment '" + s.experiment + "' needs model " + it->second.model);
  }
  std::set<std::string> allowed{"name", "model", "experiment", "d", "seed", "replicas", "workers",
                                "output"};
  allowed.insert(it->second.keys.begin(), it->second.keys.end());
  f.allow(allowed);

  s.name = f.text_or("name", s.experiment);
  if (s.name.empty() || s.name.find_first_not_of("abcdefghijklmnopqrstuvwxyz"
                                                 "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
                            std::string::npos) {
    spec_error("spec.name: use letters, digits, '_', '.' or '-'");
  }
  const auto d = f.count_or("d", 3);
  if (d < 3 || d > 256) spec_error("spec.d: degree must lie in [3, 256]");
  s.d = static_cast<int>(d);
  const TreeParams params(s.d);
  s.seed = f.count_or("seed", 1);
  s.replicas = f.count_or("replicas", 1000);
  if (s.replicas < 1) spec_error("spec.replicas: must be at least 1");
  s.workers = static_cast<unsigned>(f.count_or("workers", 1));
  if (f.has("output")) s.output = f.text("output");

  if (f.has("lambda")) {
    s.lambda = f.real("lambda");
    if (*s.lambda < 1) spec_error("spec.lambda: must be >= 1");
  }
  if (f.has("lambda_grid")) {
    s.lambda_grid = f.reals("lambda_grid");
    for (double l : s.lambda_grid) {
      if (l < 1) spec_error("spec.lambda_grid: values must be >= 1");
    }
  }
  const bool needs_lambda = it->second.keys.contains("lambda") && !it->second.keys.contains("lambda_grid");
  if (needs_lambda && !s.lambda) spec_error("spec: missing field 'lambda'");
  if (s.experiment == "drift" && !s.lambda && s.lambda_grid.empty()) {
    spec_error("spec: drift needs lambda or lambda_grid");
  }
  if (s.experiment == "threshold_scan" && s.lambda_grid.empty()) {
    spec_error("spec: missing field 'lambda_grid'");
  }

  if (f.has("init")) s.init = parse_init(f.object("init"), params);
  if (f.has("boundary")) s.boundary = parse_boundary(f.object("boundary"), params);
  if (f.has("stop")) {
    s.stop = parse_stop(f.object("stop"), params);
  } else if (s.experiment == "simulate") {
    spec_error("spec: missing field 'stop'");
  }
  if (f.has("observables")) s.observables = f.texts("observables");
  if (f.has("snapshot_times")) {
    s.snapshot_times = f.reals("snapshot_times");
    if (!std::is_sorted(s.snapshot_times.begin(), s.snapshot_times.end())) {
      spec_error("spec.snapshot_times: must be sorted");
    }
  }

  s.t = f.real_or("t", 1.0);
  if (s.t < 0) spec_error("spec.t: must be nonnegative");
  if (f.has("t_grid")) {
    s.t_grid = f.reals("t_grid");
    for (double x : s.t_grid) {
      if (x < 0) spec_error("spec.t_grid: times must be nonnegative");
    }
  } else if (it->second.keys.contains("t_grid")) {
    spec_error("spec: missing field 't_grid'");
  }
  if (f.has("radius")) s.radius = radius_of(f, "radius");
  if (f.has("radii")) {
    for (double r : f.reals("radii")) {
      if (r < 1 || r > 64 || r != std::floor(r)) spec_error("spec.radii: integers in [1, 64]");
      s.radii.push_back(static_cast<std::uint32_t>(r));
    }
  } else if (s.experiment == "local_inclusion") {
    spec_error("spec: missing field 'radii'");
  }
  s.p = f.real_or("p", 0.5);
  if (s.p < 0 || s.p > 1) spec_error("spec.p: must lie in [0, 1]");
  s.h = f.real_or("h", 0.05);
  if (!(s.h > 0)) spec_error("spec.h: must be positive");
  s.tolerance = f.real_or("tolerance", 0.1);
  s.steps = f.count_or("steps", 100000);
  s.cases = f.count_or("cases", 10000);
  if (f.has("proxy")) {
    s.proxy = parse_proxy(f.object("proxy"), params);
  } else if (s.experiment == "threshold_scan") {
    spec_error("spec: missing field 'proxy'");
  }
  if (f.has("a")) s.set_a = Configuration(std::span<const VertexAddr>(parse_vertices(f, "a", params)));
  if (f.has("b")) s.set_b = Configuration(std::span<const VertexAddr>(parse_vertices(f, "b", params)));
  if (f.has("pairs")) {
    const auto& arr = f.at("pairs");
    if (!arr.is_array() || arr.empty()) spec_error("spec.pairs: expected [[d, lambda], ...]");
    for (const auto& pr : arr) {
      if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() || !pr[1].is_number()) {
        spec_error("spec.pairs: expected [[d, lambda], ...]");
      }
      const int pd = pr[0].get<int>();
      const double pl = pr[1].get<double>();
      if (pd < 3 || pl < 1 || !std::isfinite(pl)) spec_error("spec.pairs: need d >= 3, lambda >= 1");
      s.pairs.emplace_back(pd, pl);
    }
  }
  if (s.experiment == "gamblers_ruin") {
    const auto k = f.count_or("k", 1);
    if (k < 1) spec_error("spec.k: must be at least 1");
    if (f.has("N") && f.count("N") <= k) spec_error("spec.N: must exceed k");
  }
  if (f.has("contract")) {
    const auto c = f.object("contract");
    c.allow({"metric", "target", "within_stderr", "abs_tol"});
    Contract ct;
    ct.metric = c.text("metric");
    const auto& target = c.at("target");
    if (target.is_number()) {
      ct.target = target.get<double>();
    } else if (target.is_object()) {
      const auto g = c.object("target").object("gambler_ruin");
      g.allow({"k", "N"});
      if (!s.lambda) spec_error("spec: gambler_ruin target needs lambda");
      const auto k = g.count_or("k", 1);
      std::optional<std::uint64_t> N;
      if (g.has("N")) N = g.count("N");
      if (k < 1 || (N && *N <= k)) spec_error(g.where() + ": need 1 <= k < N");
      ct.target = gambler_ruin_absorb(*s.lambda, k, N);
      c.object("target").allow({"gambler_ruin"});
    } else {
      spec_error("spec.contract.target: expected a number or {\"gambler_ruin\": {...}}");
    }
    ct.within_stderr = c.real_or("within_stderr", 3.0);
    ct.abs_tol = c.real_or("abs_tol", 0.0);
    s.contract = ct;
  }
  s.source = std::move(j);
  s.source.erase("workers");
  s.source.erase("output");
  return s;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SpecInvalid, "cannot read spec file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SpecInvalid, path.string() + ": " + e.what());
  }
}

inline std::uint64_t spec_hash(const ExperimentSpec& s) {
  return fnv1a64(std::string(kVersion), fnv1a64(s.source.dump()));
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

inline ResultRow row(const ExperimentSpec& s, const std::string& metric, double value,
                     double se = 0.0, std::optional<std::uint64_t> n = std::nullopt,
                     std::uint64_t truncated = 0, std::optional<double> lambda = std::nullopt) {
  return ResultRow{s.name,  metric, lambda ? lambda : s.lambda, s.d, value, se, n.value_or(s.replicas),
                   truncated};
}

inline ResultRow row(const ExperimentSpec& s, const std::string& metric, const EstimatorResult& r,
                     std::optional<double> lambda = std::nullopt) {
  return row(s, metric, r.mean, r.std_error, r.n, r.truncated_count, lambda);
}

inline void add_check(ExperimentOutcome& o, std::string name, bool passed, std::string detail,
                      bool gating = true) {
  o.checks.push_back({std::move(name), passed, std::move(detail), gating});
}

inline std::string event_csv_header() { return "replica,time,kind,u,v\n"; }

struct ReplicaSummary {
  StopReason reason = StopReason::TimeLimit;
  std::size_t final_size = 0;
  double final_time = 0;
  std::uint64_t events = 0;
  bool origin = false;
  bool exited = false;
  bool empty = false;
  std::optional<double> inclusion_time;
  std::string event_rows;
  std::string snapshot_rows;
};

inline ExperimentOutcome run_simulate(const ExperimentSpec& s) {
  static const std::set<std::string> known{"extinct",     "size_reached", "set_included",
                                           "origin_occupied", "exited",    "absorbed",
                                           "final_size",  "final_time",   "event_count",
                                           "inclusion_time", "events",    "snapshots"};
  std::vector<std::string> obs = s.observables;
  if (obs.empty()) obs = {"extinct", "final_size"};
  for (const auto& o : obs) {
    if (!known.contains(o)) spec_error("spec.observables: unknown observable '" + o + "'");
  }
  auto wants = [&](const std::string& o) { return std::find(obs.begin(), obs.end(), o) != obs.end(); };

  RunSpec rs;
  rs.process = s.model == "wb" ? ProcessKind::WB : ProcessKind::BCRW;
  rs.d = s.d;
  rs.lambda = s.lambda_value();
  rs.init = s.init;
  rs.boundary = s.boundary;
  rs.stop = s.stop;
  rs.options.record_events = wants("events");
  rs.options.snapshot_times = s.snapshot_times;
  rs.validate();

  const auto out = run_ordered<ReplicaSummary>(
      s.replicas, s.workers, [&] { return ReplicaContext(rs); },
      [&](ReplicaContext& ctx, std::uint64_t i) {
        const auto tr = run_replica(rs, ctx, s.seed, i);
        ReplicaSummary r;
        r.reason = tr.reason;
        r.final_size = tr.final_state.size();
        r.final_time = tr.final_time;
        r.events = tr.event_count;
        r.origin = tr.final_state.contains(VertexAddr::origin());
        r.exited = tr.exited;
        r.empty = tr.final_state.empty() && tr.absorbed_plus.empty();
        r.inclusion_time = tr.inclusion_time;
        const std::string rep = std::to_string(i);
        for (const auto& e : tr.events) {
          r.event_rows += rep + "," + format_real(e.time) + "," + std::string(to_string(e.kind)) +
                          "," + format_address(e.u) + "," + format_address(e.v) + "\n";
        }
        for (const auto& snap : tr.snapshots) {
          std::string verts;
          for (const auto& x : snap.state.sorted()) {
            if (!verts.empty()) verts += ' ';
            verts += format_address(x);
          }
          r.snapshot_rows += rep + "," + format_real(snap.time) + "," +
                             std::to_string(snap.state.size()) + "," + verts + "\n";
        }
        return r;
      });

  ExperimentOutcome o;
  std::uint64_t truncated = 0;
  for (const auto& r : out) truncated += r.reason == StopReason::EventLimit ? 1 : 0;
  if (truncated == out.size()) throw Error(ErrorCode::AllTruncated, "every replica hit max_events");
  o.truncated = truncated;

  auto proportion = [&](auto pred) {
    ProportionCounter c;
    for (const auto& r : out) {
      c.add(r.reason == StopReason::EventLimit ? std::int8_t{-1}
                                               : static_cast<std::int8_t>(pred(r) ? 1 : 0));
    }
    return c.result();
  };
  auto mean_of = [&](auto value, bool only_included = false) {
    Moments m;
    for (const auto& r : out) {
      if (r.reason == StopReason::EventLimit) continue;
      if (only_included && !r.inclusion_time) continue;
      m.add(value(r));
    }
    return EstimatorResult::from_moments(m, truncated);
  };

  json metrics = json::object();
  std::map<std::string, EstimatorResult> values;
  for (const auto& name : obs) {
    EstimatorResult r;
    if (name == "extinct") {
      r = proportion([](const ReplicaSummary& x) { return x.empty; });
    } else if (name == "size_reached") {
      r = proportion([](const ReplicaSummary& x) { return x.reason == StopReason::SizeReached; });
    } else if (name == "set_included") {
      r = proportion([](const ReplicaSummary& x) { return x.reason == StopReason::SetIncluded; });
    } else if (name == "origin_occupied") {
      r = proportion([](const ReplicaSummary& x) { return x.origin; });
    } else if (name == "exited") {
      r = proportion([](const ReplicaSummary& x) { return x.exited; });
    } else if (name == "absorbed") {
      r = proportion([](const ReplicaSummary& x) { return x.reason == StopReason::Absorbed; });
    } else if (name == "final_size") {
      r = mean_of([](const ReplicaSummary& x) { return static_cast<double>(x.final_size); });
    } else if (name == "final_time") {
      r = mean_of([](const ReplicaSummary& x) { return x.final_time; });
    } else if (name == "event_count") {
      r = mean_of([](const ReplicaSummary& x) { return static_cast<double>(x.events); });
    } else if (name == "inclusion_time") {
      r = mean_of([](const ReplicaSummary& x) { return x.inclusion_time.value_or(0.0); }, true);
    } else if (name == "events") {
      std::string csv = event_csv_header();
      for (const auto& x : out) csv += x.event_rows;
      o.artifacts["events.csv"] = std::move(csv);
      continue;
    } else {
      std::string csv = "replica,time,size,vertices\n";
      for (const auto& x : out) csv += x.snapshot_rows;
      o.artifacts["snapshots.csv"] = std::move(csv);
      continue;
    }
    values[name] = r;
    metrics[name] = to_json(r);
    o.rows.push_back(row(s, name, r));
  }
  json reasons = json::object();
  for (auto reason : {StopReason::TimeLimit, StopReason::Extinction, StopReason::SizeReached,
                      StopReason::SetIncluded, StopReason::EventLimit, StopReason::Absorbed}) {
    std::uint64_t c = 0;
    for (const auto& r : out) c += r.reason == reason ? 1 : 0;
    if (c) reasons[std::string(to_string(reason))] = c;
  }
  o.report = {{"metrics", metrics}, {"stop_reasons", reasons}};

  if (s.contract) {
    const auto& c = *s.contract;
    const auto found = values.find(c.metric);
    if (found == values.end()) spec_error("spec.contract.metric: not among the observables");
    const auto& r = found->second;
    const double gap = std::abs(r.mean - c.target);
    const double allowed = c.within_stderr * r.std_error + c.abs_tol;
    add_check(o, "contract_" + c.metric, gap <= allowed,
              "|" + format_real(r.mean) + " - " + format_real(c.target) + "| = " +
                  format_real(gap) + " vs " + format_real(allowed));
    o.report["contract"] = {{"metric", c.metric},      {"target", c.target},
                            {"estimate", r.mean},      {"stderr", r.std_error},
                            {"allowed", allowed},      {"passed", gap <= allowed}};
  }
  return o;
}

inline ExperimentOutcome run_drift(const ExperimentSpec& s) {
  ExperimentOutcome o;
  std::vector<double> grid = s.lambda_grid;
  if (grid.empty()) grid.push_back(*s.lambda);
  json arr = json::array();
  for (double l : grid) {
    const auto r = drift_check(s.d, l, s.steps, s.seed, s.workers);
    o.rows.push_back(row(s, "mean_increment", r.increment.mean, r.increment.std_error,
                         r.transitions, 0, l));
    o.rows.push_back(row(s, "target_increment", r.target, 0.0, r.transitions, 0, l));
    add_check(o, "drift_lambda_" + format_real(l), r.within_3se,
              "mean " + format_real(r.increment.mean) + " target " + format_real(r.target) +
                  " stderr " + format_real(r.increment.std_error));
    arr.push_back({{"lambda", l},
                   {"target", r.target},
                   {"increment", to_json(r.increment)},
                   {"transitions", r.transitions},
                   {"restarts", r.restarts},
                   {"within_3se", r.within_3se}});
  }
  o.report = {{"drift", arr}};
  return o;
}

inline Configuration explicit_start(const ExperimentSpec& s) {
  if (std::holds_alternative<OriginInit>(s.init)) return Configuration{VertexAddr::origin()};
  if (const auto* e = std::get_if<ExplicitInit>(&s.init)) {
    return Configuration(std::span<const VertexAddr>(e->vertices));
  }
  spec_error("spec.init: this experiment needs an origin or explicit initial set");
}

inline ExperimentOutcome run_thinning(const ExperimentSpec& s) {
  ExperimentOutcome o;
  const auto r = thinning_two_sample(s.d, *s.lambda, explicit_start(s), s.t, s.radius, s.replicas,
                                     s.seed, s.workers);
  o.truncated = r.truncated_bcrw + r.truncated_wb;
  o.rows.push_back(row(s, "p_value", r.test.p_value, 0.0, r.n, o.truncated));
  o.rows.push_back(row(s, "chi_square", r.test.chi_square, 0.0, r.n, o.truncated));
  o.rows.push_back(row(s, "dof", r.test.dof, 0.0, r.n, o.truncated));
  o.rows.push_back(row(s, "doubling_stat_r", r.doubling.stat_r, r.doubling.std_error, r.n));
  o.rows.push_back(row(s, "doubling_stat_2r", r.doubling.stat_2r, r.doubling.std_error, r.n));
  add_check(o, "thinning_identity", r.test.exact_match || r.test.p_value > 0.01,
            r.verdict + ", p = " + format_real(r.test.p_value));
  o.report = {{"p", r.p},
              {"verdict", r.verdict},
              {"test", to_json(r.test)},
              {"doubling",
               {{"radius", r.doubling.radius},
                {"stat_r", r.doubling.stat_r},
                {"stat_2r", r.doubling.stat_2r},
                {"stderr", r.doubling.std_error},
                {"ok", r.doubling.ok}}},
              {"truncated_bcrw", r.truncated_bcrw},
              {"truncated_wb", r.truncated_wb}};
  return o;
}

inline ExperimentOutcome run_rho_delta(const ExperimentSpec& s) {
  ExperimentOutcome o;
  const auto r = rho_delta_derivative(s.d, *s.lambda, s.p, s.h, s.radius, s.replicas, s.seed,
                                      s.workers);
  o.truncated = r.truncated;
  o.rows.push_back(row(s, "lhs", r.lhs, r.lhs_se, r.n, r.truncated));
  o.rows.push_back(row(s, "lhs_paired", r.lhs_paired, r.lhs_paired_se, r.n, r.truncated));
  o.rows.push_back(row(s, "rhs", r.rhs, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "rho0_hat", r.rho0_hat, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "rho_h_hat", r.rho_h_hat, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "delta0_hat", r.delta0_hat, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "dual_exit_fraction", r.dual_exit_fraction, 0.0, r.n));
  const double gap = std::abs(r.lhs - r.rhs);
  add_check(o, "derivative_identity", gap <= s.tolerance,
            "|lhs - rhs| = " + format_real(gap) + " vs tolerance " + format_real(s.tolerance));
  o.report = {{"p", r.p},
              {"h", r.h},
              {"rho0_hat", r.rho0_hat},
              {"rho_h_hat", r.rho_h_hat},
              {"delta0_hat", r.delta0_hat},
              {"lhs", r.lhs},
              {"lhs_stderr", r.lhs_se},
              {"lhs_paired", r.lhs_paired},
              {"lhs_paired_stderr", r.lhs_paired_se},
              {"rhs", r.rhs},
              {"tolerance", s.tolerance},
              {"dual_exit_fraction", r.dual_exit_fraction}};
  return o;
}

inline ExperimentOutcome run_event_rate(const ExperimentSpec& s) {
  ExperimentOutcome o;
  const auto r = event_rate_ratio(s.d, *s.lambda, s.p, s.t, s.radius, s.replicas, s.seed,
                                  s.workers);
  o.truncated = r.truncated;
  o.rows.push_back(row(s, "e_plus", r.e_plus));
  o.rows.push_back(row(s, "e_minus_rev", r.e_minus_rev));
  o.rows.push_back(row(s, "ratio", r.ratio, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "identity_gap", r.identity_gap));
  o.rows.push_back(row(s, "bound_lhs", r.bound_lhs, r.bound_se, r.n, r.truncated));
  o.rows.push_back(row(s, "bound_rhs", r.bound_rhs, 0.0, r.n, r.truncated));
  o.rows.push_back(row(s, "dual_exit_fraction", r.dual_exit_fraction, 0.0, r.n));
  add_check(o, "rate_identity", r.identity_ok,
            "gap " + format_real(r.identity_gap.mean) + " stderr " +
                format_real(r.identity_gap.std_error));
  add_check(o, "rate_bound", r.bound_check,
            format_real(r.bound_lhs) + " <= " + format_real(r.bound_rhs) + " + 3 * " +
                format_real(r.bound_se));
  o.report = {{"e_plus", to_json(r.e_plus)},
              {"e_minus_rev", to_json(r.e_minus_rev)},
              {"ratio", real_json(r.ratio)},
              {"identity_gap", to_json(r.identity_gap)},
              {"identity_ok", r.identity_ok},
              {"bound_lhs", r.bound_lhs},
              {"bound_rhs", r.bound_rhs},
              {"bound_stderr", r.bound_se},
              {"bound_check", r.bound_check},
              {"dual_exit_fraction", r.dual_exit_fraction}};
  return o;
}

inline ExperimentOutcome run_dual_statistical(const ExperimentSpec& s) {
  ExperimentOutcome o;
  const auto r = duality_statistical(s.d, *s.lambda, s.boundary, s.set_a, s.set_b, s.t,
                                     s.replicas, s.seed, s.workers);
  o.truncated = r.forward.truncated_count + r.backward.truncated_count;
  o.rows.push_back(row(s, "forward_hits_b", r.forward));
  o.rows.push_back(row(s, "dual_hits_a_or_exits", r.backward));
  o.rows.push_back(row(s, "p_value", r.test.p_value, 0.0, s.replicas, o.truncated));
  add_check(o, "statistical_duality", r.test.exact_match || r.test.p_value > 0.01,
            "p = " + format_real(r.test.p_value));
  o.report = {{"forward", to_json(r.forward)},
              {"backward", to_json(r.backward)},
              {"test", to_json(r.test)}};
  return o;
}

inline ExperimentOutcome run_law_agreement(const ExperimentSpec& s) {
  ExperimentOutcome o;
  Configuration a = s.set_a, b = s.set_b;
  if (a.empty()) a.insert(VertexAddr::origin());
  if (b.empty()) b.insert(VertexAddr::origin());
  const auto r = law_agreement(s.d, *s.lambda, s.radius, a, b, s.t, s.replicas, s.seed, s.workers);
  o.rows.push_back(row(s, "p_value_wb_forward", r.wb_vs_forward.p_value));
  o.rows.push_back(row(s, "p_value_bcrw_backward", r.bcrw_vs_backward.p_value));
  add_check(o, "wb_vs_forward_reach", r.wb_vs_forward.exact_match || r.wb_vs_forward.p_value > 0.01,
            "p = " + format_real(r.wb_vs_forward.p_value));
  add_check(o, "bcrw_vs_backward_reach",
            r.bcrw_vs_backward.exact_match || r.bcrw_vs_backward.p_value > 0.01,
            "p = " + format_real(r.bcrw_vs_backward.p_value));
  o.report = {{"wb_vs_forward", to_json(r.wb_vs_forward)},
              {"bcrw_vs_backward", to_json(r.bcrw_vs_backward)}};
  return o;
}

inline json curve_json(const std::vector<CurvePoint>& c) {
  json arr = json::array();
  for (const auto& p : c) arr.push_back({{"t", p.t}, {"estimate", to_json(p.value)}});
  return arr;
}

inline ExperimentOutcome run_threshold_scan(const ExperimentSpec& s) {
  ExperimentOutcome o;
  RunSpec base;
  base.d = s.d;
  base.boundary = BoundarySpec::minus(Ball{VertexAddr::origin(), s.radius});
  const auto r = threshold_scan(base, s.lambda_grid, *s.proxy, s.replicas, s.seed, s.workers);
  json pts = json::array();
  for (const auto& p : r.points) {
    o.rows.push_back(row(s, r.proxy, p.value, p.lambda));
    o.truncated += p.value.truncated_count;
    pts.push_back({{"lambda", p.lambda}, {"estimate", to_json(p.value)}});
  }
  add_check(o, "monotone_in_lambda", r.monotone, "adjacent drops within 3 combined stderr", false);
  o.report = {{"proxy", r.proxy},
              {"survival_oriented", r.survival_oriented},
              {"points", pts},
              {"bounds",
               {{"lambda_l_lower", r.bounds.lambda_l_lower},
                {"lambda_l_upper", r.bounds.lambda_l_upper},
                {"lambda_c_upper", r.bounds.lambda_c_upper}}},
              {"monotone", r.monotone},
              {"first_positive_lambda",
               r.first_positive_lambda ? json(*r.first_positive_lambda) : json(nullptr)}};
  return o;
}

inline ExperimentOutcome run_curve(const ExperimentSpec& s) {
  ExperimentOutcome o;
  if (s.experiment == "occupancy_curve") {
    const auto c = occupancy_curve(s.d, *s.lambda, s.t_grid, s.replicas, s.seed, s.radius,
                                   s.workers);
    double lowest = 1.0;
    for (const auto& p : c) {
      o.rows.push_back(row(s, "origin_occupied_t=" + format_real(p.t), p.value));
      lowest = std::min(lowest, p.value.mean);
    }
    o.report = {{"curve", curve_json(c)}, {"minimum", lowest}};
  } else if (s.experiment == "inclusion_tail") {
    const auto r = inclusion_tail(s.d, *s.lambda, s.t_grid, s.replicas, s.seed, s.radius,
                                  s.workers);
    for (const auto& p : r.tail) o.rows.push_back(row(s, "tail_t=" + format_real(p.t), p.value));
    add_check(o, "tail_nonincreasing", r.nonincreasing, "", false);
    add_check(o, "slopes_increasing", r.slopes_increasing, "", false);
    o.report = {{"tail", curve_json(r.tail)},
                {"slopes", r.slopes},
                {"nonincreasing", r.nonincreasing},
                {"slopes_increasing", r.slopes_increasing}};
  } else if (s.experiment == "growth_curve") {
    const auto r = growth_curve(s.d, *s.lambda, s.t_grid, s.replicas, s.seed, s.workers);
    o.truncated = r.truncated;
    for (std::size_t g = 0; g < r.t.size(); ++g) {
      o.rows.push_back(row(s, "max_distance_t=" + format_real(r.t[g]), r.mean_max_distance[g]));
      o.rows.push_back(row(s, "mean_log_size_t=" + format_real(r.t[g]), r.mean_log_size[g]));
    }
    o.rows.push_back(row(s, "log_size_slope", r.log_size_slope));
    o.rows.push_back(row(s, "log_size_r2", r.log_size_r2));
    add_check(o, "exponential_growth_r2", r.log_size_r2 > 0.9, format_real(r.log_size_r2), false);
    o.report = {{"t", r.t},
                {"mean_max_distance", r.mean_max_distance},
                {"speed", r.speed},
                {"mean_log_size", r.mean_log_size},
                {"log_size_slope", r.log_size_slope},
                {"log_size_r2", r.log_size_r2},
                {"truncated", r.truncated}};
  } else {
    const auto grid =
        local_inclusion_grid(s.d, *s.lambda, s.radii, s.t_grid, s.replicas, s.seed, s.workers);
    std::vector<double> u = s.t_grid;
    std::sort(u.begin(), u.end());
    json rows = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      json line = json::array();
      for (std::size_t g = 0; g < grid[i].size(); ++g) {
        o.rows.push_back(row(s,
                             "hit_by_u=" + format_real(u[g]) + "_r=" + std::to_string(s.radii[i]),
                             grid[i][g]));
        line.push_back(to_json(grid[i][g]));
      }
      rows.push_back({{"radius", s.radii[i]}, {"by_u", line}});
    }
    o.report = {{"u", u}, {"rows", rows}};
  }
  return o;
}

inline json sweep_json(const ContractSweep& c) {
  return {{"name", c.name},         {"d", c.d},
          {"lambda", c.lambda},     {"cases", c.cases},
          {"passed", c.passed},     {"nontrivial", c.nontrivial},
          {"worst", real_json(c.worst)}, {"note", c.note}};
}

inline void add_sweep(ExperimentOutcome& o, const ExperimentSpec& s, const ContractSweep& c,
                      json& arr) {
  const std::string tag = c.name + (c.lambda > 0 ? "_d" + std::to_string(c.d) + "_lambda" +
                                                       format_real(c.lambda)
                                                 : "");
  ResultRow r{s.name, tag + "_pass_fraction", c.lambda > 0 ? std::optional(c.lambda) : std::nullopt,
              c.d, c.cases ? double(c.passed) / double(c.cases) : 1.0, 0.0, c.cases, 0};
  o.rows.push_back(r);
  add_check(o, tag, c.ok(),
            std::to_string(c.passed) + "/" + std::to_string(c.cases) +
                (c.note.empty() ? "" : " (" + c.note + ")"));
  arr.push_back(sweep_json(c));
}

inline ExperimentOutcome run_contracts(const ExperimentSpec& s) {
  ExperimentOutcome o;
  json arr = json::array();
  if (s.experiment == "duality") {
    add_sweep(o, s, duality_sweep(s.d, s.cases, s.seed), arr);
  } else if (s.experiment == "monotone") {
    add_sweep(o, s, monotone_sweep(s.d, s.cases, s.seed), arr);
  } else if (s.experiment == "radial_drift" || s.experiment == "boundary_sum") {
    auto pairs = s.pairs;
    if (pairs.empty()) pairs = {{3, 1.0}, {3, 1.05}, {4, 1.3}};
    for (const auto& [d, l] : pairs) {
      add_sweep(o, s,
                s.experiment == "radial_drift" ? radial_drift_sweep(d, l, s.cases, s.seed)
                                               : boundary_sum_sweep(d, l, s.cases, s.seed),
                arr);
    }
  } else if (s.experiment == "bounds") {
    const auto b = prop_bounds(s.d);
    o.rows.push_back(row(s, "lambda_l_lower", b.lambda_l_lower, 0.0, 1));
    o.rows.push_back(row(s, "lambda_l_upper", b.lambda_l_upper, 0.0, 1));
    o.rows.push_back(row(s, "lambda_c_upper", b.lambda_c_upper, 0.0, 1));
    add_sweep(o, s, bounds_sweep(), arr);
    o.report["bounds"] = {{"d", s.d},
                          {"lambda_l_lower", b.lambda_l_lower},
                          {"lambda_l_upper", real_json(b.lambda_l_upper)},
                          {"lambda_c_upper", real_json(b.lambda_c_upper)}};
  } else {
    const auto k = s.source.value("k", std::uint64_t{1});
    std::optional<std::uint64_t> N;
    if (s.source.contains("N")) N = s.source.at("N").get<std::uint64_t>();
    const double v = gambler_ruin_absorb(*s.lambda, k, N);
    o.rows.push_back(row(s, "absorb_probability", v, 0.0, 1));
    o.report["gambler_ruin"] = {{"lambda", *s.lambda},
                                {"k", k},
                                {"N", N ? json(*N) : json(nullptr)},
                                {"absorb_probability", v}};
  }
  o.report["sweeps"] = arr;
  return o;
}

inline ExperimentOutcome execute(const ExperimentSpec& s) {
  ExperimentOutcome o;
  const auto& e = s.experiment;
  if (e == "simulate") {
    o = run_simulate(s);
  } else if (e == "drift") {
    o = run_drift(s);
  } else if (e == "thinning") {
    o = run_thinning(s);
  } else if (e == "rho_delta") {
    o = run_rho_delta(s);
  } else if (e == "event_rate") {
    o = run_event_rate(s);
  } else if (e == "dual_statistical") {
    o = run_dual_statistical(s);
  } else if (e == "law_agreement") {
    o = run_law_agreement(s);
  } else if (e == "threshold_scan") {
    o = run_threshold_scan(s);
  } else if (e == "occupancy_curve" || e == "inclusion_tail" || e == "growth_curve" ||
             e == "local_inclusion") {
    o = run_curve(s);
  } else {
    o = run_contracts(s);
  }
  o.name = s.name;
  o.experiment = s.experiment;
  return o;
}

inline json checks_json(const std::vector<Check>& checks) {
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"gating", c.gating}, {"detail", c.detail}});
  }
  return arr;
}

}  // namespace detail

/// Runs one experiment. A statistical experiment whose checks fail is rerun
/// once on seed + 1; both attempts are recorded in the report.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  auto wrap = [&](ExperimentOutcome o, const ExperimentSpec& s) {
    json r = {{"name", s.name},
              {"experiment", s.experiment},
              {"model", s.model},
              {"d", s.d},
              {"lambda", s.lambda ? json(*s.lambda) : json(nullptr)},
              {"seed", s.seed},
              {"replicas", s.replicas},
              {"passed", o.passed()},
              {"checks", detail::checks_json(o.checks)},
              {"result", o.report}};
    o.report = std::move(r);
    return o;
  };
  auto first = wrap(detail::execute(spec), spec);
  if (first.passed() || !is_statistical(spec)) return first;
  ExperimentSpec retry = spec;
  retry.seed = spec.seed + 1;
  auto second = wrap(detail::execute(retry), retry);
  second.report["retried_after"] = {{"seed", spec.seed},
                                    {"checks", first.report["checks"]}};
  return second;
}

// ---------------------------------------------------------------------------
// Writing

struct WrittenRun {
  std::filesystem::path dir;
  std::string results_hash;
  bool passed = true;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + p.string());
  out << s;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes results.csv, report.json, any extra artifacts, then manifest.json.
inline WrittenRun write_outputs(const std::filesystem::path& dir,
                                const std::vector<ExperimentOutcome>& outcomes, json report,
                                std::uint64_t spec_hash_value, std::uint64_t seed,
                                unsigned workers, double wall_seconds) {
  std::filesystem::create_directories(dir);
  std::vector<ResultRow> rows;
  json truncation = json::object();
  std::uint64_t truncated = 0;
  bool passed = true;
  std::map<std::string, std::string> artifacts;
  for (const auto& o : outcomes) {
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    truncation[o.name] = o.truncated;
    truncated += o.truncated;
    passed = passed && o.passed();
    for (const auto& [file, text] : o.artifacts) {
      artifacts[outcomes.size() == 1 ? file : o.name + "." + file] = text;
    }
  }
  const std::string csv = results_csv(rows);
  const std::string rep = report.dump(2) + "\n";
  write_text(dir / "results.csv", csv);
  write_text(dir / "report.json", rep);
  std::uint64_t h = fnv1a64(csv);
  h = fnv1a64(rep, h);
  json files = json::array({"results.csv", "report.json"});
  for (const auto& [file, text] : artifacts) {
    write_text(dir / file, text);
    h = fnv1a64(text, h);
    files.push_back(file);
  }
  json manifest = {{"version", kVersion},
                   {"spec_hash", hex64(spec_hash_value)},
                   {"seed", seed},
                   {"workers", workers},
                   {"started_utc", utc_timestamp()},
                   {"wall_clock_seconds", wall_seconds},
                   {"truncated_total", truncated},
                   {"truncated", truncation},
                   {"passed", passed},
                   {"results_hash", hex64(h)},
                   {"files", files}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return {dir, hex64(h), passed};
}

inline WrittenRun run_and_write(const ExperimentSpec& spec, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  auto outcome = run_experiment(spec);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json report = outcome.report;
  return write_outputs(out, {outcome}, report, spec_hash(spec), spec.seed, spec.workers, wall);
}

// ---------------------------------------------------------------------------
// Verify suites

enum class Suite { Exact, Statistical, Exploratory };

inline std::optional<Suite> parse_suite(std::string_view s) {
  if (s == "exact") return Suite::Exact;
  if (s == "statistical") return Suite::Statistical;
  if (s == "exploratory") return Suite::Exploratory;
  return std::nullopt;
}

inline std::string_view to_string(Suite s) {
  switch (s) {
    case Suite::Exact: return "exact";
    case Suite::Statistical: return "statistical";
    case Suite::Exploratory: return "exploratory";
  }
  return "?";
}

/// The specs each suite runs, as JSON so they go through the same parser as files.
inline std::vector<json> suite_specs(Suite suite) {
  const json ball8_minus = {{"kind", "minus"}, {"region", {{"kind", "ball"}, {"radius", 8}}}};
  switch (suite) {
    case Suite::Exact:
      return {
          {{"name", "prop_bounds"}, {"model", "analysis"}, {"experiment", "bounds"}, {"d", 3}},
          {{"name", "duality"}, {"model", "graphical"}, {"experiment", "duality"}, {"cases", 10000}},
          {{"name", "monotone_coupling"},
           {"model", "graphical"},
           {"experiment", "monotone"},
           {"cases", 10000}},
          {{"name", "radial_drift"},
           {"model", "analysis"},
           {"experiment", "radial_drift"},
           {"pairs", {{3, 1.0}, {3, 1.05}, {4, 1.3}}},
           {"cases", 10000}},
          {{"name", "boundary_sum_height"},
           {"model", "analysis"},
           {"experiment", "boundary_sum"},
           {"pairs", {{3, 1.0}, {3, 1.05}, {4, 1.3}, {4, 1.1}}},
           {"cases", 10000}},
      };
    case Suite::Statistical:
      return {
          {{"name", "gamblers_ruin"},
           {"model", "wb"},
           {"d", 3},
           {"lambda", 2.0},
           {"init", {{"kind", "origin"}}},
           {"stop", {{"extinction", true}, {"size_reaches", 20}}},
           {"replicas", 100000},
           {"observables", {"extinct"}},
           {"contract",
            {{"metric", "extinct"},
             {"target", {{"gambler_ruin", {{"k", 1}, {"N", 20}}}}},
             {"within_stderr", 3}}}},
          {{"name", "embedded_drift"},
           {"model", "wb"},
           {"experiment", "drift"},
           {"lambda_grid", {1.0, 2.0, 3.0}},
           {"steps", 100000}},
          {{"name", "thinning"},
           {"model", "wb"},
           {"experiment", "thinning"},
           {"lambda", 3.0},
           {"init", {{"kind", "origin"}}},
           {"t", 0.5},
           {"radius", 8},
           {"replicas", 50000}},
          {{"name", "rho_delta"},
           {"model", "wb"},
           {"experiment", "rho_delta"},
           {"lambda", 2.0},
           {"p", 0.3},
           {"h", 0.05},
           {"radius", 8},
           {"replicas", 100000}},
          {{"name", "event_rate"},
           {"model", "wb"},
           {"experiment", "event_rate"},
           {"lambda", 2.0},
           {"p", 0.5},
           {"t", 2.0},
           {"radius", 8},
           {"replicas", 10000}},
          {{"name", "law_agreement"},
           {"model", "graphical"},
           {"experiment", "law_agreement"},
           {"lambda", 2.0},
           {"radius", 2},
           {"a", {"o"}},
           {"b", {"o", "u1"}},
           {"t", 1.0},
           {"replicas", 50000}},
          {{"name", "plus_boundary_duality"},
           {"model", "wb"},
           {"experiment", "dual_statistical"},
           {"lambda", 2.0},
           {"boundary", {{"kind", "plus"}, {"region", {{"kind", "ball"}, {"radius", 1}}}}},
           {"a", {"o"}},
           {"b", {"u1"}},
           {"t", 0.7},
           {"replicas", 50000}},
      };
    case Suite::Exploratory:
      return {
          {{"name", "threshold_scan"},
           {"model", "wb"},
           {"experiment", "threshold_scan"},
           {"lambda_grid", {1.02, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0}},
           {"proxy", {{"kind", "origin_occupied_at"}, {"T", 30.0}}},
           {"radius", 5},
           {"replicas", 2000}},
          {{"name", "occupancy_lambda8"},
           {"model", "bcrw"},
           {"experiment", "occupancy_curve"},
           {"lambda", 8.0},
           {"t_grid", {0.0, 1.0, 2.0, 5.0, 10.0}},
           {"radius", 5},
           {"replicas", 1000}},
          {{"name", "occupancy_lambda1"},
           {"model", "bcrw"},
           {"experiment", "occupancy_curve"},
           {"lambda", 1.0},
           {"t_grid", {0.0, 1.0, 2.0, 5.0, 10.0}},
           {"radius", 5},
           {"replicas", 2000}},
          {{"name", "inclusion_tail"},
           {"model", "bcrw"},
           {"experiment", "inclusion_tail"},
           {"lambda", 8.0},
           {"t_grid", {0.0, 0.01, 0.03, 0.1, 0.3, 1.0}},
           {"radius", 6},
           {"replicas", 5000}},
          {{"name", "growth"},
           {"model", "bcrw"},
           {"experiment", "growth_curve"},
           {"lambda", 2.0},
           {"t_grid", {0.5, 1.0, 1.5, 2.0, 2.5}},
           {"replicas", 200}},
          {{"name", "local_inclusion"},
           {"model", "bcrw"},
           {"experiment", "local_inclusion"},
           {"lambda", 4.0},
           {"radii", {1, 2, 4}},
           {"t_grid", {0.1, 0.5, 2.0}},
           {"replicas", 2000}},
      };
  }
  return {};
}

struct SuiteResult {
  WrittenRun written;
  std::vector<ExperimentOutcome> outcomes;
  bool passed = true;
};

/// Runs a suite with one seed for every experiment and writes combined files
/// into `out`. Exploratory suites always count as passed.
inline SuiteResult verify(Suite suite, std::uint64_t seed, const std::filesystem::path& out,
                          unsigned workers = 1,
                          const std::function<void(const ExperimentOutcome&)>& progress = {}) {
  const auto start = std::chrono::steady_clock::now();
  SuiteResult res;
  json experiments = json::array();
  std::uint64_t h = fnv1a64(std::string(to_string(suite)));
  for (auto j : suite_specs(suite)) {
    const auto spec = parse_spec(std::move(j), Overrides{seed, std::nullopt, workers});
    h = fnv1a64(spec.source.dump(), h);
    auto o = run_experiment(spec);
    if (progress) progress(o);
    experiments.push_back(o.report);
    res.outcomes.push_back(std::move(o));
  }
  bool passed = true;
  for (const auto& o : res.outcomes) passed = passed && o.passed();
  res.passed = suite == Suite::Exploratory ? true : passed;
  json report = {{"suite", to_string(suite)},
                 {"seed", seed},
                 {"passed", res.passed},
                 {"experiments", experiments}};
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.written = write_outputs(out, res.outcomes, report, fnv1a64(std::string(kVersion), h), seed,
                              workers, wall);
  return res;
}

/// Exit status for an error raised while parsing or running.
inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::RadiusTooSmall:
    case ErrorCode::AllTruncated:
      return 2;
    default:
      return 1;
  }
}

}  // namespace wbtree
