// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.
//
// Statistical criteria go through run_experiment, which reruns a failing
// experiment once on the next seed. Reference values below are computed here
// from closed forms rather than taken from the library.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "wbtree/experiment.hpp"

#ifndef WBTREE_EXPERIMENTS_DIR
#define WBTREE_EXPERIMENTS_DIR "experiments"
#endif

namespace {

using namespace wbtree;
namespace fs = std::filesystem;

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("wbtree_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

const ResultRow& find_row(const ExperimentOutcome& o, const std::string& metric,
                          std::optional<double> lambda = std::nullopt) {
  for (const auto& r : o.rows) {
    if (r.metric == metric && (!lambda || (r.lambda && *r.lambda == *lambda))) return r;
  }
  throw std::runtime_error("no row " + metric + " in " + o.name);
}

std::string retry_note(const ExperimentOutcome& o) {
  return o.report.contains("retried_after") ? " [rerun on seed " +
                                                  std::to_string(o.report["seed"].get<std::uint64_t>()) + "]"
                                            : "";
}

ExperimentOutcome run_json(const json& j) { return run_experiment(parse_spec(j)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Gambler's ruin from the shipped spec file.
Verdict crit_gamblers_ruin() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec =
      parse_spec(load_json_file(fs::path(WBTREE_EXPERIMENTS_DIR) / "gamblers_ruin.json"));
  const auto o = run_experiment(spec);
  const double wall = seconds_since(t0);
  // Size chain steps up w.p. lambda / (1 + lambda): ruin from 1 before 20.
  const double q = 1.0 / 2.0;
  const double truth = (q - std::pow(q, 20)) / (1.0 - std::pow(q, 20));
  const auto& r = find_row(o, "extinct");
  const double gap = std::abs(r.value - 0.4999995);
  const bool ok = r.n == 100000 && spec.workers == 1 && gap <= 3 * r.std_error &&
                  std::abs(truth - 0.4999995) < 1e-6 && wall < 60.0;
  return {ok, "P(extinct) = " + num(r.value) + " +- " + num(r.std_error) + ", |gap| " + num(gap) +
                  " <= 3 se " + num(3 * r.std_error) + ", n " + std::to_string(r.n) + ", " +
                  num(wall) + " s" + retry_note(o)};
}

// 2. Embedded drift of |xi| at lambda 1, 2, 3.
Verdict crit_drift() {
  const auto o = run_json({{"name", "embedded_drift"},
                           {"model", "wb"},
                           {"experiment", "drift"},
                           {"lambda_grid", {1.0, 2.0, 3.0}},
                           {"steps", 100000}});
  bool ok = true;
  std::string detail;
  for (double l : {1.0, 2.0, 3.0}) {
    const auto& r = find_row(o, "mean_increment", l);
    const double target = (l - 1) / (l + 1);
    const bool hit = r.n >= 100000 && std::abs(r.value - target) <= 3 * r.std_error;
    ok = ok && hit;
    detail += "lambda " + num(l) + ": " + num(r.value) + " vs " + num(target) + " (se " +
              num(r.std_error) + ")" + (hit ? "" : " MISS") + "; ";
  }
  return {ok, detail + std::to_string(find_row(o, "mean_increment", 1.0).n) +
                  " transitions each" + retry_note(o)};
}

Verdict sweep_all(const ExperimentOutcome& o, std::uint64_t want) {
  bool ok = !o.report["result"]["sweeps"].empty();
  std::string detail;
  for (const auto& s : o.report["result"]["sweeps"]) {
    const auto cases = s["cases"].get<std::uint64_t>(), passed = s["passed"].get<std::uint64_t>();
    ok = ok && cases == want && passed == cases;
    detail += std::to_string(passed) + "/" + std::to_string(cases) +
              " (nontrivial " + std::to_string(s["nontrivial"].get<std::uint64_t>()) + ") ";
  }
  return {ok, detail};
}

// 3. Per-realization duality on random windows.
Verdict crit_duality() {
  return sweep_all(run_json({{"name", "duality"},
                             {"model", "graphical"},
                             {"experiment", "duality"},
                             {"cases", 10000}}),
                   10000);
}

// 4. Monotone coupling containment.
Verdict crit_monotone() {
  return sweep_all(run_json({{"name", "monotone"},
                             {"model", "graphical"},
                             {"experiment", "monotone"},
                             {"cases", 10000}}),
                   10000);
}

// 5. Martingale sign contracts.
Verdict crit_sign_contracts() {
  const json pairs = {{3, 1.0}, {3, 1.05}, {4, 1.3}};
  const auto radial = run_json({{"name", "radial_drift"},
                                {"model", "analysis"},
                                {"experiment", "radial_drift"},
                                {"pairs", pairs},
                                {"cases", 10000}});
  auto v = sweep_all(radial, 10000);
  std::string detail = "radial_drift " + v.detail;
  bool ok = v.passed && radial.report["result"]["sweeps"].size() == 3;

  auto with_supplement = pairs;
  with_supplement.push_back({4, 1.1});
  const auto height = run_json({{"name", "boundary_sum_height"},
                                {"model", "analysis"},
                                {"experiment", "boundary_sum"},
                                {"pairs", with_supplement},
                                {"cases", 10000}});
  detail += "| boundary_sum ";
  for (const auto& s : height.report["result"]["sweeps"]) {
    const int d = s["d"];
    const double l = s["lambda"];
    const auto cases = s["cases"].get<std::uint64_t>(), passed = s["passed"].get<std::uint64_t>();
    // The alpha window is nonempty iff lambda <= d / (2 sqrt(d - 1)).
    const bool window_empty = l > d / (2.0 * std::sqrt(d - 1.0));
    const bool hit = window_empty ? cases == 0 : (cases == 10000 && passed == cases);
    ok = ok && hit;
    detail += "(" + std::to_string(d) + "," + num(l) + ") " +
              (window_empty ? std::string("empty alpha window, vacuous")
                            : std::to_string(passed) + "/" + std::to_string(cases)) +
              (hit ? "" : " MISS") + "; ";
  }
  return {ok, detail};
}

// 6. Threshold bounds.
Verdict crit_bounds() {
  bool ok = true;
  auto near = [&](double a, double b) { ok = ok && std::abs(a - b) <= 1e-12; };
  const auto b3 = prop_bounds(3);
  near(b3.lambda_l_lower, 1.5 / std::sqrt(2.0));
  near(b3.lambda_l_upper, 6.0);
  near(b3.lambda_c_upper, 6.0);
  near(prop_bounds(18).lambda_l_upper, 36.0);
  int ordered = 0;
  for (int d = 3; d <= 100; ++d) {
    const auto b = prop_bounds(d);
    if (b.lambda_l_lower <= b.lambda_l_upper) ++ordered;
  }
  ok = ok && ordered == 98;
  return {ok, "d=3 (" + num(b3.lambda_l_lower) + ", " + num(b3.lambda_l_upper) + ", " +
                  num(b3.lambda_c_upper) + "), d=18 upper " +
                  num(prop_bounds(18).lambda_l_upper) + ", lower <= upper for " +
                  std::to_string(ordered) + "/98 degrees"};
}

// 7. Thinning identity.
Verdict crit_thinning() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto o = run_experiment(
      parse_spec(load_json_file(fs::path(WBTREE_EXPERIMENTS_DIR) / "thinning.json")));
  const double wall = seconds_since(t0);
  const auto& p = find_row(o, "p_value");
  const auto& res = o.report["result"];
  const bool ok = p.n == 50000 && std::abs(res["p"].get<double>() - (1 - 1 / 3.0)) < 1e-15 && p.value > 0.01 &&
                  wall < 300.0;
  return {ok, "chi-square p = " + num(p.value) + " (" + res["verdict"].get<std::string>() +
                  ", dof " + num(find_row(o, "dof").value) + "), n " + std::to_string(p.n) +
                  " per side, " + num(wall) + " s" + retry_note(o)};
}

// 8. Derivative identity at p = 0.3.
Verdict crit_rho_delta() {
  const auto o = run_json({{"name", "rho_delta"},
                           {"model", "wb"},
                           {"experiment", "rho_delta"},
                           {"lambda", 2.0},
                           {"p", 0.3},
                           {"h", 0.05},
                           {"radius", 8},
                           {"replicas", 100000}});
  const auto& res = o.report["result"];
  const double lhs = (res["rho_h_hat"].get<double>() - 0.3) / 0.05;
  const double rhs = 3 * 0.3 * 0.7;
  const bool ok = find_row(o, "lhs").n == 100000 && std::abs(lhs - rhs) <= 0.1;
  return {ok, "(rho_h - 0.3)/0.05 = " + num(lhs) + " vs " + num(rhs) + ", |gap| " +
                  num(std::abs(lhs - rhs)) + " <= 0.1 (paired estimate " +
                  num(res["lhs_paired"].get<double>()) + ")" + retry_note(o)};
}

// 9. Event identity and bound.
Verdict crit_event_rate() {
  const auto o = run_json({{"name", "event_rate"},
                           {"model", "wb"},
                           {"experiment", "event_rate"},
                           {"lambda", 2.0},
                           {"p", 0.5},
                           {"t", 2.0},
                           {"radius", 8},
                           {"replicas", 10000}});
  const auto& plus = find_row(o, "e_plus");
  const auto& minus = find_row(o, "e_minus_rev");
  const auto& gap = find_row(o, "identity_gap");
  const double lambda = 2.0;
  const bool identity = std::abs(plus.value - lambda * minus.value) <= 3 * gap.std_error;
  const double bound_lhs = (1 - 1 / lambda) * plus.value;
  const bool bound = bound_lhs <= 1.0 / 3.0 + 3 * (1 - 1 / lambda) * plus.std_error;
  return {identity && bound && plus.n == 10000,
          "E+ = " + num(plus.value) + ", lambda E- = " + num(lambda * minus.value) + " (se " +
              num(gap.std_error) + "); (1-1/lambda)E+ = " + num(bound_lhs) + " <= 1/3 + 3 se" +
              retry_note(o)};
}

// 10. Dynamics against graphical construction.
Verdict crit_law_agreement() {
  const auto o = run_experiment(
      parse_spec(load_json_file(fs::path(WBTREE_EXPERIMENTS_DIR) / "law_agreement.json")));
  const double wb = find_row(o, "p_value_wb_forward").value;
  const double bcrw = find_row(o, "p_value_bcrw_backward").value;
  return {wb > 0.01 && bcrw > 0.01 && o.report["replicas"] == 50000,
          "WB vs forward p = " + num(wb) + ", BCRW vs backward p = " + num(bcrw) +
              ", n 50000 per side" + retry_note(o)};
}

// 11. Qualitative phase picture.
Verdict crit_phase_picture() {
  const auto o = run_experiment(
      parse_spec(load_json_file(fs::path(WBTREE_EXPERIMENTS_DIR) / "threshold_scan.json")));
  const auto& lo = find_row(o, "origin_occupied_at", 1.02);
  const auto& hi = find_row(o, "origin_occupied_at", 8.0);
  const bool monotone = o.report["result"]["monotone"];
  const bool ok = lo.n == 10000 && hi.n == 10000 && lo.value < 0.01 && hi.value > 0.02 && monotone;
  std::string curve;
  for (const auto& r : o.rows) curve += num(*r.lambda) + ":" + num(r.value) + " ";
  return {ok, "P(origin occupied at 30): lambda 1.02 -> " + num(lo.value) + ", lambda 8 -> " +
                  num(hi.value) + ", nondecreasing " + (monotone ? "yes" : "no") + " [" + curve +
                  "]"};
}

// 12. Determinism of the exact suite.
Verdict crit_determinism() {
  const auto a = verify(Suite::Exact, 1, scratch("exact_a"));
  const auto b = verify(Suite::Exact, 1, scratch("exact_b"));
  bool same = a.written.results_hash == b.written.results_hash;
  std::string differing;
  for (const auto& f : {"results.csv", "report.json"}) {
    const bool eq = slurp(a.written.dir / f) == slurp(b.written.dir / f);
    if (!eq) differing += std::string(f) + " ";
    same = same && eq;
  }
  return {same && a.passed && b.passed,
          same ? "results.csv and report.json byte-identical, results hash " + a.written.results_hash
               : "differ: " + differing};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gambler's ruin", crit_gamblers_ruin},
      {"embedded drift", crit_drift},
      {"per-realization duality", crit_duality},
      {"monotone coupling", crit_monotone},
      {"martingale sign contracts", crit_sign_contracts},
      {"threshold bounds", crit_bounds},
      {"thinning identity", crit_thinning},
      {"derivative identity", crit_rho_delta},
      {"event identity and bound", crit_event_rate},
      {"dynamics vs graphical laws", crit_law_agreement},
      {"qualitative phase picture", crit_phase_picture},
      {"determinism", crit_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.passed) ++failed;
    std::printf("%s %2zu %s: %s (%.1f s)\n", v.passed ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
