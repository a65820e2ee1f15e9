// wbtree: run experiment specs and verify suites.
//
// Exit status: 0 ok, 1 usage or spec error, 2 failed contract (including
// RadiusTooSmall and AllTruncated).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wbtree/experiment.hpp"

namespace {

using namespace wbtree;
namespace fs = std::filesystem;

struct Common {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<unsigned> workers;
};

void add_common(CLI::App* cmd, Common& c, bool with_spec) {
  if (with_spec) cmd->add_option("--spec", c.spec, "experiment spec (JSON)")->required();
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "seed (overrides WBTREE_SEED and the seed in the JSON file)");
  cmd->add_option("--replicas", c.replicas, "replica count override");
  cmd->add_option("--workers", c.workers, "worker threads (results do not depend on it)");
}

/// --seed wins over WBTREE_SEED, which wins over the JSON file.
std::optional<std::uint64_t> effective_seed(const Common& c) {
  if (c.seed) return c.seed;
  if (const char* env = std::getenv("WBTREE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::SpecInvalid, std::string("WBTREE_SEED is not an integer: ") + env);
  }
  return std::nullopt;
}

void print_checks(const ExperimentOutcome& o) {
  for (const auto& c : o.checks) {
    std::cout << (c.passed ? "PASS " : (c.gating ? "FAIL " : "NOTE ")) << o.name << " " << c.name;
    if (!c.detail.empty()) std::cout << ": " << c.detail;
    std::cout << "\n";
  }
  if (o.checks.empty()) std::cout << "DONE " << o.name << "\n";
}

/// Runs one spec file. `accept` limits which experiments the subcommand takes.
int run_spec(const Common& c, const std::function<bool(const ExperimentSpec&)>& accept,
             const std::string& what) {
  const auto spec = parse_spec(load_json_file(c.spec),
                               Overrides{effective_seed(c), c.replicas, c.workers});
  if (!accept(spec)) {
    throw Error(ErrorCode::SpecInvalid, "this subcommand expects " + what + " (got experiment '" +
                                            spec.experiment + "', model '" + spec.model + "')");
  }
  const fs::path out = !c.out.empty() ? fs::path(c.out)
                       : spec.output  ? fs::path(*spec.output)
                                      : fs::path("results") / spec.name;
  const auto start = std::chrono::steady_clock::now();
  const auto outcome = run_experiment(spec);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto w = write_outputs(out, {outcome}, outcome.report, spec_hash(spec), spec.seed,
                               spec.workers, wall);
  print_checks(outcome);
  std::cout << "wrote " << w.dir.string() << " (results hash " << w.results_hash << ")\n";
  return w.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Williams-Bjerknes / BCRW simulation and verification on the d-regular tree"};
  app.require_subcommand(1);

  Common sim, dual, graph, scan, ver;
  std::string suite = "exact";
  int degree = 3;
  std::string bounds_out;

  auto* c_sim = app.add_subcommand("simulate", "run any experiment spec");
  add_common(c_sim, sim, true);
  auto* c_dual = app.add_subcommand("dual", "duality checks (graphical sweep or statistical)");
  add_common(c_dual, dual, true);
  auto* c_graph = app.add_subcommand("graphical-check", "graphical-representation experiments");
  add_common(c_graph, graph, true);
  auto* c_bounds = app.add_subcommand("bounds", "threshold bounds for degree d");
  c_bounds->add_option("--d", degree, "tree degree (>= 3)")->required();
  c_bounds->add_option("--out", bounds_out, "also write results into this directory");
  auto* c_scan = app.add_subcommand("scan", "threshold scan over a lambda grid");
  add_common(c_scan, scan, true);
  auto* c_verify = app.add_subcommand("verify", "run a verification suite");
  c_verify->add_option("--suite", suite, "exact | statistical | exploratory")
      ->check(CLI::IsMember({"exact", "statistical", "exploratory"}));
  add_common(c_verify, ver, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (c_sim->parsed()) {
      return run_spec(sim, [](const ExperimentSpec&) { return true; }, "any spec");
    }
    if (c_dual->parsed()) {
      return run_spec(
          dual,
          [](const ExperimentSpec& s) {
            return s.experiment == "duality" || s.experiment == "dual_statistical";
          },
          "a duality or dual_statistical experiment");
    }
    if (c_graph->parsed()) {
      return run_spec(graph, [](const ExperimentSpec& s) { return s.model == "graphical"; },
                      "a graphical model spec");
    }
    if (c_scan->parsed()) {
      return run_spec(scan, [](const ExperimentSpec& s) { return s.experiment == "threshold_scan"; },
                      "a threshold_scan experiment");
    }
    if (c_bounds->parsed()) {
      const auto b = prop_bounds(degree);
      const json j = {{"d", degree},
                      {"lambda_l_lower", b.lambda_l_lower},
                      {"lambda_l_upper", real_json(b.lambda_l_upper)},
                      {"lambda_c_upper", real_json(b.lambda_c_upper)}};
      std::cout << j.dump(2) << "\n";
      if (!bounds_out.empty()) {
        const auto spec =
            parse_spec({{"name", "bounds"}, {"model", "analysis"}, {"experiment", "bounds"}, {"d", degree}});
        run_and_write(spec, bounds_out);
      }
      return 0;
    }
    const auto s = *parse_suite(suite);
    const std::uint64_t seed = effective_seed(ver).value_or(1);
    const fs::path out = ver.out.empty() ? fs::path("results") / ("verify-" + suite) : fs::path(ver.out);
    const auto res = verify(s, seed, out, ver.workers.value_or(1), print_checks);
    std::cout << "suite " << suite << " seed " << seed << ": " << (res.passed ? "PASS" : "FAIL")
              << " (wrote " << res.written.dir.string() << ")\n";
    return res.passed ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
