// stochep: run / reference / frontier / bias / plot.
//
// Exit codes: 0 success, 1 unexpected error, 2 config error, 3 reference
// unavailable, 4 sweep had failing settings.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stochep/harness/config.hpp"
#include "stochep/harness/experiment.hpp"
#include "stochep/harness/io.hpp"
#include "stochep/harness/plots.hpp"
#include "stochep/harness/reference.hpp"

namespace fs = std::filesystem;
using namespace stochep;
using namespace stochep::harness;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::string scale;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (JSON, see docs/config.schema.json)");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed, overrides the config");
  cmd->add_option("--out", o.out, "output directory, overrides the config");
  cmd->add_option("--threads", o.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--scale", o.scale, "preset: smoke, desk or full")->check(CLI::IsMember({"smoke", "desk", "full"}));
}

ExperimentConfig resolve(const Options& o) {
  std::optional<Scale> scale;
  if (!o.scale.empty()) scale = scale_from_string(o.scale);
  ExperimentConfig c = load_config(o.config, scale);
  if (o.seed) c.master_seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.threads) c.threads = *o.threads;
  return c;
}

fs::path output_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (!o.config.empty()) return resolve(o).output_dir;
  throw ConfigError("give --out or --config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic expectation propagation experiments"};
  app.require_subcommand(1);
  Options o;

  auto* run_cmd = app.add_subcommand("run", "run an experiment and write all artifacts");
  add_common(run_cmd, o, true);
  auto* ref_cmd = app.add_subcommand("reference", "compute or verify the reference optimum");
  add_common(ref_cmd, o, true);
  auto* frontier_cmd = app.add_subcommand("frontier", "recompute frontier tables from a finished sweep");
  add_common(frontier_cmd, o, false);
  auto* bias_cmd = app.add_subcommand("bias", "bias and fixed-budget tables on a clutter problem");
  add_common(bias_cmd, o, true);
  auto* plot_cmd = app.add_subcommand("plot", "render SVG charts from the tables in an output directory");
  add_common(plot_cmd, o, false);
  app.add_subcommand("schema", "print the config schema")->callback([] { std::cout << config_schema(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) return run_experiment(resolve(o), std::cerr);

    if (ref_cmd->parsed()) {
      const ExperimentConfig c = resolve(o);
      fs::create_directories(c.output_dir);
      const ExperimentProblem problem = build_problem(c);
      obtain_reference(c, problem, &std::cerr);
      const fs::path path = reference_path(c);
      std::cout << path.string() << " sha256 " << load_reference(path).sha256 << "\n";
      return 0;
    }

    if (frontier_cmd->parsed()) {
      const fs::path dir = output_dir(o);
      const FrontierTables t = frontier_from_dir(dir);
      write_file_atomic(dir / "frontier.csv", frontier_csv(t, FrontierAxis::steps));
      if (!t.seconds.empty()) write_file_atomic(dir / "frontier_seconds.csv", frontier_csv(t, FrontierAxis::seconds));
      if (!o.config.empty()) write_manifest(resolve(o), dir, "frontier");
      std::cout << (dir / "frontier.csv").string() << "\n";
      return 0;
    }

    if (bias_cmd->parsed()) {
      const ExperimentConfig c = resolve(o);
      const fs::path dir(c.output_dir);
      const ExperimentProblem problem = build_problem(c);
      write_file_atomic(dir / "bias.csv", bias_csv(run_bias(c, problem, &std::cerr)));
      write_file_atomic(dir / "budget.csv", budget_csv(run_budget(c, problem, &std::cerr), c.bias.budget,
                                                       budget_seed(c)));
      write_manifest(c, dir, "bias");
      std::cout << (dir / "bias.csv").string() << "\n" << (dir / "budget.csv").string() << "\n";
      return 0;
    }

    if (plot_cmd->parsed()) {
      for (const fs::path& p : emit_plots(output_dir(o), &std::cerr)) std::cout << p.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ReferenceError& e) {
    std::cerr << "reference unavailable: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
