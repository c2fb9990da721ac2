#include "stochep/harness/experiment.hpp"

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>

#include "json.hpp"
#include "stochep/harness/io.hpp"
#include "stochep/harness/plots.hpp"

namespace stochep::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int pool_size(int threads) { return threads > 0 ? threads : tbb::this_task_arena::max_concurrency(); }

std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

bool is_clutter(const ExperimentConfig& config) { return config.experiment != ExperimentKind::hlr_synthetic; }

bool has_variant(const ExperimentConfig& config, Variant v) {
  for (const VariantSpace& s : config.variants)
    if (s.variant == v) return true;
  return false;
}

}  // namespace

std::string run_name(const Setting& setting, int seed_index) {
  return setting.id() + "_seed" + std::to_string(seed_index);
}

SweepResult run_sweep(const ExperimentConfig& config, const ExperimentProblem& problem, const NaturalParams& reference,
                      std::ostream* log) {
  const fs::path dir(config.output_dir);
  fs::remove_all(dir / "traces");
  fs::remove_all(dir / "timing");
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "timing");

  const std::vector<Setting> settings = draw_all_settings(config);
  const int n_jobs = static_cast<int>(settings.size()) * config.n_seeds;
  SweepResult result;
  result.runs.resize(static_cast<std::size_t>(n_jobs));
  const bool objective = is_clutter(config);

  std::mutex log_mutex;
  int done = 0;
  tbb::task_arena arena(pool_size(config.threads));
  arena.execute([&] {
    tbb::parallel_for(0, n_jobs, [&](int job) {
      const Setting& s = settings[static_cast<std::size_t>(job / config.n_seeds)];
      RunRecord& rec = result.runs[static_cast<std::size_t>(job)];
      rec.setting = s;
      rec.seed_index = job % config.n_seeds;
      rec.seed = run_seed(config.master_seed, rec.seed_index);
      const std::string name = run_name(s, rec.seed_index);
      rec.trace_file = "traces/" + name + ".csv";
      rec.timing_file = "timing/" + name + ".csv";

      RunResult r;
      try {
        EpConfig ec = make_ep_config(config, s, rec.seed);
        ec.reference = reference;
        if (objective) ec.objective = [&](const SiteState& st) { return objective_L(st, problem.problem); };
        r = run(problem.problem, ec);
        rec.aborted = r.aborted;
        rec.reason = sanitize(r.abort_reason);
      } catch (const std::exception& e) {
        rec.aborted = true;
        rec.reason = sanitize(std::string("error: ") + e.what());
      }
      const auto& rows = r.trace.rows;
      rec.iterations = rows.empty() ? 0 : rows.back().iteration;
      rec.sampler_steps = rows.empty() ? 0 : rows.back().sampler_steps;
      rec.initial_kl = rows.empty() ? kNaN : rows.front().kl;
      rec.final_kl = rows.empty() ? kNaN : rows.back().kl;
      rec.best_kl = kNaN;
      for (const TraceRow& row : rows)
        if (!std::isnan(row.kl) && (std::isnan(rec.best_kl) || row.kl < rec.best_kl)) rec.best_kl = row.kl;
      rec.rollbacks = rows.empty() ? 0 : rows.back().rollbacks;
      rec.skipped = rows.empty() ? 0 : rows.back().skipped;
      write_file_atomic(dir / rec.trace_file, trace_csv(r.trace));
      write_file_atomic(dir / rec.timing_file, timing_csv(r.trace));

      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        ++done;
        *log << "[" << done << "/" << n_jobs << "] " << name << (rec.aborted ? " ABORTED " + rec.reason : "")
             << " kl " << format_double(rec.final_kl) << " steps " << rec.sampler_steps << "\n";
      }
    });
  });

  std::set<std::string> failing;
  for (const RunRecord& rec : result.runs)
    if (rec.aborted) failing.insert(rec.setting.id());
  for (const Setting& s : settings)
    if (failing.count(s.id())) result.failing_settings.push_back(s.id());
  return result;
}

std::string summary_csv(const SweepResult& sweep) {
  const std::set<std::string> failing(sweep.failing_settings.begin(), sweep.failing_settings.end());
  std::string out =
      "# stochep summary v1\n"
      "run,setting,variant,estimator,step,n_samp,thin,n_inner,warmup_length,warmup_ratio,seed_index,seed,status,"
      "iterations,sampler_steps,initial_kl,final_kl,best_kl,rollbacks,skipped,setting_failed,trace,timing,reason\n";
  for (const RunRecord& r : sweep.runs) {
    const Setting& s = r.setting;
    out += run_name(s, r.seed_index) + ',' + s.id() + ',' + to_string(s.variant) + ',' + to_string(s.estimator) + ',' +
           format_double(s.step) + ',' + std::to_string(s.n_samp) + ',' + std::to_string(s.thin) + ',' +
           std::to_string(s.n_inner) + ',' + std::to_string(s.warmup_length) + ',' + format_double(s.warmup_ratio) +
           ',' + std::to_string(r.seed_index) + ',' + std::to_string(r.seed) + ',' + (r.aborted ? "aborted" : "ok") +
           ',' + std::to_string(r.iterations) + ',' + std::to_string(r.sampler_steps) + ',' +
           format_double(r.initial_kl) + ',' + format_double(r.final_kl) + ',' + format_double(r.best_kl) + ',' +
           std::to_string(r.rollbacks) + ',' + std::to_string(r.skipped) + ',' + (failing.count(s.id()) ? "1" : "0") +
           ',' + r.trace_file + ',' + r.timing_file + ',' + r.reason + '\n';
  }
  return out;
}

FrontierTables frontier_from_dir(const fs::path& dir, int grid_points) {
  const auto rows = parse_csv(read_file(dir / "summary.csv"));
  if (rows.size() < 2) throw std::invalid_argument("summary.csv lists no runs");
  const auto& header = rows[0];
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("summary.csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_setting = col("setting"), c_variant = col("variant"), c_seed = col("seed_index"),
                    c_status = col("status"), c_trace = col("trace"), c_timing = col("timing");

  std::map<std::string, std::vector<RunCurve>> steps, seconds;
  double s_lo = std::numeric_limits<double>::infinity(), s_hi = 0.0;
  double t_lo = std::numeric_limits<double>::infinity(), t_hi = 0.0;
  bool timing_complete = true;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const std::string timing_path = (dir / r.at(c_timing)).string();
    const bool has_timing = fs::exists(timing_path);
    timing_complete = timing_complete && has_timing;
    const RunTrace trace = parse_trace_csv(read_file(dir / r.at(c_trace)), has_timing ? read_file(timing_path) : "");
    RunCurve c;
    c.setting = r.at(c_setting);
    c.seed_index = std::stoi(r.at(c_seed));
    c.failed = r.at(c_status) != "ok";
    RunCurve t = c;
    for (const TraceRow& row : trace.rows) {
      c.x.push_back(static_cast<double>(row.sampler_steps));
      c.kl.push_back(row.kl);
      t.x.push_back(row.wall_seconds);
      t.kl.push_back(row.kl);
      if (row.sampler_steps > 0) s_lo = std::min(s_lo, static_cast<double>(row.sampler_steps));
      if (row.wall_seconds > 0.0) t_lo = std::min(t_lo, row.wall_seconds);
    }
    if (!trace.rows.empty()) {
      s_hi = std::max(s_hi, static_cast<double>(trace.rows.back().sampler_steps));
      if (!std::isnan(trace.rows.back().wall_seconds)) t_hi = std::max(t_hi, trace.rows.back().wall_seconds);
    }
    steps[r.at(c_variant)].push_back(std::move(c));
    seconds[r.at(c_variant)].push_back(std::move(t));
  }
  FrontierTables out;
  if (!(s_hi >= s_lo)) throw std::invalid_argument("no run recorded any sampler steps");
  out.step_grid = log_grid(s_lo, s_hi, grid_points);
  for (const auto& [variant, curves] : steps) out.steps[variant] = pareto_frontier(curves, out.step_grid);
  if (timing_complete && t_hi >= t_lo) {
    out.second_grid = log_grid(t_lo, t_hi, grid_points);
    for (const auto& [variant, curves] : seconds) out.seconds[variant] = pareto_frontier(curves, out.second_grid);
  }
  return out;
}

std::string frontier_csv(const FrontierTables& tables, FrontierAxis axis) {
  std::string out = frontier_csv_header();
  for (const auto& [variant, points] : axis == FrontierAxis::steps ? tables.steps : tables.seconds)
    out += frontier_csv_rows(variant, axis, points);
  return out;
}

SiteState warm_state(const Problem& problem, const BiasSpec& spec) {
  EpConfig c;
  c.kernel.kind = KernelKind::oracle;
  c.step = spec.warm_step;
  c.max_iterations = spec.warm_iterations;
  c.tolerance = 0.0;
  c.threads = 1;
  SiteState state = run(problem, c).state;
  outer_update(state);
  return state;
}

std::uint64_t bias_seed(const ExperimentConfig& config, Variant variant) {
  return derive_seed(config.master_seed, 0xb1a5, static_cast<std::uint64_t>(variant));
}

std::uint64_t budget_seed(const ExperimentConfig& config) { return derive_seed(config.master_seed, 0xb0d6); }

std::vector<BiasReport> run_bias(const ExperimentConfig& config, const ExperimentProblem& problem, std::ostream* log) {
  if (!is_clutter(config)) throw ConfigError("bias and budget tables need a clutter experiment (exact tilted sampling)");
  const SiteState start = warm_state(problem.problem, config.bias);
  std::vector<BiasReport> out;
  for (const VariantSpace& space : config.variants) {
    BiasOptions o;
    o.n_samp = space.variant == Variant::ep ? config.bias.ep_n_samp : 1;
    o.threads = config.threads;
    out.push_back(measure_update_bias(space.variant, start, problem.problem, config.bias.steps,
                                      config.bias.replications, bias_seed(config, space.variant), o));
    if (log) {
      const BiasReport& r = out.back();
      *log << "bias " << to_string(r.variant) << ": slope " << format_double(r.slope) << " +- "
           << format_double(r.slope_stderr) << " over " << r.fitted_points << " points\n";
    }
  }
  return out;
}

std::vector<BudgetEntry> run_budget(const ExperimentConfig& config, const ExperimentProblem& problem,
                                    std::ostream* log) {
  if (!is_clutter(config)) throw ConfigError("bias and budget tables need a clutter experiment (exact tilted sampling)");
  const BiasSpec& b = config.bias;
  const SiteState start = warm_state(problem.problem, b);
  const int d = config.dim_z();
  std::vector<BudgetArm> arms;
  if (has_variant(config, Variant::ep)) {
    arms.push_back({Variant::ep, EstimatorKind::naive, b.budget, b.budget_ep_steps});
    if (b.budget >= d + 3) arms.push_back({Variant::ep, EstimatorKind::debiased_gaussian, b.budget, b.budget_ep_steps});
    if (b.budget > 10 && b.budget % 10 == 0) arms.push_back({Variant::ep, EstimatorKind::naive, 10, b.budget_ep_steps});
  }
  for (Variant v : {Variant::ep_eta, Variant::ep_mu, Variant::snep})
    if (has_variant(config, v)) arms.push_back({v, EstimatorKind::naive, 1, b.budget_eps_steps});
  auto entries = budget_comparison(problem.problem, start, arms, b.budget, b.budget_replications, budget_seed(config),
                                   config.threads);
  if (log) {
    for (const BudgetEntry& e : best_per_arm(entries)) {
      *log << "budget " << to_string(e.variant) << " (" << to_string(e.estimator) << ", n_samp " << e.n_samp
           << "): best decrease " << format_double(e.mean_decrease) << " +- " << format_double(e.stderr_)
           << " at step " << format_double(e.step) << "\n";
    }
  }
  return entries;
}

void write_manifest(const ExperimentConfig& config, const fs::path& dir, const std::string& command) {
  json m;
  m["format"] = "stochep manifest v1";
  m["command"] = command;
  m["config"] = json::parse(to_json(config));

  json seeds;
  seeds["master_seed"] = config.master_seed;
  std::vector<std::uint64_t> run_seeds;
  for (int j = 0; j < config.n_seeds; ++j) run_seeds.push_back(run_seed(config.master_seed, j));
  seeds["run_seeds"] = run_seeds;
  seeds["reference_seed"] = config.reference.seed;
  if (config.experiment == ExperimentKind::clutter_figure) {
    json bs = json::object();
    for (const VariantSpace& s : config.variants) bs[to_string(s.variant)] = bias_seed(config, s.variant);
    seeds["bias_seeds"] = bs;
    seeds["budget_seed"] = budget_seed(config);
  }
  m["seeds"] = seeds;

  if (config.experiment != ExperimentKind::clutter_figure) {
    json settings = json::array();
    for (const Setting& s : draw_all_settings(config)) {
      settings.push_back({{"id", s.id()},
                          {"variant", to_string(s.variant)},
                          {"estimator", to_string(s.estimator)},
                          {"step", s.step},
                          {"n_samp", s.n_samp},
                          {"thin", s.thin},
                          {"n_inner", s.n_inner},
                          {"warmup_length", s.warmup_length},
                          {"warmup_ratio", s.warmup_ratio}});
    }
    m["settings"] = settings;
  }

  const fs::path ref = reference_path(config);
  if (fs::exists(ref)) m["reference"] = {{"path", ref.string()}, {"sha256", sha256_file(ref)}};

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json" || entry.path().extension() == ".tmp") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json artifacts = json::object();
  json timing = json::array();
  for (const std::string& rel : files) {
    if (rel.rfind("timing/", 0) == 0 || rel.find("frontier_seconds") != std::string::npos) {
      timing.push_back(rel);
    } else {
      artifacts[rel] = sha256_file(dir / rel);
    }
  }
  m["artifacts"] = artifacts;
  m["timing_dependent"] = timing;
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  const ExperimentProblem problem = build_problem(config);

  if (config.experiment == ExperimentKind::clutter_figure) {
    const auto bias = run_bias(config, problem, &log);
    write_file_atomic(dir / "bias.csv", bias_csv(bias));
    const auto budget = run_budget(config, problem, &log);
    write_file_atomic(dir / "budget.csv", budget_csv(budget, config.bias.budget, budget_seed(config)));
    emit_plots(dir, &log);
    write_manifest(config, dir, "run");
    return 0;
  }

  if (problem.hlr) {
    write_file_atomic(dir / "data" / "hlr.csv", hlr_dataset_csv(*problem.hlr));
    write_file_atomic(dir / "data" / "hlr.json", hlr_dataset_metadata(*problem.hlr));
  }
  const NaturalParams reference = obtain_reference(config, problem, &log);
  const SweepResult sweep = run_sweep(config, problem, reference, &log);
  write_file_atomic(dir / "summary.csv", summary_csv(sweep));
  const FrontierTables tables = frontier_from_dir(dir);
  write_file_atomic(dir / "frontier.csv", frontier_csv(tables, FrontierAxis::steps));
  if (!tables.seconds.empty()) write_file_atomic(dir / "frontier_seconds.csv", frontier_csv(tables, FrontierAxis::seconds));
  emit_plots(dir, &log);
  write_manifest(config, dir, "run");
  if (!sweep.failing_settings.empty()) {
    log << sweep.failing_settings.size() << " setting(s) failed on at least one seed:";
    for (const std::string& s : sweep.failing_settings) log << " " << s;
    log << "\n";
    return 4;
  }
  return 0;
}

}  // namespace stochep::harness
