#include "stochep/harness/reference.hpp"

#include <cmath>

#include "json.hpp"

namespace stochep::harness {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentProblem build_problem(const ExperimentConfig& config) {
  ExperimentProblem out;
  if (config.experiment == ExperimentKind::hlr_synthetic) {
    out.hlr = std::make_shared<const HlrDataset>(hlr_generate_data(config.hlr.model, config.hlr.data_seed));
    out.problem = make_hlr_problem(out.hlr, config.hlr.parameterization);
    return out;
  }
  const ClutterSpec& c = config.clutter;
  ClutterConfig cfg;
  cfg.clutter_weight = c.clutter_weight;
  cfg.clutter_variance = c.clutter_variance;
  cfg.prior_variance = c.prior_variance;
  cfg.dim_z = c.dim_z;
  Rng rng = make_stream(c.data_seed, 0);
  cfg.observations = generate_clutter_observations(cfg, c.sites, Vector::Constant(c.dim_z, c.true_z), rng);
  out.clutter = std::make_shared<const ClutterConfig>(cfg);
  out.problem = make_clutter_problem(*out.clutter);
  return out;
}

std::string reference_provenance(const ExperimentConfig& config) {
  const json full = json::parse(to_json(config));
  json p;
  p["experiment"] = to_string(config.experiment);
  if (config.experiment == ExperimentKind::hlr_synthetic) {
    p["problem"] = full["problem"]["hlr"];
    json r = full["reference"];
    r.erase("path");
    r.erase("compute");
    r.erase("exact_step");
    r.erase("exact_tolerance");
    r.erase("exact_max_iterations");
    r["kernel"] = full["kernel"];
    p["reference"] = r;
  } else {
    p["problem"] = full["problem"]["clutter"];
    p["reference"] = {{"exact_step", config.reference.exact_step},
                      {"exact_tolerance", config.reference.exact_tolerance},
                      {"exact_max_iterations", config.reference.exact_max_iterations}};
  }
  return p.dump();
}

NaturalParams compute_reference(const ExperimentConfig& config, const ExperimentProblem& ep, std::uint64_t seed,
                                std::ostream* log) {
  const ReferenceSpec& spec = config.reference;
  const Problem& problem = ep.problem;
  if (config.experiment != ExperimentKind::hlr_synthetic) {
    EpConfig c;
    c.variant = Variant::ep;
    c.kernel.kind = KernelKind::oracle;
    c.step = spec.exact_step;
    c.max_iterations = spec.exact_max_iterations;
    c.tolerance = spec.exact_tolerance;
    c.threads = config.threads;
    const RunResult r = run(problem, c);
    if (!r.converged) {
      throw ReferenceError("exact EP did not reach residual " + format_double(spec.exact_tolerance) + " within " +
                           std::to_string(spec.exact_max_iterations) + " iterations (last residual " +
                           format_double(r.trace.rows.back().residual) + (r.aborted ? ", " + r.abort_reason : "") +
                           ")");
    }
    if (log) *log << "reference: exact EP converged after " << r.trace.rows.back().iteration << " iterations\n";
    return r.state.approx_params();
  }

  if (spec.stages.empty()) throw ReferenceError("no reference stages configured");
  EpConfig c;
  c.variant = Variant::ep;
  c.estimator = EstimatorKind::debiased_gaussian;
  c.kernel = config.kernel;
  c.seed = seed;
  c.threads = config.threads;
  c.warmup_length = spec.warmup_length;
  c.warmup_ratio = 1.0;
  std::optional<SiteState> state;
  std::optional<NaturalParams> averaged;
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    const ReferenceStage& s = spec.stages[k];
    c.n_samp = s.n_samp;
    c.max_iterations = s.iterations;
    c.step = s.step;
    c.initial_state = state;
    c.epoch = k;
    c.average_last = k + 1 == spec.stages.size() ? spec.average_last : 0;
    const RunResult r = run(problem, c);
    if (r.aborted) throw ReferenceError("reference stage " + std::to_string(k + 1) + " aborted: " + r.abort_reason);
    if (log) {
      *log << "reference: stage " << k + 1 << "/" << spec.stages.size() << " (n_samp " << s.n_samp << ", "
           << s.iterations << " iterations) done, " << r.trace.rows.back().rollbacks << " rollbacks\n";
    }
    state = r.state;
    averaged = r.averaged;
  }
  NaturalParams out = averaged ? *averaged : state->approx_params();
  if (!in_natural_domain(out.family, out.values)) throw ReferenceError("reference optimum is not a proper distribution");
  return out;
}

fs::path reference_path(const ExperimentConfig& config) {
  return config.reference.path.empty() ? fs::path(config.output_dir) / "reference.json" : fs::path(config.reference.path);
}

NaturalParams obtain_reference(const ExperimentConfig& config, const ExperimentProblem& problem, std::ostream* log) {
  const fs::path path = reference_path(config);
  const std::string provenance = reference_provenance(config);
  if (!config.reference.path.empty()) {
    StoredReference stored = load_reference(path);
    if (!(stored.params.family == problem.problem.family))
      throw ReferenceError("reference " + path.string() + " belongs to a different family");
    if (json::parse(stored.provenance) != json::parse(provenance) && log)
      *log << "warning: reference " << path.string() << " was computed under different settings\n";
    return stored.params;
  }
  if (fs::exists(path)) {
    try {
      StoredReference stored = load_reference(path);
      if (json::parse(stored.provenance) == json::parse(provenance)) {
        if (log) *log << "reference: reusing " << path.string() << "\n";
        return stored.params;
      }
      if (log) *log << "reference: " << path.string() << " is stale\n";
    } catch (const ReferenceError& e) {
      if (!config.reference.compute) throw;
      if (log) *log << "reference: " << e.what() << "\n";
    }
  }
  if (!config.reference.compute)
    throw ReferenceError("no usable reference at " + path.string() + " and reference.compute is false");
  NaturalParams params = compute_reference(config, problem, config.reference.seed, log);
  save_reference(path, params, provenance);
  return params;
}

}  // namespace stochep::harness
