#include "stochep/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "schema_check.hpp"
#include "stochep/config_schema.hpp"

namespace stochep::harness {

using nlohmann::json;

namespace {

const char* dist_name(ParamRange::Dist d) {
  switch (d) {
    case ParamRange::Dist::fixed: return "fixed";
    case ParamRange::Dist::uniform: return "uniform";
    case ParamRange::Dist::log_uniform: return "log-uniform";
    case ParamRange::Dist::log_uniform_int: return "log-uniform-int";
    case ParamRange::Dist::choice: return "choice";
  }
  return "?";
}

ParamRange parse_range(const json& j, const std::string& where) {
  ParamRange r;
  const std::string dist = j.at("dist").get<std::string>();
  auto need = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": dist '" + dist + "' needs '" + key + "'");
    return j[key].get<double>();
  };
  if (dist == "fixed") {
    r = ParamRange::fixed(need("value"));
  } else if (dist == "choice") {
    if (!j.contains("values")) throw ConfigError(where + ": dist 'choice' needs 'values'");
    r = ParamRange::choice(j["values"].get<std::vector<double>>());
  } else {
    const double lo = need("low");
    const double hi = need("high");
    if (!(lo < hi)) throw ConfigError(where + ": low must be below high");
    if (dist == "uniform") {
      r.dist = ParamRange::Dist::uniform;
      r.low = lo;
      r.high = hi;
    } else {
      if (lo <= 0.0) throw ConfigError(where + ": log-uniform bounds must be positive");
      r = dist == "log-uniform" ? ParamRange::log_uniform(lo, hi) : ParamRange::log_uniform_int(lo, hi);
    }
  }
  return r;
}

json range_json(const ParamRange& r) {
  json j;
  j["dist"] = dist_name(r.dist);
  switch (r.dist) {
    case ParamRange::Dist::fixed: j["value"] = r.value; break;
    case ParamRange::Dist::choice: j["values"] = r.values; break;
    default:
      j["low"] = r.low;
      j["high"] = r.high;
  }
  return j;
}

// Smallest value a range can produce after rounding (integer parameters).
double smallest_integer(const ParamRange& r) {
  switch (r.dist) {
    case ParamRange::Dist::fixed: return std::round(r.value);
    case ParamRange::Dist::choice: {
      double m = r.values.front();
      for (double v : r.values) m = std::min(m, v);
      return std::round(m);
    }
    default: return std::round(r.low);
  }
}

void apply_scale(ExperimentConfig& c) {
  ReferenceSpec& ref = c.reference;
  switch (c.scale) {
    case Scale::smoke:
      c.n_settings = 2;
      c.n_seeds = 2;
      c.max_sampler_steps = 20000;
      ref.stages = {{1000, 10, 0.5}};
      ref.average_last = 4;
      c.bias.replications = 500;
      c.bias.budget_replications = 100;
      break;
    case Scale::desk:
      c.n_settings = 24;
      c.n_seeds = 3;
      c.max_sampler_steps = 1000000;
      ref.stages = {{1000, 25, 0.5}, {10000, 10, 0.3}, {100000, 40, 0.2}};
      ref.average_last = 36;
      c.bias.replications = 10000;
      c.bias.budget_replications = 1000;
      break;
    case Scale::full:
      c.n_settings = 500;
      c.n_seeds = 5;
      c.max_sampler_steps = 10000000;
      ref.stages = {{1000, 25, 0.5}, {10000, 10, 0.3}, {100000, 80, 0.2}};
      ref.average_last = 72;
      c.bias.replications = 100000;
      c.bias.budget_replications = 10000;
      break;
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

ParamRange ParamRange::fixed(double v) {
  ParamRange r;
  r.dist = Dist::fixed;
  r.value = v;
  return r;
}

ParamRange ParamRange::log_uniform(double lo, double hi) {
  ParamRange r;
  r.dist = Dist::log_uniform;
  r.low = lo;
  r.high = hi;
  return r;
}

ParamRange ParamRange::log_uniform_int(double lo, double hi) {
  ParamRange r = log_uniform(lo, hi);
  r.dist = Dist::log_uniform_int;
  return r;
}

ParamRange ParamRange::choice(std::vector<double> v) {
  ParamRange r;
  r.dist = Dist::choice;
  r.values = std::move(v);
  return r;
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::clutter_figure: return "clutter-figure";
    case ExperimentKind::clutter_convergence: return "clutter-convergence";
    case ExperimentKind::hlr_synthetic: return "hlr-synthetic";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "clutter-figure") return ExperimentKind::clutter_figure;
  if (name == "clutter-convergence") return ExperimentKind::clutter_convergence;
  if (name == "hlr-synthetic") return ExperimentKind::hlr_synthetic;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string to_string(Scale scale) {
  switch (scale) {
    case Scale::smoke: return "smoke";
    case Scale::desk: return "desk";
    case Scale::full: return "full";
  }
  return "?";
}

Scale scale_from_string(const std::string& name) {
  if (name == "smoke") return Scale::smoke;
  if (name == "desk") return Scale::desk;
  if (name == "full") return Scale::full;
  throw ConfigError("unknown scale '" + name + "'");
}

int ExperimentConfig::dim_z() const {
  return experiment == ExperimentKind::hlr_synthetic ? hlr.model.dim_z() : clutter.dim_z;
}

VariantSpace default_space(Variant variant, int dim_z) {
  VariantSpace s;
  s.variant = variant;
  s.n_inner = ParamRange::fixed(1);
  s.thin = ParamRange::fixed(1);
  switch (variant) {
    case Variant::ep:
      s.estimator = EstimatorKind::debiased_gaussian;
      s.step = ParamRange::log_uniform(1e-4, 1.0);
      s.n_samp = ParamRange::log_uniform_int(dim_z + 2.5, 10000.5);
      s.thin = ParamRange::choice({1, 2, 3, 4});
      break;
    case Variant::ep_eta:
    case Variant::ep_mu:
      s.step = ParamRange::log_uniform(1e-5, 1e-2);
      s.n_samp = ParamRange::fixed(1);
      break;
    case Variant::snep:
      s.step = ParamRange::log_uniform(1e-5, 1e-2);
      s.n_samp = ParamRange::log_uniform_int(0.5, 10.5);
      s.n_inner = ParamRange::log_uniform_int(0.5, 10.5);
      break;
  }
  return s;
}

const std::string& config_schema() {
  static const std::string text = detail::kConfigSchema;
  return text;
}

ExperimentConfig parse_config(const std::string& text, std::optional<Scale> scale) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::vector<std::string> problems = detail::check_schema(j, json::parse(config_schema()));
  if (!problems.empty()) {
    std::ostringstream os;
    os << "config does not match the schema:";
    for (const std::string& p : problems) os << "\n  " << p;
    throw ConfigError(os.str());
  }

  ExperimentConfig c;
  c.experiment = experiment_kind_from_string(j["experiment"].get<std::string>());
  c.scale = scale ? *scale : scale_from_string(j.value("scale", std::string("desk")));
  apply_scale(c);

  take(j, "master_seed", c.master_seed);
  take(j, "output_dir", c.output_dir);
  take(j, "threads", c.threads);
  take(j, "n_settings", c.n_settings);
  take(j, "n_seeds", c.n_seeds);
  if (j.contains("budget")) {
    const json& b = j["budget"];
    take(b, "max_sampler_steps", c.max_sampler_steps);
    take(b, "max_iterations", c.max_iterations);
    take(b, "wall_seconds", c.wall_seconds);
  }

  if (j.contains("problem")) {
    const json& p = j["problem"];
    if (p.contains("clutter")) {
      const json& q = p["clutter"];
      take(q, "sites", c.clutter.sites);
      take(q, "dim_z", c.clutter.dim_z);
      take(q, "clutter_weight", c.clutter.clutter_weight);
      take(q, "clutter_variance", c.clutter.clutter_variance);
      take(q, "prior_variance", c.clutter.prior_variance);
      take(q, "true_z", c.clutter.true_z);
      take(q, "data_seed", c.clutter.data_seed);
    }
    if (p.contains("hlr")) {
      const json& q = p["hlr"];
      take(q, "groups", c.hlr.model.groups);
      take(q, "dim", c.hlr.model.dim);
      take(q, "rows", c.hlr.model.rows);
      take(q, "data_seed", c.hlr.data_seed);
      if (q.contains("parameterization")) {
        c.hlr.parameterization = hlr_parameterization_from_string(q["parameterization"].get<std::string>());
      }
    }
  }

  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    if (k.contains("kind")) c.kernel.kind = kernel_kind_from_string(k["kind"].get<std::string>());
    take(k, "leapfrog_steps", c.kernel.leapfrog_steps);
    take(k, "initial_step_size", c.kernel.initial_step_size);
    take(k, "target_accept", c.kernel.target_accept);
    take(k, "rwm_target_accept", c.kernel.rwm_target_accept);
    take(k, "adapt_mass", c.kernel.adapt_mass);
    take(k, "step_jitter", c.kernel.step_jitter);
  }
  if (c.experiment == ExperimentKind::hlr_synthetic && (c.kernel.kind == KernelKind::oracle || c.kernel.kind == KernelKind::exact)) {
    throw ConfigError("hlr-synthetic has no exact tilted moments or sampler; use kernel hmc or rwm");
  }

  std::vector<Variant> variants{Variant::ep, Variant::ep_eta, Variant::ep_mu, Variant::snep};
  if (c.experiment == ExperimentKind::clutter_figure) variants = {Variant::ep, Variant::ep_eta, Variant::ep_mu};
  if (j.contains("variants")) {
    variants.clear();
    for (const auto& v : j["variants"]) variants.push_back(variant_from_string(v.get<std::string>()));
  }
  const json spaces = j.value("search_space", json::object());
  for (Variant v : variants) {
    VariantSpace s = default_space(v, c.dim_z());
    const std::string name = to_string(v);
    if (spaces.contains(name)) {
      const json& q = spaces[name];
      if (q.contains("estimator")) s.estimator = estimator_kind_from_string(q["estimator"].get<std::string>());
      if (q.contains("step")) s.step = parse_range(q["step"], "search_space/" + name + "/step");
      if (q.contains("n_samp")) s.n_samp = parse_range(q["n_samp"], "search_space/" + name + "/n_samp");
      if (q.contains("thin")) s.thin = parse_range(q["thin"], "search_space/" + name + "/thin");
      if (q.contains("n_inner")) s.n_inner = parse_range(q["n_inner"], "search_space/" + name + "/n_inner");
    }
    if (s.estimator == EstimatorKind::debiased_gaussian && smallest_integer(s.n_samp) < c.dim_z() + 3) {
      throw ConfigError("search_space/" + name + ": the debiased estimator needs n_samp >= dim_z + 3");
    }
    if (smallest_integer(s.n_samp) < 1 || smallest_integer(s.thin) < 1 || smallest_integer(s.n_inner) < 1) {
      throw ConfigError("search_space/" + name + ": n_samp, thin and n_inner must round to at least 1");
    }
    c.variants.push_back(s);
  }
  if (spaces.contains("warmup")) {
    const json& w = spaces["warmup"];
    if (w.contains("length")) c.warmup.length = parse_range(w["length"], "search_space/warmup/length");
    if (w.contains("ratio")) c.warmup.ratio = parse_range(w["ratio"], "search_space/warmup/ratio");
  }

  if (j.contains("reference")) {
    const json& r = j["reference"];
    take(r, "path", c.reference.path);
    take(r, "compute", c.reference.compute);
    take(r, "seed", c.reference.seed);
    if (r.contains("stages")) {
      c.reference.stages.clear();
      for (const auto& s : r["stages"]) {
        c.reference.stages.push_back({s["n_samp"].get<int>(), s["iterations"].get<int>(), s["step"].get<double>()});
      }
    }
    take(r, "average_last", c.reference.average_last);
    take(r, "warmup_length", c.reference.warmup_length);
    take(r, "exact_step", c.reference.exact_step);
    take(r, "exact_tolerance", c.reference.exact_tolerance);
    take(r, "exact_max_iterations", c.reference.exact_max_iterations);
  }
  for (const ReferenceStage& s : c.reference.stages) {
    if (s.n_samp < c.dim_z() + 3) throw ConfigError("reference stages use the debiased estimator and need n_samp >= dim_z + 3");
  }

  if (j.contains("bias")) {
    const json& b = j["bias"];
    take(b, "steps", c.bias.steps);
    take(b, "replications", c.bias.replications);
    take(b, "ep_n_samp", c.bias.ep_n_samp);
    take(b, "warm_iterations", c.bias.warm_iterations);
    take(b, "warm_step", c.bias.warm_step);
    take(b, "budget", c.bias.budget);
    take(b, "budget_replications", c.bias.budget_replications);
    take(b, "budget_ep_steps", c.bias.budget_ep_steps);
    take(b, "budget_eps_steps", c.bias.budget_eps_steps);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<Scale> scale) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), scale);
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["scale"] = to_string(c.scale);
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["n_settings"] = c.n_settings;
  j["n_seeds"] = c.n_seeds;
  j["budget"] = {{"max_sampler_steps", c.max_sampler_steps},
                 {"max_iterations", c.max_iterations},
                 {"wall_seconds", c.wall_seconds}};
  j["kernel"] = {{"kind", to_string(c.kernel.kind)},
                 {"leapfrog_steps", c.kernel.leapfrog_steps},
                 {"initial_step_size", c.kernel.initial_step_size},
                 {"target_accept", c.kernel.target_accept},
                 {"rwm_target_accept", c.kernel.rwm_target_accept},
                 {"adapt_mass", c.kernel.adapt_mass},
                 {"step_jitter", c.kernel.step_jitter}};
  json variants = json::array();
  json spaces = json::object();
  for (const VariantSpace& s : c.variants) {
    variants.push_back(to_string(s.variant));
    spaces[to_string(s.variant)] = {{"estimator", to_string(s.estimator)},
                                    {"step", range_json(s.step)},
                                    {"n_samp", range_json(s.n_samp)},
                                    {"thin", range_json(s.thin)},
                                    {"n_inner", range_json(s.n_inner)}};
  }
  spaces["warmup"] = {{"length", range_json(c.warmup.length)}, {"ratio", range_json(c.warmup.ratio)}};
  j["variants"] = variants;
  j["search_space"] = spaces;
  j["problem"]["clutter"] = {{"sites", c.clutter.sites},
                             {"dim_z", c.clutter.dim_z},
                             {"clutter_weight", c.clutter.clutter_weight},
                             {"clutter_variance", c.clutter.clutter_variance},
                             {"prior_variance", c.clutter.prior_variance},
                             {"true_z", c.clutter.true_z},
                             {"data_seed", c.clutter.data_seed}};
  j["problem"]["hlr"] = {{"groups", c.hlr.model.groups},
                         {"dim", c.hlr.model.dim},
                         {"rows", c.hlr.model.rows},
                         {"data_seed", c.hlr.data_seed},
                         {"parameterization", to_string(c.hlr.parameterization)}};
  json stages = json::array();
  for (const ReferenceStage& s : c.reference.stages) {
    stages.push_back({{"n_samp", s.n_samp}, {"iterations", s.iterations}, {"step", s.step}});
  }
  j["reference"] = {{"path", c.reference.path},
                    {"compute", c.reference.compute},
                    {"seed", c.reference.seed},
                    {"stages", stages},
                    {"average_last", c.reference.average_last},
                    {"warmup_length", c.reference.warmup_length},
                    {"exact_step", c.reference.exact_step},
                    {"exact_tolerance", c.reference.exact_tolerance},
                    {"exact_max_iterations", c.reference.exact_max_iterations}};
  j["bias"] = {{"steps", c.bias.steps},
               {"replications", c.bias.replications},
               {"ep_n_samp", c.bias.ep_n_samp},
               {"warm_iterations", c.bias.warm_iterations},
               {"warm_step", c.bias.warm_step},
               {"budget", c.bias.budget},
               {"budget_replications", c.bias.budget_replications},
               {"budget_ep_steps", c.bias.budget_ep_steps},
               {"budget_eps_steps", c.bias.budget_eps_steps}};
  return j.dump(2);
}

}  // namespace stochep::harness
