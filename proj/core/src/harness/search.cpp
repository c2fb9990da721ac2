#include "stochep/harness/search.hpp"

#include <cmath>
#include <cstdio>

namespace stochep::harness {

std::string Setting::id() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%03d", to_string(variant).c_str(), index);
  return buf;
}

double draw(const ParamRange& r, Rng& rng) {
  switch (r.dist) {
    case ParamRange::Dist::fixed: return r.value;
    case ParamRange::Dist::uniform: return r.low + (r.high - r.low) * uniform01(rng);
    case ParamRange::Dist::log_uniform:
      return std::exp(std::log(r.low) + (std::log(r.high) - std::log(r.low)) * uniform01(rng));
    case ParamRange::Dist::log_uniform_int:
      return std::round(std::exp(std::log(r.low) + (std::log(r.high) - std::log(r.low)) * uniform01(rng)));
    case ParamRange::Dist::choice: {
      const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(r.values.size()));
      return r.values[std::min(k, r.values.size() - 1)];
    }
  }
  return r.value;
}

std::vector<Setting> draw_settings(const ExperimentConfig& config, const VariantSpace& space, int variant_index) {
  Rng rng = make_stream(config.master_seed, 0x5e77, static_cast<std::uint64_t>(variant_index));
  std::vector<Setting> out;
  for (int k = 0; k < config.n_settings; ++k) {
    Setting s;
    s.index = k;
    s.variant = space.variant;
    s.estimator = space.estimator;
    // fixed draw order keeps settings stable when a range becomes fixed
    s.step = draw(space.step, rng);
    s.n_samp = static_cast<int>(draw(space.n_samp, rng));
    s.thin = static_cast<int>(draw(space.thin, rng));
    s.n_inner = static_cast<int>(draw(space.n_inner, rng));
    s.warmup_length = static_cast<int>(draw(config.warmup.length, rng));
    s.warmup_ratio = draw(config.warmup.ratio, rng);
    if (s.variant == Variant::ep) s.step = std::min(s.step, 1.0);
    out.push_back(s);
  }
  return out;
}

std::vector<Setting> draw_all_settings(const ExperimentConfig& config) {
  std::vector<Setting> all;
  for (const VariantSpace& space : config.variants) {
    const auto s = draw_settings(config, space, static_cast<int>(space.variant));
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

std::uint64_t run_seed(std::uint64_t master_seed, int seed_index) {
  return derive_seed(master_seed, 0x5eed, static_cast<std::uint64_t>(seed_index));
}

EpConfig make_ep_config(const ExperimentConfig& config, const Setting& s, std::uint64_t seed) {
  EpConfig c;
  c.variant = s.variant;
  c.estimator = s.estimator;
  c.step = s.step;
  c.n_samp = s.n_samp;
  c.thin = s.thin;
  c.n_inner = s.n_inner;
  c.kernel = config.kernel;
  c.warmup_length = s.warmup_length;
  c.warmup_ratio = s.warmup_ratio;
  c.max_iterations = config.max_iterations;
  c.max_sampler_steps = config.max_sampler_steps;
  c.max_wall_seconds = config.wall_seconds;
  c.seed = seed;
  c.threads = 1;
  return c;
}

}  // namespace stochep::harness
