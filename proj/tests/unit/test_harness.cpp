#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <limits>
#include <random>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "json.hpp"

#include "stochep/harness/config.hpp"
#include "stochep/harness/experiment.hpp"
#include "stochep/harness/frontier.hpp"
#include "stochep/harness/io.hpp"
#include "stochep/harness/plots.hpp"
#include "stochep/harness/reference.hpp"
#include "stochep/harness/schema.hpp"
#include "stochep/harness/search.hpp"

using namespace stochep;
using namespace stochep::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stochep_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kSmoke = R"({
  "experiment": "hlr-synthetic",
  "scale": "smoke",
  "variants": ["ep-eta"],
  "n_settings": 2,
  "n_seeds": 2,
  "problem": {"hlr": {"groups": 16, "dim": 4, "rows": 20, "data_seed": 1}}
})";

ExperimentConfig smoke(const fs::path& out, int threads) {
  ExperimentConfig c = parse_config(kSmoke);
  c.output_dir = out.string();
  c.threads = threads;
  return c;
}

bool contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const std::string& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

RunCurve curve(std::string setting, int seed, std::vector<double> x, std::vector<double> kl) {
  RunCurve c;
  c.setting = std::move(setting);
  c.seed_index = seed;
  c.x = std::move(x);
  c.kl = std::move(kl);
  return c;
}

}  // namespace

TEST_CASE("schema checker keywords") {
  const std::string schema = R"({
    "type": "object", "additionalProperties": false, "required": ["a"],
    "definitions": {"pos": {"type": "number", "exclusiveMinimum": 0}},
    "properties": {
      "a": {"enum": ["x", "y"]},
      "b": {"$ref": "#/definitions/pos"},
      "c": {"type": "array", "minItems": 1, "uniqueItems": true, "items": {"type": "integer", "maximum": 3}},
      "d": {"type": "string", "minLength": 2}
    }})";
  CHECK(validate_json(R"({"a": "x", "b": 1.5, "c": [1, 2], "d": "ok"})", schema).empty());
  CHECK(contains(validate_json(R"({"b": 1})", schema), "a"));
  CHECK(contains(validate_json(R"({"a": "z"})", schema), "/a"));
  CHECK(contains(validate_json(R"({"a": "x", "b": 0})", schema), "/b"));
  CHECK(contains(validate_json(R"({"a": "x", "c": []})", schema), "/c"));
  CHECK(contains(validate_json(R"({"a": "x", "c": [1, 1]})", schema), "/c"));
  CHECK(contains(validate_json(R"({"a": "x", "c": [1, 4]})", schema), "/c/1"));
  CHECK(contains(validate_json(R"({"a": "x", "c": [1.5]})", schema), "/c/0"));
  CHECK(contains(validate_json(R"({"a": "x", "d": "k"})", schema), "/d"));
  CHECK(contains(validate_json(R"({"a": "x", "e": 1})", schema), "e"));
  CHECK(validate_json(R"({"a": "x", "b": "1"})", schema).size() == 1);
  CHECK_THROWS_AS(validate_json("{not json", schema), std::invalid_argument);
  CHECK_THROWS_AS(validate_json("{}", R"({"oneOf": []})"), std::invalid_argument);
}

TEST_CASE("the shipped configs validate") {
  for (const char* name : {"smoke.json", "hlr-synthetic.json", "clutter-figure.json", "clutter-convergence.json"}) {
    const fs::path path = fs::path(STOCHEP_SOURCE_DIR) / "configs" / name;
    INFO(name);
    CHECK(validate_json(read_file(path), config_schema()).empty());
    CHECK_NOTHROW(load_config(path.string()));
  }
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "hlr"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "hlr-synthetic", "colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "hlr-synthetic", "n_seeds": 0})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "hlr-synthetic", "variants": ["ep", "ep"]})"), ConfigError);
  // debiased covariance needs n_samp >= dim_z + 3 (dim_z = 8 here)
  CHECK_THROWS_AS(parse_config(R"({"experiment": "hlr-synthetic", "variants": ["ep"],
      "search_space": {"ep": {"n_samp": {"dist": "fixed", "value": 10}}}})"),
                  ConfigError);
  CHECK_NOTHROW(parse_config(R"({"experiment": "hlr-synthetic", "variants": ["ep"],
      "search_space": {"ep": {"n_samp": {"dist": "fixed", "value": 11}}}})"));
  CHECK_THROWS_AS(load_config("/nonexistent/stochep.json"), ConfigError);
}

TEST_CASE("config defaults, scale override and canonical round trip") {
  const ExperimentConfig c = parse_config(R"({"experiment": "hlr-synthetic"})");
  CHECK(c.hlr.model.groups == 16);
  CHECK(c.hlr.model.dim == 4);
  CHECK(c.hlr.model.rows == 20);
  CHECK(c.dim_z() == 8);
  CHECK(c.n_settings == 24);
  CHECK(c.n_seeds == 3);
  CHECK(c.variants.size() == 4);

  CHECK(parse_config(kSmoke).scale == Scale::smoke);
  CHECK(parse_config(kSmoke, Scale::desk).scale == Scale::desk);

  const std::string text = to_json(parse_config(kSmoke));
  CHECK(validate_json(text, config_schema()).empty());
  CHECK(to_json(parse_config(text)) == text);
}

TEST_CASE("default search spaces") {
  ExperimentConfig c = parse_config(R"({"experiment": "hlr-synthetic", "n_settings": 400})");
  const int d = c.dim_z();
  const std::vector<Setting> all = draw_all_settings(c);
  CHECK(all.size() == 4 * 400);
  for (const Setting& s : all) {
    CHECK(s.warmup_length >= 100);
    CHECK(s.warmup_length <= 1000);
    CHECK(s.warmup_ratio >= 1.0);
    CHECK(s.warmup_ratio <= 4.0);
    switch (s.variant) {
      case Variant::ep:
        CHECK(s.estimator == EstimatorKind::debiased_gaussian);
        CHECK(s.step > 1e-4);
        CHECK(s.step < 1.0);
        CHECK(s.n_samp >= d + 3);
        CHECK(s.thin >= 1);
        CHECK(s.thin <= 4);
        break;
      case Variant::ep_eta:
      case Variant::ep_mu:
        CHECK(s.step > 1e-5);
        CHECK(s.step < 1e-2);
        CHECK(s.n_samp == 1);
        break;
      case Variant::snep:
        CHECK(s.step > 1e-5);
        CHECK(s.step < 1e-2);
        CHECK(s.n_samp >= 1);
        CHECK(s.n_inner >= 1);
        break;
    }
  }

  // log-uniform: the median of log(step) sits mid-range
  std::vector<double> logs;
  for (const Setting& s : all)
    if (s.variant == Variant::ep) logs.push_back(std::log10(s.step));
  std::sort(logs.begin(), logs.end());
  CHECK(std::abs(logs[logs.size() / 2] + 2.0) < 0.3);
  std::vector<int> thin(5, 0);
  for (const Setting& s : all)
    if (s.variant == Variant::ep) ++thin[s.thin];
  for (int t = 1; t <= 4; ++t) CHECK(thin[t] > 60);
}

TEST_CASE("settings of a variant do not depend on the others") {
  const ExperimentConfig both = parse_config(R"({"experiment": "hlr-synthetic", "variants": ["ep", "ep-eta"]})");
  const ExperimentConfig one = parse_config(R"({"experiment": "hlr-synthetic", "variants": ["ep-eta"]})");
  std::vector<Setting> a;
  for (const Setting& s : draw_all_settings(both))
    if (s.variant == Variant::ep_eta) a.push_back(s);
  const std::vector<Setting> b = draw_all_settings(one);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].id() == b[k].id());
    CHECK(a[k].step == b[k].step);
    CHECK(a[k].warmup_length == b[k].warmup_length);
  }
  CHECK(b[7].id() == "ep-eta-007");
  CHECK(run_seed(1, 0) != run_seed(1, 1));
  CHECK(run_seed(1, 0) != run_seed(2, 0));

  Rng rng = make_stream(1, 0);
  for (int k = 0; k < 200; ++k) {
    const double v = draw(ParamRange::log_uniform_int(0.5, 10.5), rng);
    CHECK(v == std::round(v));
    CHECK(v >= 1);
    CHECK(v <= 10);
  }
}

TEST_CASE("frontier of a single run is its best-so-far curve") {
  const RunCurve r = curve("a", 0, {10, 20, 40, 80}, {3.0, 1.0, 2.0, 0.5});
  CHECK(std::isnan(best_so_far(r, 5)));
  CHECK(best_so_far(r, 30) == 1.0);
  CHECK(best_so_far(r, 1000) == 0.5);
  const std::vector<double> grid = log_grid(5, 100, 16);
  CHECK(grid.front() == doctest::Approx(5));
  CHECK(grid.back() == doctest::Approx(100));
  const auto f = pareto_frontier({r}, grid);
  REQUIRE(f.size() == grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double expect = best_so_far(r, grid[k]);
    if (std::isnan(expect)) {
      CHECK(std::isnan(f[k].kl));
    } else {
      CHECK(f[k].kl == expect);
      CHECK(f[k].kl_min == expect);
      CHECK(f[k].kl_max == expect);
      CHECK(f[k].setting == "a");
    }
  }
  CHECK_THROWS_AS(pareto_frontier({}, grid), std::invalid_argument);
}

TEST_CASE("frontier monotonicity, seed averaging and dominated settings") {
  Rng rng = make_stream(3, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RunCurve> runs;
  for (int s = 0; s < 6; ++s)
    for (int seed = 0; seed < 3; ++seed) {
      std::vector<double> x, kl;
      double at = 1.0 + 10 * u(rng);
      for (int k = 0; k < 30; ++k) {
        at *= 1.0 + u(rng);
        x.push_back(at);
        kl.push_back(std::exp(-0.1 * k * u(rng)) + u(rng));
      }
      runs.push_back(curve("s" + std::to_string(s), seed, x, kl));
    }
  const std::vector<double> grid = log_grid(1, 1e6, 64);
  const auto f = pareto_frontier(runs, grid);
  double prev = std::numeric_limits<double>::infinity();
  for (const FrontierPoint& p : f) {
    if (std::isnan(p.kl)) continue;
    CHECK(p.kl <= prev);
    CHECK(p.kl_min <= p.kl);
    CHECK(p.kl >= p.kl_min);
    CHECK(p.kl <= p.kl_max);
    prev = p.kl;
  }

  // the frontier value is the seed mean of its arg-min setting
  const FrontierPoint& last = f.back();
  double mean = 0.0;
  for (const RunCurve& r : runs)
    if (r.setting == last.setting) mean += best_so_far(r, grid.back()) / 3.0;
  CHECK(last.kl == doctest::Approx(mean).epsilon(1e-14));

  // a setting worse than another everywhere leaves the frontier unchanged
  std::vector<RunCurve> more = runs;
  for (int seed = 0; seed < 3; ++seed) {
    RunCurve r = runs[seed];
    r.setting = "dominated";
    for (double& v : r.kl) v += 0.1;
    more.push_back(r);
  }
  const auto g = pareto_frontier(more, grid);
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (std::isnan(f[k].kl)) {
      CHECK(std::isnan(g[k].kl));
      continue;
    }
    CHECK(g[k].kl == f[k].kl);
    CHECK(g[k].setting == f[k].setting);
  }
  CHECK(weakly_dominates(f, g, 1.0));
  CHECK(weakly_dominates(g, f, 1.0));

  // failing on one seed removes the whole setting
  std::vector<RunCurve> bad = runs;
  for (RunCurve& r : bad)
    if (r.setting == last.setting && r.seed_index == 1) r.failed = true;
  const auto h = pareto_frontier(bad, grid);
  CHECK(h.back().setting != last.setting);
  CHECK(h.back().kl >= last.kl);
  CHECK(weakly_dominates(f, h, 1.0));
}

TEST_CASE("frontier csv") {
  const auto f = pareto_frontier({curve("a", 0, {1, 2}, {2.0, 1.0})}, {1, 2});
  const std::string text = frontier_csv_header() + frontier_csv_rows("ep", FrontierAxis::steps, f);
  CHECK(text.rfind("# stochep frontier v1", 0) == 0);
  const auto rows = parse_csv(text);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "variant");
  CHECK(rows[2][0] == "ep");
  CHECK(parse_double(rows[2][3]) == 1.0);
}

TEST_CASE("number formatting and trace csv round trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.0, 0.0})
    CHECK(parse_double(format_double(v)) == v);
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isnan(parse_double("nan")));

  RunTrace t;
  for (int k = 0; k < 4; ++k) {
    TraceRow r;
    r.iteration = k + 1;
    r.sampler_steps = 100u * (k + 1);
    r.wall_seconds = 0.25 * (k + 1);
    r.kl = 1.0 / (k + 1);
    r.residual = 0.1 / (k + 1);
    r.objective = std::nan("");
    r.rollbacks = k / 2;
    t.rows.push_back(r);
  }
  const std::string csv = trace_csv(t);
  CHECK(parse_csv(csv)[0] == std::vector<std::string>{"iteration", "sampler_steps", "kl", "residual", "objective",
                                                      "rollbacks", "skipped"});
  const RunTrace back = parse_trace_csv(csv, timing_csv(t));
  REQUIRE(back.rows.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(back.rows[k].sampler_steps == t.rows[k].sampler_steps);
    CHECK(back.rows[k].kl == t.rows[k].kl);
    CHECK(back.rows[k].wall_seconds == t.rows[k].wall_seconds);
    CHECK(back.rows[k].rollbacks == t.rows[k].rollbacks);
  }
  CHECK(trace_csv(back) == csv);
}

TEST_CASE("stored reference is hash verified") {
  const fs::path dir = scratch("reference");
  const Family fam = Family::gaussian_dense(2);
  const NaturalParams ref{fam, pack_natural(fam, Vector::Constant(2, 0.5), Matrix::Identity(2, 2) * 2.0)};
  save_reference(dir / "ref.json", ref, R"({"what": "test"})");
  const StoredReference back = load_reference(dir / "ref.json");
  CHECK(back.params.family == ref.family);
  CHECK(back.params.values == ref.values);
  CHECK(json::parse(back.provenance)["what"] == "test");
  CHECK(back.sha256.size() == 64);

  std::string text = read_file(dir / "ref.json");
  const auto at = text.find("0.5");
  REQUIRE(at != std::string::npos);
  text.replace(at, 3, "0.6");
  write_file_atomic(dir / "tampered.json", text);
  CHECK_THROWS_AS(load_reference(dir / "tampered.json"), ReferenceError);
  CHECK_THROWS_AS(load_reference(dir / "missing.json"), ReferenceError);
  write_file_atomic(dir / "junk.json", "{");
  CHECK_THROWS_AS(load_reference(dir / "junk.json"), ReferenceError);

  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("clutter reference does not depend on the seed") {
  ExperimentConfig c = parse_config(R"({"experiment": "clutter-convergence",
      "problem": {"clutter": {"sites": 20, "dim_z": 1, "data_seed": 1}}})");
  const ExperimentProblem p = build_problem(c);
  const NaturalParams a = compute_reference(c, p, 1);
  const NaturalParams b = compute_reference(c, p, 99);
  CHECK(a.values == b.values);
}

TEST_CASE("reference location and reuse") {
  const fs::path dir = scratch("obtain");
  ExperimentConfig c = smoke(dir, 1);
  const ExperimentProblem p = build_problem(c);
  CHECK(reference_path(c) == dir / "reference.json");
  const NaturalParams first = obtain_reference(c, p);
  const std::string hash = sha256_file(dir / "reference.json");
  const NaturalParams again = obtain_reference(c, p);
  CHECK(again.values == first.values);
  CHECK(sha256_file(dir / "reference.json") == hash);

  c.reference.path = (dir / "elsewhere.json").string();
  CHECK_THROWS_AS(obtain_reference(c, p), ReferenceError);
  c.reference.path.clear();
  c.reference.compute = false;
  c.output_dir = (dir / "empty").string();
  CHECK_THROWS_AS(obtain_reference(c, p), ReferenceError);
}

TEST_CASE("smoke sweep artifacts and byte-identical reruns") {
  const fs::path a = scratch("smoke_a");
  const fs::path b = scratch("smoke_b");
  std::ostringstream log;
  CHECK(run_experiment(smoke(a, 1), log) == 0);
  CHECK(run_experiment(smoke(b, 3), log) == 0);

  int traces = 0;
  for (const auto& e : fs::directory_iterator(a / "traces")) {
    ++traces;
    const fs::path other = b / "traces" / e.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(read_file(e.path()) == read_file(other));
  }
  CHECK(traces == 4);
  for (const char* name : {"summary.csv", "frontier.csv", "reference.json", "data/hlr.csv", "data/hlr.json"})
    CHECK(read_file(a / name) == read_file(b / name));

  const json m = json::parse(read_file(a / "manifest.json"));
  CHECK(m["config"] == json::parse(to_json(smoke(a, 1))));
  CHECK(m["seeds"]["run_seeds"].size() == 2);
  CHECK(m["settings"].size() == 2);
  for (const auto& [rel, hash] : m["artifacts"].items()) CHECK(sha256_file(a / rel) == hash.get<std::string>());
  CHECK(m["artifacts"].contains("traces/ep-eta-000_seed0.csv"));
  for (const auto& rel : m["timing_dependent"]) CHECK(fs::exists(a / rel.get<std::string>()));

  // summary cost equals the last trace row, and the trace is monotone
  const auto rows = parse_csv(read_file(a / "summary.csv"));
  const auto& head = rows[0];
  const auto col = [&](const std::string& n) {
    const auto k = static_cast<std::size_t>(std::find(head.begin(), head.end(), n) - head.begin());
    REQUIRE(k < head.size());
    return k;
  };
  REQUIRE(rows.size() == 5);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const RunTrace t = parse_trace_csv(read_file(a / rows[r][col("trace")]));
    REQUIRE(!t.rows.empty());
    CHECK(std::to_string(t.rows.back().sampler_steps) == rows[r][col("sampler_steps")]);
    for (std::size_t k = 1; k < t.rows.size(); ++k) {
      CHECK(t.rows[k].iteration == t.rows[k - 1].iteration + 1);
      CHECK(t.rows[k].sampler_steps >= t.rows[k - 1].sampler_steps);
    }
  }

  // the frontier recomputed from disk matches the written table
  CHECK(frontier_csv(frontier_from_dir(a), FrontierAxis::steps) == read_file(a / "frontier.csv"));

  // dataset sidecars
  const auto data = parse_csv(read_file(a / "data/hlr.csv"));
  CHECK(data.size() == 1 + 16 * 20);
  CHECK(data[0].size() == 3 + 4);
  const json meta = json::parse(read_file(a / "data/hlr.json"));
  CHECK(meta["groups"] == 16);
  CHECK(meta["true_z"].size() == 8);
}

TEST_CASE("svg charts") {
  Chart c;
  c.title = "t";
  c.series.push_back({"empty", {}, {}, {}, {}});
  std::ostringstream warn;
  CHECK(render_svg(c, &warn).empty());
  CHECK(warn.str().find("empty") != std::string::npos);
  c.series.push_back({"line", {1, 10, 100}, {1, 0.1, 0.01}, {}, {}});
  const std::string svg = render_svg(c);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("line") != std::string::npos);

  const fs::path dir = scratch("plots");
  std::ostringstream w2;
  CHECK(emit_plots(dir, &w2).empty());
  CHECK(!w2.str().empty());
}

#ifdef STOCHEP_CLI
namespace {
int cli(const std::string& args) {
  const std::string cmd = std::string(STOCHEP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
}  // namespace

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  write_file_atomic(dir / "bad.json", R"({"experiment": "nope"})");
  CHECK(cli("run --config " + (dir / "bad.json").string()) == 2);
  CHECK(cli("run --config " + (dir / "absent.json").string()) == 2);

  write_file_atomic(dir / "noref.json", R"({"experiment": "hlr-synthetic", "scale": "smoke",
      "reference": {"path": ")" + (dir / "none.json").string() + R"(", "compute": false}})");
  CHECK(cli("reference --config " + (dir / "noref.json").string()) == 3);

  write_file_atomic(dir / "fail.json", R"({"experiment": "hlr-synthetic", "scale": "smoke",
      "variants": ["ep-eta"], "n_settings": 1, "n_seeds": 1,
      "search_space": {"ep-eta": {"step": {"dist": "fixed", "value": 5.0}}},
      "budget": {"max_iterations": 50},
      "problem": {"hlr": {"groups": 4, "dim": 2, "rows": 10}},
      "reference": {"stages": [{"n_samp": 200, "iterations": 5, "step": 0.5}]}})");
  CHECK(cli("run --config " + (dir / "fail.json").string() + " --out " + (dir / "fail").string()) == 4);
  const auto summary = read_file(dir / "fail" / "summary.csv");
  CHECK(summary.find("natural domain") != std::string::npos);

  CHECK(cli("schema") == 0);
}
#endif
