#include "stochep/harness/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace stochep::harness {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan" || text.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

std::string trace_csv(const RunTrace& trace) {
  std::string out = "# stochep trace v1\niteration,sampler_steps,kl,residual,objective,rollbacks,skipped\n";
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(r.iteration) + ',' + std::to_string(r.sampler_steps) + ',' + format_double(r.kl) + ',' +
           format_double(r.residual) + ',' + format_double(r.objective) + ',' + std::to_string(r.rollbacks) + ',' +
           std::to_string(r.skipped) + '\n';
  }
  return out;
}

std::string timing_csv(const RunTrace& trace) {
  std::string out = "# stochep timing v1\niteration,sampler_steps,wall_seconds\n";
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(r.iteration) + ',' + std::to_string(r.sampler_steps) + ',' + format_double(r.wall_seconds) +
           '\n';
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

RunTrace parse_trace_csv(const std::string& trace, const std::string& timing) {
  const auto rows = parse_csv(trace);
  if (rows.empty() || rows[0].size() != 7 || rows[0][0] != "iteration") throw std::invalid_argument("not a trace CSV");
  RunTrace out;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& c = rows[k];
    if (c.size() != 7) throw std::invalid_argument("trace CSV row " + std::to_string(k) + " has the wrong width");
    TraceRow r;
    r.iteration = std::stoi(c[0]);
    r.sampler_steps = std::stoull(c[1]);
    r.kl = parse_double(c[2]);
    r.residual = parse_double(c[3]);
    r.objective = parse_double(c[4]);
    r.rollbacks = std::stoi(c[5]);
    r.skipped = std::stoi(c[6]);
    r.wall_seconds = std::numeric_limits<double>::quiet_NaN();
    out.rows.push_back(r);
  }
  if (!timing.empty()) {
    const auto t = parse_csv(timing);
    if (t.size() != rows.size()) throw std::invalid_argument("timing CSV does not match its trace");
    for (std::size_t k = 1; k < t.size(); ++k) out.rows[k - 1].wall_seconds = parse_double(t[k].at(2));
  }
  return out;
}

namespace {

std::string row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out += ',';
    out += cells[k];
  }
  return out + '\n';
}

}  // namespace

std::string bias_csv(const std::vector<BiasReport>& reports) {
  std::string out = "# stochep bias v1\nvariant,estimator,step_size,n_samp,metric,value,stderr,n_reps,seed\n";
  for (const BiasReport& r : reports) {
    const std::string v = to_string(r.variant);
    const std::string e = to_string(r.options.estimator);
    const std::string n = std::to_string(r.options.n_samp);
    const std::string reps = std::to_string(r.n_reps);
    const std::string seed = std::to_string(r.seed);
    for (std::size_t s = 0; s < r.steps.size(); ++s) {
      const std::string step = format_double(r.steps[s]);
      out += row({v, e, step, n, "bias", format_double(r.bias[s]), format_double(r.stderr_[s]), reps, seed});
      out += row({v, e, step, n, "bias_null", format_double(r.null_level[s]), "", reps, seed});
      out += row({v, e, step, n, "bias_z", format_double(r.z_score[s]), "", reps, seed});
      out += row({v, e, step, n, "failures", std::to_string(r.failures[s]), "", reps, seed});
    }
    out += row({v, e, "", n, "slope", format_double(r.slope), format_double(r.slope_stderr), reps, seed});
    out += row({v, e, "", n, "slope_points", std::to_string(r.fitted_points), "", reps, seed});
  }
  return out;
}

std::string budget_csv(const std::vector<BudgetEntry>& entries, int budget, std::uint64_t seed) {
  std::string out = "# stochep budget v1 budget=" + std::to_string(budget) +
                    "\nvariant,estimator,step_size,n_samp,metric,value,stderr,n_reps,seed\n";
  for (const BudgetEntry& e : entries) {
    const std::string v = to_string(e.variant);
    const std::string est = to_string(e.estimator);
    const std::string step = format_double(e.step);
    const std::string n = std::to_string(e.n_samp);
    const std::string reps = std::to_string(e.n_reps);
    const std::string sd = std::to_string(seed);
    out += row({v, est, step, n, "decrease", format_double(e.mean_decrease), format_double(e.stderr_), reps, sd});
    out += row({v, est, step, n, "failures", std::to_string(e.failures), "", reps, sd});
  }
  return out;
}

std::string hlr_dataset_csv(const HlrDataset& data) {
  const int d = data.config.dim;
  std::string out = "group,row,y";
  for (int j = 1; j <= d; ++j) out += ",x_" + std::to_string(j);
  out += "\n";
  for (std::size_t g = 0; g < data.covariates.size(); ++g) {
    const Matrix& x = data.covariates[g];
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      out += std::to_string(g) + "," + std::to_string(r) + "," + (data.labels[g][r] > 0.5 ? "1" : "0");
      for (int j = 0; j < d; ++j) out += "," + format_double(x(r, j));
      out += "\n";
    }
  }
  return out;
}

std::string hlr_dataset_metadata(const HlrDataset& data) {
  const auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json m;
  m["format"] = "stochep hlr dataset v1";
  m["seed"] = data.seed;
  m["groups"] = data.config.groups;
  m["dim"] = data.config.dim;
  m["rows"] = data.config.rows;
  m["prior_mean"] = vec(data.config.resolved_prior_mean());
  m["prior_variance"] = vec(data.config.resolved_prior_variance());
  m["covariates"] = "iid standard normal";
  m["true_z"] = vec(data.true_z);
  return m.dump(2) + "\n";
}

namespace {

json reference_body(const NaturalParams& params, const json& provenance) {
  json body;
  body["format"] = "stochep reference v1";
  body["family"] = to_string(params.family.kind());
  body["dim_z"] = params.family.dim_z();
  body["values"] = std::vector<double>(params.values.data(), params.values.data() + params.values.size());
  body["provenance"] = provenance;
  return body;
}

}  // namespace

void save_reference(const fs::path& path, const NaturalParams& params, const std::string& provenance) {
  json body = reference_body(params, json::parse(provenance));
  const std::string hash = sha256_hex(body.dump());
  body["sha256"] = hash;
  write_file_atomic(path, body.dump(2) + "\n");
}

StoredReference load_reference(const fs::path& path) {
  if (!fs::exists(path)) throw ReferenceError("reference file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const std::exception& e) {
    throw ReferenceError("reference file " + path.string() + " is unreadable: " + e.what());
  }
  try {
    const std::string stored = doc.at("sha256").get<std::string>();
    const FamilyKind kind = family_kind_from_string(doc.at("family").get<std::string>());
    const int dim_z = doc.at("dim_z").get<int>();
    const Family family = kind == FamilyKind::gaussian_dense ? Family::gaussian_dense(dim_z) : Family::gaussian_diagonal(dim_z);
    const auto values = doc.at("values").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != family.dim_s()) throw ReferenceError("parameter vector has the wrong length");
    NaturalParams params{family, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()))};
    const std::string actual = sha256_hex(reference_body(params, doc.at("provenance")).dump());
    if (actual != stored) throw ReferenceError("reference file " + path.string() + " fails its SHA-256 check");
    return {params, doc.at("provenance").dump(), stored};
  } catch (const ReferenceError&) {
    throw;
  } catch (const std::exception& e) {
    throw ReferenceError("reference file " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace stochep::harness
