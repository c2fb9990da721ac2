#pragma once

// Artifact files. CSV schemas carry a "# stochep <kind> v<N>" first line.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochep/ep.hpp"
#include "stochep/expfam.hpp"
#include "stochep/metrics.hpp"
#include "stochep/targets.hpp"

namespace stochep::harness {

/// Reference optimum missing, unreadable or failing its hash (CLI exit code 3).
class ReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes via a sibling temp file and rename, creating parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest text that reads back to the same double; "nan", "inf", "-inf".
std::string format_double(double v);
double parse_double(const std::string& text);

/// iteration, sampler_steps, kl, residual, objective, rollbacks, skipped.
/// Wall time is left out so that reruns are byte-identical.
std::string trace_csv(const RunTrace& trace);
/// iteration, sampler_steps, wall_seconds.
std::string timing_csv(const RunTrace& trace);
/// Reads trace_csv output; with `timing` (timing_csv output) fills wall_seconds.
RunTrace parse_trace_csv(const std::string& trace, const std::string& timing = {});

/// Comment-free CSV table split into cells. The header row is kept.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// variant, estimator, step_size, n_samp, metric, value, stderr, n_reps, seed
std::string bias_csv(const std::vector<BiasReport>& reports);
std::string budget_csv(const std::vector<BudgetEntry>& entries, int budget, std::uint64_t seed);

/// group, row, y, x_1..x_d (one line per labelled row).
std::string hlr_dataset_csv(const HlrDataset& data);
/// Generator config, seed and the drawn z* as JSON.
std::string hlr_dataset_metadata(const HlrDataset& data);

/// JSON file with the parameters, free-form provenance (a JSON object as
/// text) and a SHA-256 over both.
void save_reference(const std::filesystem::path& path, const NaturalParams& params, const std::string& provenance);

struct StoredReference {
  NaturalParams params;
  std::string provenance;  // JSON text
  std::string sha256;
};

/// Throws ReferenceError when missing, malformed or the hash does not match.
StoredReference load_reference(const std::filesystem::path& path);

}  // namespace stochep::harness
