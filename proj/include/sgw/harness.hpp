#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgw/spectral.hpp"

namespace sgw {

inline constexpr const char* code_version = "sgweyl 0.1.0";

enum class Stage { spectrum, constants, weyl_fit, phase, oscillatory, tauber, report };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);  // throws ConfigInvalid

// Sizes for a run. `full` is what the acceptance criteria are stated for;
// `smoke` shrinks every stage to seconds, for determinism checks.
enum class Profile { full, smoke };

struct CutoffOverrides {
  std::optional<double> A, C, eps, T, B, k0;
};

struct ExperimentConfig {
  std::string model = "all";         // a catalog id, an alias (A, B, H) or "all"
  std::vector<int> basis_dims{2000};  // models A and B
  int oracle_dim = 400;               // oracle-H
  double tol = 1e-6;                  // eigenvalue trust tolerance
  double lambda_min = 100, lambda_max = 400;  // oscillatory comparison grid, doubling
  CutoffOverrides cutoff;
  std::string output_dir = "sgweyl-out";
  std::string cache_dir = "sgweyl-cache";
  int threads = 1;
  Profile profile = Profile::full;

  // Unknown keys and ill-typed values raise ConfigInvalid.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;  // canonical: sorted keys, every field present
  // SHA-256 of to_json() without the two directories, so a rerun elsewhere
  // carries the same hash
  std::string hash() const;

  // Checks ranges and the cutoff inequalities for the q-B integrand with the
  // overrides applied; raises ConfigInvalid.
  void validate() const;
};

// Resolve "A" / "model-A" etc. to the operator id; throws ConfigInvalid.
std::string resolve_model(const std::string& name);

struct CriterionRecord {
  int id = 0;
  std::string name;
  double predicted = 0, measured = 0, tolerance = 0;
  bool pass = false;
  std::string detail;
};

struct StageResult {
  Stage stage = Stage::spectrum;
  std::vector<CriterionRecord> criteria;
  std::vector<std::string> files;  // relative to output_dir, sorted
};

// Content-addressed spectrum cache keyed by (model, N, tolerance, basis).
// Every entry carries a SHA-256 sidecar checked on read.
class SpectrumCache {
public:
  explicit SpectrumCache(std::filesystem::path dir);
  static std::string key(const std::string& model, int N, double tol, const std::string& basis);
  std::filesystem::path path(const std::string& key) const;
  bool contains(const std::string& key) const;
  SpectrumDataset load(const std::string& key) const;  // CacheCorrupt on mismatch
  void store(const std::string& key, const SpectrumDataset& d) const;

private:
  std::filesystem::path dir_;
};

std::string sha256_hex(const std::string& bytes);
std::string spectrum_csv(const SpectrumDataset& d);
SpectrumDataset parse_spectrum_csv(const std::string& text);

// Each stage writes its artifacts and criteria-<stage>.json into
// output_dir. Wall-clock timings go to timings.log, which is not an artifact.
StageResult run_stage(const ExperimentConfig& cfg, Stage stage);

// Criteria records gathered from the criteria-*.json files of an output
// directory, ordered by id.
std::vector<CriterionRecord> collected_criteria(const std::filesystem::path& output_dir);

// Byte comparison of the CSV and JSON files of two output directories; the
// returned list names files that differ or exist on one side only.
std::vector<std::string> artifact_differences(const std::filesystem::path& a, const std::filesystem::path& b);

std::string criterion_line(const CriterionRecord& r);

}  // namespace sgw
