#pragma once

// Experiment configuration: JSON files, shipped presets and validation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctscore/estimation.hpp"
#include "ctscore/model.hpp"
#include "ctscore/multilevel.hpp"

namespace ctscore {

enum class ExperimentKind { kSimulate, kScoreDirect, kScoreBridge, kScoreMultilevel, kEstimate, kBenchmark };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct DataSpec {
  /// "simulate" or "csv".
  std::string source = "simulate";
  int level = 10;
  /// Parameter generating simulated data; defaults to the experiment theta.
  std::optional<Theta> theta;
  double y_star = 0.0;
  /// Fresh dataset for every replication.
  bool per_replication = false;
  std::string path;
  int seconds_per_unit = 512;
  bool take_log = false;
};

/// Multilevel settings: explicit particle counts or the allocation formula.
struct MLSpec {
  int l_star = 4;
  int L = 8;
  double rho = 0.14;
  double beta = 1.0;
  double scale = 1.0;
  std::vector<std::size_t> particles;

  MLConfig resolve() const;
};

struct BenchmarkSpec {
  /// Top levels L swept by every method.
  std::vector<int> levels;
  /// "ml", "bridge" and/or "direct".
  std::vector<std::string> methods{"ml", "bridge"};
  /// "kalman" (model 1) or "bridge".
  std::string reference = "kalman";
  int reference_level = 10;
  std::size_t reference_particles = 2000;
  /// Single-level particle counts: floor(scale 2^L).
  double bridge_scale = 1.0;
  double direct_scale = 4.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kScoreDirect;
  int model_id = 1;
  std::map<std::string, double> fixed{{"kappa", 2.0}, {"sigma", 0.3}};
  std::optional<ThetaDomain> box;
  Theta theta;   // score experiments and data generation
  Theta theta0;  // estimation start
  double x_star = 0.2;
  int level = 10;
  std::size_t particles = 1000;
  int horizon = 50;
  MLSpec ml;
  double proposal_scale = 1.0;

  // estimate
  std::string backend = "direct";
  std::string mode = "online";
  int iterations = 50;
  StepSchedule schedule;
  double fd_step = 1e-5;

  BenchmarkSpec benchmark;
  DataSpec data;

  std::uint64_t seed = 1;
  int replications = 16;
  int workers = 1;
  std::string output_dir = "out";

  ModelSpec model() const;
  BackendConfig backend_config() const;
  /// Theta used to generate simulated data.
  Theta data_theta() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses JSON text. Syntax errors report line and column; semantic errors
/// name the key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON form of the configuration.
std::string to_json(const ExperimentConfig& config);
/// FNV-1a hash of the canonical form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

}  // namespace ctscore
