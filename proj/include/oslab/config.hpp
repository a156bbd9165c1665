#pragma once

#include "oslab/fields.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oslab {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { OsgoodCertify, MollifyLadder, FlowCauchy, DensityBound, FpeDuality };

std::string to_string(ExperimentKind k);
std::optional<ExperimentKind> parse_experiment(const std::string& s);

struct MeasureSpec {
  bool lebesgue = false;
  double q = 2.0;
  std::vector<double> lo{-1.0};
  std::vector<double> hi{1.0};
};

struct GridSpec {
  std::vector<double> lo{-4.0};
  std::vector<double> hi{4.0};
  std::vector<int> cells{128};
};

struct FpeSpec {
  std::string scheme = "crank-nicolson";
  int resolution = 256;
  double dt = 0.01;
  std::string boundary = "zero-flux";
  int snapshots = 4;
  // Also run the two-discretization refinement study.
  bool uniqueness = false;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ExperimentKind experiment = ExperimentKind::FpeDuality;
  std::string field = "ou";
  std::string modulus = "loglinear";
  int dim_d = 1;
  int dim_m = 1;
  double horizon = 1.0;
  int steps = 256;
  std::size_t particles = 1000;
  int paths = 16;
  std::vector<int> ladder;
  MeasureSpec measure;
  GridSpec grid;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output;
  FieldParams field_params;
  int mollifier_points = 32;
  FpeSpec fpe;
  // osgood-certify
  std::size_t pairs = 100000;
  double radius = 1.0;
  double margin = 1.25;
  std::vector<double> epsilons{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  // flow-cauchy / mollify-ladder
  std::vector<double> deltas{1.0, 0.1, 0.01};
  double final_ratio = 0.1;
  // density-bound
  std::vector<double> moments{1.0, 2.0};
  double central_fraction = 0.8;
  double slack = 0.15;
  std::optional<double> bandwidth;
};

// Parses and validates; throws ConfigError listing every offending key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

// Static checks only; empty when the configuration is runnable.
std::vector<std::string> validate_json(const nlohmann::json& j);
std::vector<std::string> validate(const ExperimentConfig& c);

// SHA-256 of the canonical JSON serialization.
std::string config_hash(const ExperimentConfig& c);

// Default configuration of a canned experiment (the desk-scale setting).
ExperimentConfig default_config(ExperimentKind kind);

}  // namespace oslab
