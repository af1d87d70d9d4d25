#pragma once

#include "posereg/geometry.hpp"
#include "posereg/hyper_tuner.hpp"
#include "posereg/observations.hpp"
#include "posereg/pipeline.hpp"
#include "posereg/synth_bench.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace posereg {

inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

struct ModelDocument {
  std::string name;
  ObjectModel model;
};

/// Solver metrics attached to a result when the scene carries a ground truth.
struct ResultMetrics {
  double rotation_error = 0.0;  // radians
  double translation_error = 0.0;
  double add_s = 0.0;
  bool add_s_pass = false;
};

struct ResultDocument {
  Pose init_pose;
  std::optional<Pose> refined_pose;
  int iterations = 0;
  std::vector<double> objective_trace;
  std::optional<ResultMetrics> metrics;
  double timing_ms = 0.0;
  SolverSettings solver_config;
  std::string tool_version = kToolVersion;
};

// Every *_from_json throws SchemaError on malformed input. Models with a
// normal within 1e-6 of unit length are renormalized; others are rejected.
Json pose_to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json model_to_json(const ModelDocument& doc);
ModelDocument model_from_json(const Json& j);

Json scene_to_json(const PixelScene& scene);
PixelScene scene_from_json(const Json& j);

Json settings_to_json(const SolverSettings& s);
/// Fields absent from `j` keep their value from `base`.
SolverSettings settings_from_json(const Json& j, const SolverSettings& base = {});

Json result_to_json(const ResultDocument& doc);
ResultDocument result_from_json(const Json& j);

Json metrics_report_to_json(const MetricsReport& report);

/// Throws FileNotFound or SchemaError.
Json read_json_file(const std::string& path);
/// Throws Error(Data) when the file cannot be written.
void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const Json& j);

}  // namespace posereg
