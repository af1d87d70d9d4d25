#include "posereg/cli_io.hpp"

#include "posereg/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace posereg {

namespace {

[[noreturn]] void schema_fail(const std::string& where, const std::string& what) {
  throw SchemaError(where + ": " + what);
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) schema_fail(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) schema_fail(where, "expected a number");
  return j.get<double>();
}

double number_field(const Json& j, const char* key, const std::string& where) {
  return number(field(j, key, where), where + "." + key);
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_array(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    schema_fail(where, "expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = number(j[static_cast<std::size_t>(i)], where);
  return v;
}

template <int N>
std::vector<Eigen::Matrix<double, N, 1>> array_of(const Json& j, const std::string& where) {
  if (!j.is_array()) schema_fail(where, "expected an array");
  std::vector<Eigen::Matrix<double, N, 1>> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(fixed_array<N>(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

template <typename Vec>
Json to_array(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <typename Vec>
Json to_array_list(const std::vector<Vec>& vs) {
  Json a = Json::array();
  for (const auto& v : vs) a.push_back(to_array(v));
  return a;
}

bool bool_field_or(const Json& j, const char* key, bool fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) schema_fail(where + "." + key, "expected a boolean");
  return it->get<bool>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return number(*it, where + "." + key);
}

Json robust_to_json(const RobustParams& p) { return Json::array({p.beta1, p.beta2}); }

RobustParams robust_from_json(const Json& j, const std::string& where) {
  const Eigen::Vector2d v = fixed_array<2>(j, where);
  RobustParams p{v(0), v(1)};
  if (!p.valid()) schema_fail(where, "beta values must be positive");
  return p;
}

Json noise_to_json(const NoiseMeta& n) {
  return {{"sigma_k", n.sigma_k},           {"sigma_e", n.sigma_e},
          {"sigma_s", n.sigma_s},           {"outlier_rate_k", n.outlier_rate_k},
          {"outlier_rate_e", n.outlier_rate_e}, {"outlier_rate_s", n.outlier_rate_s}};
}

NoiseMeta noise_from_json(const Json& j) {
  const std::string w = "noise";
  return {number_field(j, "sigma_k", w),        number_field(j, "sigma_e", w),
          number_field(j, "sigma_s", w),        number_field(j, "outlier_rate_k", w),
          number_field(j, "outlier_rate_e", w), number_field(j, "outlier_rate_s", w)};
}

}  // namespace

Json pose_to_json(const Pose& pose) {
  Json r = Json::array();
  const Matrix3& m = pose.rotation.matrix();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(m(i, j));
  return {{"R", r}, {"t", to_array(pose.translation)}};
}

Pose pose_from_json(const Json& j) {
  const std::string w = "pose";
  const Json& r = field(j, "R", w);
  if (!r.is_array() || r.size() != 9) schema_fail(w + ".R", "expected 9 numbers (row-major)");
  Matrix3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = number(r[static_cast<std::size_t>(i)], w + ".R");
  Pose pose;
  try {
    pose.rotation = Rotation::from_matrix(m);
  } catch (const std::invalid_argument& e) {
    schema_fail(w + ".R", e.what());
  }
  pose.translation = fixed_array<3>(field(j, "t", w), w + ".t");
  return pose;
}

Json model_to_json(const ModelDocument& doc) {
  const ObjectModel& m = doc.model;
  Json edges = Json::array();
  for (const auto& [a, b] : m.edges) edges.push_back(Json::array({a, b}));
  Json j = {{"name", doc.name},
            {"keypoints", to_array_list(m.keypoints)},
            {"edges", edges},
            {"symmetry", {{"normal", to_array(m.symmetry.normal)}, {"point", to_array(m.symmetry.point)}}},
            {"diameter", m.diameter},
            {"pose_ambiguity", m.has_pose_ambiguity}};
  if (!m.surface_samples.empty()) j["surface_samples"] = to_array_list(m.surface_samples);
  return j;
}

ModelDocument model_from_json(const Json& j) {
  const std::string w = "model";
  ModelDocument doc;
  if (auto it = j.find("name"); it != j.end()) {
    if (!it->is_string()) schema_fail(w + ".name", "expected a string");
    doc.name = it->get<std::string>();
  }
  std::vector<Vector3> keypoints = array_of<3>(field(j, "keypoints", w), w + ".keypoints");
  std::vector<std::pair<int, int>> edges;
  if (auto it = j.find("edges"); it != j.end()) {
    if (!it->is_array()) schema_fail(w + ".edges", "expected an array");
    for (const auto& e : *it) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
        schema_fail(w + ".edges", "expected [i, j] integer pairs");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
  }
  const Json& sym = field(j, "symmetry", w);
  SymmetryPlane plane{fixed_array<3>(field(sym, "normal", w + ".symmetry"), w + ".symmetry.normal"),
                      fixed_array<3>(field(sym, "point", w + ".symmetry"), w + ".symmetry.point")};
  const double norm = plane.normal.norm();
  if (!(std::abs(norm - 1.0) <= 1e-6)) throw ModelInvalid("symmetry normal is not unit length");
  plane.normal /= norm;
  std::vector<Vector3> samples;
  if (auto it = j.find("surface_samples"); it != j.end()) samples = array_of<3>(*it, w + ".surface_samples");
  const bool ambiguity = bool_field_or(j, "pose_ambiguity", false, w);

  doc.model = make_model(std::move(keypoints), std::move(edges), plane, std::move(samples), ambiguity);
  if (auto it = j.find("diameter"); it != j.end()) {
    const double d = number(*it, w + ".diameter");
    if (!(d > 0.0)) throw ModelInvalid("model diameter must be positive");
    doc.model.diameter = d;
  }
  return doc;
}

Json scene_to_json(const PixelScene& s) {
  Json sym = Json::array();
  for (const auto& c : s.sym_corrs) sym.push_back(Json::array({c[0], c[1], c[2], c[3]}));
  Json j = {{"intrinsics",
             {{"fx", s.intrinsics.fx}, {"fy", s.intrinsics.fy}, {"cx", s.intrinsics.cx}, {"cy", s.intrinsics.cy}}},
            {"keypoints_2d", to_array_list(s.keypoints_2d)},
            {"edges_2d", to_array_list(s.edges_2d)},
            {"sym_corrs", sym}};
  if (s.gt_pose) j["gt_pose"] = pose_to_json(*s.gt_pose);
  if (s.noise_meta) j["noise"] = noise_to_json(*s.noise_meta);
  return j;
}

PixelScene scene_from_json(const Json& j) {
  const std::string w = "scene";
  PixelScene s;
  const Json& intr = field(j, "intrinsics", w);
  s.intrinsics = {number_field(intr, "fx", w + ".intrinsics"), number_field(intr, "fy", w + ".intrinsics"),
                  number_field(intr, "cx", w + ".intrinsics"), number_field(intr, "cy", w + ".intrinsics")};
  s.keypoints_2d = array_of<2>(field(j, "keypoints_2d", w), w + ".keypoints_2d");
  s.edges_2d = array_of<2>(field(j, "edges_2d", w), w + ".edges_2d");
  for (const auto& v : array_of<4>(field(j, "sym_corrs", w), w + ".sym_corrs"))
    s.sym_corrs.push_back({v(0), v(1), v(2), v(3)});
  if (auto it = j.find("gt_pose"); it != j.end() && !it->is_null()) s.gt_pose = pose_from_json(*it);
  if (auto it = j.find("noise"); it != j.end() && !it->is_null()) s.noise_meta = noise_from_json(*it);
  return s;
}

Json settings_to_json(const SolverSettings& s) {
  const RefineConfig& r = s.refine_config;
  return {{"name", s.name},
          {"alpha_e", s.alpha_e},
          {"alpha_s", s.alpha_s},
          {"use_edges", s.use_edges},
          {"use_symmetry", s.use_symmetry},
          {"refine", s.refine},
          {"betas",
           {{"keypoint", robust_to_json(r.objective.betas.keypoint)},
            {"edge", robust_to_json(r.objective.betas.edge)},
            {"symmetry", robust_to_json(r.objective.betas.symmetry)}}},
          {"max_iters", r.max_iters},
          {"step_tol", r.step_tol}};
}

SolverSettings settings_from_json(const Json& j, const SolverSettings& base) {
  const std::string w = "config";
  if (!j.is_object()) schema_fail(w, "expected an object");
  SolverSettings s = base;
  if (auto it = j.find("name"); it != j.end()) {
    if (!it->is_string()) schema_fail(w + ".name", "expected a string");
    s.name = it->get<std::string>();
  }
  s.alpha_e = number_or(j, "alpha_e", s.alpha_e, w);
  s.alpha_s = number_or(j, "alpha_s", s.alpha_s, w);
  if (!(s.alpha_e >= 0.0 && s.alpha_s >= 0.0)) schema_fail(w, "alpha values must be non-negative");
  s.use_edges = bool_field_or(j, "use_edges", s.use_edges, w);
  s.use_symmetry = bool_field_or(j, "use_symmetry", s.use_symmetry, w);
  s.refine = bool_field_or(j, "refine", s.refine, w);
  if (auto it = j.find("betas"); it != j.end()) {
    GroupBetas& b = s.refine_config.objective.betas;
    if (auto k = it->find("keypoint"); k != it->end()) b.keypoint = robust_from_json(*k, w + ".betas.keypoint");
    if (auto e = it->find("edge"); e != it->end()) b.edge = robust_from_json(*e, w + ".betas.edge");
    if (auto y = it->find("symmetry"); y != it->end()) b.symmetry = robust_from_json(*y, w + ".betas.symmetry");
  }
  if (auto it = j.find("max_iters"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() < 1) schema_fail(w + ".max_iters", "expected a positive integer");
    s.refine_config.max_iters = it->get<int>();
  }
  s.refine_config.step_tol = number_or(j, "step_tol", s.refine_config.step_tol, w);
  return s;
}

Json result_to_json(const ResultDocument& doc) {
  Json j = {{"tool_version", doc.tool_version},
            {"init_pose", pose_to_json(doc.init_pose)},
            {"refined_pose", doc.refined_pose ? pose_to_json(*doc.refined_pose) : Json(nullptr)},
            {"iterations", doc.iterations},
            {"objective_trace", doc.objective_trace},
            {"timing_ms", doc.timing_ms},
            {"solver_config", settings_to_json(doc.solver_config)}};
  if (doc.metrics) {
    j["metrics"] = {{"rotation_error_rad", doc.metrics->rotation_error},
                    {"translation_error_rel", doc.metrics->translation_error},
                    {"add_s", doc.metrics->add_s},
                    {"add_s_pass", doc.metrics->add_s_pass}};
  }
  return j;
}

ResultDocument result_from_json(const Json& j) {
  const std::string w = "result";
  ResultDocument doc;
  if (auto it = j.find("tool_version"); it != j.end() && it->is_string()) doc.tool_version = it->get<std::string>();
  doc.init_pose = pose_from_json(field(j, "init_pose", w));
  if (auto it = j.find("refined_pose"); it != j.end() && !it->is_null()) doc.refined_pose = pose_from_json(*it);
  const Json& iters = field(j, "iterations", w);
  if (!iters.is_number_integer()) schema_fail(w + ".iterations", "expected an integer");
  doc.iterations = iters.get<int>();
  const Json& trace = field(j, "objective_trace", w);
  if (!trace.is_array()) schema_fail(w + ".objective_trace", "expected an array");
  for (const auto& v : trace) doc.objective_trace.push_back(number(v, w + ".objective_trace"));
  doc.timing_ms = number_or(j, "timing_ms", 0.0, w);
  if (auto it = j.find("solver_config"); it != j.end()) doc.solver_config = settings_from_json(*it);
  if (auto it = j.find("metrics"); it != j.end() && !it->is_null()) {
    const std::string mw = w + ".metrics";
    ResultMetrics m;
    m.rotation_error = number_field(*it, "rotation_error_rad", mw);
    m.translation_error = number_field(*it, "translation_error_rel", mw);
    m.add_s = number_field(*it, "add_s", mw);
    m.add_s_pass = bool_field_or(*it, "add_s_pass", false, mw);
    doc.metrics = m;
  }
  return doc;
}

Json metrics_report_to_json(const MetricsReport& report) {
  Json arms = Json::array();
  for (const auto& a : report.arms) {
    arms.push_back({{"name", a.name},
                    {"scenes", a.scenes},
                    {"failures", a.failures},
                    {"add_s_accuracy", a.add_s_accuracy},
                    {"mean_rotation_rad", a.mean_rotation},
                    {"median_rotation_rad", a.median_rotation},
                    {"mean_translation_rel", a.mean_translation},
                    {"median_translation_rel", a.median_translation}});
  }
  return {{"tool_version", kToolVersion}, {"arms", arms}, {"wall_clock_ms", report.wall_clock_ms}};
}

Json read_json_file(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw FileNotFound("file not found: " + path);
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open file: " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write file: " + path);
  out << text;
  if (!out) throw Error(ErrorKind::Data, "failed writing file: " + path);
}

void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace posereg
