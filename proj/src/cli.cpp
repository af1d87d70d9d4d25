#include "posereg/cli.hpp"

#include "posereg/cli_io.hpp"
#include "posereg/errors.hpp"
#include "posereg/hyper_tuner.hpp"
#include "posereg/pipeline.hpp"
#include "posereg/stability_lab.hpp"
#include "posereg/synth_bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace posereg {

namespace {

constexpr double kRadToDeg = 57.295779513082320876798;

namespace fs = std::filesystem;

struct NoiseFlags {
  double sigma = -1.0;
  double sigma_k = -1.0, sigma_e = -1.0, sigma_s = -1.0;
  double outlier_k = 0.0, outlier_e = 0.0, outlier_s = 0.0;
  int n_sym = 50;
  double z_min = 2.0, z_max = 6.0;

  void add_to(CLI::App* app) {
    app->add_option("--sigma", sigma, "Noise std for every group (normalized units)");
    app->add_option("--sigma-k", sigma_k, "Keypoint noise std");
    app->add_option("--sigma-e", sigma_e, "Edge noise std");
    app->add_option("--sigma-s", sigma_s, "Symmetry noise std");
    app->add_option("--kp-outliers", outlier_k, "Keypoint outlier fraction");
    app->add_option("--edge-outliers", outlier_e, "Edge outlier fraction");
    app->add_option("--sym-outliers", outlier_s, "Symmetry outlier fraction");
    app->add_option("--n-sym", n_sym, "Symmetry pairs per scene");
    app->add_option("--z-min", z_min, "Minimum depth in model diameters");
    app->add_option("--z-max", z_max, "Maximum depth in model diameters");
  }

  GenConfig gen_config(std::uint64_t seed) const {
    GenConfig g;
    const double base = sigma >= 0.0 ? sigma : 0.0;
    g.noise = {sigma_k >= 0.0 ? sigma_k : base, sigma_e >= 0.0 ? sigma_e : base,
               sigma_s >= 0.0 ? sigma_s : base};
    g.outlier_rates = {outlier_k, outlier_e, outlier_s};
    g.n_sym_corrs = n_sym;
    g.z_min = z_min;
    g.z_max = z_max;
    g.seed = seed;
    g.validate();
    return g;
  }
};

struct SolverFlags {
  std::string config_path;
  std::optional<double> alpha_e, alpha_s;
  std::vector<double> beta_k, beta_e, beta_s;
  bool no_refine = false, no_edges = false, no_symmetry = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "Solver config JSON (e.g. from `tune`)");
    app->add_option("--alpha-e", alpha_e, "Edge weight in the initialization");
    app->add_option("--alpha-s", alpha_s, "Symmetry weight in the initialization");
    app->add_option("--beta-k", beta_k, "Keypoint robust parameters b1,b2")->expected(2)->delimiter(',');
    app->add_option("--beta-e", beta_e, "Edge robust parameters b1,b2")->expected(2)->delimiter(',');
    app->add_option("--beta-s", beta_s, "Symmetry robust parameters b1,b2")->expected(2)->delimiter(',');
    app->add_flag("--no-refine", no_refine, "Skip the robust refinement");
    app->add_flag("--no-edges", no_edges, "Drop edge vectors");
    app->add_flag("--no-symmetry", no_symmetry, "Drop symmetry correspondences");
  }

  SolverSettings settings() const {
    SolverSettings s;
    if (!config_path.empty()) s = settings_from_json(read_json_file(config_path));
    if (alpha_e) s.alpha_e = *alpha_e;
    if (alpha_s) s.alpha_s = *alpha_s;
    if (s.alpha_e < 0.0 || s.alpha_s < 0.0) throw InvalidConfig("alpha values must be non-negative");
    GroupBetas& b = s.refine_config.objective.betas;
    auto set = [](RobustParams& p, const std::vector<double>& v, const char* flag) {
      if (v.empty()) return;
      p = {v[0], v[1]};
      if (!p.valid()) throw InvalidConfig(std::string(flag) + " values must be positive");
    };
    set(b.keypoint, beta_k, "--beta-k");
    set(b.edge, beta_e, "--beta-e");
    set(b.symmetry, beta_s, "--beta-s");
    if (no_refine) s.refine = false;
    if (no_edges) s.use_edges = false;
    if (no_symmetry) s.use_symmetry = false;
    return s;
  }
};

ObjectModel load_model(const std::string& path) { return model_from_json(read_json_file(path)).model; }

// Accepts a pose document, a result document (refined pose preferred) or a
// scene document carrying gt_pose.
Pose load_pose(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.contains("R")) return pose_from_json(j);
  if (j.contains("refined_pose") && !j["refined_pose"].is_null()) return pose_from_json(j["refined_pose"]);
  if (j.contains("init_pose")) return pose_from_json(j["init_pose"]);
  if (j.contains("gt_pose")) return pose_from_json(j["gt_pose"]);
  throw SchemaError(path + ": no pose found");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_text_file(path, text);
}

std::ostream& summary_stream(const std::string& out_path) {
  return (out_path.empty() || out_path == "-") ? std::cerr : std::cout;
}

std::vector<std::string> scene_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw FileNotFound("directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04zu.json", i);
  return buf;
}

int run_generate(const std::string& model_path, std::optional<std::uint64_t> procedural,
                 const std::string& out_dir, std::size_t count, std::uint64_t seed, const NoiseFlags& nf) {
  ObjectModel model;
  if (procedural) {
    model = make_procedural_model(*procedural);
    write_json_file(model_path, model_to_json({"procedural-" + std::to_string(*procedural), model}));
  } else {
    model = load_model(model_path);
  }
  const GenConfig gen = nf.gen_config(seed);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, 2 * i));
    const Pose gt = sample_pose(model, gen, rng);
    GenConfig cfg = gen;
    cfg.seed = derive_seed(seed, 2 * i + 1);
    const Scene scene = generate_scene(model, gt, cfg);
    write_json_file((fs::path(out_dir) / scene_name(i)).string(), scene_to_json(to_pixel_scene(scene)));
  }
  std::cerr << "wrote " << count << " scene(s) to " << out_dir << "\n";
  return 0;
}

int run_solve(const std::string& model_path, const std::string& scene_path, const SolverFlags& sf,
              const std::string& out_path) {
  const ObjectModel model = load_model(model_path);
  const Scene scene = ingest_scene(scene_from_json(read_json_file(scene_path)), model);
  const SolverSettings settings = sf.settings();

  const auto start = std::chrono::steady_clock::now();
  const SolveResult result = solve_scene(model, scene, settings);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  ResultDocument doc;
  doc.init_pose = result.init_pose;
  if (result.refinement) {
    doc.refined_pose = result.refinement->pose;
    doc.iterations = result.refinement->iterations;
    doc.objective_trace = result.refinement->objective_trace;
  }
  doc.timing_ms = ms;
  doc.solver_config = settings;
  std::ostream& summary = summary_stream(out_path);
  if (scene.gt_pose) {
    const Pose& est = result.final_pose();
    const PoseErrors err = pose_errors(*scene.gt_pose, est, model.diameter);
    ResultMetrics m{err.rotation, err.translation, add_s(model, *scene.gt_pose, est), false};
    m.add_s_pass = m.add_s < kAddThreshold * model.diameter;
    doc.metrics = m;
    summary << "rotation error " << err.rotation * kRadToDeg << " deg, translation error "
            << err.translation << " diameters, ADD(-S) " << (m.add_s_pass ? "pass" : "fail") << "\n";
  }
  emit(out_path, result_to_json(doc).dump(2) + "\n");
  return 0;
}

int run_tune(const std::string& model_path, const std::string& scenes_dir, const SolverFlags& sf,
             const std::string& out_path, const TunerConfig& tc) {
  ValidationSet val;
  val.model = load_model(model_path);
  for (const auto& f : scene_files(scenes_dir))
    val.scenes.push_back(ingest_scene(scene_from_json(read_json_file(f)), val.model));
  if (val.scenes.empty()) throw FileNotFound("no scene files in " + scenes_dir);

  SolverSettings settings = sf.settings();
  TunerConfig cfg = tc;
  cfg.beta_start = settings.refine_config.objective.betas;
  const AlphaTuneResult alphas = tune_alphas(val, cfg);
  const BetaTuneResult betas = tune_betas(val, cfg);
  settings.alpha_e = alphas.alpha_e;
  settings.alpha_s = alphas.alpha_s;
  settings.refine_config.objective.betas = betas.betas;

  std::ostream& summary = summary_stream(out_path);
  summary << "alpha objective " << alphas.start_objective << " -> " << alphas.objective << "\n"
          << "beta objective " << betas.start_objective << " -> " << betas.objective << "\n";
  if (!betas.skipped_scenes.empty())
    summary << betas.skipped_scenes.size() << " scene(s) skipped: singular Hessian\n";
  emit(out_path, settings_to_json(settings).dump(2) + "\n");
  return 0;
}

int run_bench(const std::string& model_path, std::uint64_t model_seed, std::size_t n_scenes,
              std::uint64_t seed, const NoiseFlags& nf, const SolverFlags& sf, const std::string& csv_path,
              const std::string& report_path) {
  const ObjectModel model = model_path.empty() ? make_procedural_model(model_seed) : load_model(model_path);
  const MetricsReport report = run_benchmark(model, n_scenes, nf.gen_config(seed), ablation_arms(sf.settings()));
  emit(csv_path, benchmark_csv(report));
  if (!report_path.empty()) write_json_file(report_path, metrics_report_to_json(report));
  for (const auto& a : report.arms) {
    std::fprintf(stderr, "%-20s ADD(-S) %.3f  mean rot %.4f deg  median rot %.4f deg  mean trans %.5f  failures %zu\n",
                 a.name.c_str(), a.add_s_accuracy, a.mean_rotation * kRadToDeg, a.median_rotation * kRadToDeg,
                 a.mean_translation, a.failures);
  }
  return 0;
}

struct StabilityFlags {
  std::string out_dir;
  double delta = 0.5;
  int corr_grid = 400;
  double a8_sigma_k = 0.01, a8_sigma_e = 0.02;
  double mc_sigma = 1e-3;
  std::size_t trials = 2000;
  std::uint64_t model_seed = 7;
  std::uint64_t seed = 0;
};

int run_stability(const StabilityFlags& f) {
  fs::create_directories(f.out_dir);
  const SquareExample ex = square_example(f.delta, f.corr_grid);
  write_text_file((fs::path(f.out_dir) / "square.csv").string(), square_csv(ex));

  const A8Scan scan = a8_scan(f.delta, f.a8_sigma_k, f.a8_sigma_e, log_grid(1e-3, 1e3, 101));
  write_text_file((fs::path(f.out_dir) / "a8.csv").string(), a8_csv(scan));

  const ObjectModel model = make_procedural_model(f.model_seed);
  GenConfig gen;
  gen.swap_sym_pairs = false;
  gen.seed = derive_seed(f.seed, 1);
  std::mt19937_64 rng(derive_seed(f.seed, 0));
  const Pose gt = sample_pose(model, gen, rng);
  const Scene base = generate_scene(model, gt, gen);
  const NoiseModel noise{f.mc_sigma, f.mc_sigma, f.mc_sigma};
  const RefineConfig refine = quadratic_refine_config();
  const auto [be, bs] = effective_group_weights(base, refine.objective);
  StabilityReport rep = predict_covariance(model, gt, base, be, bs, noise);
  const MonteCarloResult mc = monte_carlo_covariance(model, gt, base, noise, f.trials, f.seed, refine);
  rep.empirical_cov = mc.covariance;
  rep.trials = mc.trials_used;
  write_text_file((fs::path(f.out_dir) / "covariance.csv").string(), covariance_csv(rep));

  std::cerr << "a8 minimizer " << scan.best_beta_e << " (covariance scan " << scan.best_beta_cov << ")\n"
            << "Monte-Carlo trials used " << mc.trials_used << ", failures " << mc.failures << "\n";
  return 0;
}

int run_metrics(const std::string& model_path, const std::string& gt_path, const std::string& est_path,
                const std::string& out_path) {
  const ObjectModel model = load_model(model_path);
  const Pose gt = load_pose(gt_path);
  const Pose est = load_pose(est_path);
  const PoseErrors err = pose_errors(gt, est, model.diameter);
  const double add_value = add_distance(model, gt, est);
  const double add_s_value = add_s(model, gt, est);
  const Json j = {{"rotation_error_rad", err.rotation},
                  {"translation_error_rel", err.translation},
                  {"add", add_value},
                  {"add_s", add_s_value},
                  {"add_s_pass", add_s_value < kAddThreshold * model.diameter}};
  summary_stream(out_path) << "rotation error " << err.rotation * kRadToDeg << " deg, translation error "
                           << err.translation << " diameters\n";
  emit(out_path, j.dump(2) + "\n");
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Numerical: return 3;
  }
  return 3;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Pose regression from keypoints, edge vectors and symmetry correspondences"};
  app.require_subcommand(1);

  std::string model_path, scene_path, out_path, out_dir, scenes_dir, csv_path, report_path, gt_path, est_path;
  std::optional<std::uint64_t> procedural;
  std::size_t count = 1, n_scenes = 100;
  std::uint64_t seed = 0, model_seed = 7;
  NoiseFlags noise;
  SolverFlags solver;
  TunerConfig tuner;
  StabilityFlags stab;

  CLI::App* gen = app.add_subcommand("generate", "Synthesize scene files for a model");
  gen->add_option("--model", model_path, "Model JSON (written when --procedural is given)")->required();
  gen->add_option("--procedural", procedural, "Create a procedural model with this seed");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--count", count, "Number of scenes");
  gen->add_option("--seed", seed, "Base seed");
  noise.add_to(gen);

  CLI::App* solve = app.add_subcommand("solve", "Estimate the pose for one scene");
  solve->add_option("--model", model_path, "Model JSON")->required();
  solve->add_option("--scene", scene_path, "Scene JSON")->required();
  solve->add_option("--out", out_path, "Result JSON (default: stdout)");
  solver.add_to(solve);

  CLI::App* tune = app.add_subcommand("tune", "Tune alpha and beta on a validation directory");
  tune->add_option("--model", model_path, "Model JSON")->required();
  tune->add_option("--scenes", scenes_dir, "Directory of scene JSON files with gt_pose")->required();
  tune->add_option("--out", out_path, "Config JSON (default: stdout)");
  tune->add_option("--cond-tradeoff", tuner.cond_tradeoff, "Weight of the condition-number term");
  tune->add_option("--max-iters", tuner.max_outer_iters, "Outer iterations per tuner");
  solver.add_to(tune);

  CLI::App* bench = app.add_subcommand("bench", "Run the representation ablation on synthetic scenes");
  bench->add_option("--model", model_path, "Model JSON (default: procedural)");
  bench->add_option("--model-seed", model_seed, "Seed of the procedural model");
  bench->add_option("--scenes", n_scenes, "Number of paired scenes");
  bench->add_option("--seed", seed, "Base seed");
  bench->add_option("--csv", csv_path, "Per-scene CSV (default: stdout)");
  bench->add_option("--report", report_path, "Aggregate JSON report");
  noise.add_to(bench);
  solver.add_to(bench);

  CLI::App* stability = app.add_subcommand("stability", "Square example, beta_E scan and covariance check");
  stability->add_option("--out-dir", stab.out_dir, "Directory for CSV tables")->required();
  stability->add_option("--delta", stab.delta, "Half side of the square");
  stability->add_option("--corr-grid", stab.corr_grid, "Symmetry grid per axis");
  stability->add_option("--a8-sigma-k", stab.a8_sigma_k, "Keypoint noise for the beta_E scan");
  stability->add_option("--a8-sigma-e", stab.a8_sigma_e, "Edge noise for the beta_E scan");
  stability->add_option("--mc-sigma", stab.mc_sigma, "Noise for the Monte-Carlo check");
  stability->add_option("--trials", stab.trials, "Monte-Carlo trials");
  stability->add_option("--model-seed", stab.model_seed, "Seed of the procedural model");
  stability->add_option("--seed", stab.seed, "Base seed");

  CLI::App* metrics = app.add_subcommand("metrics", "Compare two poses");
  metrics->add_option("--model", model_path, "Model JSON")->required();
  metrics->add_option("--gt", gt_path, "Reference pose (pose, result or scene JSON)")->required();
  metrics->add_option("--est", est_path, "Estimated pose (pose, result or scene JSON)")->required();
  metrics->add_option("--out", out_path, "Metrics JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return run_generate(model_path, procedural, out_dir, count, seed, noise);
    if (*solve) return run_solve(model_path, scene_path, solver, out_path);
    if (*tune) return run_tune(model_path, scenes_dir, solver, out_path, tuner);
    if (*bench) return run_bench(model_path, model_seed, n_scenes, seed, noise, solver, csv_path, report_path);
    if (*stability) return run_stability(stab);
    if (*metrics) return run_metrics(model_path, gt_path, est_path, out_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace posereg
