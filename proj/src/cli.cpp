#include "geocloud/cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <nlohmann/json.hpp>

#include "geocloud/crpc.hpp"
#include "geocloud/error.hpp"
#include "geocloud/evaluation.hpp"
#include "geocloud/io.hpp"
#include "geocloud/pipeline.hpp"
#include "geocloud/synthgen.hpp"
#include "geocloud/wpfc.hpp"

namespace geocloud {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  double theta = 0.3;
  double ell_frac = 0.1;
  double tau_d = 40.0;
  int tau_i = 7;
  int iters = 20;
  std::uint64_t seed = 0x5eed;
};

void add_crpc_flags(CLI::App* app, Common& c) {
  app->add_option("--theta", c.theta, "Profile similarity threshold")->capture_default_str();
  app->add_option("--ell-frac", c.ell_frac, "Window length as a fraction of the segment")
      ->capture_default_str();
  app->add_option("--tau-d", c.tau_d, "Largest mean reprojection distance (px)")->capture_default_str();
  app->add_option("--tau-i", c.tau_i, "Fewest supporting images")->capture_default_str();
}

void add_seed_flag(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

void print_json(const json& j) { std::printf("%s\n", j.dump().c_str()); }

std::vector<GrayImage> load_images(const CorrespondenceSet& corr, const fs::path& dir) {
  if (int(corr.images.size()) != corr.N())
    throw Error(ErrorCode::InvalidArgument, "correspondences list no image files");
  std::vector<GrayImage> images;
  for (const auto& info : corr.images) {
    if (info.name.empty()) throw Error(ErrorCode::InvalidArgument, "image without a file name");
    images.push_back(load_image(dir / info.name));
  }
  return images;
}

PlyFormat ply_format(bool ascii) { return ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian; }

// synth

struct SynthArgs {
  std::string spec, out;
  int M = 8, N = 6, seeds = 4;
  double sigma = 0.0;
  std::string surface = "volume";
  bool no_images = false;
};

void run_synth(const SynthArgs& a, const Common& c, bool seed_given) {
  SceneSpec spec;
  if (!a.spec.empty()) {
    spec = load_scene_spec(a.spec);
    if (seed_given) spec.seed = c.seed;
  } else {
    spec.M = a.M;
    spec.N = a.N;
    spec.sigma = a.sigma;
    spec.surface = surface_kind_from_string(a.surface);
    spec.seed = c.seed;
  }
  auto [scene, corr] = make_scene(spec);
  const fs::path out(a.out);
  fs::create_directories(out);
  const bool images = !a.no_images && spec.surface != SurfaceKind::Volume;
  if (images) {
    fs::create_directories(out / "images");
    corr.images.clear();
    for (int n = 0; n < corr.N(); ++n) {
      char name[64];
      std::snprintf(name, sizeof name, "images/img_%03d.pgm", n);
      save_pgm(render_image(scene, n), out / name);
      corr.images.push_back({spec.width, spec.height_px, name});
    }
  }
  save_scene_spec(spec, out / "scene.json");
  save_correspondences(corr, out / "corr.json");
  save_group(scene.group(), out / "truth.json", objective(scene.group(), corr));
  const int k = std::min(a.seeds, corr.M());
  DistanceMeasurements d;
  d.D.resize(k, k);
  for (int i = 0; i < k; ++i) {
    d.ids.push_back(i);
    for (int j = 0; j < k; ++j) d.D(i, j) = (scene.points[i] - scene.points[j]).norm();
  }
  save_distances(d, out / "distances.json");
  print_json({{"M", corr.M()}, {"N", corr.N()}, {"visible", corr.visible_count()}, {"images", images}});
}

// wpfc

struct WpfcArgs {
  std::string in, out, report;
  bool closed_form = false;
};

void run_wpfc(const WpfcArgs& a, const Common& c) {
  const CorrespondenceSet corr = load_correspondences(a.in);
  WpfcOptions opts;
  opts.seed = c.seed;
  WpfcDiagnostics diag;
  SolutionGroup g;
  int solved_points = corr.M(), solved_cameras = corr.N();
  if (corr.fully_visible()) {
    g = a.closed_form ? cf_wpfc(corr, opts, &diag) : wpfc_iterative(corr, c.iters, opts, &diag);
  } else {
    if (a.closed_form)
      throw Error(ErrorCode::MissingObservation, "--closed-form needs fully visible correspondences");
    GaugeSolution sol = solve_gauge(corr, {}, c.iters, opts);
    diag = sol.diagnostics;
    solved_points = int(std::count(sol.point_solved.begin(), sol.point_solved.end(), true));
    solved_cameras = int(std::count(sol.camera_solved.begin(), sol.camera_solved.end(), true));
    for (int m = 0; m < sol.group.M(); ++m)
      if (!sol.point_solved[m]) sol.group.points[m].setConstant(std::numeric_limits<double>::quiet_NaN());
    for (int n = 0; n < sol.group.N(); ++n)
      if (!sol.camera_solved[n]) sol.group.cameras[n].setConstant(std::numeric_limits<double>::quiet_NaN());
    g = sol.group;
  }
  double obj = 0.0;
  for (const auto& d : key_point_differences(g, corr)) obj += d.diff_px * d.diff_px;
  save_group(g, a.out, obj);
  json rep{{"objective", obj},
           {"relative_error", relative_error_group(g, corr)},
           {"solved_points", solved_points},
           {"solved_cameras", solved_cameras},
           {"objective_history", diag.objective_history},
           {"subsets_evaluated", diag.subsets_evaluated},
           {"subsets_degenerate", diag.subsets_degenerate},
           {"descent_violations", diag.descent_violations}};
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + a.report);
    f << rep.dump(1) << '\n';
  }
  print_json(rep);
}

// crpc

struct CrpcArgs {
  std::string corr, group, images_dir, out;
  int a = 0, b = 1;
  bool ascii = false;
};

void run_crpc(const CrpcArgs& a, const Common& c) {
  const CorrespondenceSet corr = load_correspondences(a.corr);
  const SolutionGroup g = load_group(a.group);
  if (a.a < 0 || a.b < 0 || a.a >= g.M() || a.b >= g.M() || a.a == a.b)
    throw Error(ErrorCode::InvalidArgument, "anchor ids must be distinct points of the group");
  const fs::path dir = a.images_dir.empty() ? fs::path(a.corr).parent_path() : fs::path(a.images_dir);
  const auto images = load_images(corr, dir);
  CrpcOptions opts;
  opts.theta = c.theta;
  opts.ell_frac = c.ell_frac;
  opts.tau_d = c.tau_d;
  opts.tau_i = c.tau_i;
  CrpcStats st;
  PointCloud pc = crpc(g.cameras, images, g.points[a.a], g.points[a.b], opts, &st);
  for (auto& p : pc) {
    p.anchor_a = a.a;
    p.anchor_b = a.b;
    p.level = 1;
  }
  if (!pc.empty()) export_ply(pc, a.out, ply_format(a.ascii));
  print_json({{"points", pc.size()},
              {"pairs_similar", st.pairs_similar},
              {"pairs_tested", st.pairs_tested},
              {"raw_matches", st.raw_matches},
              {"candidates", st.candidates}});
}

// pipeline

struct PipelineArgs {
  std::string corr, distances, images_dir, out, group_out;
  int levels = 2;
  std::vector<double> spread{0.5, 0.05};
  int neighbor_limit = 0;
  std::size_t max_pairs = 0;
  bool ascii = false;
};

void run_pipeline(const PipelineArgs& a, const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const CorrespondenceSet corr = load_correspondences(a.corr);
  const DistanceMeasurements d = load_distances(a.distances);
  const auto embedded = mds_embed(d);
  std::map<int, Vec3> seeds;
  for (std::size_t i = 0; i < d.ids.size(); ++i) seeds[d.ids[i]] = embedded[i];
  WpfcOptions wopts;
  wopts.seed = c.seed;
  const SolutionGroup g = seed_and_solve(corr, seeds, c.iters, wopts);
  if (!a.group_out.empty()) save_group(g, a.group_out);

  const fs::path dir = a.images_dir.empty() ? fs::path(a.corr).parent_path() : fs::path(a.images_dir);
  const auto images = load_images(corr, dir);
  GrowthConfig cfg;
  cfg.theta = c.theta;
  cfg.ell_frac = c.ell_frac;
  cfg.tau_d = c.tau_d;
  cfg.tau_i = c.tau_i;
  cfg.max_levels = a.levels;
  cfg.spread = a.spread;
  cfg.neighbor_limit = a.neighbor_limit;
  cfg.max_pairs_per_level = a.max_pairs;
  GrowthStats st;
  const PointCloud pc = grow_point_cloud(g, corr, images, cfg, &st);
  export_ply(pc, a.out, ply_format(a.ascii));
  print_json({{"points", pc.size()},
              {"points_per_level", st.points_per_level},
              {"seeds_per_level", st.seeds_per_level},
              {"pairs_per_level", st.pairs_per_level},
              {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
}

// refine

struct RefineArgs {
  std::string in, out;
  double delta = 0.0, epsilon = 0.0;
  bool ascii = false;
};

void run_refine(const RefineArgs& a, CLI::App* sub) {
  const bool by_delta = sub->count("--delta") > 0, by_eps = sub->count("--epsilon") > 0;
  if (!by_delta && !by_eps) throw CLI::ValidationError("refine needs --delta or --epsilon");
  PointCloud pc = import_ply(a.in);
  const std::size_t before = pc.size();
  if (by_eps) pc = refine_by_pixel(pc, a.epsilon);
  if (by_delta) pc = refine_by_distance(pc, a.delta);
  if (!pc.empty()) export_ply(pc, a.out, ply_format(a.ascii));
  print_json({{"input", before}, {"output", pc.size()}});
}

// eval

struct EvalArgs {
  std::string corr, group, cloud, out;
};

void run_eval(const EvalArgs& a) {
  const CorrespondenceSet corr = load_correspondences(a.corr);
  const SolutionGroup g = load_group(a.group);
  PointCloud cloud;
  if (!a.cloud.empty()) cloud = import_ply(a.cloud);
  double H = 0, W = 0;
  if (!corr.images.empty()) {
    H = corr.images[0].height;
    W = corr.images[0].width;
  }
  const ErrorReport r = make_report(key_point_differences(g, corr), cloud, H, W);
  emit_report(r, a.out);
  json j{{"mean", r.mean}, {"p95", r.p95}, {"count", r.count},
         {"relative_error_group", relative_error_group(g, corr)}};
  if (r.has_cloud) j["cloud_points"] = r.cloud.count;
  print_json(j);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Point clouds from image correspondences"};
  app.set_config("--config", "", "TOML file with option values; sections name subcommands");
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Common c;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("--spec", sa.spec, "Scene spec JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--M", sa.M, "Number of points")->capture_default_str();
  synth->add_option("--N", sa.N, "Number of images")->capture_default_str();
  synth->add_option("--sigma", sa.sigma, "Pixel noise")->capture_default_str();
  synth->add_option("--surface", sa.surface, "volume, plane, cylinder or sphere")->capture_default_str();
  synth->add_option("--seeds", sa.seeds, "Points with measured distances")->capture_default_str();
  synth->add_flag("--no-images", sa.no_images, "Skip rendering");
  add_seed_flag(synth, c);

  WpfcArgs wa;
  auto* wpfc = app.add_subcommand("wpfc", "Solve world points and projection matrices");
  wpfc->add_option("--in", wa.in, "Correspondence JSON")->required()->check(CLI::ExistingFile);
  wpfc->add_option("--out", wa.out, "Group JSON")->required();
  wpfc->add_option("--report", wa.report, "Diagnostics JSON");
  wpfc->add_flag("--closed-form", wa.closed_form, "Skip the iterative refinement");
  wpfc->add_option("--iters", c.iters, "Iterations")->capture_default_str();
  add_seed_flag(wpfc, c);

  CrpcArgs ca;
  auto* crpc_cmd = app.add_subcommand("crpc", "Point cloud between two world points");
  crpc_cmd->add_option("--corr", ca.corr, "Correspondence JSON")->required()->check(CLI::ExistingFile);
  crpc_cmd->add_option("--group", ca.group, "Group JSON")->required()->check(CLI::ExistingFile);
  crpc_cmd->add_option("--images-dir", ca.images_dir, "Image directory");
  crpc_cmd->add_option("--a", ca.a, "First anchor point")->capture_default_str();
  crpc_cmd->add_option("--b", ca.b, "Second anchor point")->capture_default_str();
  crpc_cmd->add_option("--out", ca.out, "PLY output")->required();
  crpc_cmd->add_flag("--ascii", ca.ascii, "ASCII PLY");
  add_crpc_flags(crpc_cmd, c);

  PipelineArgs pa;
  auto* pipe = app.add_subcommand("pipeline", "Metric seeding and leveled cloud growth");
  pipe->add_option("--corr", pa.corr, "Correspondence JSON")->required()->check(CLI::ExistingFile);
  pipe->add_option("--distances", pa.distances, "Measured distances JSON")
      ->required()
      ->check(CLI::ExistingFile);
  pipe->add_option("--images-dir", pa.images_dir, "Image directory");
  pipe->add_option("--out", pa.out, "PLY output")->required();
  pipe->add_option("--group-out", pa.group_out, "Metric group JSON");
  pipe->add_option("--levels", pa.levels, "Growth levels")->capture_default_str();
  pipe->add_option("--spread", pa.spread, "Seed spread per level")->capture_default_str();
  pipe->add_option("--neighbor-limit", pa.neighbor_limit, "Nearest seeds paired per seed")
      ->capture_default_str();
  pipe->add_option("--max-pairs", pa.max_pairs, "Anchor pairs per level")->capture_default_str();
  pipe->add_option("--iters", c.iters, "Iterations")->capture_default_str();
  pipe->add_flag("--ascii", pa.ascii, "ASCII PLY");
  add_crpc_flags(pipe, c);
  add_seed_flag(pipe, c);

  RefineArgs ra;
  auto* refine = app.add_subcommand("refine", "Distance or pixel refinement of a cloud");
  refine->add_option("--in", ra.in, "PLY input")->required()->check(CLI::ExistingFile);
  refine->add_option("--out", ra.out, "PLY output")->required();
  refine->add_option("--delta", ra.delta, "Minimum spacing")->check(CLI::PositiveNumber);
  refine->add_option("--epsilon", ra.epsilon, "Largest E_d in pixels")->check(CLI::PositiveNumber);
  refine->add_flag("--ascii", ra.ascii, "ASCII PLY");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Error report of a group and optional cloud");
  eval->add_option("--corr", ea.corr, "Correspondence JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--group", ea.group, "Group JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--cloud", ea.cloud, "PLY cloud")->check(CLI::ExistingFile);
  eval->add_option("--out", ea.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*synth) run_synth(sa, c, synth->count("--seed") > 0);
    else if (*wpfc) run_wpfc(wa, c);
    else if (*crpc_cmd) run_crpc(ca, c);
    else if (*pipe) run_pipeline(pa, c);
    else if (*refine) run_refine(ra, refine);
    else if (*eval) run_eval(ea);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"geocloud"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(int(argv.size()), argv.data());
}

}  // namespace geocloud
