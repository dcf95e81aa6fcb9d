// rfk: command-line front end (synth / train / render / eval).
//
// Exit codes: 0 success or --help, 2 usage errors (bad flags, unknown
// presets, missing dataset or checkpoint paths), 1 runtime failures.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rfk/rfk.hpp"

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::function<rfk::AnalyticField()>>& presets() {
  static const std::map<std::string, std::function<rfk::AnalyticField()>> table{
      {"empty", [] { return rfk::AnalyticField::empty(); }},
      {"homogeneous", [] { return rfk::AnalyticField::homogeneous(1.0, rfk::Vec3(0.6, 0.4, 0.3)); }},
      {"two-slab", [] { return rfk::AnalyticField::two_slab(); }},
      {"blob", [] { return rfk::AnalyticField::gaussian_blob(); }},
      {"specular-sphere", [] { return rfk::AnalyticField::specular_sphere(); }},
      {"blob+specular-sphere", [] { return rfk::AnalyticField::blob_specular_sphere(); }},
  };
  return table;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : presets()) names.push_back(k);
  return names;
}

std::optional<rfk::Vec3> parse_background(const std::string& s) {
  if (s.empty() || s == "auto") return std::nullopt;
  if (s == "white") return rfk::Vec3::Ones();
  if (s == "black") return rfk::Vec3::Zero();
  throw CLI::ValidationError("--background", "expected auto, white or black");
}

rfk::Dataset load_scene(const fs::path& path, const std::optional<rfk::Vec3>& background) {
  rfk::Dataset ds = rfk::load_dataset(path, background.value_or(rfk::Vec3::Ones()));
  if (!background && ds.mode != rfk::SceneMode::bounded_360)
    ds = rfk::load_dataset(path, rfk::default_background(ds.mode));
  return ds;
}

std::string frame_name(int k) {
  std::ostringstream os;
  os << "frame_" << std::setw(4) << std::setfill('0') << k;
  return os.str();
}

struct SynthArgs {
  std::string preset;
  fs::path out;
  int views = 20;
  int test_views = 0;
  int res = 64;
  std::uint64_t seed = 0;
  std::string manifold = "hemisphere";
  double radius = 4.0;
  double near = 2.0;
  double far = 6.0;
  long long oracle_samples = 4096;
  std::string background = "white";
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  rfk::TrainConfig cfg;
  bool no_posenc = false;
  bool no_viewdirs = false;
  bool no_hierarchical = false;
  int num_images = 0;
  int width = 256;
  int view_width = 128;
  std::optional<fs::path> resume;
  std::string background = "auto";
  std::optional<double> noise;
};

struct RenderArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path out;
  std::vector<int> poses;
  std::vector<int> interpolate;
  int frames = 10;
  double scale = 1.0;
  int n_coarse = 64;
  int n_fine = 128;
  std::string background = "auto";
  bool ndc_view_directions = false;
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  fs::path out = "metrics.csv";
  std::string split = "test";
  std::optional<fs::path> save_images;
  int n_coarse = 64;
  int n_fine = 128;
  std::string background = "auto";
  bool ndc_view_directions = false;
};

int run_synth(const SynthArgs& a, int threads) {
  rfk::SynthOptions opt;
  opt.n_views = a.views;
  opt.n_test_views = a.test_views;
  opt.resolution = a.res;
  opt.seed = a.seed;
  opt.manifold = a.manifold == "sphere" ? rfk::ViewManifold::sphere : rfk::ViewManifold::hemisphere;
  opt.radius = a.radius;
  opt.near = a.near;
  opt.far = a.far;
  opt.n_dense = a.oracle_samples;
  opt.background = a.background == "black" ? rfk::Vec3::Zero() : rfk::Vec3::Ones();
  opt.threads = rfk::resolve_thread_count(threads);
  const rfk::Dataset ds = rfk::generate_synthetic_dataset(presets().at(a.preset)(), opt, a.out);
  std::cout << "wrote " << ds.images.size() << " views of '" << a.preset << "' to " << a.out.string() << '\n';
  return 0;
}

int run_train(TrainArgs a, int threads) {
  rfk::TrainConfig& cfg = a.cfg;
  cfg.ablations.positional_encoding = !a.no_posenc;
  cfg.ablations.view_dependence = !a.no_viewdirs;
  cfg.ablations.hierarchical = !a.no_hierarchical;
  cfg.threads = threads;
  cfg.layer_sizes = rfk::MlpShape::miniature(0, 0, a.width, a.view_width);
  cfg.background = parse_background(a.background);
  cfg.validate();

  rfk::Dataset ds = load_scene(a.data, cfg.background);
  ds.limit_training_images(a.num_images);
  cfg.sigma_noise_std = a.noise.value_or(rfk::default_sigma_noise(ds.mode));
  cfg.validate();
  std::optional<rfk::Checkpoint> resume;
  if (a.resume) resume = rfk::load_checkpoint(*a.resume);

  const auto [nc, nf] = cfg.sampling();
  std::cout << "training on " << ds.train.size() << " images, L=" << cfg.L_position << ", (N_c, N_f)=(" << nc << ", "
            << (cfg.ablations.hierarchical ? std::to_string(nf) : std::string("-")) << "), "
            << cfg.max_iters << " iterations, " << rfk::resolve_thread_count(threads) << " threads\n";
  rfk::TrainOutputs io;
  io.dir = a.out;
  io.progress = &std::cout;
  rfk::train(ds, cfg, io, resume);
  std::cout << "wrote " << (a.out / rfk::kCheckpointFile).string() << " and " << (a.out / rfk::kWeightsFile).string()
            << '\n';
  return 0;
}

int run_render(const RenderArgs& a, int threads) {
  const rfk::Checkpoint ck = rfk::load_checkpoint(a.checkpoint);
  const auto bg_opt = parse_background(a.background);
  const rfk::Dataset ds = load_scene(a.data, bg_opt);
  rfk::RenderSettings settings{a.n_coarse, a.n_fine, bg_opt.value_or(rfk::default_background(ds.mode)), threads};
  const rfk::CameraIntrinsics intrinsics = ds.intrinsics.scaled(a.scale);
  const auto space = ds.ray_space(a.ndc_view_directions);
  auto check_index = [&](int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= ds.poses.size())
      throw CLI::ValidationError("pose index " + std::to_string(i) + " out of range (dataset has " +
                                 std::to_string(ds.poses.size()) + " poses)");
  };

  std::vector<std::pair<std::string, rfk::Pose>> jobs;
  if (!a.interpolate.empty()) {
    check_index(a.interpolate[0]);
    check_index(a.interpolate[1]);
    for (int k = 0; k < a.frames; ++k) {
      const double s = a.frames == 1 ? 0.0 : static_cast<double>(k) / (a.frames - 1);
      jobs.emplace_back(frame_name(k), rfk::interpolate_pose(ds.poses[a.interpolate[0]], ds.poses[a.interpolate[1]], s));
    }
  } else {
    std::vector<int> indices = a.poses;
    if (indices.empty())
      for (std::size_t i = 0; i < ds.poses.size(); ++i) indices.push_back(static_cast<int>(i));
    for (int i : indices) {
      check_index(i);
      jobs.emplace_back(ds.names.empty() ? frame_name(i) : ds.names[i], ds.poses[i]);
    }
  }
  fs::create_directories(a.out);
  for (const auto& [name, pose] : jobs) {
    rfk::write_png(a.out / (name + ".png"), rfk::render_view(ck, intrinsics, pose, space, settings));
  }
  std::cout << "wrote " << jobs.size() << " images to " << a.out.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a, int threads) {
  const rfk::Checkpoint ck = rfk::load_checkpoint(a.checkpoint);
  const auto bg_opt = parse_background(a.background);
  const rfk::Dataset ds = load_scene(a.data, bg_opt);
  std::vector<int> views;
  if (a.split == "train") views = ds.train;
  else if (a.split == "test") views = ds.test;
  else
    for (std::size_t i = 0; i < ds.images.size(); ++i) views.push_back(static_cast<int>(i));
  if (views.empty()) throw std::runtime_error("dataset has no images in split '" + a.split + "'");
  rfk::RenderSettings settings{a.n_coarse, a.n_fine, bg_opt.value_or(rfk::default_background(ds.mode)), threads};
  std::vector<rfk::Image> images;
  const auto rows = rfk::evaluate_views(ck, ds, views, settings, a.ndc_view_directions, a.save_images ? &images : nullptr);
  rfk::write_metrics_csv(a.out, rows);
  if (a.save_images)
    for (std::size_t i = 0; i < rows.size(); ++i) rfk::write_png(*a.save_images / (rows[i].image_id + ".png"), images[i]);
  std::cout << "mean PSNR " << rfk::format_metric(rfk::mean_psnr(rows)) << " dB over " << rows.size()
            << " views; wrote " << a.out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural radiance fields at desk scale: synthesize scenes, train, render and evaluate."};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: $RFK_THREADS, else all cores)")
      ->check(CLI::NonNegativeNumber);

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "Render a synthetic dataset from an analytic scene");
  cs->add_option("--preset", synth.preset, "Scene preset")->required()->check(CLI::IsMember(preset_names()));
  cs->add_option("--out", synth.out, "Output scene directory")->required();
  cs->add_option("--views", synth.views, "Training views")->capture_default_str()->check(CLI::PositiveNumber);
  cs->add_option("--test-views", synth.test_views, "Held-out views")->capture_default_str()->check(CLI::NonNegativeNumber);
  cs->add_option("--res", synth.res, "Image width and height in pixels")->capture_default_str()->check(CLI::Range(1, 256));
  cs->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  cs->add_option("--manifold", synth.manifold, "Camera placement")->capture_default_str()
      ->check(CLI::IsMember({"hemisphere", "sphere"}));
  cs->add_option("--radius", synth.radius, "Camera distance from the origin")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cs->add_option("--near", synth.near, "Near bound")->capture_default_str();
  cs->add_option("--far", synth.far, "Far bound")->capture_default_str();
  cs->add_option("--oracle-samples", synth.oracle_samples, "Initial samples per ray of the reference integrator")
      ->capture_default_str()->check(CLI::PositiveNumber);
  cs->add_option("--background", synth.background, "Background color")->capture_default_str()
      ->check(CLI::IsMember({"white", "black"}));

  TrainArgs train;
  auto* ct = app.add_subcommand("train", "Optimize coarse and fine networks on a dataset");
  ct->add_option("--data", train.data, "Scene directory or transforms.json")->required()->check(CLI::ExistingPath);
  ct->add_option("--out", train.out, "Output directory")->required();
  ct->add_option("--iters", train.cfg.max_iters, "Total iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
  ct->add_option("--batch", train.cfg.batch_rays, "Rays per batch")->capture_default_str()->check(CLI::PositiveNumber);
  ct->add_option("--n-coarse", train.cfg.n_coarse, "Coarse samples per ray")->capture_default_str()
      ->check(CLI::PositiveNumber);
  ct->add_option("--n-fine", train.cfg.n_fine, "Fine samples per ray")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ct->add_option("--lr-init", train.cfg.lr_init, "Initial learning rate")->capture_default_str();
  ct->add_option("--lr-final", train.cfg.lr_final, "Final learning rate")->capture_default_str();
  ct->add_option("--decay-iters", train.cfg.decay_iters, "Learning-rate decay length (0: --iters)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  ct->add_option("--noise", train.noise, "Std. dev. of density noise during training (default: 0 for 360 scenes, "
                 "1 for forward-facing ones)")->check(CLI::NonNegativeNumber);
  ct->add_option("--seed", train.cfg.seed, "Random seed")->capture_default_str();
  ct->add_option("--L", train.cfg.L_position, "Positional-encoding frequencies for positions")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ct->add_flag("--no-posenc", train.no_posenc, "Feed raw coordinates and directions");
  ct->add_flag("--no-viewdirs", train.no_viewdirs, "Drop the viewing-direction input");
  ct->add_flag("--no-hierarchical", train.no_hierarchical, "Single network with 2 n-coarse + n-fine samples (256 by default)");
  ct->add_option("--width", train.width, "Trunk layer width")->capture_default_str()->check(CLI::PositiveNumber);
  ct->add_option("--view-width", train.view_width, "Direction-branch layer width")->capture_default_str()
      ->check(CLI::PositiveNumber);
  ct->add_option("--num-images", train.num_images, "Use only the first N training images (0: all)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  ct->add_option("--checkpoint-every", train.cfg.checkpoint_every, "Checkpoint interval in iterations (0: end only)")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  ct->add_option("--resume", train.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  ct->add_option("--background", train.background, "auto, white or black")->capture_default_str()
      ->check(CLI::IsMember({"auto", "white", "black"}));
  ct->add_flag("--ndc-viewdirs", train.cfg.ndc_view_directions, "Use NDC-space directions as network input");

  RenderArgs render;
  auto* cr = app.add_subcommand("render", "Render views from a trained checkpoint");
  cr->add_option("--checkpoint", render.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cr->add_option("--data", render.data, "Scene providing intrinsics and poses")->required()->check(CLI::ExistingPath);
  cr->add_option("--out", render.out, "Output image directory")->required();
  auto* poses_opt = cr->add_option("--poses", render.poses, "Dataset pose indices (default: all)")->delimiter(',');
  auto* interp_opt = cr->add_option("--interpolate", render.interpolate, "Interpolate between two pose indices")
                         ->expected(2);
  poses_opt->excludes(interp_opt);
  cr->add_option("--frames", render.frames, "Frames along an interpolated path")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cr->add_option("--scale", render.scale, "Resolution scale")->capture_default_str()->check(CLI::PositiveNumber);
  cr->add_option("--n-coarse", render.n_coarse, "Coarse samples per ray")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cr->add_option("--n-fine", render.n_fine, "Fine samples per ray")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cr->add_option("--background", render.background, "auto, white or black")->capture_default_str()
      ->check(CLI::IsMember({"auto", "white", "black"}));
  cr->add_flag("--ndc-viewdirs", render.ndc_view_directions, "Use NDC-space directions as network input");

  EvalArgs eval;
  auto* ce = app.add_subcommand("eval", "Score rendered views against dataset images");
  ce->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ce->add_option("--data", eval.data, "Scene directory or transforms.json")->required()->check(CLI::ExistingPath);
  ce->add_option("--out", eval.out, "Metrics CSV path")->capture_default_str();
  ce->add_option("--split", eval.split, "Views to score")->capture_default_str()
      ->check(CLI::IsMember({"test", "train", "all"}));
  ce->add_option("--save-images", eval.save_images, "Also write the rendered views here");
  ce->add_option("--n-coarse", eval.n_coarse, "Coarse samples per ray")->capture_default_str()
      ->check(CLI::PositiveNumber);
  ce->add_option("--n-fine", eval.n_fine, "Fine samples per ray")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ce->add_option("--background", eval.background, "auto, white or black")->capture_default_str()
      ->check(CLI::IsMember({"auto", "white", "black"}));
  ce->add_flag("--ndc-viewdirs", eval.ndc_view_directions, "Use NDC-space directions as network input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cs) return run_synth(synth, threads);
    if (*ct) return run_train(train, threads);
    if (*cr) return run_render(render, threads);
    if (*ce) return run_eval(eval, threads);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
