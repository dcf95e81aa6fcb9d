// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Training-based criteria (5, 6, 9) run only with --desk-scale.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rfk/rfk.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using rfk::Vec3;

struct Outcome {
  enum class Status { pass, fail, skipped } status = Status::fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Status::pass : Outcome::Status::fail, std::move(detail)};
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vec3 random_unit(rfk::Rng& rng) { return Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(); }

// ---------------------------------------------------------------- 1

Outcome quadrature_vs_oracle() {
  const Vec3 black = Vec3::Zero();
  const double sigma = 0.5;
  const Vec3 medium_rgb(0.8, 0.4, 0.2);
  const std::vector<std::pair<std::string, rfk::AnalyticField>> fields{
      {"empty", rfk::AnalyticField::empty()},
      {"homogeneous", rfk::AnalyticField::homogeneous(sigma, medium_rgb)},
      {"two-slab", rfk::AnalyticField::two_slab()},
      {"gaussian-blob", rfk::AnalyticField::gaussian_blob()},
      {"specular-sphere", rfk::AnalyticField::specular_sphere()},
  };
  rfk::RenderConfig cfg;
  cfg.hierarchical = false;
  cfg.n_coarse = 4096;
  cfg.perturb = true;
  cfg.background = black;

  bool ok = true;
  double worst = 0.0, sum = 0.0, worst_closed = 0.0;
  int count = 0;
  std::string worst_field;
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const auto& [name, field] = fields[f];
    rfk::Rng rng(1000 + f);
    for (int i = 0; i < 100; ++i) {
      rfk::RenderRay rr;
      rr.ray.origin = 4.0 * random_unit(rng);
      const Vec3 aim(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
      rr.ray.direction = (aim - rr.ray.origin).normalized();
      rr.ray.t_near = 2.0;
      rr.ray.t_far = 6.0;
      rr.view_dir = rr.ray.direction;
      const Vec3 quad = rfk::render_ray(field, field, rr, cfg, rng).color_fine();
      const Vec3 oracle = rfk::oracle_render(field, rr.ray, black);
      const double err = (quad - oracle).cwiseAbs().maxCoeff();
      sum += err;
      ++count;
      if (err > worst) {
        worst = err;
        worst_field = name;
      }
      if (name == "homogeneous") {
        const Vec3 closed = medium_rgb * (1.0 - std::exp(-sigma * (rr.ray.t_far - rr.ray.t_near)));
        worst_closed = std::max(worst_closed, (oracle - closed).cwiseAbs().maxCoeff());
      }
    }
  }
  ok = worst <= 2e-3 && worst_closed <= 1e-6;
  return verdict(ok, "max |quad - oracle| " + fmt(worst) + " (" + worst_field + "), mean " + fmt(sum / count) +
                         ", homogeneous |oracle - closed form| " + fmt(worst_closed) + ", " + std::to_string(count) +
                         " rays");
}

// ---------------------------------------------------------------- 2

Outcome ndc_identity() {
  rfk::Rng rng(2);
  const rfk::CameraIntrinsics k{64, 48, 50.0};
  const double near = 1.0;
  const auto ctx = rfk::NdcContext::infinite_far(k, near);
  double worst = 0.0, worst_limit = 0.0;
  bool monotone = true;
  for (int i = 0; i < 10000; ++i) {
    rfk::Ray r;
    r.origin = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    r.direction = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), -1.0);
    const rfk::Ray s = rfk::shift_to_near_plane(r, near);
    const rfk::Ray n = rfk::ndc_convert(r, k, near);
    std::vector<double> ts(50);
    for (double& t : ts) t = std::pow(10.0, rng.uniform(-3.0, 3.0));
    std::sort(ts.begin(), ts.end());
    double previous = -1.0;
    for (double t : ts) {
      const double tp = rfk::ndc_parameter(t, s.origin.z(), s.direction.z());
      worst = std::max(worst, (rfk::project_ndc_point(s.at(t), ctx) - n.at(tp)).cwiseAbs().maxCoeff());
      if (!(tp > previous)) monotone = false;
      previous = tp;
    }
    const double far = rfk::ndc_parameter(1e12, s.origin.z(), s.direction.z());
    if (!(far > previous)) monotone = false;
    worst_limit = std::max(worst_limit, std::abs(far - 1.0));
  }
  return verdict(worst <= 1e-9 && monotone && worst_limit <= 1e-6,
                 "max inf-norm " + fmt(worst) + ", monotone " + (monotone ? "yes" : "no") + ", max |t'(1e12) - 1| " +
                     fmt(worst_limit));
}

// ---------------------------------------------------------------- 3

rfk::MatrixX<double> random_inputs(int rows, int cols, rfk::Rng& rng) {
  rfk::MatrixX<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

double miniature_network_fd() {
  const rfk::MlpShape shape = rfk::MlpShape::miniature(60, 24);
  rfk::MlpParams<double> p(shape);
  rfk::Rng rng(31);
  for (Eigen::Index i = 0; i < p.values().size(); ++i) p.values()(i) = 0.5 * rng.normal();
  const rfk::MatrixX<double> x = random_inputs(60, 3, rng), d = random_inputs(24, 3, rng);
  rfk::MatrixX<double> up_rgb(3, 3);
  rfk::RowVectorX<double> up_sigma(3);
  for (Eigen::Index i = 0; i < up_rgb.size(); ++i) up_rgb.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < up_sigma.size(); ++i) up_sigma(i) = rng.normal();
  auto objective = [&](const rfk::MlpParams<double>& q) {
    const auto out = rfk::forward<double>(q, x, d);
    return (out.rgb.array() * up_rgb.array()).sum() + (out.sigma.array() * up_sigma.array()).sum();
  };
  rfk::ForwardCache<double> cache;
  rfk::forward<double>(p, x, d, nullptr, cache);
  const auto grad = rfk::backward<double>(p, cache, up_rgb, up_sigma);
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.values().size(); ++i) {
    auto q = p;
    q.values()(i) += h;
    const double fp = objective(q);
    q.values()(i) -= 2 * h;
    const double fm = objective(q);
    worst = std::max(worst, rfk::testing::relative_error(grad.values()(i), (fp - fm) / (2 * h)));
  }
  return worst;
}

double composite_backward_fd() {
  rfk::Rng rng(32);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(30));
    const auto s = rfk::stratified_sample(0.0, 2.0, n, rng);
    std::vector<rfk::FieldSample> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
      x.sigma = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 5.0);
      x.rgb = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    }
    const Vec3 bg(rng.uniform(), rng.uniform(), rng.uniform());
    const Vec3 g(rng.normal(), rng.normal(), rng.normal());
    const auto fwd = rfk::composite(s, v, bg);
    const auto grad = rfk::composite_backward(s, v, fwd, bg, g);
    auto f = [&](const std::vector<rfk::FieldSample>& vals) { return g.dot(rfk::composite(s, vals, bg).color); };
    const double h = 1e-6;
    for (int k = 0; k < n; ++k) {
      if (v[k].sigma > h) {
        auto vp = v, vm = v;
        vp[k].sigma += h;
        vm[k].sigma -= h;
        worst = std::max(worst, rfk::testing::relative_error(grad.sigma[k], (f(vp) - f(vm)) / (2 * h)));
      }
      for (int c = 0; c < 3; ++c) {
        auto vp = v, vm = v;
        vp[k].rgb[c] += h;
        vm[k].rgb[c] -= h;
        worst = std::max(worst, rfk::testing::relative_error(grad.rgb[k][c], (f(vp) - f(vm)) / (2 * h)));
      }
    }
  }
  return worst;
}

rfk::Dataset random_dataset(int n_images, int res, std::uint64_t seed) {
  rfk::Rng rng(seed);
  rfk::Dataset ds;
  ds.camera_angle_x = 0.6911112070083618;
  ds.intrinsics = {res, res, rfk::CameraIntrinsics::focal_from_fov(res, ds.camera_angle_x)};
  rfk::SynthOptions opt;
  opt.seed = seed;
  ds.poses = rfk::sample_view_poses(n_images, opt, 0);
  for (int i = 0; i < n_images; ++i) {
    rfk::Image img(res, res);
    for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
    ds.images.push_back(img);
    ds.names.push_back("img" + std::to_string(i));
    ds.train.push_back(i);
  }
  ds.validate();
  return ds;
}

// Coarse pass of 4 samples, fine pass of 8 (4 coarse + 4 importance).
double fused_step_fd(std::size_t& fine_samples) {
  const rfk::Dataset ds = random_dataset(2, 6, 8);
  rfk::TrainConfig cfg;
  cfg.L_position = 3;
  cfg.n_coarse = 4;
  cfg.n_fine = 4;
  cfg.chunk_rays = 2;
  cfg.seed = 21;
  cfg.layer_sizes = rfk::MlpShape::miniature(0, 0, 8, 4);
  auto model = rfk::Model<double>::initialize(cfg);
  // Nonzero biases keep samples off the ReLU kink at zero.
  rfk::Rng bias_rng(cfg.seed);
  for (auto* net : {&model.coarse, &*model.fine}) {
    for (int l = 0; l < net->shape().layer_count(); ++l)
      for (Eigen::Index k = 0; k < net->bias(l).size(); ++k) net->bias(l)(k) = bias_rng.uniform(-0.1, 0.1);
    net->bias(net->shape().sigma_layer())(0) = 0.8;
  }
  rfk::Rng rng(4);
  const auto batch = rfk::sample_ray_batch(ds, 5, rng, ds.ray_space());
  const Vec3 bg(0.9, 0.7, 0.4);
  const auto g = rfk::loss_and_gradients(model, batch, cfg, 3, bg);
  fine_samples = g.fine_samples[0].size();
  const double h = 1e-5;
  double worst = std::abs(rfk::testing::fixed_sample_loss(model, batch, g, bg) - g.loss.total);
  auto check = [&](rfk::MlpParams<double>& params, const rfk::MlpParams<double>& grad) {
    for (Eigen::Index i = 0; i < params.values().size(); ++i) {
      const double keep = params.values()(i);
      params.values()(i) = keep + h;
      const double fp = rfk::testing::fixed_sample_loss(model, batch, g, bg);
      params.values()(i) = keep - h;
      const double fm = rfk::testing::fixed_sample_loss(model, batch, g, bg);
      params.values()(i) = keep;
      worst = std::max(worst, rfk::testing::relative_error(grad.values()(i), (fp - fm) / (2 * h)));
    }
  };
  check(model.coarse, g.coarse);
  check(*model.fine, *g.fine);
  return worst;
}

Outcome gradient_suite() {
  const double a = miniature_network_fd();
  const double b = composite_backward_fd();
  std::size_t fine_samples = 0;
  const double c = fused_step_fd(fine_samples);
  return verdict(a <= 1e-6 && b <= 1e-6 && c <= 1e-6 && fine_samples == 8,
                 "max rel. error: network " + fmt(a) + ", composite " + fmt(b) + ", fused step " + fmt(c) + " (" +
                     std::to_string(fine_samples) + " fine samples)");
}

// ---------------------------------------------------------------- 4

Outcome sampler_statistics() {
  constexpr std::size_t kDraws = 100000;
  constexpr double kChi2Df1At001 = 6.635;
  rfk::Rng rng(4);

  bool occupancy = true;
  std::size_t strat_draws = 0;
  const int n = 64;
  while (strat_draws < kDraws) {
    const auto s = rfk::stratified_sample(2.0, 6.0, n, rng);
    std::vector<int> count(n, 0);
    for (double t : s.t_values) count[std::clamp(static_cast<int>((t - 2.0) / 4.0 * n), 0, n - 1)]++;
    for (int c : count) occupancy = occupancy && c == 1;
    strat_draws += s.size();
  }

  std::vector<double> edges(9);
  for (int i = 0; i <= 8; ++i) edges[i] = i / 8.0;
  const auto uniform = rfk::weights_to_pdf(std::vector<double>(8, 1.0), edges);
  std::vector<double> pooled;
  while (pooled.size() < kDraws) {
    const auto t = rfk::sample_pdf(uniform, 128, rng);
    pooled.insert(pooled.end(), t.begin(), t.end());
  }
  const double ks = rfk::testing::ks_uniform_statistic(pooled, 0.0, 1.0);
  const double ks_crit = rfk::testing::ks_critical_001(pooled.size());

  // Two bins of unequal width and mass; odd draw counts keep samples off the
  // shared edge.
  double worst_chi2 = 0.0;
  for (const auto& [w, e] : std::vector<std::pair<std::vector<double>, std::vector<double>>>{
           {{1.0, 1.0}, {0.0, 0.5, 1.0}}, {{0.3, 0.7}, {2.0, 2.4, 6.0}}}) {
    const auto pdf = rfk::weights_to_pdf(w, e);
    std::size_t low = 0, total = 0;
    while (total < kDraws) {
      for (double t : rfk::sample_pdf(pdf, 127, rng)) {
        low += t < e[1];
        ++total;
      }
    }
    const double p = w[0] / (w[0] + w[1]);
    const double expected_low = p * total, expected_high = (1.0 - p) * total;
    const double chi2 = std::pow(low - expected_low, 2) / expected_low +
                        std::pow((total - low) - expected_high, 2) / expected_high;
    worst_chi2 = std::max(worst_chi2, chi2);
  }
  return verdict(occupancy && ks < ks_crit && worst_chi2 < kChi2Df1At001,
                 std::string("stratified occupancy ") + (occupancy ? "exact" : "violated") + ", KS D " + fmt(ks) +
                     " < " + fmt(ks_crit) + ", two-bin chi2 " + fmt(worst_chi2) + " < " + fmt(kChi2Df1At001));
}

// ---------------------------------------------------------------- 7

Outcome sigma_view_independence() {
  const rfk::EncodingConfig enc;
  const auto params = rfk::init_params<float>(rfk::MlpShape::for_encoding(enc), 7);
  rfk::Rng rng(7);
  const int n = 1000;
  Eigen::Matrix3Xd x(3, n), d1(3, n), d2(3, n);
  for (int i = 0; i < n; ++i) {
    x.col(i) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    d1.col(i) = random_unit(rng);
    d2.col(i) = random_unit(rng);
  }
  const auto ex = rfk::encode_positions<float>(x, enc);
  const auto a = rfk::forward<float>(params, ex, rfk::encode_directions<float>(d1, enc));
  const auto b = rfk::forward<float>(params, ex, rfk::encode_directions<float>(d2, enc));
  int differing = 0, rgb_differing = 0;
  for (int i = 0; i < n; ++i) {
    differing += std::memcmp(&a.sigma(i), &b.sigma(i), sizeof(float)) != 0;
    rgb_differing += a.rgb.col(i) != b.rgb.col(i);
  }
  return verdict(differing == 0, std::to_string(differing) + " of " + std::to_string(n) +
                                     " sigma values differ bitwise (rgb differs for " + std::to_string(rgb_differing) +
                                     ")");
}

// ---------------------------------------------------------------- 8

Outcome partition_of_unity() {
  rfk::Rng rng(8);
  double worst = 0.0;
  for (int rep = 0; rep < 100000; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(128));
    const double t_near = rng.uniform(0.0, 2.0);
    const auto s = rfk::stratified_sample(t_near, t_near + rng.uniform(0.01, 10.0), n, rng);
    const double max_sigma = std::pow(10.0, rng.uniform(-2.0, 3.0));
    std::vector<rfk::FieldSample> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
      x.sigma = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, max_sigma);
      x.rgb = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    }
    const auto r = rfk::composite(s, v, Vec3::Ones());
    double sum = r.transmittance.back();
    for (double w : r.weights) sum += w;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return verdict(worst <= 1e-6, "max |sum w + T - 1| " + fmt(worst) + " over 100000 composites");
}

// ---------------------------------------------------------------- 10

Outcome checkpoint_size() {
  const rfk::TrainConfig cfg;
  const auto ck = rfk::to_checkpoint(rfk::Model<float>::initialize(cfg));
  const auto bytes = rfk::serialize_checkpoint(ck, rfk::CheckpointContents::weights_only);
  const double mb = static_cast<double>(bytes.size()) / 1e6;
  return verdict(bytes.size() >= 4'000'000 && bytes.size() <= 6'000'000,
                 std::to_string(bytes.size()) + " bytes (" + fmt(mb) + " MB) for " +
                     std::to_string(ck.coarse.size() + ck.fine->size()) + " float32 weights");
}

// ---------------------------------------------------------------- 5, 6, 9

struct DeskScale {
  fs::path work_dir;
  int iterations = 5000;
  int threads = 0;
  std::ostream* progress = nullptr;

  static constexpr int kFullIterations = 5000;

  bool reduced() const { return iterations != kFullIterations; }

  // The learning-rate schedule depends on the iteration count, so reduced
  // runs never share (or resume) directories with full ones.
  fs::path run_dir(const std::string& name) const {
    return work_dir / (reduced() ? name + "_" + std::to_string(iterations) + "it" : name);
  }

  rfk::Dataset scene() const {
    const fs::path dir = work_dir / "scene";
    if (fs::exists(dir / "transforms.json")) return rfk::load_dataset(dir);
    rfk::SynthOptions opt;
    opt.n_views = 20;
    opt.n_test_views = 5;
    opt.resolution = 64;
    opt.threads = static_cast<unsigned>(rfk::resolve_thread_count(threads));
    return rfk::generate_synthetic_dataset(rfk::AnalyticField::blob_specular_sphere(), opt, dir);
  }

  rfk::TrainConfig config(const rfk::Ablations& ablations) const {
    rfk::TrainConfig cfg;
    cfg.batch_rays = 1024;
    cfg.max_iters = iterations;
    cfg.ablations = ablations;
    cfg.checkpoint_every = 100;
    cfg.threads = threads;
    return cfg;
  }

  // Trains (resuming when a partial checkpoint exists) and scores the test
  // views; returns the mean test PSNR.
  double run(const std::string& name, const rfk::Ablations& ablations, const rfk::Dataset& ds) const {
    const fs::path dir = run_dir(name);
    const rfk::TrainConfig cfg = config(ablations);
    std::optional<rfk::Checkpoint> resume;
    if (fs::exists(dir / rfk::kCheckpointFile)) resume = rfk::load_checkpoint(dir / rfk::kCheckpointFile);
    const bool done = resume && resume->iteration >= cfg.max_iters && fs::exists(dir / rfk::kWeightsFile);
    if (!done) {
      if (progress) *progress << "[desk-scale] training " << name << (resume ? " (resuming)" : "") << std::endl;
      rfk::train(ds, cfg, rfk::TrainOutputs{dir, progress, 100}, resume);
    }
    const rfk::Checkpoint model = rfk::load_checkpoint(dir / rfk::kWeightsFile);
    rfk::RenderSettings rs;
    rs.threads = threads;
    const auto rows = rfk::evaluate_views(model, ds, ds.test, rs);
    rfk::write_metrics_csv(dir / "metrics.csv", rows);
    return rfk::mean_psnr(rows);
  }
};

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome()> check;
  double time_limit = 0.0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  bool desk_scale = false;
  DeskScale desk;
  desk.work_dir = "desk_scale";
  std::vector<int> only;
  app.add_flag("--desk-scale", desk_scale, "Also run the training-based criteria 5, 6 and 9 (hours of CPU time)");
  app.add_option("--work-dir", desk.work_dir, "Directory for desk-scale datasets and runs; reused to resume");
  app.add_option("--iterations", desk.iterations, "Training iterations per desk-scale run (reduced runs are marked)")
      ->check(CLI::PositiveNumber);
  app.add_option("--threads", desk.threads, "Worker threads for desk-scale runs (0: all cores)");
  app.add_option("--only", only, "Run only these criterion numbers")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  desk.progress = &std::cerr;

  // Desk-scale results are shared by criteria 5, 6 and 9.
  std::map<std::string, double> psnr;
  std::optional<rfk::Dataset> desk_scene;
  auto desk_run = [&](const std::string& name, rfk::Ablations a) {
    if (!psnr.count(name)) {
      if (!desk_scene) desk_scene = desk.scene();
      psnr[name] = desk.run(name, a, *desk_scene);
    }
    return psnr[name];
  };
  auto desk_gate = [&](const std::function<Outcome()>& body) -> std::function<Outcome()> {
    return [&, body] {
      if (!desk_scale)
        return Outcome{Outcome::Status::skipped, "requires --desk-scale; each of the five training runs takes hours of CPU time"};
      Outcome o = body();
      if (desk.reduced()) o.detail += "; reduced run of " + std::to_string(desk.iterations) + " iterations";
      return o;
    };
  };
  rfk::Ablations complete, no_hier, no_vd, no_pe;
  no_hier.hierarchical = false;
  no_vd.view_dependence = false;
  no_pe.positional_encoding = false;

  const std::vector<Criterion> criteria{
      {1, "quadrature vs oracle", quadrature_vs_oracle, 60.0},
      {2, "NDC identity", ndc_identity, 10.0},
      {3, "gradient suite", gradient_suite, 60.0},
      {4, "sampler statistics", sampler_statistics, 30.0},
      {5, "desk-scale held-out PSNR",
       desk_gate([&] {
         const double p = desk_run("complete", complete);
         return verdict(p >= 25.0, "mean test PSNR " + fmt(p, 4) + " dB (threshold 25 dB)");
       })},
      {6, "ablation ordering",
       desk_gate([&] {
         const double c = desk_run("complete", complete), h = desk_run("no_hierarchical", no_hier),
                      v = desk_run("no_view_dependence", no_vd), e = desk_run("no_positional_encoding", no_pe);
         return verdict(c >= h && h >= v && c >= e + 2.0,
                        "PSNR complete " + fmt(c, 4) + ", no-hierarchical " + fmt(h, 4) + ", no-view-dependence " +
                            fmt(v, 4) + ", no-positional-encoding " + fmt(e, 4) + " dB");
       })},
      {7, "sigma view-independence", sigma_view_independence},
      {8, "partition of unity", partition_of_unity},
      {9, "determinism",
       desk_gate([&] {
         desk_run("complete", complete);
         desk_run("complete_repeat", complete);
         std::string differs;
         for (const char* f : {rfk::kCheckpointFile, rfk::kWeightsFile, "metrics.csv"})
           if (file_bytes(desk.run_dir("complete") / f) != file_bytes(desk.run_dir("complete_repeat") / f))
             differs += std::string(differs.empty() ? "" : ", ") + f;
         return verdict(differs.empty(), differs.empty() ? "checkpoints and metric CSVs are byte-identical"
                                                         : "differing files: " + differs);
       })},
      {10, "checkpoint size", checkpoint_size},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {Outcome::Status::fail, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(start);
    if (o.status == Outcome::Status::pass && c.time_limit > 0.0 && elapsed >= c.time_limit) {
      o.status = Outcome::Status::fail;
      o.detail += "; exceeded " + fmt(c.time_limit) + " s limit";
    }
    const char* label = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::fail ? "FAIL" : "SKIPPED";
    failures += o.status == Outcome::Status::fail;
    std::cout << "criterion " << c.id << " (" << c.title << "): " << label << " (" << o.detail << "; "
              << std::fixed << std::setprecision(1) << elapsed << " s)" << std::defaultfloat << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
