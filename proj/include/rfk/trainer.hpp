#pragma once

// Optimization loop: random ray batches, the coarse + fine photometric loss,
// exponential learning-rate decay, checkpointing, and rendering / evaluation
// of trained models.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfk/checkpoint.hpp"
#include "rfk/encoding.hpp"
#include "rfk/metrics.hpp"
#include "rfk/network.hpp"
#include "rfk/parallel.hpp"
#include "rfk/render.hpp"
#include "rfk/rng.hpp"
#include "rfk/scene.hpp"

namespace rfk {

struct Ablations {
  bool positional_encoding = true;
  bool view_dependence = true;
  bool hierarchical = true;
};

struct TrainConfig {
  int batch_rays = 4096;
  int n_coarse = 64;
  int n_fine = 128;
  double lr_init = 5e-4;
  double lr_final = 5e-5;
  /// 0: decay over max_iters.
  int decay_iters = 0;
  int max_iters = 20000;
  double sigma_noise_std = 0.0;
  std::uint64_t seed = 0;
  Ablations ablations;
  int L_position = 10;
  /// 0: only at the end of training.
  int checkpoint_every = 0;
  /// 0: $RFK_THREADS or the hardware concurrency.
  int threads = 0;
  bool ndc_view_directions = false;
  /// Unset: white for bounded scenes, black for forward-facing ones.
  std::optional<Vec3> background;
  /// Rays per gradient work item. Fixing it (rather than deriving it from
  /// the thread count) keeps the reduction order, and so the result,
  /// independent of the number of threads.
  int chunk_rays = 64;
  /// Hidden layer sizes; input sizes always follow the encoding. Unset: the
  /// full 256 / 128 wide network.
  std::optional<MlpShape> layer_sizes;

  void validate() const {
    if (batch_rays < 1) throw std::invalid_argument("batch_rays must be >= 1");
    if (n_coarse < 1 || n_fine < 0) throw std::invalid_argument("sample counts must be positive");
    if (ablations.hierarchical && n_fine < 1) throw std::invalid_argument("hierarchical sampling needs n_fine >= 1");
    if (!(lr_final > 0.0) || !(lr_init >= lr_final)) throw std::invalid_argument("need lr_init >= lr_final > 0");
    if (decay_iters < 0 || max_iters < 0) throw std::invalid_argument("iteration counts must be >= 0");
    if (!(sigma_noise_std >= 0.0)) throw std::invalid_argument("sigma_noise_std must be >= 0");
    if (L_position < 0) throw std::invalid_argument("L must be >= 0");
    if (ablations.positional_encoding && L_position < 1)
      throw std::invalid_argument("positional encoding needs L >= 1");
    if (chunk_rays < 1 || checkpoint_every < 0) throw std::invalid_argument("invalid chunking or checkpoint interval");
  }

  EncodingConfig encoding() const {
    EncodingConfig e;
    e.L_position = L_position;
    e.L_direction = ablations.view_dependence ? EncodingConfig::scaled_direction_frequencies(L_position) : 0;
    e.positional_encoding = ablations.positional_encoding;
    e.view_dependence = ablations.view_dependence;
    return e;
  }

  int effective_decay_iters() const { return decay_iters > 0 ? decay_iters : max_iters; }

  /// Samples per ray as (coarse, fine). Without hierarchical sampling the
  /// single network gets the same number of queries as both passes
  /// together: (2 n_coarse + n_fine, 0), i.e. 256 at the defaults.
  std::pair<int, int> sampling() const {
    if (ablations.hierarchical) return {n_coarse, n_fine};
    return {single_pass_samples(n_coarse, n_fine), 0};
  }

  static int single_pass_samples(int n_coarse, int n_fine) { return 2 * n_coarse + n_fine; }

  RenderConfig render_config(const Vec3& bg, bool perturb) const {
    RenderConfig rc;
    std::tie(rc.n_coarse, rc.n_fine) = sampling();
    rc.hierarchical = ablations.hierarchical;
    rc.perturb = perturb;
    rc.background = bg;
    return rc;
  }
};

inline Vec3 default_background(SceneMode mode) {
  return mode == SceneMode::bounded_360 ? Vec3::Ones() : Vec3::Zero();
}

/// Density noise std. dev. used when none is configured: none for synthetic
/// scenes, unit variance for forward-facing captures.
inline double default_sigma_noise(SceneMode mode) { return mode == SceneMode::bounded_360 ? 0.0 : 1.0; }

inline Vec3 resolve_background(const TrainConfig& cfg, const Dataset& ds) {
  return cfg.background ? *cfg.background : default_background(ds.mode);
}

struct LossReport {
  double total = 0.0;
  double coarse_term = 0.0;
  double fine_term = 0.0;
  std::int64_t iteration = 0;
};

/// Batch-averaged squared color error of both passes. Without a fine pass
/// (`include_fine` false) the fine term is 0.
inline LossReport compute_loss(std::span<const Vec3> coarse, std::span<const Vec3> fine, std::span<const Vec3> target,
                               bool include_fine = true) {
  if (coarse.size() != target.size() || (include_fine && fine.size() != target.size()))
    throw std::invalid_argument("loss: batch sizes differ");
  if (target.empty()) throw std::invalid_argument("loss: empty batch");
  LossReport r;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!coarse[i].allFinite() || !target[i].allFinite() || (include_fine && !fine[i].allFinite()))
      throw DivergenceError("loss: non-finite color at ray " + std::to_string(i));
    r.coarse_term += (coarse[i] - target[i]).squaredNorm();
    if (include_fine) r.fine_term += (fine[i] - target[i]).squaredNorm();
  }
  const double n = static_cast<double>(target.size());
  r.coarse_term /= n;
  r.fine_term /= n;
  r.total = r.coarse_term + r.fine_term;
  return r;
}

/// lr_init * (lr_final / lr_init)^(min(iter, decay) / decay).
inline double lr_at(std::int64_t iter, const TrainConfig& cfg) {
  const int decay = cfg.effective_decay_iters();
  if (decay <= 0) return cfg.lr_init;
  const double frac = static_cast<double>(std::min<std::int64_t>(std::max<std::int64_t>(iter, 0), decay)) / decay;
  if (frac == 1.0) return cfg.lr_final;
  return cfg.lr_init * std::pow(cfg.lr_final / cfg.lr_init, frac);
}

struct TrainingRay {
  RenderRay ray;
  Vec3 target = Vec3::Zero();
  int image = 0;
  int px = 0;
  int py = 0;
};

/// Uniform draws, with replacement, over every (image, pixel) pair of the
/// training split.
inline std::vector<TrainingRay> sample_ray_batch(const Dataset& ds, int batch_rays, Rng& rng, const RaySpace& space) {
  if (ds.train.empty()) throw std::invalid_argument("sample_ray_batch: training split is empty");
  if (batch_rays < 1) throw std::invalid_argument("sample_ray_batch: batch_rays must be >= 1");
  const std::uint64_t w = static_cast<std::uint64_t>(ds.intrinsics.width_px);
  const std::uint64_t per_image = w * static_cast<std::uint64_t>(ds.intrinsics.height_px);
  std::vector<TrainingRay> out(static_cast<std::size_t>(batch_rays));
  for (auto& tr : out) {
    const std::uint64_t k = rng.below(per_image * ds.train.size());
    tr.image = ds.train[static_cast<std::size_t>(k / per_image)];
    tr.px = static_cast<int>((k % per_image) % w);
    tr.py = static_cast<int>((k % per_image) / w);
    tr.ray = make_render_ray(ds.intrinsics, ds.poses[static_cast<std::size_t>(tr.image)], tr.px, tr.py, space);
    tr.target = ds.images[static_cast<std::size_t>(tr.image)].rgb(tr.px, tr.py).cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

/// Networks plus optimizer state. Without hierarchical sampling there is
/// no fine network.
template <typename Scalar>
struct Model {
  EncodingConfig encoding;
  MlpParams<Scalar> coarse;
  std::optional<MlpParams<Scalar>> fine;
  AdamState<Scalar> coarse_adam;
  std::optional<AdamState<Scalar>> fine_adam;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  static Model initialize(const TrainConfig& cfg) {
    return initialize(cfg, cfg.layer_sizes.value_or(MlpShape::for_encoding(cfg.encoding())));
  }

  /// Custom layer sizes (the input sizes are taken from the encoding).
  static Model initialize(const TrainConfig& cfg, MlpShape shape) {
    Model m;
    m.encoding = cfg.encoding();
    m.encoding.validate();
    shape.position_dims = m.encoding.position_dims();
    shape.direction_dims = m.encoding.direction_dims();
    m.seed = cfg.seed;
    m.coarse = init_params<Scalar>(shape, cfg.seed, 0);
    m.coarse_adam = AdamState<Scalar>::zeros(m.coarse.size());
    if (cfg.ablations.hierarchical) {
      m.fine = init_params<Scalar>(shape, cfg.seed, 1);
      m.fine_adam = AdamState<Scalar>::zeros(m.fine->size());
    }
    return m;
  }
};

inline Checkpoint to_checkpoint(const Model<float>& m) {
  Checkpoint ck;
  ck.encoding = m.encoding;
  ck.seed = m.seed;
  ck.iteration = m.iteration;
  ck.coarse = m.coarse;
  ck.fine = m.fine;
  ck.coarse_adam = m.coarse_adam;
  ck.fine_adam = m.fine_adam;
  return ck;
}

inline Model<float> from_checkpoint(const Checkpoint& ck) {
  if (!ck.has_optimizer_state()) throw CheckpointError("checkpoint has no optimizer state; cannot resume training");
  Model<float> m;
  m.encoding = ck.encoding;
  m.seed = ck.seed;
  m.iteration = ck.iteration;
  m.coarse = ck.coarse;
  m.fine = ck.fine;
  m.coarse_adam = *ck.coarse_adam;
  m.fine_adam = ck.fine_adam;
  return m;
}

template <typename Scalar>
struct StepGradients {
  LossReport loss;
  MlpParams<Scalar> coarse;
  std::optional<MlpParams<Scalar>> fine;
  std::vector<Vec3> coarse_colors;
  std::vector<Vec3> fine_colors;
  /// Per-ray sample sets used by each pass.
  std::vector<RaySampleSet> coarse_samples;
  std::vector<RaySampleSet> fine_samples;
};

namespace detail {

template <typename Scalar>
void accumulate(MlpParams<Scalar>& total, const MlpParams<Scalar>& part, bool first) {
  if (first) total.values() = part.values();
  else total.values() += part.values();
}

template <typename Scalar>
MlpParams<Scalar> backward_from(const MlpParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                                const FieldGradient& g) {
  if (g.rgb.cols() == 0) return MlpParams<Scalar>(params.shape());
  return backward(params, cache, MatrixX<Scalar>(g.rgb.template cast<Scalar>()),
                  RowVectorX<Scalar>(g.sigma.template cast<Scalar>()));
}

}  // namespace detail

/// Loss and gradients for one batch at iteration `iter`. Each ray draws its
/// samples from its own stream keyed by (seed, iter, ray), and the batch is
/// split into fixed chunks whose gradients are summed in chunk order, so
/// the result does not depend on `threads`. Sample positions (including
/// the coarse-to-fine resampling) are treated as constants.
template <typename Scalar>
StepGradients<Scalar> loss_and_gradients(const Model<Scalar>& model, std::span<const TrainingRay> batch,
                                         const TrainConfig& cfg, std::int64_t iter, const Vec3& background,
                                         unsigned threads = 1) {
  if (batch.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
  const bool hierarchical = model.fine.has_value();
  if (hierarchical != cfg.ablations.hierarchical)
    throw std::invalid_argument("loss_and_gradients: model and config disagree on hierarchical sampling");
  RenderConfig rc = cfg.render_config(background, true);

  const std::size_t n = batch.size();
  const std::size_t chunk = static_cast<std::size_t>(cfg.chunk_rays);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  const double scale = 2.0 / static_cast<double>(n);
  const auto u_iter = static_cast<std::uint64_t>(iter);

  StepGradients<Scalar> out{{}, MlpParams<Scalar>(model.coarse.shape()), std::nullopt, std::vector<Vec3>(n),
                            std::vector<Vec3>(n), std::vector<RaySampleSet>(n), std::vector<RaySampleSet>(n)};
  if (hierarchical) out.fine = MlpParams<Scalar>(model.fine->shape());

  struct ChunkResult {
    MlpParams<Scalar> coarse;
    std::optional<MlpParams<Scalar>> fine;
  };
  const std::size_t wave = std::max<std::size_t>(1, threads);
  std::vector<ChunkResult> results(std::min(wave, n_chunks));

  for (std::size_t first = 0; first < n_chunks; first += wave) {
    const std::size_t count = std::min(wave, n_chunks - first);
    parallel_for(count, threads, [&](std::size_t slot) {
      const std::size_t c = first + slot;
      const std::size_t begin = c * chunk, end = std::min(n, begin + chunk);
      std::vector<RenderRay> rays;
      std::vector<Rng> rngs;
      for (std::size_t i = begin; i < end; ++i) {
        rays.push_back(batch[i].ray);
        rngs.push_back(Rng::stream(model.seed, Substream::sampling, {u_iter, i}));
      }
      Rng noise_coarse = Rng::stream(model.seed, Substream::noise, {u_iter, c, 0});
      Rng noise_fine = Rng::stream(model.seed, Substream::noise, {u_iter, c, 1});
      ForwardCache<Scalar> cache_coarse, cache_fine;
      NetworkField<Scalar> coarse(model.coarse, model.encoding, cfg.sigma_noise_std, &noise_coarse, &cache_coarse);
      std::optional<NetworkField<Scalar>> fine;
      if (hierarchical) fine.emplace(*model.fine, model.encoding, cfg.sigma_noise_std, &noise_fine, &cache_fine);

      BatchRender br = hierarchical ? render_rays(coarse, *fine, rays, rc, rngs) : render_rays(coarse, coarse, rays, rc, rngs);

      std::vector<Vec3> grad_coarse(rays.size()), grad_fine(rays.size());
      for (std::size_t r = 0; r < rays.size(); ++r) {
        const Vec3& target = batch[begin + r].target;
        out.coarse_colors[begin + r] = br.rays[r].color_coarse();
        out.fine_colors[begin + r] = br.rays[r].color_fine();
        out.coarse_samples[begin + r] = br.rays[r].coarse_samples;
        out.fine_samples[begin + r] = br.rays[r].fine_samples;
        grad_coarse[r] = scale * (br.rays[r].color_coarse() - target);
        if (hierarchical) grad_fine[r] = scale * (br.rays[r].color_fine() - target);
      }
      ChunkResult& res = results[slot];
      res.coarse = detail::backward_from(model.coarse,
                                         cache_coarse,
                                         composite_gradients(br, rays, grad_coarse, false, background));
      if (hierarchical)
        res.fine = detail::backward_from(*model.fine, cache_fine,
                                         composite_gradients(br, rays, grad_fine, true, background));
    });
    for (std::size_t slot = 0; slot < count; ++slot) {
      detail::accumulate(out.coarse, results[slot].coarse, first + slot == 0);
      if (hierarchical) detail::accumulate(*out.fine, *results[slot].fine, first + slot == 0);
    }
  }

  std::vector<Vec3> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = batch[i].target;
  out.loss = compute_loss(out.coarse_colors, out.fine_colors, targets, hierarchical);
  out.loss.iteration = iter;
  return out;
}

/// One optimization step at iteration model.iteration: draws the batch from
/// the (seed, iteration) training stream, then one Adam update per network.
template <typename Scalar>
LossReport train_step(Model<Scalar>& model, const Dataset& ds, const TrainConfig& cfg, unsigned threads = 1) {
  const std::int64_t iter = model.iteration;
  Rng rng = Rng::stream(model.seed, Substream::training, {static_cast<std::uint64_t>(iter)});
  const auto batch = sample_ray_batch(ds, cfg.batch_rays, rng, ds.ray_space(cfg.ndc_view_directions));
  StepGradients<Scalar> g = loss_and_gradients(model, batch, cfg, iter, resolve_background(cfg, ds), threads);
  if (!std::isfinite(g.loss.total))
    throw DivergenceError("training diverged at iteration " + std::to_string(iter) + ": non-finite loss");
  const double lr = lr_at(iter, cfg);
  try {
    adam_step(model.coarse, g.coarse, model.coarse_adam, lr);
    if (model.fine) adam_step(*model.fine, *g.fine, *model.fine_adam, lr);
  } catch (const DivergenceError& e) {
    throw DivergenceError("training diverged at iteration " + std::to_string(iter) + ": " + e.what());
  }
  model.iteration = iter + 1;
  return g.loss;
}

struct TrainOutputs {
  /// Directory for checkpoint.nrfk (resumable), model.nrfk (weights only)
  /// and train_log.csv. Nothing is written when unset.
  std::optional<std::filesystem::path> dir;
  std::ostream* progress = nullptr;
  int progress_every = 100;
};

struct TrainResult {
  Model<float> model;
  std::vector<LossReport> losses;
};

inline constexpr const char* kCheckpointFile = "checkpoint.nrfk";
inline constexpr const char* kWeightsFile = "model.nrfk";
inline constexpr const char* kTrainLogFile = "train_log.csv";

/// Runs training up to cfg.max_iters total iterations, starting from
/// `resume` when given (a resumed run continues bit-identically).
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainOutputs& io = {},
                         const std::optional<Checkpoint>& resume = std::nullopt) {
  cfg.validate();
  ds.validate();
  if (ds.train.empty()) throw std::invalid_argument("train: dataset has no training images");
  TrainResult result;
  if (resume) {
    result.model = from_checkpoint(*resume);
    const EncodingConfig e = cfg.encoding();
    if (result.model.encoding.L_position != e.L_position ||
        result.model.encoding.positional_encoding != e.positional_encoding ||
        result.model.encoding.view_dependence != e.view_dependence ||
        result.model.fine.has_value() != cfg.ablations.hierarchical || result.model.seed != cfg.seed)
      throw std::invalid_argument("train: resume checkpoint does not match the training configuration");
  } else {
    result.model = Model<float>::initialize(cfg);
  }
  const unsigned threads = resolve_thread_count(cfg.threads);

  std::ofstream log;
  if (io.dir) {
    std::filesystem::create_directories(*io.dir);
    const auto log_path = *io.dir / kTrainLogFile;
    const bool append = resume && std::filesystem::exists(log_path);
    log.open(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write training log '" + log_path.string() + "'");
    if (!append) log << "iter,loss,lr,wall_time\n";
    log << std::setprecision(10);
  }
  auto write_checkpoint = [&] {
    if (io.dir) save_checkpoint(*io.dir / kCheckpointFile, to_checkpoint(result.model), CheckpointContents::with_optimizer);
  };

  const auto start = std::chrono::steady_clock::now();
  while (result.model.iteration < cfg.max_iters) {
    const std::int64_t iter = result.model.iteration;
    LossReport r = train_step(result.model, ds, cfg, threads);
    result.losses.push_back(r);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log.is_open()) log << iter << ',' << r.total << ',' << lr_at(iter, cfg) << ',' << wall << '\n';
    if (io.progress && io.progress_every > 0 && (iter % io.progress_every == 0 || iter + 1 == cfg.max_iters))
      *io.progress << "iter " << iter << "  loss " << r.total << "  lr " << lr_at(iter, cfg) << "  " << std::fixed
                   << std::setprecision(1) << wall << "s" << std::defaultfloat << std::setprecision(6) << std::endl;
    if (cfg.checkpoint_every > 0 && result.model.iteration % cfg.checkpoint_every == 0) write_checkpoint();
  }
  write_checkpoint();
  if (io.dir) save_checkpoint(*io.dir / kWeightsFile, to_checkpoint(result.model), CheckpointContents::weights_only);
  return result;
}

struct RenderSettings {
  int n_coarse = 64;
  int n_fine = 128;
  Vec3 background = Vec3::Ones();
  int threads = 0;
};

/// Deterministic rendering of one view (bin-midpoint samples, no density
/// noise). Models without a fine network use 2 n_coarse + n_fine samples
/// in a single pass.
inline Image render_view(const Checkpoint& ck, const CameraIntrinsics& intrinsics, const Pose& pose,
                         const RaySpace& space, const RenderSettings& settings) {
  intrinsics.validate();
  RenderConfig rc;
  rc.hierarchical = ck.fine.has_value();
  rc.n_coarse = rc.hierarchical ? settings.n_coarse : TrainConfig::single_pass_samples(settings.n_coarse, settings.n_fine);
  rc.n_fine = settings.n_fine;
  rc.perturb = false;
  rc.background = settings.background;
  Image img(intrinsics.width_px, intrinsics.height_px);
  parallel_for(static_cast<std::size_t>(intrinsics.height_px), resolve_thread_count(settings.threads),
               [&](std::size_t row) {
                 const int y = static_cast<int>(row);
                 std::vector<RenderRay> rays;
                 for (int x = 0; x < intrinsics.width_px; ++x)
                   rays.push_back(make_render_ray(intrinsics, pose, x, y, space));
                 std::vector<Rng> rngs(rays.size());
                 NetworkField<float> coarse(ck.coarse, ck.encoding);
                 BatchRender br = rc.hierarchical
                                      ? render_rays(coarse, NetworkField<float>(*ck.fine, ck.encoding), rays, rc, rngs)
                                      : render_rays(coarse, coarse, rays, rc, rngs);
                 for (int x = 0; x < intrinsics.width_px; ++x)
                   img.set_rgb(x, y, br.rays[static_cast<std::size_t>(x)].color_fine());
               });
  return img;
}

/// Renders the listed views and scores them against the dataset images.
inline std::vector<ImageMetrics> evaluate_views(const Checkpoint& ck, const Dataset& ds, const std::vector<int>& views,
                                                const RenderSettings& settings, bool ndc_view_directions = false,
                                                std::vector<Image>* rendered = nullptr) {
  std::vector<ImageMetrics> rows;
  for (int v : views) {
    const auto i = static_cast<std::size_t>(v);
    Image img = render_view(ck, ds.intrinsics, ds.poses.at(i), ds.ray_space(ndc_view_directions), settings);
    const std::string id = ds.names.empty() ? std::to_string(v) : ds.names[i];
    rows.push_back(evaluate_pair(id, img, ds.images[i]));
    if (rendered) rendered->push_back(std::move(img));
  }
  return rows;
}

inline double mean_psnr(const std::vector<ImageMetrics>& rows) {
  double s = 0.0;
  for (const auto& r : rows) s += r.psnr;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

}  // namespace rfk
