#pragma once

// Datasets of posed images: manifest I/O, scene normalization, camera-ray
// construction, and synthetic datasets rendered from analytic fields.
//
// Layout on disk: scene_dir/transforms.json + scene_dir/images/*.png, with
//   {"camera_angle_x": rad, "near": n, "far": f | "inf", "mode": "...",
//    "frames": [{"file_path": "...", "transform_matrix": [[4x4 row-major]],
//                "split": "train" | "test" (optional)}]}

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfk/field.hpp"
#include "rfk/geometry.hpp"
#include "rfk/image.hpp"
#include "rfk/parallel.hpp"
#include "rfk/render.hpp"
#include "rfk/rng.hpp"

namespace rfk {

/// Scene content is assumed to lie in [-kSceneHalfExtent, kSceneHalfExtent]^3
/// for bounded captures; rays are clipped to that cube.
inline constexpr double kSceneHalfExtent = 1.0;

enum class SceneMode { bounded_360, forward_facing_ndc };

inline std::string to_string(SceneMode m) {
  return m == SceneMode::bounded_360 ? "bounded_360" : "forward_facing_ndc";
}

inline SceneMode scene_mode_from_string(const std::string& s) {
  if (s == "bounded_360") return SceneMode::bounded_360;
  if (s == "forward_facing_ndc") return SceneMode::forward_facing_ndc;
  throw std::invalid_argument("unknown scene mode '" + s + "'");
}

/// How camera rays are turned into rendering rays.
struct RaySpace {
  SceneMode mode = SceneMode::bounded_360;
  double near = 2.0;
  double far = 6.0;
  /// NDC mode only: feed the NDC-space direction (instead of the world-space
  /// one) to the network.
  bool ndc_view_directions = false;
};

/// Bounded mode: [near, far] clipped to the scene cube. Forward-facing mode:
/// NDC ray over [0, 1].
inline RenderRay make_render_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double px, double py,
                                 const RaySpace& space) {
  Ray ray = generate_ray(intrinsics, pose, px, py);
  RenderRay out;
  out.view_dir = ray.direction.normalized();
  if (space.mode == SceneMode::forward_facing_ndc) {
    out.ray = ndc_convert(ray, intrinsics, space.near);
    if (space.ndc_view_directions) out.view_dir = out.ray.direction.normalized();
    return out;
  }
  ray.t_near = space.near;
  ray.t_far = space.far;
  auto clipped = clip_to_box(ray, Vec3::Constant(-kSceneHalfExtent), Vec3::Constant(kSceneHalfExtent));
  out.ray = ray;
  if (!clipped) {
    out.hit = false;
    return out;
  }
  out.ray.t_near = clipped->first;
  out.ray.t_far = clipped->second;
  return out;
}

struct Dataset {
  std::vector<Image> images;
  std::vector<Pose> poses;
  std::vector<std::string> names;
  CameraIntrinsics intrinsics;
  double camera_angle_x = 0.0;
  double near = 2.0;
  double far = 6.0;
  SceneMode mode = SceneMode::bounded_360;
  std::vector<int> train;
  std::vector<int> test;

  RaySpace ray_space(bool ndc_view_directions = false) const { return {mode, near, far, ndc_view_directions}; }

  void validate() const {
    if (images.size() != poses.size()) throw std::invalid_argument("dataset: image and pose counts differ");
    if (!names.empty() && names.size() != images.size()) throw std::invalid_argument("dataset: name count differs");
    intrinsics.validate();
    for (std::size_t i = 0; i < images.size(); ++i)
      if (images[i].width != intrinsics.width_px || images[i].height != intrinsics.height_px)
        throw std::invalid_argument("dataset: image " + std::to_string(i) + " has inconsistent size");
    if (!(near < far)) throw std::invalid_argument("dataset: near bound must be below far bound");
    if (std::isinf(far) && mode != SceneMode::forward_facing_ndc)
      throw std::invalid_argument("dataset: infinite far bound requires forward_facing_ndc mode");
    if (!(near >= 0.0) || (mode == SceneMode::forward_facing_ndc && !(near > 0.0)))
      throw std::invalid_argument("dataset: invalid near bound");
    for (const auto* split : {&train, &test})
      for (int i : *split)
        if (i < 0 || static_cast<std::size_t>(i) >= images.size())
          throw std::invalid_argument("dataset: split index out of range");
  }

  /// Restricts the training split to its first n images.
  void limit_training_images(int n) {
    if (n > 0 && static_cast<std::size_t>(n) < train.size()) train.resize(static_cast<std::size_t>(n));
  }
};

namespace detail {

inline Mat4 parse_matrix(const nlohmann::json& j) {
  Mat4 m;
  if (j.is_array() && j.size() == 4 && j[0].is_array()) {
    for (int r = 0; r < 4; ++r) {
      if (!j[r].is_array() || j[r].size() != 4) throw std::invalid_argument("transform_matrix row " + std::to_string(r) + " must have 4 entries");
      for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
  }
  if (j.is_array() && j.size() == 16) {
    for (int k = 0; k < 16; ++k) m(k / 4, k % 4) = j[k].get<double>();
    return m;
  }
  throw std::invalid_argument("transform_matrix must be a 4x4 array");
}

}  // namespace detail

/// Loads scene_dir/transforms.json (or the manifest path itself).
inline Dataset load_dataset(const std::filesystem::path& manifest_or_dir,
                            const Vec3& background = Vec3::Ones()) {
  namespace fs = std::filesystem;
  const fs::path manifest =
      fs::is_directory(manifest_or_dir) ? manifest_or_dir / "transforms.json" : manifest_or_dir;
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("manifest '" + manifest.string() + "' not found");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest JSON '" + manifest.string() + "': " + e.what());
  }

  Dataset ds;
  try {
    ds.camera_angle_x = j.at("camera_angle_x").get<double>();
    ds.mode = scene_mode_from_string(j.value("mode", std::string("bounded_360")));
    ds.near = j.at("near").get<double>();
    const auto& far = j.at("far");
    if (far.is_string()) {
      if (far.get<std::string>() != "inf") throw std::invalid_argument("far must be a number or \"inf\"");
      ds.far = std::numeric_limits<double>::infinity();
    } else {
      ds.far = far.get<double>();
    }
    if (!j.at("frames").is_array() || j.at("frames").empty()) throw std::invalid_argument("manifest has no frames");
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest '" + manifest.string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("manifest '" + manifest.string() + "': " + e.what());
  }

  const auto& frames = j.at("frames");
  bool any_split = false;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    const std::string label = "frame " + std::to_string(i);
    std::string file;
    try {
      file = fr.at("file_path").get<std::string>();
      ds.poses.push_back(Pose::from_matrix(detail::parse_matrix(fr.at("transform_matrix"))));
    } catch (const std::exception& e) {
      throw std::runtime_error(label + ": invalid transform_matrix or file_path: " + e.what());
    }
    const fs::path image_path = manifest.parent_path() / file;
    if (!fs::exists(image_path)) throw std::runtime_error(label + ": image file '" + image_path.string() + "' not found");
    Image img = read_png(image_path, background);
    if (!ds.images.empty() && !img.same_shape(ds.images.front()))
      throw std::runtime_error(label + ": image size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                               " differs from " + std::to_string(ds.images.front().width) + "x" +
                               std::to_string(ds.images.front().height));
    ds.images.push_back(std::move(img));
    ds.names.push_back(fs::path(file).stem().string());
    if (fr.contains("split")) {
      any_split = true;
      const std::string split = fr.at("split").get<std::string>();
      if (split == "train") ds.train.push_back(static_cast<int>(i));
      else if (split == "test") ds.test.push_back(static_cast<int>(i));
      else throw std::runtime_error(label + ": unknown split '" + split + "'");
    }
  }
  if (!any_split) {
    for (int i = 0; i < static_cast<int>(ds.images.size()); ++i) {
      const bool held_out = ds.mode == SceneMode::forward_facing_ndc && i % 8 == 0 && ds.images.size() > 1;
      (held_out ? ds.test : ds.train).push_back(i);
    }
  }
  ds.intrinsics.width_px = ds.images.front().width;
  ds.intrinsics.height_px = ds.images.front().height;
  ds.intrinsics.focal_px = CameraIntrinsics::focal_from_fov(ds.intrinsics.width_px, ds.camera_angle_x);
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("manifest '" + manifest.string() + "': " + e.what());
  }
  return ds;
}

/// Writes images/<name>.png and transforms.json under `dir`.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ds.validate();
  fs::create_directories(dir / "images");
  nlohmann::json j;
  j["camera_angle_x"] = ds.camera_angle_x;
  j["near"] = ds.near;
  if (std::isinf(ds.far)) j["far"] = "inf";
  else j["far"] = ds.far;
  j["mode"] = to_string(ds.mode);
  j["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    std::ostringstream name;
    if (ds.names.empty()) name << std::setw(3) << std::setfill('0') << i;
    else name << ds.names[i];
    const std::string rel = "images/" + name.str() + ".png";
    write_png(dir / rel, ds.images[i]);
    const Mat4 m = ds.poses[i].matrix();
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    nlohmann::json frame{{"file_path", rel}, {"transform_matrix", rows}};
    const int idx = static_cast<int>(i);
    if (std::find(ds.test.begin(), ds.test.end(), idx) != ds.test.end()) frame["split"] = "test";
    else if (std::find(ds.train.begin(), ds.train.end(), idx) != ds.train.end()) frame["split"] = "train";
    j["frames"].push_back(frame);
  }
  std::ofstream out(dir / "transforms.json");
  if (!out) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
  out << j.dump(2) << '\n';
}

struct NormalizeOptions {
  /// Point mapped to the origin; the camera centroid when unset.
  std::optional<Vec3> center;
  double margin = 0.1;
};

struct SimilarityTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
};

/// Uniform similarity transform placing every camera center and the scene
/// center inside [-(1 - margin), 1 - margin]^3; bounds scale along.
inline Dataset normalize_scene(const Dataset& ds, const NormalizeOptions& opt = {},
                               SimilarityTransform* applied = nullptr) {
  if (ds.mode != SceneMode::bounded_360) throw std::invalid_argument("normalize_scene: requires bounded_360 mode");
  if (ds.poses.empty()) throw std::invalid_argument("normalize_scene: no cameras");
  Vec3 center = Vec3::Zero();
  if (opt.center) {
    center = *opt.center;
  } else {
    for (const auto& p : ds.poses) center += p.translation;
    center /= static_cast<double>(ds.poses.size());
  }
  double extent = 0.0;
  for (const auto& p : ds.poses) extent = std::max(extent, (p.translation - center).cwiseAbs().maxCoeff());
  if (!(extent > 1e-12)) throw std::invalid_argument("normalize_scene: degenerate camera layout (all cameras coincide)");
  const double scale = (1.0 - opt.margin) / extent;
  Dataset out = ds;
  for (auto& p : out.poses) p.translation = (p.translation - center) * scale;
  out.near *= scale;
  out.far *= scale;
  if (applied) *applied = {center, scale};
  return out;
}

enum class ViewManifold { hemisphere, sphere };

struct SynthOptions {
  int n_views = 20;
  int n_test_views = 0;
  int resolution = 64;
  ViewManifold manifold = ViewManifold::hemisphere;
  std::uint64_t seed = 0;
  double radius = 4.0;
  double camera_angle_x = 0.6911112070083618;
  double near = 2.0;
  double far = 6.0;
  Vec3 background = Vec3::Ones();
  long long n_dense = 4096;
  unsigned threads = 1;
};

/// Reference rendering of one view of an analytic field (not quantized).
inline Image render_oracle_image(const AnalyticField& field, const CameraIntrinsics& intrinsics, const Pose& pose,
                                 const RaySpace& space, const Vec3& background, long long n_dense,
                                 unsigned threads = 1) {
  Image img(intrinsics.width_px, intrinsics.height_px);
  OracleOptions opt;
  opt.n_dense = n_dense;
  parallel_for(static_cast<std::size_t>(intrinsics.height_px), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < intrinsics.width_px; ++x) {
      RenderRay rr = make_render_ray(intrinsics, pose, x, y, space);
      img.set_rgb(x, y, rr.hit ? oracle_render(field, rr.ray, background, opt) : background);
    }
  });
  return img;
}

/// Camera centers uniformly distributed over the (upper hemi-)sphere of
/// radius opt.radius, all looking at the origin.
inline std::vector<Pose> sample_view_poses(int count, const SynthOptions& opt, std::uint64_t stream) {
  Rng rng = Rng::stream(opt.seed, Substream::dataset, {stream});
  std::vector<Pose> poses;
  for (int i = 0; i < count; ++i) {
    const double z = opt.manifold == ViewManifold::hemisphere ? rng.uniform(0.0, 1.0) : rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 eye = opt.radius * Vec3(r * std::cos(phi), r * std::sin(phi), z);
    poses.push_back(Pose::look_at(eye, Vec3::Zero()));
  }
  return poses;
}

/// Renders a dataset from an analytic field. Images are quantized to 8 bits
/// so the in-memory dataset equals the one reloaded from disk. When
/// `out_dir` is given the dataset is also written there.
inline Dataset generate_synthetic_dataset(const AnalyticField& field, const SynthOptions& opt,
                                          const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  if (opt.resolution < 1 || opt.resolution > 256) throw std::invalid_argument("synthetic resolution must be in [1, 256]");
  if (opt.n_views < 1 || opt.n_test_views < 0) throw std::invalid_argument("synthetic view counts are invalid");
  Dataset ds;
  ds.camera_angle_x = opt.camera_angle_x;
  ds.intrinsics = {opt.resolution, opt.resolution, CameraIntrinsics::focal_from_fov(opt.resolution, opt.camera_angle_x)};
  ds.near = opt.near;
  ds.far = opt.far;
  ds.mode = SceneMode::bounded_360;
  auto train = sample_view_poses(opt.n_views, opt, 0);
  auto test = sample_view_poses(opt.n_test_views, opt, 1);
  ds.poses = train;
  ds.poses.insert(ds.poses.end(), test.begin(), test.end());
  for (std::size_t i = 0; i < ds.poses.size(); ++i) {
    const bool is_test = i >= train.size();
    std::ostringstream name;
    name << (is_test ? "test_" : "train_") << std::setw(3) << std::setfill('0')
         << (is_test ? i - train.size() : i);
    ds.names.push_back(name.str());
    (is_test ? ds.test : ds.train).push_back(static_cast<int>(i));
    ds.images.push_back(quantized(
        render_oracle_image(field, ds.intrinsics, ds.poses[i], ds.ray_space(), opt.background, opt.n_dense, opt.threads)));
  }
  if (out_dir) save_dataset(ds, *out_dir);
  return ds;
}

}  // namespace rfk
