#pragma once

// Full-reference image metrics: MSE, PSNR (peak 1.0) and SSIM with the usual
// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1,
// evaluated on valid windows of each channel and averaged over channels.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfk/image.hpp"

namespace rfk {

struct SsimOptions {
  int window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.pixels.size() != b.pixels.size())
    throw std::invalid_argument("image metrics: shapes differ (" + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
}

/// Valid-mode separable filtering of a single plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

inline double mse(const Image& rendered, const Image& reference) {
  detail::require_same_shape(rendered, reference);
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.pixels.size(); ++i) {
    const double d = static_cast<double>(rendered.pixels[i]) - reference.pixels[i];
    sum += d * d;
  }
  return rendered.pixels.empty() ? 0.0 : sum / static_cast<double>(rendered.pixels.size());
}

/// -10 log10(mse); +inf for identical images.
inline double psnr_from_mse(double m) {
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

inline double psnr(const Image& rendered, const Image& reference) { return psnr_from_mse(mse(rendered, reference)); }

inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  detail::require_same_shape(a, b);
  if (a.width < opt.window || a.height < opt.window)
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(opt.window) + "-pixel window");

  std::vector<double> kernel(static_cast<std::size_t>(opt.window));
  const double center = 0.5 * (opt.window - 1);
  double ksum = 0.0;
  for (int i = 0; i < opt.window; ++i) {
    const double d = i - center;
    kernel[i] = std::exp(-d * d / (2.0 * opt.gaussian_sigma * opt.gaussian_sigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const int w = a.width, h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
      x[p] = a.pixels[3 * p + c];
      y[p] = b.pixels[3 * p + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    auto mx = detail::filter_valid(x, w, h, kernel), my = detail::filter_valid(y, w, h, kernel);
    auto sxx = detail::filter_valid(xx, w, h, kernel), syy = detail::filter_valid(yy, w, h, kernel);
    auto sxy = detail::filter_valid(xy, w, h, kernel);
    double sum = 0.0;
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cxy = sxy[p] - mx[p] * my[p];
      sum += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2)) /
             ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

struct ImageMetrics {
  std::string image_id;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
};

inline ImageMetrics evaluate_pair(const std::string& id, const Image& rendered, const Image& reference) {
  ImageMetrics m;
  m.image_id = id;
  m.mse = mse(rendered, reference);
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(rendered, reference);
  return m;
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Per-image rows followed by a "mean" row.
inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<ImageMetrics>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics CSV '" + path.string() + "'");
  out << "image_id,psnr,ssim,mse\n";
  ImageMetrics mean{"mean"};
  for (const auto& r : rows) {
    out << r.image_id << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << ',' << format_metric(r.mse)
        << '\n';
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    mean.mse += r.mse;
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    out << "mean," << format_metric(mean.psnr / n) << ',' << format_metric(mean.ssim / n) << ','
        << format_metric(mean.mse / n) << '\n';
  }
}

}  // namespace rfk
