#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "jsfm/error.hpp"

namespace jsfm {

/// Row-major RGB image with channel values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // (y * width + x) * 3 + c

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  size_t size() const { return data.size(); }
  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  bool same_shape(const Image& other) const { return width == other.width && height == other.height; }
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<char> bytes(img.size());
  for (size_t i = 0; i < img.size(); ++i) bytes[i] = static_cast<char>(to_byte(img.data[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(magic == "P6" && w > 0 && h > 0 && maxval == 255, ErrorKind::kParse, "unsupported PPM " + path);
  in.get();
  Image img(w, h);
  std::vector<char> bytes(img.size());
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(in), ErrorKind::kParse, "truncated PPM " + path);
  for (size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return img;
}

inline void write_png(const Image& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  require(fp != nullptr, ErrorKind::kIo, "cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::kIo, "libpng failure writing " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int i = 0; i < img.width * 3; ++i) row[i] = to_byte(img.data[static_cast<size_t>(y) * img.width * 3 + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  require(fp != nullptr, ErrorKind::kIo, "cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorKind::kParse, "libpng failure reading " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize everything to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  Image img(w, h);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int i = 0; i < w * 3; ++i) img.data[static_cast<size_t>(y) * w * 3 + i] = row[i] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

/// PNG or PPM by extension.
inline Image read_image(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "png" || ext == "PNG") return read_png(path);
  if (ext == "ppm" || ext == "PPM") return read_ppm(path);
  throw Error(ErrorKind::kInvalidArgument, "unsupported image format: " + path);
}

inline void write_image(const Image& img, const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "ppm" || ext == "PPM") return write_ppm(img, path);
  write_png(img, path);
}

/// Rounds every channel to the 8-bit grid, as a stored image would be.
inline Image quantize8(Image img) {
  for (auto& v : img.data) v = to_byte(v) / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// Quality metrics

/// PSNR reported for identical images.
inline constexpr double kPsnrCapDb = 99.0;

inline double mse(const Image& a, const Image& b) {
  require(a.same_shape(b), ErrorKind::kInvalidArgument, "image shapes differ");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

/// Peak value 1. Capped at kPsnrCapDb.
inline double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / m));
}

inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

inline double mean_abs_error(const Image& a, const Image& b) {
  require(a.same_shape(b), ErrorKind::kInvalidArgument, "image shapes differ");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

namespace detail {

inline constexpr int kSsimRadius = 5;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, 2 * kSsimRadius + 1>& ssim_kernel() {
  static const auto kernel = [] {
    std::array<double, 2 * kSsimRadius + 1> k{};
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      k[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
      sum += k[i + kSsimRadius];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

/// Separable Gaussian filter with zero padding and "same" output size. The
/// kernel is symmetric, so this operator is self-adjoint.
inline std::vector<double> gaussian_blur(const std::vector<double>& plane, int w, int h) {
  const auto& k = ssim_kernel();
  std::vector<double> tmp(plane.size(), 0.0), out(plane.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w) acc += k[d + kSsimRadius] * plane[static_cast<size_t>(y) * w + xx];
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h) acc += k[d + kSsimRadius] * tmp[static_cast<size_t>(yy) * w + x];
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

struct SsimResult {
  double value = 1.0;
  /// d(value)/d(first image); empty unless requested.
  std::vector<double> gradient;
};

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, zero-padded borders.
inline SsimResult ssim(const Image& a, const Image& b, bool with_gradient = false) {
  require(a.same_shape(b), ErrorKind::kInvalidArgument, "image shapes differ");
  using detail::gaussian_blur;
  using detail::kSsimC1;
  using detail::kSsimC2;
  const int w = a.width, h = a.height;
  const size_t n = static_cast<size_t>(w) * h;
  SsimResult result;
  if (n == 0) return result;
  if (with_gradient) result.gradient.assign(a.size(), 0.0);
  const double norm = 1.0 / static_cast<double>(n * 3);
  double total = 0.0;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * 3 + c];
      y[i] = b.data[i * 3 + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = gaussian_blur(x, w, h);
    const auto my = gaussian_blur(y, w, h);
    const auto mxx = gaussian_blur(xx, w, h);
    const auto myy = gaussian_blur(yy, w, h);
    const auto mxy = gaussian_blur(xy, w, h);
    std::vector<double> d_mx, d_mxx, d_mxy;
    if (with_gradient) {
      d_mx.resize(n);
      d_mxx.resize(n);
      d_mxy.resize(n);
    }
    for (size_t i = 0; i < n; ++i) {
      const double sxx = mxx[i] - mx[i] * mx[i];
      const double syy = myy[i] - my[i] * my[i];
      const double sxy = mxy[i] - mx[i] * my[i];
      const double a1 = 2.0 * mx[i] * my[i] + kSsimC1;
      const double a2 = 2.0 * sxy + kSsimC2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + kSsimC1;
      const double b2 = sxx + syy + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (with_gradient) {
        // Partial derivatives of s with respect to the local moments
        // (mx, mxx, mxy), treating sxx, sxy as functions of them.
        // Ordered so that every term cancels exactly when a == b.
        const double den = b1 * b2;
        const double da1 = 2.0 * my[i], da2 = -2.0 * my[i];
        const double db1 = 2.0 * mx[i], db2 = -2.0 * mx[i];
        const double q = norm / b2;
        d_mx[i] = norm * ((da1 * a2 + a1 * da2) / den - s * (db1 * b2 + b1 * db2) / den);
        d_mxx[i] = -s * q;
        d_mxy[i] = 2.0 * (a1 / b1) * q;
      }
    }
    if (with_gradient) {
      const auto g_mx = gaussian_blur(d_mx, w, h);
      const auto g_mxx = gaussian_blur(d_mxx, w, h);
      const auto g_mxy = gaussian_blur(d_mxy, w, h);
      for (size_t i = 0; i < n; ++i) {
        result.gradient[i * 3 + c] = g_mx[i] + 2.0 * x[i] * g_mxx[i] + y[i] * g_mxy[i];
      }
    }
  }
  result.value = total * norm;
  return result;
}

}  // namespace jsfm
