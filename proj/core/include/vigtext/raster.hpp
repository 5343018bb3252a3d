#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vigtext {

// 8-bit RGB raster, row-major, interleaved channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(int w, int h);
  RasterImage(int w, int h, std::vector<std::uint8_t> samples);

  static RasterImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const RasterImage&) const = default;
};

// Continuous RGB image in normalized pixel units [0, 1]. This is the space
// attacks and embedder gradients live in.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const FloatImage&) const = default;
};

struct Patch {
  std::string label;
  int row = 0;
  int col = 0;
  RasterImage pixels;

  bool operator==(const Patch&) const = default;
};

enum class PerturbationKind { kResize, kRotate, kScaleTranslate, kBlur, kBrightness };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::kBrightness;
  // resize: absolute target size, or a relative scale when width/height are 0.
  int width = 0;
  int height = 0;
  double resize_scale = 1.0;
  // rotate
  double degrees = 15.0;
  // scale_translate
  double scale = 0.9;
  int dx = 10;
  int dy = 10;
  // blur
  int radius = 2;
  double sigma = 1.0;
  // brightness
  double factor = 1.0;

  static PerturbationSpec resize(int w, int h);
  static PerturbationSpec resize_relative(double s);
  static PerturbationSpec rotate(double deg);
  static PerturbationSpec scale_translate(double s, int tx, int ty);
  static PerturbationSpec blur(int r, double sig);
  static PerturbationSpec brightness(double f);

  // Text form used by the CLI and reports, e.g. "blur:radius=2,sigma=1".
  static PerturbationSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
};

RasterImage decode_ppm(std::span<const std::uint8_t> bytes);
std::string encode_ppm(const RasterImage& img);
RasterImage load_image(const std::filesystem::path& path);
void save_ppm(const RasterImage& img, const std::filesystem::path& path);

// Grid labels: rows lettered top-down (A..Z, AA, AB, ...), columns 1-based.
std::string grid_label(int row, int col);
std::optional<std::pair<int, int>> parse_grid_label(std::string_view label);

RasterImage overlay_grid(const RasterImage& img, int n);
std::vector<Patch> split_patches(const RasterImage& img, int n);
RasterImage transform(const RasterImage& img, const PerturbationSpec& spec);

// Size split_patches resizes to: nearest lower multiple of n per axis.
std::pair<int, int> grid_aligned_size(int width, int height, int n);

// Bilinear resampling with half-pixel centers and clamped borders.
RasterImage resize_bilinear(const RasterImage& img, int width, int height);
FloatImage resize_bilinear(const FloatImage& img, int width, int height);
// Adjoint of the linear map above: scatters an output-space gradient back
// onto a src_width x src_height input.
FloatImage resize_bilinear_adjoint(const FloatImage& grad, int src_width, int src_height);

FloatImage to_float(const RasterImage& img);
// Round-half-up after clamping to [0, 255].
RasterImage quantize(const FloatImage& img);
std::uint8_t quantize_level(double level);

FloatImage crop(const FloatImage& img, int x0, int y0, int w, int h);
void add_into(FloatImage& dst, const FloatImage& src, int x0, int y0);

// Rendering of A-Z and 0-9 in a 5x7 bitmap font; unknown glyphs are blank.
const std::uint8_t* glyph_5x7(char c);

}  // namespace vigtext
