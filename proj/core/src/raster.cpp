#include "vigtext/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "vigtext/error.hpp"

namespace vigtext {

RasterImage::RasterImage(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw Error(Errc::kInvalidArgument, "raster dimensions must be >= 1");
  data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

RasterImage::RasterImage(int w, int h, std::vector<std::uint8_t> samples)
    : width(w), height(h), data(std::move(samples)) {
  if (w < 1 || h < 1) throw Error(Errc::kInvalidArgument, "raster dimensions must be >= 1");
  if (data.size() != static_cast<std::size_t>(w) * h * 3) {
    throw Error(Errc::kInvalidArgument, "raster sample count does not match dimensions");
  }
}

RasterImage RasterImage::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RasterImage img(w, h);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = r;
    img.data[i + 1] = g;
    img.data[i + 2] = b;
  }
  return img;
}

// ---------------------------------------------------------------------------
// PerturbationSpec

PerturbationSpec PerturbationSpec::resize(int w, int h) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kResize;
  s.width = w;
  s.height = h;
  return s;
}

PerturbationSpec PerturbationSpec::resize_relative(double scale_factor) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kResize;
  s.resize_scale = scale_factor;
  return s;
}

PerturbationSpec PerturbationSpec::rotate(double deg) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kRotate;
  s.degrees = deg;
  return s;
}

PerturbationSpec PerturbationSpec::scale_translate(double sc, int tx, int ty) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kScaleTranslate;
  s.scale = sc;
  s.dx = tx;
  s.dy = ty;
  return s;
}

PerturbationSpec PerturbationSpec::blur(int r, double sig) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kBlur;
  s.radius = r;
  s.sigma = sig;
  return s;
}

PerturbationSpec PerturbationSpec::brightness(double f) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kBrightness;
  s.factor = f;
  return s;
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double parse_number(std::string_view text, std::string_view what) {
  std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::kInvalidArgument, "bad numeric value for " + std::string(what) + ": '" + s + "'");
  }
  return v;
}

int parse_int(std::string_view text, std::string_view what) {
  const double v = parse_number(text, what);
  if (v != std::floor(v)) throw Error(Errc::kInvalidArgument, std::string(what) + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace

PerturbationSpec PerturbationSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  std::vector<std::pair<std::string, std::string>> args;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        args.emplace_back("", std::string(item));
      } else {
        args.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
      }
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }

  PerturbationSpec s;
  auto unknown = [&](const std::string& key) {
    throw Error(Errc::kInvalidArgument, "unknown parameter '" + key + "' for " + std::string(name));
  };
  if (name == "resize") {
    s.kind = PerturbationKind::kResize;
    for (const auto& [k, v] : args) {
      if (k == "w" || k == "width") s.width = parse_int(v, "width");
      else if (k == "h" || k == "height") s.height = parse_int(v, "height");
      else if (k == "scale" || k.empty()) s.resize_scale = parse_number(v, "scale");
      else unknown(k);
    }
  } else if (name == "rotate") {
    s.kind = PerturbationKind::kRotate;
    for (const auto& [k, v] : args) {
      if (k == "deg" || k == "degrees" || k.empty()) s.degrees = parse_number(v, "degrees");
      else unknown(k);
    }
  } else if (name == "scale_translate") {
    s.kind = PerturbationKind::kScaleTranslate;
    for (const auto& [k, v] : args) {
      if (k == "scale" || k.empty()) s.scale = parse_number(v, "scale");
      else if (k == "dx") s.dx = parse_int(v, "dx");
      else if (k == "dy") s.dy = parse_int(v, "dy");
      else unknown(k);
    }
  } else if (name == "blur") {
    s.kind = PerturbationKind::kBlur;
    for (const auto& [k, v] : args) {
      if (k == "radius" || k.empty()) s.radius = parse_int(v, "radius");
      else if (k == "sigma") s.sigma = parse_number(v, "sigma");
      else unknown(k);
    }
  } else if (name == "brightness") {
    s.kind = PerturbationKind::kBrightness;
    for (const auto& [k, v] : args) {
      if (k == "factor" || k.empty()) s.factor = parse_number(v, "factor");
      else unknown(k);
    }
  } else {
    throw Error(Errc::kInvalidArgument, "unknown perturbation kind '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

std::string PerturbationSpec::to_string() const {
  switch (kind) {
    case PerturbationKind::kResize:
      if (width > 0 && height > 0) {
        return "resize:w=" + std::to_string(width) + ",h=" + std::to_string(height);
      }
      return "resize:scale=" + format_double(resize_scale);
    case PerturbationKind::kRotate:
      return "rotate:deg=" + format_double(degrees);
    case PerturbationKind::kScaleTranslate:
      return "scale_translate:scale=" + format_double(scale) + ",dx=" + std::to_string(dx) +
             ",dy=" + std::to_string(dy);
    case PerturbationKind::kBlur:
      return "blur:radius=" + std::to_string(radius) + ",sigma=" + format_double(sigma);
    case PerturbationKind::kBrightness:
      return "brightness:factor=" + format_double(factor);
  }
  return "unknown";
}

void PerturbationSpec::validate() const {
  switch (kind) {
    case PerturbationKind::kResize:
      if (width > 0 || height > 0) {
        if (width < 1 || height < 1) throw Error(Errc::kInvalidArgument, "resize target must be >= 1x1");
      } else if (!(resize_scale > 0.0) || !std::isfinite(resize_scale)) {
        throw Error(Errc::kInvalidArgument, "resize scale must be > 0");
      }
      break;
    case PerturbationKind::kRotate:
      if (!std::isfinite(degrees)) throw Error(Errc::kInvalidArgument, "rotation must be finite");
      break;
    case PerturbationKind::kScaleTranslate:
      if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(Errc::kInvalidArgument, "scale must be > 0");
      break;
    case PerturbationKind::kBlur:
      if (radius < 0) throw Error(Errc::kInvalidArgument, "blur radius must be >= 0");
      if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(Errc::kInvalidArgument, "blur sigma must be > 0");
      break;
    case PerturbationKind::kBrightness:
      if (!(factor > 0.0) || !std::isfinite(factor)) {
        throw Error(Errc::kInvalidArgument, "brightness factor must be > 0");
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// I/O

namespace {

class PpmReader {
 public:
  explicit PpmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000L) throw Error(Errc::kMalformed, std::string("PPM ") + what + " too large");
      ++pos_;
    }
    if (pos_ == start) throw Error(Errc::kMalformed, std::string("PPM header missing ") + what);
    return v;
  }

  std::size_t pos_ = 0;
  std::span<const std::uint8_t> bytes_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kNotFound, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RasterImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(Errc::kMalformed, std::string("PNG: ") + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error(Errc::kUnsupported, "PNG: only 8-bit samples are supported");
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width < 1 || image.height < 1) {
    png_image_free(&image);
    throw Error(Errc::kMalformed, "PNG: empty image");
  }
  RasterImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    throw Error(Errc::kMalformed, std::string("PNG: ") + image.message);
  }
  return out;
}

}  // namespace

RasterImage decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '1' && bytes[1] <= '7' && bytes[1] != '6') {
    throw Error(Errc::kUnsupported, std::string("Netpbm variant P") + static_cast<char>(bytes[1]) + " is not supported");
  }
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error(Errc::kMalformed, "not a binary PPM (P6) file");
  }
  PpmReader r(bytes);
  r.pos_ = 2;
  const long w = r.read_uint("width");
  const long h = r.read_uint("height");
  const long maxval = r.read_uint("maxval");
  if (w < 1 || h < 1) throw Error(Errc::kMalformed, "PPM dimensions must be >= 1");
  if (maxval < 1 || maxval > 65535) throw Error(Errc::kMalformed, "PPM maxval out of range");
  if (maxval != 255) throw Error(Errc::kUnsupported, "PPM maxval " + std::to_string(maxval) + " is not 8-bit");
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) {
    throw Error(Errc::kMalformed, "PPM header not terminated by whitespace");
  }
  ++r.pos_;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - r.pos_ < need) {
    throw Error(Errc::kTruncated, "PPM pixel data truncated: need " + std::to_string(need) + " bytes, have " +
                                      std::to_string(bytes.size() - r.pos_));
  }
  std::vector<std::uint8_t> samples(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_ + need));
  return RasterImage(static_cast<int>(w), static_cast<int>(h), std::move(samples));
}

std::string encode_ppm(const RasterImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

RasterImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::kNotFound, "image not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
    return decode_png(bytes);
  }
  return decode_ppm(bytes);
}

void save_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  const std::string bytes = encode_ppm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::kIo, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Labels

std::string grid_label(int row, int col) {
  std::string letters;
  int r = row + 1;
  while (r > 0) {
    --r;
    letters.insert(letters.begin(), static_cast<char>('A' + r % 26));
    r /= 26;
  }
  return letters + std::to_string(col + 1);
}

std::optional<std::pair<int, int>> parse_grid_label(std::string_view label) {
  std::size_t i = 0;
  long row = 0;
  while (i < label.size() && std::isalpha(static_cast<unsigned char>(label[i]))) {
    row = row * 26 + (std::toupper(static_cast<unsigned char>(label[i])) - 'A' + 1);
    if (row > 1'000'000) return std::nullopt;
    ++i;
  }
  if (i == 0 || i == label.size()) return std::nullopt;
  int col = 0;
  auto [ptr, ec] = std::from_chars(label.data() + i, label.data() + label.size(), col);
  if (ec != std::errc() || ptr != label.data() + label.size() || col < 1) return std::nullopt;
  return std::pair<int, int>{static_cast<int>(row - 1), col - 1};
}

// ---------------------------------------------------------------------------
// Overlay and patches

namespace {

void check_grid(int width, int height, int n) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "grid dimension must be >= 1");
  if (n > std::min(width, height)) {
    throw Error(Errc::kInvalidArgument, "grid dimension " + std::to_string(n) + " exceeds image size " +
                                            std::to_string(width) + "x" + std::to_string(height));
  }
}

void draw_label(RasterImage& img, int x0, int y0, const std::string& text) {
  // Glyph mask over the label's bounding box plus a one-pixel outline ring.
  const int box_w = static_cast<int>(text.size()) * 6 - 1;
  const int box_h = 7;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(box_w) * box_h, 0);
  for (std::size_t k = 0; k < text.size(); ++k) {
    const std::uint8_t* rows = glyph_5x7(text[k]);
    if (rows == nullptr) continue;
    for (int gy = 0; gy < 7; ++gy) {
      for (int gx = 0; gx < 5; ++gx) {
        if (rows[gy] & (0x10 >> gx)) mask[static_cast<std::size_t>(gy) * box_w + k * 6 + gx] = 1;
      }
    }
  }
  auto set_px = [&](int x, int y, std::uint8_t v) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
  };
  for (int my = 0; my < box_h; ++my) {
    for (int mx = 0; mx < box_w; ++mx) {
      if (!mask[static_cast<std::size_t>(my) * box_w + mx]) continue;
      for (int oy = -1; oy <= 1; ++oy) {
        for (int ox = -1; ox <= 1; ++ox) set_px(x0 + mx + ox, y0 + my + oy, 0);
      }
    }
  }
  for (int my = 0; my < box_h; ++my) {
    for (int mx = 0; mx < box_w; ++mx) {
      if (mask[static_cast<std::size_t>(my) * box_w + mx]) set_px(x0 + mx, y0 + my, 255);
    }
  }
}

}  // namespace

RasterImage overlay_grid(const RasterImage& img, int n) {
  check_grid(img.width, img.height, n);
  RasterImage out = img;
  for (int k = 1; k < n; ++k) {
    const int x = static_cast<int>(static_cast<long>(k) * img.width / n);
    for (int y = 0; y < img.height; ++y) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = 0;
    }
    const int y = static_cast<int>(static_cast<long>(k) * img.height / n);
    for (int xx = 0; xx < img.width; ++xx) {
      for (int c = 0; c < 3; ++c) out.at(xx, y, c) = 0;
    }
  }
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int x0 = static_cast<int>(static_cast<long>(col) * img.width / n);
      const int y0 = static_cast<int>(static_cast<long>(row) * img.height / n);
      draw_label(out, x0 + 2, y0 + 2, grid_label(row, col));
    }
  }
  return out;
}

std::pair<int, int> grid_aligned_size(int width, int height, int n) {
  check_grid(width, height, n);
  return {width / n * n, height / n * n};
}

std::vector<Patch> split_patches(const RasterImage& img, int n) {
  const auto [w, h] = grid_aligned_size(img.width, img.height, n);
  const RasterImage src = (w == img.width && h == img.height) ? img : resize_bilinear(img, w, h);
  const int pw = w / n;
  const int ph = h / n;
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(n) * n);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      Patch p;
      p.label = grid_label(row, col);
      p.row = row;
      p.col = col;
      p.pixels = RasterImage(pw, ph);
      for (int y = 0; y < ph; ++y) {
        const auto* from = &src.data[(static_cast<std::size_t>(row * ph + y) * w + col * pw) * 3];
        std::copy(from, from + pw * 3, &p.pixels.data[static_cast<std::size_t>(y) * pw * 3]);
      }
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  int i0;
  int i1;
  double f;
};

Tap bilinear_tap(int dst, int src_size, int dst_size) {
  double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
  const int i0 = static_cast<int>(std::floor(s));
  const int i1 = std::min(i0 + 1, src_size - 1);
  return {i0, i1, s - i0};
}

// Interleaved 3-channel resample on doubles; shared by the u8 and float paths.
std::vector<double> resample(const std::vector<double>& src, int sw, int sh, int dw, int dh) {
  std::vector<double> out(static_cast<std::size_t>(dw) * dh * 3);
  std::vector<Tap> xt(static_cast<std::size_t>(dw));
  for (int x = 0; x < dw; ++x) xt[static_cast<std::size_t>(x)] = bilinear_tap(x, sw, dw);
  for (int y = 0; y < dh; ++y) {
    const Tap ty = bilinear_tap(y, sh, dh);
    for (int x = 0; x < dw; ++x) {
      const Tap& tx = xt[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        auto px = [&](int xx, int yy) { return src[(static_cast<std::size_t>(yy) * sw + xx) * 3 + c]; };
        const double top = px(tx.i0, ty.i0) * (1 - tx.f) + px(tx.i1, ty.i0) * tx.f;
        const double bot = px(tx.i0, ty.i1) * (1 - tx.f) + px(tx.i1, ty.i1) * tx.f;
        out[(static_cast<std::size_t>(y) * dw + x) * 3 + c] = top * (1 - ty.f) + bot * ty.f;
      }
    }
  }
  return out;
}

std::vector<double> levels(const RasterImage& img) { return {img.data.begin(), img.data.end()}; }

RasterImage from_levels(int w, int h, const std::vector<double>& v) {
  RasterImage out(w, h);
  for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = quantize_level(v[i]);
  return out;
}

// Bilinear sample with zero (black) outside the image.
double sample_black(const RasterImage& img, double sx, double sy, int c) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  auto px = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return 0.0;
    return img.at(x, y, c);
  };
  return (px(x0, y0) * (1 - fx) + px(x0 + 1, y0) * fx) * (1 - fy) +
         (px(x0, y0 + 1) * (1 - fx) + px(x0 + 1, y0 + 1) * fx) * fy;
}

template <typename InverseMap>
RasterImage warp(const RasterImage& img, InverseMap inverse) {
  RasterImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto [sx, sy] = inverse(static_cast<double>(x), static_cast<double>(y));
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = quantize_level(sample_black(img, sx, sy, c));
    }
  }
  return out;
}

RasterImage gaussian_blur(const RasterImage& img, int radius, double sigma) {
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-(k * k) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;

  const int W = img.width;
  const int H = img.height;
  std::vector<double> src = levels(img);
  std::vector<double> tmp(src.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, W - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * src[(static_cast<std::size_t>(y) * W + xx) * 3 + c];
        }
        tmp[(static_cast<std::size_t>(y) * W + x) * 3 + c] = acc;
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, H - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[(static_cast<std::size_t>(yy) * W + x) * 3 + c];
        }
        src[(static_cast<std::size_t>(y) * W + x) * 3 + c] = acc;
      }
    }
  }
  return from_levels(W, H, src);
}

}  // namespace

RasterImage resize_bilinear(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1) throw Error(Errc::kInvalidArgument, "resize target must be >= 1x1");
  if (width == img.width && height == img.height) return img;
  return from_levels(width, height, resample(levels(img), img.width, img.height, width, height));
}

FloatImage resize_bilinear(const FloatImage& img, int width, int height) {
  if (width < 1 || height < 1) throw Error(Errc::kInvalidArgument, "resize target must be >= 1x1");
  if (width == img.width && height == img.height) return img;
  FloatImage out;
  out.width = width;
  out.height = height;
  out.data = resample(img.data, img.width, img.height, width, height);
  return out;
}

FloatImage resize_bilinear_adjoint(const FloatImage& grad, int src_width, int src_height) {
  if (grad.width == src_width && grad.height == src_height) return grad;
  FloatImage out(src_width, src_height);
  std::vector<Tap> xt(static_cast<std::size_t>(grad.width));
  for (int x = 0; x < grad.width; ++x) xt[static_cast<std::size_t>(x)] = bilinear_tap(x, src_width, grad.width);
  for (int y = 0; y < grad.height; ++y) {
    const Tap ty = bilinear_tap(y, src_height, grad.height);
    for (int x = 0; x < grad.width; ++x) {
      const Tap& tx = xt[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const double g = grad.at(x, y, c);
        out.at(tx.i0, ty.i0, c) += g * (1 - tx.f) * (1 - ty.f);
        out.at(tx.i1, ty.i0, c) += g * tx.f * (1 - ty.f);
        out.at(tx.i0, ty.i1, c) += g * (1 - tx.f) * ty.f;
        out.at(tx.i1, ty.i1, c) += g * tx.f * ty.f;
      }
    }
  }
  return out;
}

RasterImage transform(const RasterImage& img, const PerturbationSpec& spec) {
  spec.validate();
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  switch (spec.kind) {
    case PerturbationKind::kResize: {
      if (spec.width > 0) return resize_bilinear(img, spec.width, spec.height);
      const int w = std::max(1, static_cast<int>(std::lround(img.width * spec.resize_scale)));
      const int h = std::max(1, static_cast<int>(std::lround(img.height * spec.resize_scale)));
      return resize_bilinear(img, w, h);
    }
    case PerturbationKind::kRotate: {
      const double rad = spec.degrees * std::numbers::pi / 180.0;
      const double cs = std::cos(rad);
      const double sn = std::sin(rad);
      // Destination pixel rotated by -angle gives its source location.
      return warp(img, [&](double x, double y) {
        const double rx = x - cx;
        const double ry = y - cy;
        return std::pair<double, double>{cx + cs * rx + sn * ry, cy - sn * rx + cs * ry};
      });
    }
    case PerturbationKind::kScaleTranslate: {
      return warp(img, [&](double x, double y) {
        return std::pair<double, double>{(x - cx - spec.dx) / spec.scale + cx, (y - cy - spec.dy) / spec.scale + cy};
      });
    }
    case PerturbationKind::kBlur:
      return gaussian_blur(img, spec.radius, spec.sigma);
    case PerturbationKind::kBrightness: {
      RasterImage out = img;
      for (auto& v : out.data) v = quantize_level(v * spec.factor);
      return out;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Float helpers

FloatImage to_float(const RasterImage& img) {
  FloatImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0;
  return out;
}

std::uint8_t quantize_level(double level) {
  if (!(level > 0.0)) return 0;
  if (level >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::floor(level + 0.5));
}

RasterImage quantize(const FloatImage& img) {
  RasterImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = quantize_level(img.data[i] * 255.0);
  return out;
}

FloatImage crop(const FloatImage& img, int x0, int y0, int w, int h) {
  FloatImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

void add_into(FloatImage& dst, const FloatImage& src, int x0, int y0) {
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < 3; ++c) dst.at(x0 + x, y0 + y, c) += src.at(x, y, c);
    }
  }
}

}  // namespace vigtext
