#include "vigtext/dct.hpp"

#include <cmath>
#include <numbers>

#include "vigtext/error.hpp"

namespace vigtext {

Eigen::MatrixXd dct_basis(int n) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "DCT size must be >= 1");
  Eigen::MatrixXd c(n, n);
  const double a0 = std::sqrt(1.0 / n);
  const double ak = std::sqrt(2.0 / n);
  for (int u = 0; u < n; ++u) {
    for (int x = 0; x < n; ++x) {
      c(u, x) = (u == 0 ? a0 : ak) * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * n));
    }
  }
  return c;
}

SpectrumPlane dct2(const Eigen::MatrixXd& channel) {
  if (channel.rows() == 0 || channel.cols() == 0) throw Error(Errc::kInvalidArgument, "dct2 of empty matrix");
  const Eigen::MatrixXd ch = dct_basis(static_cast<int>(channel.rows()));
  const Eigen::MatrixXd cw = dct_basis(static_cast<int>(channel.cols()));
  // Column pass then row pass.
  return {static_cast<int>(channel.rows()), static_cast<int>(channel.cols()), ch * channel * cw.transpose()};
}

Eigen::MatrixXd idct2(const SpectrumPlane& spectrum) {
  if (spectrum.height < 1 || spectrum.width < 1 || spectrum.coeffs.rows() != spectrum.height ||
      spectrum.coeffs.cols() != spectrum.width) {
    throw Error(Errc::kInvalidArgument, "idct2 of empty or inconsistent spectrum");
  }
  const Eigen::MatrixXd ch = dct_basis(spectrum.height);
  const Eigen::MatrixXd cw = dct_basis(spectrum.width);
  return ch.transpose() * spectrum.coeffs * cw;
}

Eigen::MatrixXd channel_matrix(const RasterImage& img, int c) {
  Eigen::MatrixXd m(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) m(y, x) = img.at(x, y, c);
  }
  return m;
}

Eigen::MatrixXd channel_matrix(const FloatImage& img, int c, double scale) {
  Eigen::MatrixXd m(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) m(y, x) = img.at(x, y, c) * scale;
  }
  return m;
}

namespace {

// Shared by the rounded and differentiable paths so both see identical levels.
void visual_channel(const Eigen::MatrixXd& levels, const Eigen::MatrixXd& ch, const Eigen::MatrixXd& cw,
                    Eigen::MatrixXd& spectrum, Eigen::MatrixXd& logmag, Eigen::Index& argmin,
                    Eigen::Index& argmax, double& lo, double& hi) {
  spectrum = ch * levels * cw.transpose();
  logmag = spectrum.array().abs().log1p().matrix();
  Eigen::Index r = 0, c = 0;
  lo = logmag.minCoeff(&r, &c);
  argmin = c * logmag.rows() + r;
  hi = logmag.maxCoeff(&r, &c);
  argmax = c * logmag.rows() + r;
}

}  // namespace

DctVisualTape dct_visual_forward(const FloatImage& patch) {
  if (patch.width < 1 || patch.height < 1) throw Error(Errc::kInvalidArgument, "dct_visual of empty patch");
  DctVisualTape tape;
  tape.width = patch.width;
  tape.height = patch.height;
  tape.visual = FloatImage(patch.width, patch.height);
  const Eigen::MatrixXd ch = dct_basis(patch.height);
  const Eigen::MatrixXd cw = dct_basis(patch.width);
  for (int c = 0; c < 3; ++c) {
    visual_channel(channel_matrix(patch, c, 255.0), ch, cw, tape.spectrum[c], tape.log_magnitude[c],
                   tape.argmin[c], tape.argmax[c], tape.lo[c], tape.hi[c]);
    const double range = tape.hi[c] - tape.lo[c];
    for (int y = 0; y < patch.height; ++y) {
      for (int x = 0; x < patch.width; ++x) {
        tape.visual.at(x, y, c) = range > 0.0 ? 255.0 * (tape.log_magnitude[c](y, x) - tape.lo[c]) / range : 0.0;
      }
    }
  }
  return tape;
}

FloatImage dct_visual_backward(const DctVisualTape& tape, const FloatImage& grad_visual) {
  FloatImage out(tape.width, tape.height);
  const Eigen::MatrixXd ch = dct_basis(tape.height);
  const Eigen::MatrixXd cw = dct_basis(tape.width);
  for (int c = 0; c < 3; ++c) {
    const double range = tape.hi[c] - tape.lo[c];
    if (!(range > 0.0)) continue;
    const Eigen::MatrixXd& s = tape.log_magnitude[c];
    Eigen::MatrixXd dv = channel_matrix(grad_visual, c);
    Eigen::MatrixXd ds = dv * (255.0 / range);
    const double r2 = range * range;
    const double dlo = 255.0 * (dv.array() * (s.array() - tape.hi[c])).sum() / r2;
    const double dhi = -255.0 * (dv.array() * (s.array() - tape.lo[c])).sum() / r2;
    ds.data()[tape.argmin[c]] += dlo;
    ds.data()[tape.argmax[c]] += dhi;
    const Eigen::ArrayXXd spec = tape.spectrum[c].array();
    const Eigen::MatrixXd dspec = (ds.array() * spec.sign() / (1.0 + spec.abs())).matrix();
    // Adjoint of X = Ch L Cw^T, then chain through L = 255 x.
    const Eigen::MatrixXd dlevels = ch.transpose() * dspec * cw;
    for (int y = 0; y < tape.height; ++y) {
      for (int x = 0; x < tape.width; ++x) out.at(x, y, c) = 255.0 * dlevels(y, x);
    }
  }
  return out;
}

RasterImage dct_visual(const RasterImage& pixels) {
  RasterImage out(pixels.width, pixels.height);
  const Eigen::MatrixXd ch = dct_basis(pixels.height);
  const Eigen::MatrixXd cw = dct_basis(pixels.width);
  Eigen::MatrixXd spectrum, logmag;
  Eigen::Index argmin = 0, argmax = 0;
  double lo = 0.0, hi = 0.0;
  for (int c = 0; c < 3; ++c) {
    visual_channel(channel_matrix(pixels, c), ch, cw, spectrum, logmag, argmin, argmax, lo, hi);
    const double range = hi - lo;
    for (int y = 0; y < pixels.height; ++y) {
      for (int x = 0; x < pixels.width; ++x) {
        out.at(x, y, c) = range > 0.0 ? quantize_level(255.0 * (logmag(y, x) - lo) / range) : 0;
      }
    }
  }
  return out;
}

RasterImage dct_visual(const Patch& patch) { return dct_visual(patch.pixels); }

}  // namespace vigtext
