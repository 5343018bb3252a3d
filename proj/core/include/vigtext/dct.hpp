#pragma once

#include <array>

#include <Eigen/Dense>

#include "vigtext/raster.hpp"

namespace vigtext {

// Orthonormal DCT-II coefficients of one channel (rows = vertical frequency).
struct SpectrumPlane {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd coeffs;
};

// Orthonormal DCT-II basis: C(u, x) = a(u) cos(pi (2x + 1) u / 2n),
// a(0) = sqrt(1/n), a(u > 0) = sqrt(2/n). C is orthogonal, so C^T inverts it.
Eigen::MatrixXd dct_basis(int n);

SpectrumPlane dct2(const Eigen::MatrixXd& channel);
Eigen::MatrixXd idct2(const SpectrumPlane& spectrum);

// log(1 + |dct2|) per channel, min-max normalized to [0, 255], rounded.
RasterImage dct_visual(const Patch& patch);
RasterImage dct_visual(const RasterImage& pixels);

// Differentiable form of dct_visual on a normalized [0,1] patch. Forward
// values are the unrounded visual levels; rounding is treated as identity in
// the backward pass (straight-through).
struct DctVisualTape {
  int width = 0;
  int height = 0;
  std::array<Eigen::MatrixXd, 3> spectrum;
  std::array<Eigen::MatrixXd, 3> log_magnitude;
  std::array<Eigen::Index, 3> argmin{};  // column-major linear index
  std::array<Eigen::Index, 3> argmax{};
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  FloatImage visual;  // levels in [0, 255], unrounded
};

DctVisualTape dct_visual_forward(const FloatImage& patch);
// Gradient w.r.t. the normalized patch given a gradient w.r.t. the visual levels.
FloatImage dct_visual_backward(const DctVisualTape& tape, const FloatImage& grad_visual);

Eigen::MatrixXd channel_matrix(const RasterImage& img, int c);
Eigen::MatrixXd channel_matrix(const FloatImage& img, int c, double scale = 1.0);

}  // namespace vigtext
