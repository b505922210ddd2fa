#pragma once
// Restricted-affine + thin-plate-spline warps and differentiable bilinear
// sampling.
//
// Coordinates are normalized to [-1,1] with pixel centers at
// (2j+1)/W - 1 horizontally (u) and (2i+1)/H - 1 vertically (v). A sampling
// grid stores, for every target pixel, the source coordinate to read.
//
// A warp maps a target point p to a source point in two stages:
//   q = scale * R(rotation) * p + shift          (global pose)
//   source = tps(q)                               (local stroke displacement)
// where tps interpolates the regular N x N control grid onto the control
// grid displaced by the per-point offsets.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "glyphforge/image.hpp"

namespace glyphforge::geometry {

struct Point {
  double u = 0.0;
  double v = 0.0;
};

class TpsSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AffineParams {
  double rotation = 0.0;  // radians
  double scale = 1.0;
  double shift_u = 0.0;
  double shift_v = 0.0;
};

/// Flattened layout (length 2N^2 + 4): offsets as (du, dv) pairs for the
/// control points in row-major order, then rotation, scale, shift_u, shift_v.
struct WarpParams {
  std::size_t grid_n = 4;
  std::vector<Point> tps_offsets;
  AffineParams affine;

  std::size_t flat_size() const { return flat_size_for(grid_n); }
  std::vector<double> flatten() const;
  static WarpParams unflatten(std::span<const double> flat, std::size_t grid_n);
  static std::size_t flat_size_for(std::size_t grid_n) { return 2 * grid_n * grid_n + 4; }
};

WarpParams identity_params(std::size_t grid_n);

/// Regular N x N control grid covering [-1,1]^2, row-major (v outer).
std::vector<Point> control_grid(std::size_t grid_n);

/// Thin-plate kernel U(s) with s = r^2: s * log(s), U(0) = 0.
double tps_kernel(double squared_radius);

struct TpsCoefficients {
  std::vector<Point> centers;
  // Kernel weights per output coordinate, then affine terms (a0, a_u, a_v).
  std::vector<double> weights_u, weights_v;
  std::array<double, 3> affine_u{}, affine_v{};

  Point evaluate(Point q) const;
};

/// Fits the interpolant mapping src[i] -> dst[i] with minimal bending
/// energy. `regularization` is added to the kernel diagonal; with 0 the
/// interpolant passes through every dst point.
TpsCoefficients solve_tps(std::span<const Point> src, std::span<const Point> dst,
                          double regularization);

enum class WarpMode { affine_tps, affine_only, tps_only };

struct SamplingGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Point> coords;
  bool tps_failed = false;  // TPS solve failed and only the affine part was applied

  Point at(std::size_t row, std::size_t col) const { return coords[row * width + col]; }
};

SamplingGrid base_grid(std::size_t height, std::size_t width);

SamplingGrid build_grid(const WarpParams& params, std::size_t height, std::size_t width,
                        WarpMode mode = WarpMode::affine_tps, double regularization = 1e-6);

struct BorderPolicy {
  enum class Kind { clamp, fill };
  Kind kind = Kind::fill;
  double value = 1.0;

  static BorderPolicy clamp() { return {Kind::clamp, 0.0}; }
  static BorderPolicy fill(double v) { return {Kind::fill, v}; }
};

Image bilinear_sample(const Image& img, const SamplingGrid& grid,
                      BorderPolicy border = BorderPolicy::fill(1.0));

/// Flat differentiable kernels used by the autodiff bridge.
namespace detail {

// grid: h*w*2 interleaved (u, v). Returns false when the TPS solve failed.
bool warp_grid_forward(std::span<const double> theta, std::size_t grid_n, std::size_t h,
                       std::size_t w, WarpMode mode, double regularization, std::span<double> grid);

// Accumulates dL/dtheta given dL/dgrid.
void warp_grid_backward(std::span<const double> theta, std::size_t grid_n, std::size_t h,
                        std::size_t w, WarpMode mode, double regularization,
                        std::span<const double> grad_grid, std::span<double> grad_theta);

// One channel plane. grid is out_h*out_w*2 interleaved (u, v).
template <typename T>
void sample_plane(const T* img, std::size_t h, std::size_t w, const T* grid, std::size_t out_h,
                  std::size_t out_w, BorderPolicy border, T* out);

// Accumulates into grad_img / grad_grid (either may be null).
template <typename T>
void sample_plane_backward(const T* img, std::size_t h, std::size_t w, const T* grid,
                           std::size_t out_h, std::size_t out_w, BorderPolicy border,
                           const T* grad_out, T* grad_img, T* grad_grid);

}  // namespace detail

}  // namespace glyphforge::geometry
