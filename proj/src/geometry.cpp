#include "glyphforge/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace glyphforge::geometry {

namespace {

constexpr double kTinySquaredRadius = 1e-300;

// d U(|q - c|^2) / dq = (log s + 1) * 2 (q - c); the limit at s -> 0 is 0.
inline double kernel_slope(double s) { return s < kTinySquaredRadius ? 0.0 : std::log(s) + 1.0; }

// Inverse-system columns for the regular control grid: coefficients =
// solve_matrix * dst, shape (K+3) x K, row-major.
struct TpsBasis {
  std::vector<Point> centers;
  std::vector<double> solve_matrix;
};

Eigen::MatrixXd tps_system(std::span<const Point> src, double regularization) {
  const auto k = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(k + 3, k + 3);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double du = src[i].u - src[j].u;
      double dv = src[i].v - src[j].v;
      sys(i, j) = tps_kernel(du * du + dv * dv);
    }
    sys(i, i) += regularization;
    sys(i, k) = 1.0;
    sys(i, k + 1) = src[i].u;
    sys(i, k + 2) = src[i].v;
    sys(k, i) = 1.0;
    sys(k + 1, i) = src[i].u;
    sys(k + 2, i) = src[i].v;
  }
  return sys;
}

std::shared_ptr<const TpsBasis> regular_basis(std::size_t grid_n, double regularization) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, double>, std::shared_ptr<const TpsBasis>> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(grid_n, regularization);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  auto basis = std::make_shared<TpsBasis>();
  basis->centers = control_grid(grid_n);
  const auto k = static_cast<Eigen::Index>(basis->centers.size());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(tps_system(basis->centers, regularization));
  if (!lu.isInvertible()) throw TpsSolveError("regular control grid system is singular");
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(k + 3, k);
  rhs.topRows(k).setIdentity();
  Eigen::MatrixXd sol = lu.solve(rhs);
  basis->solve_matrix.resize(static_cast<std::size_t>((k + 3) * k));
  for (Eigen::Index r = 0; r < k + 3; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) basis->solve_matrix[r * k + c] = sol(r, c);
  }
  cache.emplace(key, basis);
  return basis;
}

Point base_point(std::size_t row, std::size_t col, std::size_t h, std::size_t w) {
  return {(2.0 * col + 1.0) / w - 1.0, (2.0 * row + 1.0) / h - 1.0};
}

AffineParams read_affine(std::span<const double> theta, std::size_t grid_n, WarpMode mode) {
  if (mode == WarpMode::tps_only) return {};
  std::size_t o = 2 * grid_n * grid_n;
  return {theta[o], theta[o + 1], theta[o + 2], theta[o + 3]};
}

// Coefficients (K+3 per coordinate) for the control grid displaced by theta's offsets.
void tps_coefficients(const TpsBasis& basis, std::span<const double> theta,
                      std::vector<double>& cu, std::vector<double>& cv) {
  const std::size_t k = basis.centers.size();
  cu.assign(k + 3, 0.0);
  cv.assign(k + 3, 0.0);
  for (std::size_t r = 0; r < k + 3; ++r) {
    const double* row = basis.solve_matrix.data() + r * k;
    double su = 0.0, sv = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      su += row[c] * (basis.centers[c].u + theta[2 * c]);
      sv += row[c] * (basis.centers[c].v + theta[2 * c + 1]);
    }
    cu[r] = su;
    cv[r] = sv;
  }
}

inline Point apply_affine(const AffineParams& a, Point p) {
  double cs = std::cos(a.rotation), sn = std::sin(a.rotation);
  return {a.scale * (cs * p.u - sn * p.v) + a.shift_u, a.scale * (sn * p.u + cs * p.v) + a.shift_v};
}

void check_theta(std::span<const double> theta, std::size_t grid_n) {
  if (theta.size() != WarpParams::flat_size_for(grid_n)) {
    throw std::invalid_argument("warp params length " + std::to_string(theta.size()) +
                                " != 2N^2+4 = " +
                                std::to_string(WarpParams::flat_size_for(grid_n)));
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw std::invalid_argument("warp params contain a non-finite entry");
  }
}

}  // namespace

std::vector<double> WarpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(flat_size());
  for (const Point& p : tps_offsets) {
    flat.push_back(p.u);
    flat.push_back(p.v);
  }
  flat.push_back(affine.rotation);
  flat.push_back(affine.scale);
  flat.push_back(affine.shift_u);
  flat.push_back(affine.shift_v);
  return flat;
}

WarpParams WarpParams::unflatten(std::span<const double> flat, std::size_t grid_n) {
  check_theta(flat, grid_n);
  WarpParams p;
  p.grid_n = grid_n;
  p.tps_offsets.resize(grid_n * grid_n);
  for (std::size_t i = 0; i < grid_n * grid_n; ++i) p.tps_offsets[i] = {flat[2 * i], flat[2 * i + 1]};
  std::size_t o = 2 * grid_n * grid_n;
  p.affine = {flat[o], flat[o + 1], flat[o + 2], flat[o + 3]};
  return p;
}

WarpParams identity_params(std::size_t grid_n) {
  if (grid_n < 2) throw std::invalid_argument("identity_params: N must be >= 2");
  WarpParams p;
  p.grid_n = grid_n;
  p.tps_offsets.assign(grid_n * grid_n, Point{});
  return p;
}

std::vector<Point> control_grid(std::size_t grid_n) {
  if (grid_n < 2) throw std::invalid_argument("control_grid: N must be >= 2");
  std::vector<Point> pts;
  pts.reserve(grid_n * grid_n);
  for (std::size_t r = 0; r < grid_n; ++r) {
    for (std::size_t c = 0; c < grid_n; ++c) {
      pts.push_back({-1.0 + 2.0 * c / (grid_n - 1), -1.0 + 2.0 * r / (grid_n - 1)});
    }
  }
  return pts;
}

double tps_kernel(double s) { return s < kTinySquaredRadius ? 0.0 : s * std::log(s); }

Point TpsCoefficients::evaluate(Point q) const {
  Point out{affine_u[0] + affine_u[1] * q.u + affine_u[2] * q.v,
            affine_v[0] + affine_v[1] * q.u + affine_v[2] * q.v};
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double du = q.u - centers[i].u, dv = q.v - centers[i].v;
    double k = tps_kernel(du * du + dv * dv);
    out.u += weights_u[i] * k;
    out.v += weights_v[i] * k;
  }
  return out;
}

TpsCoefficients solve_tps(std::span<const Point> src, std::span<const Point> dst,
                          double regularization) {
  if (src.size() != dst.size()) throw std::invalid_argument("solve_tps: src/dst size mismatch");
  if (src.size() < 3) throw std::invalid_argument("solve_tps: need at least 3 control points");
  if (regularization < 0.0) throw std::invalid_argument("solve_tps: regularization must be >= 0");
  const auto k = static_cast<Eigen::Index>(src.size());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(tps_system(src, regularization));
  if (!lu.isInvertible()) {
    throw TpsSolveError("solve_tps: singular system (degenerate control layout)");
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(k + 3, 2);
  for (Eigen::Index i = 0; i < k; ++i) {
    rhs(i, 0) = dst[i].u;
    rhs(i, 1) = dst[i].v;
  }
  Eigen::MatrixXd sol = lu.solve(rhs);
  TpsCoefficients out;
  out.centers.assign(src.begin(), src.end());
  out.weights_u.resize(src.size());
  out.weights_v.resize(src.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    out.weights_u[i] = sol(i, 0);
    out.weights_v[i] = sol(i, 1);
  }
  for (int j = 0; j < 3; ++j) {
    out.affine_u[j] = sol(k + j, 0);
    out.affine_v[j] = sol(k + j, 1);
  }
  return out;
}

SamplingGrid base_grid(std::size_t height, std::size_t width) {
  SamplingGrid g;
  g.height = height;
  g.width = width;
  g.coords.resize(height * width);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) g.coords[r * width + c] = base_point(r, c, height, width);
  }
  return g;
}

SamplingGrid build_grid(const WarpParams& params, std::size_t height, std::size_t width,
                        WarpMode mode, double regularization) {
  std::vector<double> theta = params.flatten();
  std::vector<double> flat(height * width * 2);
  SamplingGrid g;
  g.height = height;
  g.width = width;
  g.tps_failed = !detail::warp_grid_forward(theta, params.grid_n, height, width, mode,
                                            regularization, flat);
  g.coords.resize(height * width);
  for (std::size_t i = 0; i < height * width; ++i) g.coords[i] = {flat[2 * i], flat[2 * i + 1]};
  return g;
}

Image bilinear_sample(const Image& img, const SamplingGrid& grid, BorderPolicy border) {
  std::vector<double> flat(grid.coords.size() * 2);
  for (std::size_t i = 0; i < grid.coords.size(); ++i) {
    flat[2 * i] = grid.coords[i].u;
    flat[2 * i + 1] = grid.coords[i].v;
  }
  Image out(grid.height, grid.width);
  detail::sample_plane(img.data().data(), img.height(), img.width(), flat.data(), grid.height,
                       grid.width, border, out.data().data());
  return out;
}

namespace detail {

bool warp_grid_forward(std::span<const double> theta, std::size_t grid_n, std::size_t h,
                       std::size_t w, WarpMode mode, double regularization,
                       std::span<double> grid) {
  check_theta(theta, grid_n);
  if (grid.size() != h * w * 2) throw std::invalid_argument("warp_grid_forward: grid size");
  const AffineParams aff = read_affine(theta, grid_n, mode);

  std::shared_ptr<const TpsBasis> basis;
  bool failed = false;
  // Zero offsets make the interpolant the identity map exactly.
  const bool zero_offsets = std::all_of(theta.begin(), theta.begin() + 2 * grid_n * grid_n,
                                        [](double t) { return t == 0.0; });
  if (mode != WarpMode::affine_only && !zero_offsets) {
    try {
      basis = regular_basis(grid_n, regularization);
    } catch (const TpsSolveError&) {
      failed = true;
    }
  }
  std::vector<double> cu, cv;
  if (basis) tps_coefficients(*basis, theta, cu, cv);
  const std::size_t k = basis ? basis->centers.size() : 0;

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      Point q = apply_affine(aff, base_point(r, c, h, w));
      Point src = q;
      if (basis) {
        src.u = cu[k] + cu[k + 1] * q.u + cu[k + 2] * q.v;
        src.v = cv[k] + cv[k + 1] * q.u + cv[k + 2] * q.v;
        for (std::size_t i = 0; i < k; ++i) {
          double du = q.u - basis->centers[i].u, dv = q.v - basis->centers[i].v;
          double kv = tps_kernel(du * du + dv * dv);
          src.u += cu[i] * kv;
          src.v += cv[i] * kv;
        }
      }
      grid[2 * (r * w + c)] = src.u;
      grid[2 * (r * w + c) + 1] = src.v;
    }
  }
  return !failed;
}

void warp_grid_backward(std::span<const double> theta, std::size_t grid_n, std::size_t h,
                        std::size_t w, WarpMode mode, double regularization,
                        std::span<const double> grad_grid, std::span<double> grad_theta) {
  check_theta(theta, grid_n);
  if (grad_theta.size() != theta.size()) throw std::invalid_argument("warp_grid_backward: size");
  const AffineParams aff = read_affine(theta, grid_n, mode);
  std::shared_ptr<const TpsBasis> basis;
  if (mode != WarpMode::affine_only) {
    try {
      basis = regular_basis(grid_n, regularization);
    } catch (const TpsSolveError&) {
    }
  }
  std::vector<double> cu, cv;
  if (basis) tps_coefficients(*basis, theta, cu, cv);
  const std::size_t k = basis ? basis->centers.size() : 0;
  std::vector<double> phi_u(k + 3, 0.0), phi_v(k + 3, 0.0);
  std::vector<double> kern(k);

  const double cs = std::cos(aff.rotation), sn = std::sin(aff.rotation);
  double g_rot = 0.0, g_scale = 0.0, g_su = 0.0, g_sv = 0.0;

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double gx = grad_grid[2 * (r * w + c)];
      const double gy = grad_grid[2 * (r * w + c) + 1];
      if (gx == 0.0 && gy == 0.0) continue;
      Point p = base_point(r, c, h, w);
      Point q = apply_affine(aff, p);
      double dq_u = gx, dq_v = gy;
      if (basis) {
        // d src_u / d q = sum_i cu_i * U'(s_i) * 2 (q - c_i) + (cu_{k+1}, cu_{k+2})
        double ju_u = cu[k + 1], ju_v = cu[k + 2];
        double jv_u = cv[k + 1], jv_v = cv[k + 2];
        for (std::size_t i = 0; i < k; ++i) {
          double du = q.u - basis->centers[i].u, dv = q.v - basis->centers[i].v;
          double s = du * du + dv * dv;
          kern[i] = tps_kernel(s);
          double slope = 2.0 * kernel_slope(s);
          ju_u += cu[i] * slope * du;
          ju_v += cu[i] * slope * dv;
          jv_u += cv[i] * slope * du;
          jv_v += cv[i] * slope * dv;
        }
        for (std::size_t i = 0; i < k; ++i) {
          phi_u[i] += gx * kern[i];
          phi_v[i] += gy * kern[i];
        }
        phi_u[k] += gx;
        phi_u[k + 1] += gx * q.u;
        phi_u[k + 2] += gx * q.v;
        phi_v[k] += gy;
        phi_v[k + 1] += gy * q.u;
        phi_v[k + 2] += gy * q.v;
        dq_u = gx * ju_u + gy * jv_u;
        dq_v = gx * ju_v + gy * jv_v;
      }
      if (mode != WarpMode::tps_only) {
        // q = s R p + t
        double rp_u = cs * p.u - sn * p.v, rp_v = sn * p.u + cs * p.v;
        double drot_u = aff.scale * (-sn * p.u - cs * p.v);
        double drot_v = aff.scale * (cs * p.u - sn * p.v);
        g_rot += dq_u * drot_u + dq_v * drot_v;
        g_scale += dq_u * rp_u + dq_v * rp_v;
        g_su += dq_u;
        g_sv += dq_v;
      }
    }
  }

  if (basis) {
    // coefficients = solve_matrix * dst, so dL/ddst = solve_matrix^T * phi.
    for (std::size_t col = 0; col < k; ++col) {
      double su = 0.0, sv = 0.0;
      for (std::size_t row = 0; row < k + 3; ++row) {
        double m = basis->solve_matrix[row * k + col];
        su += m * phi_u[row];
        sv += m * phi_v[row];
      }
      grad_theta[2 * col] += su;
      grad_theta[2 * col + 1] += sv;
    }
  }
  if (mode != WarpMode::tps_only) {
    std::size_t o = 2 * grid_n * grid_n;
    grad_theta[o] += g_rot;
    grad_theta[o + 1] += g_scale;
    grad_theta[o + 2] += g_su;
    grad_theta[o + 3] += g_sv;
  }
}

namespace {

template <typename T>
struct Corners {
  long x0, y0;
  T wx, wy;
  bool clamped_x, clamped_y;
};

template <typename T>
Corners<T> locate(T u, T v, std::size_t h, std::size_t w, BorderPolicy border) {
  T x = ((u + T(1)) * static_cast<T>(w) - T(1)) / T(2);
  T y = ((v + T(1)) * static_cast<T>(h) - T(1)) / T(2);
  Corners<T> cr{};
  if (border.kind == BorderPolicy::Kind::clamp) {
    T mx = static_cast<T>(w - 1), my = static_cast<T>(h - 1);
    cr.clamped_x = !(x >= T(0) && x <= mx);
    cr.clamped_y = !(y >= T(0) && y <= my);
    x = std::clamp(x, T(0), mx);
    y = std::clamp(y, T(0), my);
  } else {
    // Every corner beyond one pixel outside reads the fill value.
    x = std::clamp(x, T(-2), static_cast<T>(w) + T(1));
    y = std::clamp(y, T(-2), static_cast<T>(h) + T(1));
  }
  T fx = std::floor(x), fy = std::floor(y);
  cr.x0 = static_cast<long>(fx);
  cr.y0 = static_cast<long>(fy);
  cr.wx = x - fx;
  cr.wy = y - fy;
  return cr;
}

template <typename T>
inline T pixel(const T* img, std::size_t h, std::size_t w, long y, long x, BorderPolicy border) {
  if (border.kind == BorderPolicy::Kind::clamp) {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return img[y * static_cast<long>(w) + x];
  }
  if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) {
    return static_cast<T>(border.value);
  }
  return img[y * static_cast<long>(w) + x];
}

template <typename T>
inline bool inside(std::size_t h, std::size_t w, long y, long x, BorderPolicy border) {
  if (border.kind == BorderPolicy::Kind::clamp) return true;
  return y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w);
}

}  // namespace

template <typename T>
void sample_plane(const T* img, std::size_t h, std::size_t w, const T* grid, std::size_t out_h,
                  std::size_t out_w, BorderPolicy border, T* out) {
  for (std::size_t i = 0; i < out_h * out_w; ++i) {
    auto cr = locate(grid[2 * i], grid[2 * i + 1], h, w, border);
    T p00 = pixel(img, h, w, cr.y0, cr.x0, border);
    T p01 = pixel(img, h, w, cr.y0, cr.x0 + 1, border);
    T p10 = pixel(img, h, w, cr.y0 + 1, cr.x0, border);
    T p11 = pixel(img, h, w, cr.y0 + 1, cr.x0 + 1, border);
    out[i] = (T(1) - cr.wy) * ((T(1) - cr.wx) * p00 + cr.wx * p01) +
             cr.wy * ((T(1) - cr.wx) * p10 + cr.wx * p11);
  }
}

template <typename T>
void sample_plane_backward(const T* img, std::size_t h, std::size_t w, const T* grid,
                           std::size_t out_h, std::size_t out_w, BorderPolicy border,
                           const T* grad_out, T* grad_img, T* grad_grid) {
  auto scatter = [&](long y, long x, T amount) {
    if (border.kind == BorderPolicy::Kind::clamp) {
      y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
      x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    } else if (!inside<T>(h, w, y, x, border)) {
      return;
    }
    grad_img[y * static_cast<long>(w) + x] += amount;
  };
  for (std::size_t i = 0; i < out_h * out_w; ++i) {
    const T g = grad_out[i];
    if (g == T(0)) continue;
    auto cr = locate(grid[2 * i], grid[2 * i + 1], h, w, border);
    if (grad_img) {
      scatter(cr.y0, cr.x0, g * (T(1) - cr.wy) * (T(1) - cr.wx));
      scatter(cr.y0, cr.x0 + 1, g * (T(1) - cr.wy) * cr.wx);
      scatter(cr.y0 + 1, cr.x0, g * cr.wy * (T(1) - cr.wx));
      scatter(cr.y0 + 1, cr.x0 + 1, g * cr.wy * cr.wx);
    }
    if (grad_grid) {
      T p00 = pixel(img, h, w, cr.y0, cr.x0, border);
      T p01 = pixel(img, h, w, cr.y0, cr.x0 + 1, border);
      T p10 = pixel(img, h, w, cr.y0 + 1, cr.x0, border);
      T p11 = pixel(img, h, w, cr.y0 + 1, cr.x0 + 1, border);
      T dx = (T(1) - cr.wy) * (p01 - p00) + cr.wy * (p11 - p10);
      T dy = (T(1) - cr.wx) * (p10 - p00) + cr.wx * (p11 - p01);
      if (cr.clamped_x) dx = T(0);
      if (cr.clamped_y) dy = T(0);
      grad_grid[2 * i] += g * dx * static_cast<T>(w) / T(2);
      grad_grid[2 * i + 1] += g * dy * static_cast<T>(h) / T(2);
    }
  }
}

template void sample_plane<float>(const float*, std::size_t, std::size_t, const float*,
                                  std::size_t, std::size_t, BorderPolicy, float*);
template void sample_plane<double>(const double*, std::size_t, std::size_t, const double*,
                                   std::size_t, std::size_t, BorderPolicy, double*);
template void sample_plane_backward<float>(const float*, std::size_t, std::size_t, const float*,
                                           std::size_t, std::size_t, BorderPolicy, const float*,
                                           float*, float*);
template void sample_plane_backward<double>(const double*, std::size_t, std::size_t,
                                            const double*, std::size_t, std::size_t, BorderPolicy,
                                            const double*, double*, double*);

}  // namespace detail

}  // namespace glyphforge::geometry
