#include "glyphforge/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace glyphforge {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), data_(height * width, fill) {}

Image::Image(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height_ * width_) {
    throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(height_) + "x" +
                                std::to_string(width_));
  }
}

void Image::clamp() {
  for (double& v : data_) {
    v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 1.0;
  }
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), bits_(height * width, 0) {}

std::size_t BinaryMask::foreground_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Image BinaryMask::render() const {
  Image out(height_, width_, 1.0);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.data()[i] = 0.0;
  }
  return out;
}

unsigned char quantize(double value) {
  double v = std::isfinite(value) ? std::clamp(value, 0.0, 1.0) : 1.0;
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

double otsu_threshold(const Image& img) {
  std::array<double, 256> hist{};
  for (double v : img.data()) hist[quantize(v)] += 1.0;
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_bin = -1;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    double mu0 = sum0 / w0;
    double mu1 = (sum_all - sum0) / w1;
    double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_bin = t;
    }
  }
  if (best_bin < 0) return -1.0;
  // Bins <= best_bin are ink; in value space that is v < (t + 0.5) / 255.
  return (best_bin + 0.5) / 255.0;
}

BinarizeResult binarize(const Image& img, BinarizeMethod method, bool invert) {
  if (img.empty()) throw std::invalid_argument("binarize: empty image");
  BinarizeResult result;
  result.threshold = method.threshold;
  if (method.kind == BinarizeMethod::Kind::otsu) {
    double t = otsu_threshold(img);
    if (t < 0.0) {
      result.threshold = 0.5;
      result.fell_back = true;
    } else {
      result.threshold = t;
    }
  }
  result.mask = BinaryMask(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      double v = img.at(r, c);
      bool fg = invert ? v > 1.0 - result.threshold : v < result.threshold;
      result.mask.set(r, c, fg);
    }
  }
  return result;
}

Image resize(const Image& img, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("resize: target dims must be >= 1");
  if (img.empty()) throw std::invalid_argument("resize: empty image");
  if (height == img.height() && width == img.width()) return img;
  Image out(height, width);
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  const double max_r = static_cast<double>(img.height() - 1);
  const double max_c = static_cast<double>(img.width() - 1);
  for (std::size_t r = 0; r < height; ++r) {
    double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, max_r);
    auto y0 = static_cast<std::size_t>(std::floor(fy));
    std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (std::size_t c = 0; c < width; ++c) {
      double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, max_c);
      auto x0 = static_cast<std::size_t>(std::floor(fx));
      std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      double top = img.at(y0, x0) * (1 - wx) + img.at(y0, x1) * wx;
      double bot = img.at(y1, x0) * (1 - wx) + img.at(y1, x1) * wx;
      out.at(r, c) = std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace glyphforge
