#pragma once
// Grayscale rasters, binarization, and PNG/PGM I/O.
//
// Pixel values live in [0,1] with dark ink on a light background:
// 0 is black ink, 1 is white paper.

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace glyphforge {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 1.0);
  Image(std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Clamps every value into [0,1] and replaces non-finite values with 1.
  void clamp();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool at(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool fg) { bits_[row * width_ + col] = fg ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t foreground_count() const;
  std::size_t background_count() const { return size() - foreground_count(); }

  /// Renders foreground as 0 (ink) and background as 1.
  Image render() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<unsigned char> bits_;
};

struct BinarizeMethod {
  enum class Kind { otsu, fixed };
  Kind kind = Kind::otsu;
  double threshold = 0.5;

  static BinarizeMethod otsu() { return {Kind::otsu, 0.5}; }
  static BinarizeMethod fixed(double t) { return {Kind::fixed, t}; }
};

struct BinarizeResult {
  BinaryMask mask;
  double threshold = 0.5;
  // Otsu on a constant image has no between-class variance; fixed(0.5) is
  // used instead and this flag is raised.
  bool fell_back = false;
};

/// Foreground = pixels strictly below the threshold. `invert` flips the
/// polarity for light-on-dark corpora.
BinarizeResult binarize(const Image& img, BinarizeMethod method = BinarizeMethod::otsu(),
                        bool invert = false);

/// Otsu threshold in [0,1] from a 256-bin histogram, or -1 when the
/// image is constant.
double otsu_threshold(const Image& img);

/// Bilinear resampling with pixel-center alignment.
Image resize(const Image& img, std::size_t height, std::size_t width);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

Image load_pgm(const std::filesystem::path& path);
void save_pgm(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

/// Stored byte for a pixel value: round(value * 255) after clamping.
unsigned char quantize(double value);

}  // namespace glyphforge
