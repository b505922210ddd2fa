#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "glyphforge/image.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/tensor.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("glyphforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline glyphforge::Image random_image(glyphforge::Rng& rng, std::size_t h, std::size_t w) {
  glyphforge::Image img(h, w);
  for (auto& v : img.data()) v = rng.uniform();
  return img;
}

template <typename T>
glyphforge::ad::Tensor<T> random_tensor(glyphforge::Rng& rng, glyphforge::ad::Shape shape,
                                        double lo = 0.0, double hi = 1.0, bool grad = false) {
  std::vector<T> v(glyphforge::ad::numel(shape));
  for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
  return glyphforge::ad::Tensor<T>::from(std::move(shape), std::move(v), grad);
}

}  // namespace testutil
