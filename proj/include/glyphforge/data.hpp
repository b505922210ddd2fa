#pragma once
// Directory-per-class corpora and the synthetic glyph generator.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphforge/image.hpp"
#include "json.hpp"

namespace glyphforge::data {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest root
  std::string label;
  std::optional<std::size_t> strokes;  // synthetic corpora only
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::size_t image_size = 64;
  std::vector<ManifestEntry> entries;
  std::vector<SkippedFile> skipped;

  std::vector<std::string> labels() const;
  /// Decodes entry i and resizes it to image_size x image_size.
  Image load(std::size_t i) const;
  std::vector<Image> load_all() const;
};

/// root/<class>/<file>.{png,pgm}, lexicographic order. Files that fail to
/// decode are listed in `skipped`. Throws DatasetError("no classes found")
/// when nothing usable is present.
DatasetManifest scan_dataset(const std::filesystem::path& root, std::size_t image_size);

/// Every .png/.pgm below root (recursive), sorted by path.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& root);

/// Loads list_images(root), resized to size x size when size > 0.
std::vector<Image> load_image_set(const std::filesystem::path& root, std::size_t size = 0);

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct TextureProfile {
  // Master amplitude in [0,1]. Zero leaves the background pure white.
  double noise_amplitude = 0.08;
  double blotch_density = 3.0;  // expected blotches per image
  // Background darkening per unit amplitude.
  double brightness_bias = 1.5;
};

struct SyntheticGlyphSpec {
  std::size_t num_classes = 2;
  std::size_t image_size = 64;
  std::size_t min_strokes = 3;
  std::size_t max_strokes = 5;
  double stroke_width = 3.5;  // pixels at the reference size
  TextureProfile texture;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticGlyphSpec& s);
void from_json(const nlohmann::json& j, SyntheticGlyphSpec& s);

/// Quadratic Bezier in normalized [0,1]^2 canvas coordinates.
struct Stroke {
  double x0, y0, cx, cy, x1, y1;
};

struct GlyphClass {
  std::string label;
  std::vector<Stroke> strokes;
};

struct SyntheticSample {
  Image image;
  std::string label;
  std::size_t strokes = 0;
};

struct SyntheticCorpus {
  std::vector<GlyphClass> classes;
  std::vector<SyntheticSample> sc;
  std::vector<SyntheticSample> pc;
};

/// Clean dark-on-white SC renders and independently jittered, textured PC
/// renders of the same class skeletons. Deterministic given seed.
SyntheticCorpus synth_generate(const SyntheticGlyphSpec& spec, std::size_t samples_per_class,
                               std::uint64_t seed);

/// Anti-aliased render of strokes (already in canvas coordinates).
Image render_strokes(const std::vector<Stroke>& strokes, std::size_t size, double width,
                     double ink = 0.0);

/// Writes out/sc/<label>/NNNN.png, out/pc/<label>/NNNN.png and
/// out/manifest.json (with stroke counts).
void write_corpus(const SyntheticCorpus& corpus, const SyntheticGlyphSpec& spec,
                  std::uint64_t seed, const std::filesystem::path& out);

}  // namespace glyphforge::data
