#include "glyphforge/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "glyphforge/rng.hpp"

namespace glyphforge::data {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

std::string generic(const fs::path& p) { return p.generic_string(); }

}  // namespace

std::vector<std::string> DatasetManifest::labels() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
  }
  return out;
}

Image DatasetManifest::load(std::size_t i) const {
  Image img = load_image(root / entries.at(i).path);
  if (img.height() == image_size && img.width() == image_size) return img;
  return resize(img, image_size, image_size);
}

std::vector<Image> DatasetManifest::load_all() const {
  std::vector<Image> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out.push_back(load(i));
  return out;
}

DatasetManifest scan_dataset(const fs::path& root, std::size_t image_size) {
  if (image_size == 0) throw DatasetError("image size must be >= 1");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("not a directory: " + root.string());
  DatasetManifest m;
  m.root = root;
  m.image_size = image_size;

  std::vector<fs::path> classes;
  for (const auto& d : fs::directory_iterator(root)) {
    if (d.is_directory()) classes.push_back(d.path());
  }
  std::sort(classes.begin(), classes.end());
  for (const auto& cdir : classes) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(cdir)) {
      if (f.is_regular_file() && has_image_extension(f.path())) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    const std::string label = cdir.filename().string();
    for (const auto& f : files) {
      const std::string rel = generic(fs::relative(f, root));
      try {
        (void)load_image(f);
      } catch (const std::exception& e) {
        m.skipped.push_back({rel, e.what()});
        continue;
      }
      m.entries.push_back({rel, label, std::nullopt});
    }
  }
  if (m.entries.empty()) throw DatasetError("no classes found under " + root.string());
  return m;
}

std::vector<fs::path> list_images(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& f : fs::recursive_directory_iterator(root)) {
    if (f.is_regular_file() && has_image_extension(f.path())) out.push_back(f.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> load_image_set(const fs::path& root, std::size_t size) {
  std::vector<Image> out;
  for (const auto& p : list_images(root)) {
    Image img = load_image(p);
    if (size > 0 && (img.height() != size || img.width() != size)) img = resize(img, size, size);
    out.push_back(std::move(img));
  }
  if (out.empty()) throw DatasetError("no images under " + root.string());
  return out;
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je{{"path", e.path}, {"label", e.label}};
    if (e.strokes) je["strokes"] = *e.strokes;
    entries.push_back(je);
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : m.skipped) skipped.push_back({{"path", s.path}, {"reason", s.reason}});
  j = nlohmann::json{{"root", generic(m.root)}, {"size", m.image_size}, {"entries", entries},
                     {"skipped", skipped}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.root = j.at("root").get<std::string>();
  m.image_size = j.at("size").get<std::size_t>();
  m.entries.clear();
  for (const auto& je : j.at("entries")) {
    ManifestEntry e{je.at("path").get<std::string>(), je.at("label").get<std::string>(),
                    std::nullopt};
    if (je.contains("strokes")) e.strokes = je.at("strokes").get<std::size_t>();
    m.entries.push_back(std::move(e));
  }
  m.skipped.clear();
  if (j.contains("skipped")) {
    for (const auto& js : j.at("skipped")) {
      m.skipped.push_back({js.at("path").get<std::string>(), js.at("reason").get<std::string>()});
    }
  }
}

void SyntheticGlyphSpec::validate() const {
  if (num_classes == 0) throw std::invalid_argument("num_classes must be >= 1");
  if (image_size < 8) throw std::invalid_argument("image_size must be >= 8");
  if (min_strokes == 0 || max_strokes < min_strokes) {
    throw std::invalid_argument("stroke range must satisfy 1 <= min <= max");
  }
  if (!(stroke_width > 0.0)) throw std::invalid_argument("stroke_width must be positive");
  const auto& t = texture;
  if (!(t.noise_amplitude >= 0.0 && t.noise_amplitude <= 1.0)) {
    throw std::invalid_argument("noise_amplitude must lie in [0,1]");
  }
  if (!(t.blotch_density >= 0.0)) throw std::invalid_argument("blotch_density must be >= 0");
  if (!(t.brightness_bias >= 0.0)) throw std::invalid_argument("brightness_bias must be >= 0");
}

void to_json(nlohmann::json& j, const SyntheticGlyphSpec& s) {
  j = nlohmann::json{{"num_classes", s.num_classes},
                     {"image_size", s.image_size},
                     {"min_strokes", s.min_strokes},
                     {"max_strokes", s.max_strokes},
                     {"stroke_width", s.stroke_width},
                     {"texture",
                      {{"noise_amplitude", s.texture.noise_amplitude},
                       {"blotch_density", s.texture.blotch_density},
                       {"brightness_bias", s.texture.brightness_bias}}}};
}

void from_json(const nlohmann::json& j, SyntheticGlyphSpec& s) {
  s.num_classes = j.value("num_classes", s.num_classes);
  s.image_size = j.value("image_size", s.image_size);
  s.min_strokes = j.value("min_strokes", s.min_strokes);
  s.max_strokes = j.value("max_strokes", s.max_strokes);
  s.stroke_width = j.value("stroke_width", s.stroke_width);
  if (j.contains("texture")) {
    const auto& t = j.at("texture");
    s.texture.noise_amplitude = t.value("noise_amplitude", s.texture.noise_amplitude);
    s.texture.blotch_density = t.value("blotch_density", s.texture.blotch_density);
    s.texture.brightness_bias = t.value("brightness_bias", s.texture.brightness_bias);
  }
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px, ey = ay + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

GlyphClass random_class(const SyntheticGlyphSpec& spec, std::size_t index, Rng& rng) {
  GlyphClass g;
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", index);
  g.label = buf;
  const std::size_t span = spec.max_strokes - spec.min_strokes + 1;
  const std::size_t n = spec.min_strokes + rng.below(span);
  for (std::size_t s = 0; s < n; ++s) {
    Stroke k;
    k.x0 = rng.uniform(0.2, 0.8);
    k.y0 = rng.uniform(0.2, 0.8);
    k.x1 = rng.uniform(0.2, 0.8);
    k.y1 = rng.uniform(0.2, 0.8);
    // Keep strokes long enough to read as strokes.
    while (std::hypot(k.x1 - k.x0, k.y1 - k.y0) < 0.25) {
      k.x1 = rng.uniform(0.2, 0.8);
      k.y1 = rng.uniform(0.2, 0.8);
    }
    const double mx = 0.5 * (k.x0 + k.x1), my = 0.5 * (k.y0 + k.y1);
    const bool arc = rng.uniform() < 0.4;
    const double bend = arc ? rng.uniform(-0.2, 0.2) : 0.0;
    const double nx = -(k.y1 - k.y0), ny = k.x1 - k.x0;
    k.cx = mx + bend * nx;
    k.cy = my + bend * ny;
    g.strokes.push_back(k);
  }
  return g;
}

struct Jitter {
  double rotation, scale, shift, local;
};

std::vector<Stroke> jittered(const GlyphClass& g, const Jitter& j, Rng& rng) {
  const double rot = rng.uniform(-j.rotation, j.rotation);
  const double sc = 1.0 + rng.uniform(-j.scale, j.scale);
  const double tx = rng.uniform(-j.shift, j.shift), ty = rng.uniform(-j.shift, j.shift);
  const double c = std::cos(rot), s = std::sin(rot);
  auto map = [&](double& x, double& y) {
    const double u = x - 0.5 + rng.uniform(-j.local, j.local);
    const double v = y - 0.5 + rng.uniform(-j.local, j.local);
    x = 0.5 + sc * (c * u - s * v) + tx;
    y = 0.5 + sc * (s * u + c * v) + ty;
    x = std::clamp(x, 0.02, 0.98);
    y = std::clamp(y, 0.02, 0.98);
  };
  std::vector<Stroke> out = g.strokes;
  for (auto& k : out) {
    map(k.x0, k.y0);
    map(k.cx, k.cy);
    map(k.x1, k.y1);
  }
  return out;
}

void add_texture(Image& img, const TextureProfile& t, Rng& rng) {
  const double amp = t.noise_amplitude;
  if (amp <= 0.0) return;
  const std::size_t h = img.height(), w = img.width();
  // Low-frequency field on a coarse lattice plus per-pixel grain.
  constexpr std::size_t kCoarse = 9;
  std::vector<double> coarse(kCoarse * kCoarse);
  for (auto& v : coarse) v = rng.normal();
  const double tone = std::min(0.5, amp * t.brightness_bias * rng.uniform(0.5, 1.0));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double fy = static_cast<double>(i) / (h - 1) * (kCoarse - 1);
      const double fx = static_cast<double>(j) / (w - 1) * (kCoarse - 1);
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), kCoarse - 2);
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), kCoarse - 2);
      const double ay = fy - y0, ax = fx - x0;
      const double low = (1 - ay) * ((1 - ax) * coarse[y0 * kCoarse + x0] + ax * coarse[y0 * kCoarse + x0 + 1]) +
                         ay * ((1 - ax) * coarse[(y0 + 1) * kCoarse + x0] + ax * coarse[(y0 + 1) * kCoarse + x0 + 1]);
      img.at(i, j) += amp * (0.8 * low + 0.6 * rng.normal()) - tone;
    }
  }
  const double expected = t.blotch_density;
  std::size_t count = static_cast<std::size_t>(expected);
  if (rng.uniform() < expected - static_cast<double>(count)) ++count;
  for (std::size_t b = 0; b < count; ++b) {
    const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
    const double ry = rng.uniform(1.5, 0.12 * h), rx = rng.uniform(1.5, 0.12 * w);
    const double ang = rng.uniform(0, std::numbers::pi);
    const double depth = std::min(1.0, amp * rng.uniform(2.0, 5.0));
    const double ca = std::cos(ang), sa = std::sin(ang);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
        const double u = (ca * dx + sa * dy) / rx, v = (-sa * dx + ca * dy) / ry;
        const double r2 = u * u + v * v;
        if (r2 < 1.0) img.at(i, j) -= depth * (1.0 - r2);
      }
    }
  }
  img.clamp();
}

}  // namespace

Image render_strokes(const std::vector<Stroke>& strokes, std::size_t size, double width,
                     double ink) {
  constexpr int kSegments = 24;
  std::vector<std::array<double, 4>> segs;
  const double sz = static_cast<double>(size);
  for (const auto& k : strokes) {
    double px = k.x0 * sz, py = k.y0 * sz;
    for (int s = 1; s <= kSegments; ++s) {
      const double t = static_cast<double>(s) / kSegments, u = 1 - t;
      const double x = (u * u * k.x0 + 2 * u * t * k.cx + t * t * k.x1) * sz;
      const double y = (u * u * k.y0 + 2 * u * t * k.cy + t * t * k.y1) * sz;
      segs.push_back({px, py, x, y});
      px = x;
      py = y;
    }
  }
  Image img(size, size, 1.0);
  const double half = 0.5 * width;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double cx = j + 0.5, cy = i + 0.5;
      double d = 1e30;
      for (const auto& s : segs) d = std::min(d, segment_distance(cx, cy, s[0], s[1], s[2], s[3]));
      const double coverage = std::clamp(half - d + 0.5, 0.0, 1.0);
      img.at(i, j) = 1.0 - coverage * (1.0 - ink);
    }
  }
  return img;
}

SyntheticCorpus synth_generate(const SyntheticGlyphSpec& spec, std::size_t samples_per_class,
                               std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticCorpus corpus;
  for (std::size_t c = 0; c < spec.num_classes; ++c) corpus.classes.push_back(random_class(spec, c, rng));

  const double scale = static_cast<double>(spec.image_size) / 64.0;
  const Jitter sc_jitter{0.05, 0.04, 0.02, 0.01};
  const Jitter pc_jitter{0.30, 0.15, 0.06, 0.04};
  const double amp = spec.texture.noise_amplitude;
  for (const auto& g : corpus.classes) {
    for (std::size_t n = 0; n < samples_per_class; ++n) {
      const double w = spec.stroke_width * scale;
      corpus.sc.push_back({render_strokes(jittered(g, sc_jitter, rng), spec.image_size, w, 0.0),
                           g.label, g.strokes.size()});
    }
    for (std::size_t n = 0; n < samples_per_class; ++n) {
      const double w = spec.stroke_width * scale * rng.uniform(0.75, 1.35);
      const double ink = std::min(0.4, amp * rng.uniform(0.5, 2.0));
      Image img = render_strokes(jittered(g, pc_jitter, rng), spec.image_size, w, ink);
      add_texture(img, spec.texture, rng);
      corpus.pc.push_back({std::move(img), g.label, g.strokes.size()});
    }
  }
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const SyntheticGlyphSpec& spec,
                  std::uint64_t seed, const fs::path& out) {
  nlohmann::json manifest{{"seed", seed}, {"spec", spec}};
  for (const char* domain : {"sc", "pc"}) {
    const auto& samples = std::string(domain) == "sc" ? corpus.sc : corpus.pc;
    nlohmann::json entries = nlohmann::json::array();
    std::map<std::string, std::size_t> counters;
    for (const auto& s : samples) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.png", counters[s.label]++);
      const fs::path rel = fs::path(domain) / s.label / name;
      fs::create_directories(out / rel.parent_path());
      save_image(s.image, out / rel);
      entries.push_back({{"path", rel.generic_string()}, {"label", s.label}, {"strokes", s.strokes}});
    }
    manifest[domain] = entries;
  }
  std::ofstream f(out / "manifest.json");
  if (!f) throw DatasetError("cannot write " + (out / "manifest.json").string());
  f << manifest.dump(2) << "\n";
}

}  // namespace glyphforge::data
