#include <doctest.h>

#include <fstream>
#include <set>

#include "glyphforge/data.hpp"
#include "helpers.hpp"

using namespace glyphforge;
using namespace glyphforge::data;

TEST_SUITE("data") {

TEST_CASE("scan enumerates classes in lexicographic order") {
  testutil::TempDir root("scan");
  Rng rng(1);
  std::filesystem::create_directories(root / "b");
  std::filesystem::create_directories(root / "a");
  save_image(testutil::random_image(rng, 10, 10), root / "b" / "2.png");
  save_image(testutil::random_image(rng, 10, 10), root / "b" / "1.pgm");
  save_image(testutil::random_image(rng, 10, 10), root / "b" / "3.png");
  save_image(testutil::random_image(rng, 10, 10), root / "a" / "y.png");
  save_image(testutil::random_image(rng, 10, 10), root / "a" / "x.png");
  std::ofstream(root / "a" / "notes.txt") << "ignored";

  const auto m = scan_dataset(root.path(), 16);
  REQUIRE(m.entries.size() == 5);
  CHECK(m.labels() == std::vector<std::string>{"a", "b"});
  CHECK(m.entries[0].path == "a/x.png");
  CHECK(m.entries[1].path == "a/y.png");
  CHECK(m.entries[2].path == "b/1.pgm");
  CHECK(m.entries[4].label == "b");
  CHECK(m.skipped.empty());
  const Image img = m.load(3);
  CHECK(img.height() == 16);
  CHECK(img.width() == 16);

  nlohmann::json j = m;
  DatasetManifest back;
  from_json(j, back);
  CHECK(back.entries.size() == 5);
  CHECK(back.image_size == 16);
}

TEST_CASE("empty directory has no classes") {
  testutil::TempDir root("empty");
  CHECK_THROWS_WITH_AS(scan_dataset(root.path(), 64), doctest::Contains("no classes found"), DatasetError);
  std::filesystem::create_directories(root / "only_dir");
  CHECK_THROWS_AS(scan_dataset(root.path(), 64), DatasetError);
}

TEST_CASE("corrupt files are skipped and reported") {
  testutil::TempDir root("corrupt");
  Rng rng(2);
  std::filesystem::create_directories(root / "k");
  save_image(testutil::random_image(rng, 8, 8), root / "k" / "good1.png");
  save_image(testutil::random_image(rng, 8, 8), root / "k" / "good2.png");
  std::ofstream(root / "k" / "bad.png", std::ios::binary) << "\x89PNG\r\n\x1a\nnope";
  const auto m = scan_dataset(root.path(), 8);
  CHECK(m.entries.size() == 2);
  REQUIRE(m.skipped.size() == 1);
  CHECK(m.skipped[0].path.find("bad.png") != std::string::npos);
  CHECK_FALSE(m.skipped[0].reason.empty());
}

TEST_CASE("synthetic corpus counts and ranges") {
  SyntheticGlyphSpec spec;
  const auto c = synth_generate(spec, 10, 7);
  CHECK(c.classes.size() == 2);
  REQUIRE(c.sc.size() == 20);
  REQUIRE(c.pc.size() == 20);
  for (const auto* set : {&c.sc, &c.pc})
    for (const auto& s : *set) {
      CHECK(s.image.height() == 64);
      CHECK(s.image.width() == 64);
      for (double v : s.image.data()) CHECK((v >= 0.0 && v <= 1.0));
    }
}

TEST_CASE("synthesis is deterministic in the seed") {
  SyntheticGlyphSpec spec;
  const auto a = synth_generate(spec, 3, 42), b = synth_generate(spec, 3, 42), c = synth_generate(spec, 3, 43);
  for (std::size_t i = 0; i < a.sc.size(); ++i) {
    CHECK(a.sc[i].image == b.sc[i].image);
    CHECK(a.pc[i].image == b.pc[i].image);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.pc.size(); ++i) differs = differs || !(a.pc[i].image == c.pc[i].image);
  CHECK(differs);
}

TEST_CASE("zero noise leaves a pure white background") {
  SyntheticGlyphSpec spec;
  spec.texture.noise_amplitude = 0.0;
  const auto quiet = synth_generate(spec, 4, 9);
  spec.texture.noise_amplitude = 0.08;
  const auto noisy = synth_generate(spec, 4, 9);
  for (std::size_t i = 0; i < quiet.pc.size(); ++i) {
    const Image& img = quiet.pc[i].image;
    const std::size_t n = img.height();
    // Off-stroke pixels are exactly 1: anything else lies within 2 px of ink.
    std::size_t stray = 0, white = 0, noisy_white = 0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        if (img.at(r, c) == 1.0) {
          ++white;
          continue;
        }
        bool near_ink = false;
        for (std::size_t rr = r > 2 ? r - 2 : 0; rr <= std::min(n - 1, r + 2); ++rr)
          for (std::size_t cc = c > 2 ? c - 2 : 0; cc <= std::min(n - 1, c + 2); ++cc)
            near_ink = near_ink || img.at(rr, cc) < 0.5;
        stray += !near_ink;
      }
    for (double v : noisy.pc[i].image.data()) noisy_white += v == 1.0;
    CHECK(stray == 0);
    CHECK(white > img.size() / 2);
    CHECK(noisy_white < white);
  }
}

TEST_CASE("every SC glyph has a proper Otsu foreground") {
  SyntheticGlyphSpec spec;
  spec.num_classes = 4;
  const auto c = synth_generate(spec, 5, 3);
  for (const auto& s : c.sc) {
    const auto fg = binarize(s.image).mask.foreground_count();
    CHECK(fg > 0);
    CHECK(fg < s.image.size());
  }
}

TEST_CASE("SC and PC share stroke counts per class and differ pixelwise") {
  SyntheticGlyphSpec spec;
  spec.num_classes = 3;
  const auto c = synth_generate(spec, 4, 5);
  std::map<std::string, std::size_t> topology;
  for (const auto& g : c.classes) topology[g.label] = g.strokes.size();
  for (std::size_t i = 0; i < c.sc.size(); ++i) {
    CHECK(c.sc[i].strokes == topology.at(c.sc[i].label));
    CHECK(c.pc[i].strokes == topology.at(c.pc[i].label));
    CHECK_FALSE(c.sc[i].image == c.pc[i].image);
  }

  testutil::TempDir out("corpus");
  write_corpus(c, spec, 5, out.path());
  const auto sc = scan_dataset(out / "sc", 64), pc = scan_dataset(out / "pc", 64);
  CHECK(sc.entries.size() == 12);
  CHECK(pc.labels() == sc.labels());
  std::ifstream f(out / "manifest.json");
  const auto j = nlohmann::json::parse(f);
  for (const auto& e : j.at("pc")) CHECK(e.at("strokes").get<std::size_t>() == topology.at(e.at("label")));
}

TEST_CASE("invalid synthetic specs are rejected") {
  SyntheticGlyphSpec spec;
  spec.texture.noise_amplitude = 1.5;
  CHECK_THROWS(spec.validate());
  spec = SyntheticGlyphSpec{};
  spec.num_classes = 0;
  CHECK_THROWS(spec.validate());
}

}  // TEST_SUITE
