// PNG (8-bit gray) and PGM (P5, maxval 255) codecs.

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include "glyphforge/image.hpp"

namespace glyphforge {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

// PGM header tokens, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

struct PngRaw {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  std::string problem;
};

// libpng prints to stderr by default; errors surface as FormatError instead.
void png_silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void png_silent_warning(png_structp, png_const_charp) {}

// Kept free of C++ objects with live destructors across setjmp; all state
// goes through `raw`.
bool read_png_raw(std::FILE* fp, PngRaw* raw) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error,
                                           png_silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  int depth = 0, color = 0, interlace = 0;
  png_get_IHDR(png, info, &raw->width, &raw->height, &depth, &color, &interlace, nullptr,
               nullptr);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    raw->problem = "unsupported: color image";
  } else if (color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    raw->problem = "unsupported: alpha channel";
  } else if (depth != 8) {
    raw->problem = "unsupported: bit depth " + std::to_string(depth);
  }
  if (!raw->problem.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  raw->pixels.resize(static_cast<std::size_t>(raw->width) * raw->height);
  raw->rows.resize(raw->height);
  for (png_uint_32 r = 0; r < raw->height; ++r) raw->rows[r] = raw->pixels.data() + r * raw->width;
  png_read_image(png, raw->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic = next_token(in);
  if (magic != "P5") throw FormatError("unsupported: PGM variant '" + magic + "' (need P5)");
  std::size_t w = 0, h = 0;
  long maxval = 0;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxval = std::stol(next_token(in));
  } catch (const std::exception&) {
    throw FormatError("corrupt PGM header in " + path.string());
  }
  if (maxval != 255) throw FormatError("unsupported: maxval " + std::to_string(maxval));
  if (w == 0 || h == 0) throw FormatError("corrupt PGM: zero dimension");
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("corrupt PGM: truncated pixel data in " + path.string());
  }
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
  return Image(h, w, std::move(data));
}

void save_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize(img.data()[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image load_png(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("corrupt PNG: bad signature in " + path.string());
  }
  auto raw = std::make_unique<PngRaw>();
  if (!read_png_raw(fp.get(), raw.get())) {
    throw FormatError("corrupt PNG: " + path.string());
  }
  if (!raw->problem.empty()) throw FormatError(raw->problem);
  std::vector<double> data(raw->pixels.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = raw->pixels[i] / 255.0;
  return Image(raw->height, raw->width, std::move(data));
}

void save_png(const Image& img, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize(img.data()[i]);
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width());
  desc.height = static_cast<png_uint_32>(img.height());
  desc.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, bytes.data(),
                               static_cast<png_int_32>(img.width()), nullptr)) {
    std::string msg = desc.message;
    png_image_free(&desc);
    throw std::runtime_error("PNG write failed for " + path.string() + ": " + msg);
  }
}

Image load_image(const std::filesystem::path& path) {
  unsigned char head[8] = {};
  {
    FilePtr fp = open_file(path, "rb");
    std::size_t got = std::fread(head, 1, sizeof head, fp.get());
    if (got < 2) throw FormatError("unsupported: unrecognized file format in " + path.string());
  }
  if (head[0] == 0x89 && head[1] == 'P') return load_png(path);
  if (head[0] == 'P' && std::isdigit(head[1])) return load_pgm(path);
  throw FormatError("unsupported: unrecognized file format in " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".png") {
    save_png(img, path);
  } else if (ext == ".pgm") {
    save_pgm(img, path);
  } else {
    throw FormatError("unsupported: output extension '" + ext + "' (use .png or .pgm)");
  }
}

}  // namespace glyphforge
