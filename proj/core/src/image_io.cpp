#include "tcdp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

namespace tcdp {

namespace {

constexpr float kFloSentinel = 1e10f;   // unknown-flow marker
constexpr float kFloInvalidBound = 1e9f;
constexpr double kFloMagic = 202021.25;  // stores as "PIEH" when read as text

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// --- PFM ---------------------------------------------------------------

// Reads one whitespace-delimited header token (PFM headers allow any blend of
// spaces and newlines between fields).
std::string read_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int c;
  do {
    c = std::fgetc(f);
    if (c == EOF) fail(path, "truncated PFM header");
  } while (std::isspace(c));
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = std::fgetc(f);
  }
  return tok;
}

void byteswap4(unsigned char* p, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    std::swap(p[0], p[3]);
    std::swap(p[1], p[2]);
  }
}

struct PfmHeader {
  int width = 0, height = 0, channels = 0;
  bool little_endian = true;
};

PfmHeader read_pfm_header(std::FILE* f, const std::string& path) {
  PfmHeader h;
  std::string kind = read_token(f, path);
  if (kind == "Pf") {
    h.channels = 1;
  } else if (kind == "PF") {
    h.channels = 3;
  } else {
    fail(path, "not a PFM file (bad magic '" + kind + "')");
  }
  std::string ws = read_token(f, path);
  std::string hs = read_token(f, path);
  std::string ss = read_token(f, path);
  try {
    h.width = std::stoi(ws);
    h.height = std::stoi(hs);
    h.little_endian = std::stod(ss) < 0.0;
  } catch (const std::exception&) {
    fail(path, "malformed PFM header");
  }
  if (h.width <= 0 || h.height <= 0) fail(path, "bad PFM dimensions");
  return h;
}

std::vector<float> read_pfm_payload(std::FILE* f, const PfmHeader& h, const std::string& path) {
  std::size_t count = static_cast<std::size_t>(h.width) * h.height * h.channels;
  std::vector<float> file_order(count);
  if (std::fread(file_order.data(), sizeof(float), count, f) != count) {
    fail(path, "truncated PFM payload");
  }
  if (!h.little_endian) {
    byteswap4(reinterpret_cast<unsigned char*>(file_order.data()), count);
  }
  // PFM scanlines run bottom-up; flip into top-down order.
  std::vector<float> rows(count);
  std::size_t row_elems = static_cast<std::size_t>(h.width) * h.channels;
  for (int y = 0; y < h.height; ++y) {
    std::memcpy(rows.data() + static_cast<std::size_t>(y) * row_elems,
                file_order.data() + static_cast<std::size_t>(h.height - 1 - y) * row_elems,
                row_elems * sizeof(float));
  }
  return rows;
}

void write_pfm(const std::string& path, int width, int height, int channels,
               const float* top_down) {
  FilePtr f = open_file(path, "wb");
  std::fprintf(f.get(), "%s\n%d %d\n-1.0\n", channels == 1 ? "Pf" : "PF", width, height);
  std::size_t row_elems = static_cast<std::size_t>(width) * channels;
  for (int y = height - 1; y >= 0; --y) {
    if (std::fwrite(top_down + static_cast<std::size_t>(y) * row_elems, sizeof(float),
                    row_elems, f.get()) != row_elems) {
      fail(path, "short PFM write");
    }
  }
}

// --- PNG helpers --------------------------------------------------------

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

// Decoded 16-bit image with samples unpacked from PNG's big-endian order.
struct Png16Image {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

Png16Image read_png16(const std::string& path, int expect_channels) {
  FilePtr f = open_file(path, "rb");
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) fail(path, "png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail(path, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) fail(path, "libpng read error");
  png_init_io(r.png, f.get());
  png_read_info(r.png, r.info);

  png_uint_32 w = png_get_image_width(r.png, r.info);
  png_uint_32 h = png_get_image_height(r.png, r.info);
  int depth = png_get_bit_depth(r.png, r.info);
  int color = png_get_color_type(r.png, r.info);
  int interlace = png_get_interlace_type(r.png, r.info);
  if (depth != 16) fail(path, "expected 16-bit PNG");
  if (interlace != PNG_INTERLACE_NONE) fail(path, "interlaced PNG not supported");
  int channels;
  if (color == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (color == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    fail(path, "expected grayscale or RGB PNG");
  }
  if (channels != expect_channels) {
    fail(path, "expected " + std::to_string(expect_channels) + "-channel PNG");
  }

  Png16Image img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.samples.resize(static_cast<std::size_t>(w) * h * channels);
  std::size_t row_bytes = static_cast<std::size_t>(w) * channels * 2;
  std::vector<std::uint8_t> raw(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    img.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return img;
}

void write_png16(const std::string& path, int width, int height, int channels,
                 const std::uint16_t* samples) {
  std::size_t row_bytes = static_cast<std::size_t>(width) * channels * 2;
  std::vector<std::uint8_t> raw(row_bytes * height);
  for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height * channels; ++i) {
    raw[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
  }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * row_bytes;

  FilePtr f = open_file(path, "wb");
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) fail(path, "png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail(path, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) fail(path, "libpng write error");
  png_init_io(w.png, f.get());
  png_set_IHDR(w.png, w.info, width, height, 16,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

constexpr std::uint16_t kNormalInvalidSample = 32767;  // decodes to ~0 per channel

}  // namespace

std::variant<ScalarGrid, VectorGrid> load_pfm(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  PfmHeader h = read_pfm_header(f.get(), path);
  std::vector<float> rows = read_pfm_payload(f.get(), h, path);
  if (h.channels == 1) {
    ScalarGrid g(h.width, h.height);
    for (int y = 0; y < h.height; ++y) {
      for (int x = 0; x < h.width; ++x) {
        float v = rows[g.idx(x, y)];
        g.set(x, y, v, std::isfinite(v));
      }
    }
    return g;
  }
  VectorGrid g(h.width, h.height, 3);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      bool ok = true;
      for (int c = 0; c < 3; ++c) {
        float v = rows[g.idx(x, y) * 3 + c];
        g.at(x, y, c) = v;
        ok = ok && std::isfinite(v);
      }
      g.set_valid(x, y, ok);
    }
  }
  return g;
}

ScalarGrid load_pfm_scalar(const std::string& path) {
  auto v = load_pfm(path);
  if (!std::holds_alternative<ScalarGrid>(v)) fail(path, "expected one-channel PFM");
  return std::get<ScalarGrid>(std::move(v));
}

VectorGrid load_pfm_vector(const std::string& path) {
  auto v = load_pfm(path);
  if (!std::holds_alternative<VectorGrid>(v)) fail(path, "expected three-channel PFM");
  return std::get<VectorGrid>(std::move(v));
}

void save_pfm(const ScalarGrid& g, const std::string& path) {
  if (g.empty()) throw std::invalid_argument("save_pfm: empty grid");
  std::vector<float> rows(g.size());
  constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      rows[g.idx(x, y)] = g.valid_at(x, y) ? g.at(x, y) : kNaN;
    }
  }
  write_pfm(path, g.width(), g.height(), 1, rows.data());
}

void save_pfm(const VectorGrid& g, const std::string& path) {
  if (g.empty()) throw std::invalid_argument("save_pfm: empty grid");
  if (g.channels() != 3) throw std::invalid_argument("save_pfm: PFM supports 1 or 3 channels");
  std::vector<float> rows(static_cast<std::size_t>(g.width()) * g.height() * 3);
  constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        rows[g.idx(x, y) * 3 + c] = g.valid_at(x, y) ? g.at(x, y, c) : kNaN;
      }
    }
  }
  write_pfm(path, g.width(), g.height(), 3, rows.data());
}

VectorGrid load_flo(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  float magic = 0.0f;
  std::int32_t w = 0, h = 0;
  if (std::fread(&magic, sizeof(float), 1, f.get()) != 1 ||
      std::fread(&w, sizeof(std::int32_t), 1, f.get()) != 1 ||
      std::fread(&h, sizeof(std::int32_t), 1, f.get()) != 1) {
    fail(path, "truncated .flo header");
  }
  if (magic != static_cast<float>(kFloMagic)) fail(path, "bad .flo magic");
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) fail(path, "bad .flo dimensions");
  std::size_t count = static_cast<std::size_t>(w) * h * 2;
  std::vector<float> data(count);
  if (std::fread(data.data(), sizeof(float), count, f.get()) != count) {
    fail(path, "truncated .flo payload");
  }
  VectorGrid g(w, h, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float u = data[g.idx(x, y) * 2 + 0];
      float v = data[g.idx(x, y) * 2 + 1];
      bool ok = std::isfinite(u) && std::isfinite(v) &&
                std::fabs(u) <= kFloInvalidBound && std::fabs(v) <= kFloInvalidBound;
      g.at(x, y, 0) = u;
      g.at(x, y, 1) = v;
      g.set_valid(x, y, ok);
    }
  }
  return g;
}

void save_flo(const VectorGrid& g, const std::string& path) {
  if (g.empty()) throw std::invalid_argument("save_flo: empty grid");
  if (g.channels() != 2) throw std::invalid_argument("save_flo: flow grids have 2 channels");
  FilePtr f = open_file(path, "wb");
  float magic = static_cast<float>(kFloMagic);
  std::int32_t w = g.width(), h = g.height();
  std::fwrite(&magic, sizeof(float), 1, f.get());
  std::fwrite(&w, sizeof(std::int32_t), 1, f.get());
  std::fwrite(&h, sizeof(std::int32_t), 1, f.get());
  std::vector<float> data(static_cast<std::size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool ok = g.valid_at(x, y);
      data[g.idx(x, y) * 2 + 0] = ok ? g.at(x, y, 0) : kFloSentinel;
      data[g.idx(x, y) * 2 + 1] = ok ? g.at(x, y, 1) : kFloSentinel;
    }
  }
  if (std::fwrite(data.data(), sizeof(float), data.size(), f.get()) != data.size()) {
    fail(path, "short .flo write");
  }
}

VectorGrid load_normal_png16(const std::string& path) {
  Png16Image img = read_png16(path, 3);
  VectorGrid g(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double n[3];
      for (int c = 0; c < 3; ++c) {
        n[c] = 2.0 * img.samples[g.idx(x, y) * 3 + c] / 65535.0 - 1.0;
      }
      double norm = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
      if (norm < 1e-3) {
        g.at(x, y, 0) = g.at(x, y, 1) = g.at(x, y, 2) = 0.0f;
        g.set_valid(x, y, false);
      } else {
        for (int c = 0; c < 3; ++c) g.at(x, y, c) = static_cast<float>(n[c] / norm);
        g.set_valid(x, y, true);
      }
    }
  }
  return g;
}

void save_normal_png16(const VectorGrid& g, const std::string& path) {
  if (g.empty()) throw std::invalid_argument("save_normal_png16: empty grid");
  if (g.channels() != 3) throw std::invalid_argument("save_normal_png16: need 3 channels");
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(g.width()) * g.height() * 3);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        std::uint16_t s = kNormalInvalidSample;
        if (g.valid_at(x, y)) {
          double unit = (static_cast<double>(g.at(x, y, c)) + 1.0) / 2.0;
          double q = std::round(std::clamp(unit, 0.0, 1.0) * 65535.0);
          s = static_cast<std::uint16_t>(q);
        }
        samples[g.idx(x, y) * 3 + c] = s;
      }
    }
  }
  write_png16(path, g.width(), g.height(), 3, samples.data());
}

ScalarGrid load_mask_png16(const std::string& path) {
  Png16Image img = read_png16(path, 1);
  ScalarGrid g(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      g.set(x, y, static_cast<float>(img.samples[g.idx(x, y)] / 65535.0), true);
    }
  }
  return g;
}

void save_mask_png16(const ScalarGrid& g, const std::string& path) {
  if (g.empty()) throw std::invalid_argument("save_mask_png16: empty grid");
  std::vector<std::uint16_t> samples(g.size());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      double v = g.valid_at(x, y) ? std::clamp(static_cast<double>(g.at(x, y)), 0.0, 1.0) : 0.0;
      samples[g.idx(x, y)] = static_cast<std::uint16_t>(std::round(v * 65535.0));
    }
  }
  write_png16(path, g.width(), g.height(), 1, samples.data());
}

ImageDims peek_dims(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[4] = {0, 0, 0, 0};
  std::size_t got = std::fread(magic, 1, 4, f.get());
  if (got < 4) fail(path, "file too short");
  std::rewind(f.get());

  if (magic[0] == 'P' && (magic[1] == 'f' || magic[1] == 'F')) {
    PfmHeader h = read_pfm_header(f.get(), path);
    return {h.width, h.height};
  }
  if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G') {
    // IHDR is mandatory and first: width/height are big-endian at offset 16.
    unsigned char head[24];
    if (std::fread(head, 1, 24, f.get()) != 24) fail(path, "truncated PNG header");
    auto be32 = [](const unsigned char* p) {
      return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
             (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
    };
    if (std::memcmp(head + 12, "IHDR", 4) != 0) fail(path, "PNG missing IHDR");
    return {static_cast<int>(be32(head + 16)), static_cast<int>(be32(head + 20))};
  }
  float fmagic;
  std::memcpy(&fmagic, magic, 4);
  if (fmagic == static_cast<float>(kFloMagic)) {
    std::int32_t wh[2];
    std::fseek(f.get(), 4, SEEK_SET);
    if (std::fread(wh, sizeof(std::int32_t), 2, f.get()) != 2) fail(path, "truncated .flo header");
    return {wh[0], wh[1]};
  }
  fail(path, "unrecognized image format");
}

}  // namespace tcdp
