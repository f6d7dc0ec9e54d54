#pragma once

#include <string>
#include <variant>

#include "tcdp/grid.hpp"

namespace tcdp {

// PFM: "Pf" (one channel) / "PF" (three channels), ASCII width, height and a
// scale whose sign gives byte order (negative = little-endian); float32
// samples stored scanline bottom-up. Grids here are top-down, so rows are
// flipped on both read and write. Non-finite samples load as invalid; invalid
// pixels are written as quiet NaN.
std::variant<ScalarGrid, VectorGrid> load_pfm(const std::string& path);
ScalarGrid load_pfm_scalar(const std::string& path);
VectorGrid load_pfm_vector(const std::string& path);
void save_pfm(const ScalarGrid& g, const std::string& path);
void save_pfm(const VectorGrid& g, const std::string& path);  // channels == 3

// Middlebury .flo: float 202021.25 magic ("PIEH"), int32 width/height,
// interleaved float32 (u, v) top-down. Components beyond 1e9 in magnitude are
// the unknown-flow sentinel and load as invalid; invalid pixels are written
// with that sentinel.
VectorGrid load_flo(const std::string& path);
void save_flo(const VectorGrid& g, const std::string& path);  // channels == 2

// 16-bit PNGs. Normals: three channels, v = round((n + 1) / 2 * 65535);
// decoding renormalizes and marks near-zero vectors (norm < 1e-3) invalid,
// which is also how invalid pixels are written. Masks: one channel,
// v = round(clamp(m, 0, 1) * 65535), everything valid on load.
VectorGrid load_normal_png16(const std::string& path);
void save_normal_png16(const VectorGrid& g, const std::string& path);  // channels == 3
ScalarGrid load_mask_png16(const std::string& path);
void save_mask_png16(const ScalarGrid& g, const std::string& path);

struct ImageDims {
  int width = 0;
  int height = 0;
};

// Reads just enough of a PFM / .flo / PNG header to report dimensions.
ImageDims peek_dims(const std::string& path);

}  // namespace tcdp
