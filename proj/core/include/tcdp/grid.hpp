#pragma once

#include <cstdint>
#include <vector>

namespace tcdp {

// Pixel-center convention used throughout: pixel (x, y) is centered at the
// continuous coordinate (x, y), origin at the top-left pixel, +x right,
// +y down. Validity is an explicit plane; there are no NaN sentinels in the
// value planes of a well-formed grid.

struct SampleResult {
  double value = 0.0;
  bool valid = false;
};

class ScalarGrid {
 public:
  ScalarGrid() = default;
  ScalarGrid(int width, int height, float fill = 0.0f, bool valid = true);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  std::size_t size() const { return values_.size(); }

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  float at(int x, int y) const { return values_[idx(x, y)]; }
  float& at(int x, int y) { return values_[idx(x, y)]; }
  bool valid_at(int x, int y) const { return valid_[idx(x, y)] != 0; }
  void set(int x, int y, float v, bool ok = true) {
    values_[idx(x, y)] = v;
    valid_[idx(x, y)] = ok ? 1 : 0;
  }
  void invalidate(int x, int y) { valid_[idx(x, y)] = 0; }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }
  std::vector<std::uint8_t>& validity() { return valid_; }

  long long valid_count() const;

  // Bilinear interpolation at a continuous position. Invalid when (x, y) is
  // outside [0, W-1] x [0, H-1] or when any neighbor with nonzero blend
  // weight is invalid; integer coordinates reproduce the pixel exactly.
  SampleResult sample_bilinear(double x, double y) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
  std::vector<std::uint8_t> valid_;
};

class VectorGrid {
 public:
  VectorGrid() = default;
  VectorGrid(int width, int height, int channels, float fill = 0.0f, bool valid = true);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return width_ == 0 || height_ == 0 || channels_ == 0; }

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  float at(int x, int y, int c) const { return values_[idx(x, y) * channels_ + c]; }
  float& at(int x, int y, int c) { return values_[idx(x, y) * channels_ + c]; }
  bool valid_at(int x, int y) const { return valid_[idx(x, y)] != 0; }
  void set_valid(int x, int y, bool ok) { valid_[idx(x, y)] = ok ? 1 : 0; }
  void invalidate(int x, int y) { valid_[idx(x, y)] = 0; }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }
  const std::vector<std::uint8_t>& validity() const { return valid_; }
  std::vector<std::uint8_t>& validity() { return valid_; }

  long long valid_count() const;

  // Per-channel bilinear interpolation sharing one validity decision; `out`
  // must point at channels() doubles. Returns false (out untouched) when the
  // sample is invalid under the same rules as ScalarGrid::sample_bilinear.
  bool sample_bilinear(double x, double y, double* out) const;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> values_;   // interleaved, row-major
  std::vector<std::uint8_t> valid_;  // one flag per pixel
};

SampleResult bilinear_sample(const ScalarGrid& g, double x, double y);
bool bilinear_sample(const VectorGrid& g, double x, double y, double* out);

}  // namespace tcdp
