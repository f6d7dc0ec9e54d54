#include "tcdp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcdp {

namespace {

void check_dims(int width, int height, int channels) {
  if (width < 0 || height < 0 || channels < 1) {
    throw std::invalid_argument("grid dimensions must be non-negative and channels >= 1");
  }
}

struct BilinearTaps {
  int x0, y0, x1, y1;
  double w00, w10, w01, w11;
  bool inside;
};

BilinearTaps make_taps(double x, double y, int width, int height) {
  BilinearTaps t{};
  // Written so NaN coordinates fail the comparisons and land outside.
  if (!(x >= 0.0) || !(y >= 0.0) || !(x <= width - 1.0) || !(y <= height - 1.0)) {
    t.inside = false;
    return t;
  }
  t.inside = true;
  t.x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
  t.y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  double fx = x - t.x0;
  double fy = y - t.y0;
  t.w00 = (1.0 - fx) * (1.0 - fy);
  t.w10 = fx * (1.0 - fy);
  t.w01 = (1.0 - fx) * fy;
  t.w11 = fx * fy;
  return t;
}

}  // namespace

ScalarGrid::ScalarGrid(int width, int height, float fill, bool valid)
    : width_(width), height_(height) {
  check_dims(width, height, 1);
  values_.assign(static_cast<std::size_t>(width) * height, fill);
  valid_.assign(values_.size(), valid ? 1 : 0);
}

long long ScalarGrid::valid_count() const {
  long long n = 0;
  for (std::uint8_t v : valid_) n += v != 0;
  return n;
}

SampleResult ScalarGrid::sample_bilinear(double x, double y) const {
  BilinearTaps t = make_taps(x, y, width_, height_);
  if (!t.inside) return {};
  double acc = 0.0;
  const int xs[4] = {t.x0, t.x1, t.x0, t.x1};
  const int ys[4] = {t.y0, t.y0, t.y1, t.y1};
  const double ws[4] = {t.w00, t.w10, t.w01, t.w11};
  for (int i = 0; i < 4; ++i) {
    if (ws[i] == 0.0) continue;
    if (!valid_at(xs[i], ys[i])) return {};
    acc += ws[i] * at(xs[i], ys[i]);
  }
  return {acc, true};
}

VectorGrid::VectorGrid(int width, int height, int channels, float fill, bool valid)
    : width_(width), height_(height), channels_(channels) {
  check_dims(width, height, channels);
  values_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  valid_.assign(static_cast<std::size_t>(width) * height, valid ? 1 : 0);
}

long long VectorGrid::valid_count() const {
  long long n = 0;
  for (std::uint8_t v : valid_) n += v != 0;
  return n;
}

bool VectorGrid::sample_bilinear(double x, double y, double* out) const {
  BilinearTaps t = make_taps(x, y, width_, height_);
  if (!t.inside) return false;
  const int xs[4] = {t.x0, t.x1, t.x0, t.x1};
  const int ys[4] = {t.y0, t.y0, t.y1, t.y1};
  const double ws[4] = {t.w00, t.w10, t.w01, t.w11};
  for (int i = 0; i < 4; ++i) {
    if (ws[i] != 0.0 && !valid_at(xs[i], ys[i])) return false;
  }
  for (int c = 0; c < channels_; ++c) out[c] = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (ws[i] == 0.0) continue;
    std::size_t base = idx(xs[i], ys[i]) * channels_;
    for (int c = 0; c < channels_; ++c) out[c] += ws[i] * values_[base + c];
  }
  return true;
}

SampleResult bilinear_sample(const ScalarGrid& g, double x, double y) {
  return g.sample_bilinear(x, y);
}

bool bilinear_sample(const VectorGrid& g, double x, double y, double* out) {
  return g.sample_bilinear(x, y, out);
}

}  // namespace tcdp
