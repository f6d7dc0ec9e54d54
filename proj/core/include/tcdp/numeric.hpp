#pragma once

#include <cmath>
#include <cstdint>

namespace tcdp {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_from_rad(double r) { return r * (180.0 / kPi); }
inline double rad_from_deg(double d) { return d * (kPi / 180.0); }

// Angle between two 3-vectors in radians, via atan2(|a x b|, a.b): scale
// invariant, stable near 0 and pi, and exactly zero for bitwise-identical
// inputs (the cross terms cancel exactly). Returns -1 when either vector is
// degenerate (norm < 1e-6).
inline double angle_between3(const double* a, const double* b) {
  double an = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  double bn = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  if (an < 1e-6 || bn < 1e-6) return -1.0;
  double cx = a[1] * b[2] - a[2] * b[1];
  double cy = a[2] * b[0] - a[0] * b[2];
  double cz = a[0] * b[1] - a[1] * b[0];
  double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::atan2(cross, dot);
}

// Compensated (Kahan) accumulator. All reductions in this library walk their
// inputs in a fixed order and accumulate through one of these, so results are
// reproducible and insensitive to how the inputs were batched.
class KahanSum {
 public:
  void add(double x) {
    double y = x - carry_;
    double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

// A masked reduction result: the reduced value plus how many pixels fed it.
struct MeanResult {
  double value = 0.0;
  long long pixels = 0;
};

// Deterministic uniform doubles from a 64-bit state. std::uniform_real_distribution
// is implementation-defined, so sequence generation maps raw engine output itself.
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace tcdp
