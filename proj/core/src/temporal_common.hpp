#pragma once

// Internal helpers shared by the temporal losses and the temporal metrics so
// both walk the exact same warp, gating, and pixel-set rules.

#include <algorithm>
#include <cmath>

#include "tcdp/grid.hpp"
#include "tcdp/numeric.hpp"

namespace tcdp::detail {

// Gates are 0/1-ish scalar grids; a null gate passes everything.
inline bool gate_on(const ScalarGrid* g, int x, int y) {
  return g == nullptr || (g->valid_at(x, y) && g->at(x, y) >= 0.5f);
}

struct DepthWarpStats {
  double sum_abs = 0.0;
  double sum_sq = 0.0;
  long long n = 0;
};

// Accumulates |target(p) - source(p + flow(p))| over pixels where the target
// is valid, the flow is valid, the bilinear sample is valid, and both gates
// pass.
inline DepthWarpStats depth_warp_stats(const ScalarGrid& target, const ScalarGrid& source,
                                       const VectorGrid& flow, const ScalarGrid* gate_a,
                                       const ScalarGrid* gate_b) {
  KahanSum abs_sum, sq_sum;
  DepthWarpStats out;
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (!target.valid_at(x, y) || !flow.valid_at(x, y)) continue;
      if (!gate_on(gate_a, x, y) || !gate_on(gate_b, x, y)) continue;
      SampleResult s = source.sample_bilinear(x + flow.at(x, y, 0), y + flow.at(x, y, 1));
      if (!s.valid) continue;
      double d = static_cast<double>(target.at(x, y)) - s.value;
      abs_sum.add(std::fabs(d));
      sq_sum.add(d * d);
      ++out.n;
    }
  }
  out.sum_abs = abs_sum.value();
  out.sum_sq = sq_sum.value();
  return out;
}

struct NormalWarpStats {
  double sum_deficit = 0.0;    // 1 - cos
  double sum_angle_deg = 0.0;  // arccos in degrees
  double sum_l1 = 0.0;         // |target - warped|_1 over channels
  long long n = 0;
};

// Same pixel-set rules as depth_warp_stats; the warped vector is renormalized
// before comparison and pixels whose blend degenerates (norm < 1e-6) drop out.
inline NormalWarpStats normal_warp_stats(const VectorGrid& target, const VectorGrid& source,
                                         const VectorGrid& flow, const ScalarGrid* gate_a,
                                         const ScalarGrid* gate_b) {
  KahanSum deficit_sum, angle_sum, l1_sum;
  NormalWarpStats out;
  double w[3];
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (!target.valid_at(x, y) || !flow.valid_at(x, y)) continue;
      if (!gate_on(gate_a, x, y) || !gate_on(gate_b, x, y)) continue;
      if (!source.sample_bilinear(x + flow.at(x, y, 0), y + flow.at(x, y, 1), w)) continue;
      double wn = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
      if (wn < 1e-6) continue;
      double t[3] = {target.at(x, y, 0), target.at(x, y, 1), target.at(x, y, 2)};
      double tn = std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]);
      if (tn < 1e-6) continue;
      double dot = (t[0] * w[0] + t[1] * w[1] + t[2] * w[2]) / (tn * wn);
      dot = std::clamp(dot, -1.0, 1.0);
      deficit_sum.add(1.0 - dot);
      angle_sum.add(deg_from_rad(angle_between3(t, w)));
      double l1 = 0.0;
      for (int c = 0; c < 3; ++c) l1 += std::fabs(t[c] / tn - w[c] / wn);
      l1_sum.add(l1);
      ++out.n;
    }
  }
  out.sum_deficit = deficit_sum.value();
  out.sum_angle_deg = angle_sum.value();
  out.sum_l1 = l1_sum.value();
  return out;
}

}  // namespace tcdp::detail
