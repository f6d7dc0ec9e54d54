#include "tcdp/align.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tcdp/numeric.hpp"

namespace tcdp {

NormalizedDepth normalize_depth(const ScalarGrid& depth) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  long long n = 0;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid_at(x, y)) continue;
      double v = depth.at(x, y);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("normalize_depth: no valid pixels");

  NormalizedDepth out;
  out.min_value = lo;
  out.max_value = hi;
  out.degenerate = !(hi > lo);
  out.grid = ScalarGrid(depth.width(), depth.height());
  double span = hi - lo;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid_at(x, y)) {
        out.grid.set(x, y, 0.0f, false);
      } else if (out.degenerate) {
        out.grid.set(x, y, 0.0f, true);
      } else {
        out.grid.set(x, y, static_cast<float>((depth.at(x, y) - lo) / span), true);
      }
    }
  }
  return out;
}

AlignmentParams fit_scale_shift(const ScalarGrid& pred, const ScalarGrid& gt,
                                const ScalarGrid& weights) {
  if (pred.width() != gt.width() || pred.height() != gt.height() ||
      pred.width() != weights.width() || pred.height() != weights.height()) {
    throw std::invalid_argument("fit_scale_shift: shape mismatch");
  }

  KahanSum sw, swp, swg, swpp, swpg;
  long long n = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!pred.valid_at(x, y) || !gt.valid_at(x, y) || !weights.valid_at(x, y)) continue;
      double w = weights.at(x, y);
      if (w <= 0.0) continue;
      double p = pred.at(x, y);
      double g = gt.at(x, y);
      sw.add(w);
      swp.add(w * p);
      swg.add(w * g);
      swpp.add(w * p * p);
      swpg.add(w * p * g);
      ++n;
    }
  }

  AlignmentParams out;
  out.valid_count = n;
  double W = sw.value();
  if (n == 0 || W <= 0.0) {
    out.degenerate = true;
    return out;
  }

  double mean_p = swp.value() / W;
  double mean_g = swg.value() / W;
  // det = W * sum(w p^2) - sum(w p)^2 = W^2 * weighted variance of pred.
  double var_p = std::max(0.0, swpp.value() / W - mean_p * mean_p);
  bool solvable = n >= 2 && var_p > 1e-12 * (1.0 + mean_p * mean_p);
  if (!solvable) {
    out.degenerate = true;
    out.scale = 1.0;
    out.shift = mean_g - mean_p;
    return out;
  }

  double cov_pg = swpg.value() / W - mean_p * mean_g;
  out.scale = cov_pg / var_p;
  out.shift = mean_g - out.scale * mean_p;
  out.negative_scale = out.scale < 0.0;
  return out;
}

ScalarGrid apply_alignment(const ScalarGrid& pred, const AlignmentParams& params) {
  ScalarGrid out(pred.width(), pred.height());
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!pred.valid_at(x, y)) {
        out.set(x, y, 0.0f, false);
      } else {
        out.set(x, y, static_cast<float>(params.scale * pred.at(x, y) + params.shift), true);
      }
    }
  }
  return out;
}

}  // namespace tcdp
