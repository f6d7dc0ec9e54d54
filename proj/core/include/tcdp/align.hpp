#pragma once

#include "tcdp/grid.hpp"

namespace tcdp {

struct AlignmentParams {
  double scale = 1.0;
  double shift = 0.0;
  long long valid_count = 0;   // pixels with positive weight that entered the fit
  bool degenerate = false;     // fell back to scale=1, shift=weighted mean residual
  bool negative_scale = false; // fit succeeded but the optimal scale is < 0
};

struct NormalizedDepth {
  ScalarGrid grid;
  bool degenerate = false;  // max == min over the valid pixels; grid is all zeros
  double min_value = 0.0;
  double max_value = 0.0;
};

// Min-max normalization over the valid pixels: d = (d* - min) / (max - min).
// Invalid pixels stay invalid. Throws when no pixel is valid.
NormalizedDepth normalize_depth(const ScalarGrid& depth);

// Closed-form weighted least squares for scale s and shift t minimizing
// sum_i w_i (s * pred_i + t - gt_i)^2 over pixels valid in pred, gt and
// weights. Weight values are used as-is (zero removes a pixel). When fewer
// than two pixels carry weight or the weighted variance of pred vanishes,
// the fit is degenerate: s = 1, t = weighted mean of (gt - pred).
AlignmentParams fit_scale_shift(const ScalarGrid& pred, const ScalarGrid& gt,
                                const ScalarGrid& weights);

// Applies s * pred + t per valid pixel; validity is unchanged.
ScalarGrid apply_alignment(const ScalarGrid& pred, const AlignmentParams& params);

}  // namespace tcdp
