#pragma once

#include <span>
#include <vector>

#include "tcdp/align.hpp"
#include "tcdp/grid.hpp"
#include "tcdp/numeric.hpp"

namespace tcdp {

// Metric masks are crisp: a pixel participates when it is valid in every
// input and the mask grid holds a valid value >= 0.5. Reductions are
// fixed-order compensated sums; counts are exact pixel counts.

struct DepthMetrics {
  double rmse = 0.0;
  double absrel = 0.0;
  long long pixel_count = 0;       // pixels entering the RMSE
  long long absrel_excluded = 0;   // masked pixels dropped from AbsRel (gt <= 0)
  AlignmentParams alignment;       // identity unless aligned evaluation was requested
};

// When aligned is set, a scale/shift fit against gt (using the mask pixels)
// is applied to pred before the residuals are formed.
DepthMetrics depth_metrics(const ScalarGrid& pred, const ScalarGrid& gt,
                           const ScalarGrid& mask, bool aligned);

struct NormalMetrics {
  double mean_deg = 0.0;
  double median_deg = 0.0;  // exact selection; even counts take the lower middle
  std::vector<double> thresholds_deg;
  std::vector<double> acc;  // fraction of pixels with angle < threshold
  long long pixel_count = 0;
};

inline constexpr double kDefaultAccThresholds[3] = {11.25, 22.5, 30.0};

NormalMetrics normal_metrics(const VectorGrid& pred_n, const VectorGrid& gt_n,
                             const ScalarGrid& mask,
                             std::span<const double> thresholds_deg = kDefaultAccThresholds);

// Cross-frame metrics between adjacent frames k and k+1 under the forward
// flow (k to k+1). Pixels participate when masked, flow-valid, and the
// bilinear warp sample is valid; warped normals are renormalized.
//
//   opw      mean |pred_k - warp(pred_k1)|
//   tc_rmse  sqrt(mean (pred_k - warp(pred_k1))^2)
//   opw_normal  mean channelwise L1 between pred_k and the warped normals
//   tc_mean  mean angle(pred_k, warp(pred_k1)) in degrees
//   tc_abs   mean |angle(pred_k, warp(pred_k1)) - angle(gt_k, warp(gt_k1))|
MeanResult opw(const ScalarGrid& pred_k, const ScalarGrid& pred_k1, const VectorGrid& fwd,
               const ScalarGrid& mask);
MeanResult tc_rmse(const ScalarGrid& pred_k, const ScalarGrid& pred_k1, const VectorGrid& fwd,
                   const ScalarGrid& mask);
MeanResult opw_normal(const VectorGrid& pred_k, const VectorGrid& pred_k1,
                      const VectorGrid& fwd, const ScalarGrid& mask);
MeanResult tc_mean(const VectorGrid& pred_k, const VectorGrid& pred_k1, const VectorGrid& fwd,
                   const ScalarGrid& mask);
MeanResult tc_abs(const VectorGrid& pred_k, const VectorGrid& pred_k1, const VectorGrid& gt_k,
                  const VectorGrid& gt_k1, const VectorGrid& fwd, const ScalarGrid& mask);

struct ImageRecord {
  long long index = 0;
  DepthMetrics depth;
  NormalMetrics normal;
};

struct PairRecord {
  long long index = 0;
  double opw_depth = 0.0;
  double tc_rmse = 0.0;
  double opw_normal = 0.0;
  double tc_mean_deg = 0.0;
  double tc_abs_deg = 0.0;
  long long depth_pixels = 0;
  long long normal_pixels = 0;
};

struct DatasetSummary {
  long long image_count = 0;
  long long pair_count = 0;
  bool pixel_pooled = false;
  double depth_rmse = 0.0;
  double depth_absrel = 0.0;
  double normal_mean_deg = 0.0;
  double normal_median_deg = 0.0;  // mean of per-image medians in both modes
  std::vector<double> thresholds_deg;
  std::vector<double> normal_acc;
  double opw_depth = 0.0;
  double tc_rmse = 0.0;
  double opw_normal = 0.0;
  double tc_mean_deg = 0.0;
  double tc_abs_deg = 0.0;
  long long depth_pixel_count = 0;       // summed over image records
  long long normal_pixel_count = 0;
  long long pair_depth_pixel_count = 0;  // summed over pair records
  long long pair_normal_pixel_count = 0;
};

// Dataset aggregation. Default: unweighted mean over records. pixel_pooled:
// means weighted by pixel counts and RMS quantities pooled through their
// squared sums (the median column stays the mean of per-image medians, since
// a pooled median is not recoverable from per-image summaries). Records are
// reduced in ascending index order regardless of input order. Throws when
// both spans are empty.
DatasetSummary aggregate(std::span<const ImageRecord> images, std::span<const PairRecord> pairs,
                         bool pixel_pooled = false);

}  // namespace tcdp
