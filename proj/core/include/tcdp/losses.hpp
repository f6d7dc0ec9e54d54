#pragma once

#include <span>
#include <string>

#include "tcdp/align.hpp"
#include "tcdp/grid.hpp"
#include "tcdp/numeric.hpp"

namespace tcdp {

struct LossConfig {
  // Weights of the per-frame objective.
  double lambda_d = 1.0;
  double lambda_n = 0.1;
  double lambda_s = 0.05;
  // Weights of the cross-frame consistency terms.
  double lambda_temp_d = 1.0;
  double lambda_temp_n = 0.1;
  // Depth gradient term weight and pyramid depth.
  double omega_grad = 0.5;
  int grad_scales = 4;
  // Normal regularizer weights (gradient, Laplacian) and edge emphasis.
  double alpha = 0.5;
  double beta = 0.5;
  double eta = 1.0;
  // Forward-backward cycle tolerance in pixels.
  double tau_c = 1.0;
  // Depth edge masking: threshold on Sobel magnitude / 8, then square dilation.
  double edge_threshold = 0.05;
  int edge_dilate_radius = 2;

  void validate() const;  // throws std::invalid_argument on nonsense values

  // JSON (object of the field names above) and flat TOML documents are
  // accepted; missing keys keep their defaults. load() picks the parser by
  // extension (.toml vs anything else = JSON).
  static LossConfig load(const std::string& path);
  static LossConfig from_json_text(const std::string& text);
  static LossConfig from_toml_text(const std::string& text);
  std::string to_json_text() const;
  void save_json(const std::string& path) const;
};

struct LossBreakdown {
  double depth = 0.0;        // masked RMS of the aligned residual
  double depth_grad = 0.0;   // multi-scale gradient L1 of the residual
  double normal_base = 0.0;  // L1 + cosine deficit
  double normal_grad = 0.0;  // edge-weighted gradient L1
  double normal_lap = 0.0;   // edge-weighted multi-scale Laplacian L1
  double seg = 0.0;          // clamped binary cross-entropy
  double temp_depth = 0.0;
  double temp_normal = 0.0;
  double total = 0.0;

  long long depth_pixels = 0;
  long long normal_pixels = 0;
  long long normal_grad_pixels = 0;
  long long normal_lap_pixels = 0;
  long long seg_pixels = 0;
  long long temp_depth_pixels = 0;
  long long temp_normal_pixels = 0;

  bool degenerate_alignment = false;
  bool negative_scale = false;
  bool degenerate_gt_depth = false;
  bool empty_temporal_mask = false;

  // total = lambda_d * (depth + omega_grad * depth_grad)
  //       + lambda_n * (normal_base + alpha * normal_grad + beta * normal_lap)
  //       + lambda_s * seg
  //       + lambda_temp_d * temp_depth + lambda_temp_n * temp_normal
  double recombine(const LossConfig& cfg) const;
};

// Supervision gate: pixels whose soft mask value is >= 0.5 participate with
// their soft value as weight, everything else drops to weight zero.
ScalarGrid supervision_weights(const ScalarGrid& soft_mask);

struct DepthLossParts {
  double rms = 0.0;
  double grad = 0.0;
  long long pixels = 0;       // pixels entering the RMS term
  long long grad_pixels = 0;  // finest-level pixels entering the gradient term
  AlignmentParams alignment;
};

// Scale/shift-invariant depth term: fits (s, t) by weighted least squares,
// then combines the masked RMS of (s * pred + t - gt) with a multi-scale
// masked mean of |d/dx| + |d/dy| Sobel responses of the residual, averaged
// over grad_scales pyramid levels (2x average pooling, levels smaller than
// 3x3 are skipped). gt is expected min-max normalized. Throws when no pixel
// carries weight.
DepthLossParts depth_loss(const ScalarGrid& pred, const ScalarGrid& gt,
                          const ScalarGrid& weights, const LossConfig& cfg);

// Weighted mean over valid pixels of |pred - gt|_1 + (1 - <pred, gt>).
// Inputs are unit normals. Returns 0 with pixels == 0 on an empty mask.
MeanResult normal_base_loss(const VectorGrid& pred_n, const VectorGrid& gt_n,
                            const ScalarGrid& weights);

// Edge-emphasis field 1 + eta * minmax(|grad N|), where |grad N| is the
// root-sum-square of all Sobel channel responses of the ground-truth normals
// and minmax rescales over the pixels where that stencil exists. Pixels
// without a stencil (borders, invalid neighbors) get weight 1. Constant
// normals give the all-ones field.
ScalarGrid edge_weight(const VectorGrid& gt_n, double eta);

struct NormalRegParts {
  double grad = 0.0;
  double lap = 0.0;
  long long grad_pixels = 0;
  long long lap_pixels = 0;  // finest level
};

// Edge-weighted first and second order consistency of the normals: the
// gradient term is the w_edge-weighted masked mean of the channelwise L1
// between Sobel stacks at full resolution; the Laplacian term averages the
// analogous 5-point Laplacian difference over grad_scales pyramid levels
// (normals, edge weights and supervision weights are all 2x average-pooled
// per level).
NormalRegParts normal_reg_losses(const VectorGrid& pred_n, const VectorGrid& gt_n,
                                 const ScalarGrid& w_edge, const ScalarGrid& weights,
                                 const LossConfig& cfg);

// Binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7], averaged
// over pixels valid in both grids.
MeanResult seg_bce_loss(const ScalarGrid& pred_s, const ScalarGrid& gt_s);

// Backward warping: out(p) = bilinear(g, p + flow(p)). Pixels with invalid
// flow, out-of-bounds targets, or any invalid sample neighbor are invalid.
ScalarGrid warp(const ScalarGrid& g, const VectorGrid& flow);
VectorGrid warp(const VectorGrid& g, const VectorGrid& flow);
// Warp for unit-vector fields: renormalizes the blended vectors (degenerate
// blends of norm < 1e-6 become invalid).
VectorGrid warp_normalized(const VectorGrid& normals, const VectorGrid& flow);

// Forward-backward consistency gate: 1 where the round trip
// fwd(p) + bwd(p + fwd(p)) has length <= tau_c, 0 elsewhere (including
// pixels whose round trip cannot be evaluated). Fully-valid 0/1 grid.
ScalarGrid cycle_mask(const VectorGrid& fwd, const VectorGrid& bwd, double tau_c);

// Non-edge gate from a depth map: Sobel magnitude / 8 above edge_threshold
// marks an edge, edges are dilated by a square of edge_dilate_radius, and the
// result is the complement. Fully-valid 0/1 grid.
ScalarGrid depth_edge_mask(const ScalarGrid& depth, const LossConfig& cfg);

struct TemporalLossResult {
  double value = 0.0;
  long long pixels = 0;
  bool empty_mask = false;  // a directional mean had no pixels and was taken as 0
};

// Bidirectional masked L1 between each frame's depth and the other frame's
// depth warped across: direction one compares dk against warp(dk1, fwd) under
// cycle_mask(fwd, bwd) and the non-edge mask of dk, direction two mirrors it.
// The value is the sum of the two directional means. Precomputed non-edge
// gates may be passed to avoid recomputation; by default they are derived
// from dk and dk1.
TemporalLossResult temporal_depth_loss(const ScalarGrid& dk, const ScalarGrid& dk1,
                                       const VectorGrid& fwd, const VectorGrid& bwd,
                                       const LossConfig& cfg,
                                       const ScalarGrid* edge_mask_k = nullptr,
                                       const ScalarGrid* edge_mask_k1 = nullptr);

// Bidirectional cosine deficit between each frame's normals and the other
// frame's normals warped across (renormalized after interpolation). Optional
// non-edge gates (from the corresponding frame's predicted depth) are applied
// when provided.
TemporalLossResult temporal_normal_loss(const VectorGrid& nk, const VectorGrid& nk1,
                                        const VectorGrid& fwd, const VectorGrid& bwd,
                                        const LossConfig& cfg,
                                        const ScalarGrid* edge_mask_k = nullptr,
                                        const ScalarGrid* edge_mask_k1 = nullptr);

struct FramePrediction {
  ScalarGrid depth;   // relative depth, aligned to the GT inside the loss
  VectorGrid normal;  // unit camera-space normals
  ScalarGrid seg;     // soft foreground probability
};

struct FrameGroundTruth {
  ScalarGrid depth;   // raw depth; normalized internally
  VectorGrid normal;  // unit camera-space normals
  ScalarGrid mask;    // soft foreground mask, also the supervision gate
};

// Single-frame objective. The ground-truth mask gates depth and normal
// supervision; segmentation is supervised everywhere both grids are valid.
LossBreakdown stage1_loss(const FramePrediction& pred, const FrameGroundTruth& gt,
                          const LossConfig& cfg);

// Sequence objective: the mean stage-1 breakdown over frames plus the mean
// bidirectional temporal terms over adjacent pairs, where flows[k] /
// flows_bwd[k] connect frames k and k+1. Temporal edge gates come from the
// predicted depths.
LossBreakdown stage2_loss(std::span<const FramePrediction> preds,
                          std::span<const FrameGroundTruth> gts,
                          std::span<const VectorGrid> flows_fwd,
                          std::span<const VectorGrid> flows_bwd, const LossConfig& cfg);

}  // namespace tcdp
