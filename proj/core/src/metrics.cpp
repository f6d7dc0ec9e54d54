#include "tcdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "temporal_common.hpp"

namespace tcdp {

namespace {

bool masked_in(const ScalarGrid& mask, int x, int y) {
  return mask.valid_at(x, y) && mask.at(x, y) >= 0.5f;
}

void check_same_shape(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

DepthMetrics depth_metrics(const ScalarGrid& pred, const ScalarGrid& gt, const ScalarGrid& mask,
                           bool aligned) {
  check_same_shape(pred.width(), pred.height(), gt.width(), gt.height(), "depth_metrics");
  check_same_shape(pred.width(), pred.height(), mask.width(), mask.height(), "depth_metrics");

  DepthMetrics out;
  const ScalarGrid* eval = &pred;
  ScalarGrid aligned_pred;
  if (aligned) {
    // The fit weights are the crisp metric mask.
    ScalarGrid w(mask.width(), mask.height(), 0.0f, true);
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        if (masked_in(mask, x, y)) w.at(x, y) = 1.0f;
      }
    }
    out.alignment = fit_scale_shift(pred, gt, w);
    aligned_pred = apply_alignment(pred, out.alignment);
    eval = &aligned_pred;
  }

  KahanSum sq_sum, rel_sum;
  long long n = 0, rel_n = 0, excluded = 0;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!eval->valid_at(x, y) || !gt.valid_at(x, y) || !masked_in(mask, x, y)) continue;
      double p = eval->at(x, y);
      double g = gt.at(x, y);
      double d = p - g;
      sq_sum.add(d * d);
      ++n;
      if (g > 0.0) {
        rel_sum.add(std::fabs(d) / g);
        ++rel_n;
      } else {
        ++excluded;
      }
    }
  }
  out.pixel_count = n;
  out.absrel_excluded = excluded;
  out.rmse = n > 0 ? std::sqrt(sq_sum.value() / n) : 0.0;
  out.absrel = rel_n > 0 ? rel_sum.value() / rel_n : 0.0;
  return out;
}

NormalMetrics normal_metrics(const VectorGrid& pred_n, const VectorGrid& gt_n,
                             const ScalarGrid& mask, std::span<const double> thresholds_deg) {
  check_same_shape(pred_n.width(), pred_n.height(), gt_n.width(), gt_n.height(), "normal_metrics");
  check_same_shape(pred_n.width(), pred_n.height(), mask.width(), mask.height(), "normal_metrics");
  if (pred_n.channels() != 3 || gt_n.channels() != 3) {
    throw std::invalid_argument("normal_metrics: expect 3-channel grids");
  }

  NormalMetrics out;
  out.thresholds_deg.assign(thresholds_deg.begin(), thresholds_deg.end());
  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(pred_n.width()) * pred_n.height());
  KahanSum angle_sum;
  for (int y = 0; y < pred_n.height(); ++y) {
    for (int x = 0; x < pred_n.width(); ++x) {
      if (!pred_n.valid_at(x, y) || !gt_n.valid_at(x, y) || !masked_in(mask, x, y)) continue;
      double p3[3], g3[3];
      for (int c = 0; c < 3; ++c) {
        p3[c] = pred_n.at(x, y, c);
        g3[c] = gt_n.at(x, y, c);
      }
      double rad = angle_between3(p3, g3);
      if (rad < 0.0) continue;  // degenerate vector, not a measurable pixel
      double angle = deg_from_rad(rad);
      angles.push_back(angle);
      angle_sum.add(angle);
    }
  }

  out.pixel_count = static_cast<long long>(angles.size());
  out.acc.assign(out.thresholds_deg.size(), 0.0);
  if (angles.empty()) return out;

  out.mean_deg = angle_sum.value() / static_cast<double>(angles.size());
  std::size_t mid = (angles.size() - 1) / 2;  // lower middle on even counts
  std::nth_element(angles.begin(), angles.begin() + mid, angles.end());
  out.median_deg = angles[mid];
  for (std::size_t t = 0; t < out.thresholds_deg.size(); ++t) {
    long long hits = 0;
    for (double a : angles) hits += a < out.thresholds_deg[t];
    out.acc[t] = static_cast<double>(hits) / static_cast<double>(angles.size());
  }
  return out;
}

MeanResult opw(const ScalarGrid& pred_k, const ScalarGrid& pred_k1, const VectorGrid& fwd,
               const ScalarGrid& mask) {
  detail::DepthWarpStats s = detail::depth_warp_stats(pred_k, pred_k1, fwd, &mask, nullptr);
  return {s.n > 0 ? s.sum_abs / s.n : 0.0, s.n};
}

MeanResult tc_rmse(const ScalarGrid& pred_k, const ScalarGrid& pred_k1, const VectorGrid& fwd,
                   const ScalarGrid& mask) {
  detail::DepthWarpStats s = detail::depth_warp_stats(pred_k, pred_k1, fwd, &mask, nullptr);
  return {s.n > 0 ? std::sqrt(s.sum_sq / s.n) : 0.0, s.n};
}

MeanResult opw_normal(const VectorGrid& pred_k, const VectorGrid& pred_k1, const VectorGrid& fwd,
                      const ScalarGrid& mask) {
  detail::NormalWarpStats s = detail::normal_warp_stats(pred_k, pred_k1, fwd, &mask, nullptr);
  return {s.n > 0 ? s.sum_l1 / s.n : 0.0, s.n};
}

MeanResult tc_mean(const VectorGrid& pred_k, const VectorGrid& pred_k1, const VectorGrid& fwd,
                   const ScalarGrid& mask) {
  detail::NormalWarpStats s = detail::normal_warp_stats(pred_k, pred_k1, fwd, &mask, nullptr);
  return {s.n > 0 ? s.sum_angle_deg / s.n : 0.0, s.n};
}

MeanResult tc_abs(const VectorGrid& pred_k, const VectorGrid& pred_k1, const VectorGrid& gt_k,
                  const VectorGrid& gt_k1, const VectorGrid& fwd, const ScalarGrid& mask) {
  check_same_shape(pred_k.width(), pred_k.height(), gt_k.width(), gt_k.height(), "tc_abs");
  KahanSum sum;
  long long n = 0;
  double wp[3], wg[3];
  for (int y = 0; y < pred_k.height(); ++y) {
    for (int x = 0; x < pred_k.width(); ++x) {
      if (!pred_k.valid_at(x, y) || !gt_k.valid_at(x, y) || !fwd.valid_at(x, y)) continue;
      if (!detail::gate_on(&mask, x, y)) continue;
      double sx = x + fwd.at(x, y, 0), sy = y + fwd.at(x, y, 1);
      if (!pred_k1.sample_bilinear(sx, sy, wp)) continue;
      if (!gt_k1.sample_bilinear(sx, sy, wg)) continue;
      auto angle_to = [&](const VectorGrid& ref, const double* v) {
        double r3[3] = {ref.at(x, y, 0), ref.at(x, y, 1), ref.at(x, y, 2)};
        double rad = angle_between3(r3, v);
        return rad < 0.0 ? -1.0 : deg_from_rad(rad);
      };
      double ap = angle_to(pred_k, wp);
      double ag = angle_to(gt_k, wg);
      if (ap < 0.0 || ag < 0.0) continue;
      sum.add(std::fabs(ap - ag));
      ++n;
    }
  }
  return {n > 0 ? sum.value() / n : 0.0, n};
}

DatasetSummary aggregate(std::span<const ImageRecord> images, std::span<const PairRecord> pairs,
                         bool pixel_pooled) {
  if (images.empty() && pairs.empty()) throw std::invalid_argument("aggregate: no records");

  // Fixed reduction order: ascending record index, independent of input order.
  std::vector<const ImageRecord*> img(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) img[i] = &images[i];
  std::sort(img.begin(), img.end(),
            [](const ImageRecord* a, const ImageRecord* b) { return a->index < b->index; });
  std::vector<const PairRecord*> pr(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) pr[i] = &pairs[i];
  std::sort(pr.begin(), pr.end(),
            [](const PairRecord* a, const PairRecord* b) { return a->index < b->index; });

  DatasetSummary out;
  out.image_count = static_cast<long long>(images.size());
  out.pair_count = static_cast<long long>(pairs.size());
  out.pixel_pooled = pixel_pooled;

  if (!img.empty()) {
    out.thresholds_deg = img.front()->normal.thresholds_deg;
    for (const ImageRecord* r : img) {
      if (r->normal.thresholds_deg != out.thresholds_deg) {
        throw std::invalid_argument("aggregate: inconsistent accuracy thresholds across records");
      }
    }
    std::size_t T = out.thresholds_deg.size();
    KahanSum rmse_s, absrel_s, mean_s, median_s;
    std::vector<KahanSum> acc_s(T);
    KahanSum wd_s, wn_s;  // pooled weights
    for (const ImageRecord* r : img) {
      double wd = pixel_pooled ? static_cast<double>(r->depth.pixel_count) : 1.0;
      double wn = pixel_pooled ? static_cast<double>(r->normal.pixel_count) : 1.0;
      rmse_s.add(wd * (pixel_pooled ? r->depth.rmse * r->depth.rmse : r->depth.rmse));
      absrel_s.add(wd * r->depth.absrel);
      mean_s.add(wn * r->normal.mean_deg);
      median_s.add(wn * r->normal.median_deg);
      for (std::size_t t = 0; t < T; ++t) acc_s[t].add(wn * r->normal.acc[t]);
      wd_s.add(wd);
      wn_s.add(wn);
      out.depth_pixel_count += r->depth.pixel_count;
      out.normal_pixel_count += r->normal.pixel_count;
    }
    double wd = wd_s.value(), wn = wn_s.value();
    if (wd > 0.0) {
      out.depth_rmse = pixel_pooled ? std::sqrt(rmse_s.value() / wd) : rmse_s.value() / wd;
      out.depth_absrel = absrel_s.value() / wd;
    }
    if (wn > 0.0) {
      out.normal_mean_deg = mean_s.value() / wn;
      out.normal_median_deg = median_s.value() / wn;
      out.normal_acc.resize(T);
      for (std::size_t t = 0; t < T; ++t) out.normal_acc[t] = acc_s[t].value() / wn;
    } else {
      out.normal_acc.assign(T, 0.0);
    }
  }

  if (!pr.empty()) {
    KahanSum opw_s, tcr_s, opwn_s, tcm_s, tca_s, wd_s, wn_s;
    for (const PairRecord* r : pr) {
      double wd = pixel_pooled ? static_cast<double>(r->depth_pixels) : 1.0;
      double wn = pixel_pooled ? static_cast<double>(r->normal_pixels) : 1.0;
      opw_s.add(wd * r->opw_depth);
      tcr_s.add(wd * (pixel_pooled ? r->tc_rmse * r->tc_rmse : r->tc_rmse));
      opwn_s.add(wn * r->opw_normal);
      tcm_s.add(wn * r->tc_mean_deg);
      tca_s.add(wn * r->tc_abs_deg);
      wd_s.add(wd);
      wn_s.add(wn);
      out.pair_depth_pixel_count += r->depth_pixels;
      out.pair_normal_pixel_count += r->normal_pixels;
    }
    double wd = wd_s.value(), wn = wn_s.value();
    if (wd > 0.0) {
      out.opw_depth = opw_s.value() / wd;
      out.tc_rmse = pixel_pooled ? std::sqrt(tcr_s.value() / wd) : tcr_s.value() / wd;
    }
    if (wn > 0.0) {
      out.opw_normal = opwn_s.value() / wn;
      out.tc_mean_deg = tcm_s.value() / wn;
      out.tc_abs_deg = tca_s.value() / wn;
    }
  }
  return out;
}

}  // namespace tcdp
