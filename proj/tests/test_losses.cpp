#include <cmath>
#include <vector>

#include "doctest.h"
#include "tcdp/losses.hpp"
#include "tcdp/stencil.hpp"
#include "test_util.hpp"

using namespace tcdp;
using testutil::Rng;

namespace {

ScalarGrid ones(int w, int h) { return ScalarGrid(w, h, 1.0f, true); }

VectorGrid constant_normal(int w, int h, float nx, float ny, float nz) {
  VectorGrid g(w, h, 3, 0.0f, true);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      g.at(x, y, 0) = nx;
      g.at(x, y, 1) = ny;
      g.at(x, y, 2) = nz;
    }
  }
  return g;
}

VectorGrid zero_flow(int w, int h) { return VectorGrid(w, h, 2, 0.0f, true); }

// Reference for the multi-scale gradient term of depth_loss, built from the
// documented recipe: Sobel of the masked residual, weighted mean of
// |gx| + |gy|, 2x pooled per level, levels under 3x3 skipped.
double depth_grad_reference(const ScalarGrid& aligned, const ScalarGrid& gt,
                            const ScalarGrid& weights, int scales, int* levels_used) {
  ScalarGrid a = aligned, b = gt, w = weights;
  double sum = 0.0;
  int levels = 0;
  for (int l = 0; l < scales; ++l) {
    if (l > 0) {
      a = downsample2(a);
      b = downsample2(b);
      w = downsample2(w);
    }
    if (a.width() < 3 || a.height() < 3) break;
    ScalarGrid diff(a.width(), a.height(), 0.0f, false);
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (a.valid_at(x, y) && b.valid_at(x, y)) diff.set(x, y, a.at(x, y) - b.at(x, y), true);
      }
    }
    VectorGrid grad = sobel_gradients(diff);
    double num = 0.0, den = 0.0;
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (!grad.valid_at(x, y) || !w.valid_at(x, y)) continue;
        double wv = w.at(x, y);
        if (wv <= 0.0) continue;
        num += wv * (std::fabs(grad.at(x, y, 0)) + std::fabs(grad.at(x, y, 1)));
        den += wv;
      }
    }
    sum += den > 0.0 ? num / den : 0.0;
    ++levels;
  }
  if (levels_used) *levels_used = levels;
  return levels > 0 ? sum / levels : 0.0;
}

}  // namespace

TEST_CASE("supervision_weights gates at one half") {
  ScalarGrid m(4, 1, 0.0f, true);
  m.at(0, 0) = 0.49f;
  m.at(1, 0) = 0.5f;
  m.at(2, 0) = 0.8f;
  m.set(3, 0, 0.9f, false);
  ScalarGrid w = supervision_weights(m);
  CHECK(w.valid_count() == 4);  // weight grids are fully valid
  CHECK(w.at(0, 0) == 0.0f);
  CHECK(w.at(1, 0) == 0.5f);
  CHECK(w.at(2, 0) == 0.8f);
  CHECK(w.at(3, 0) == 0.0f);
}

TEST_CASE("depth_loss is zero when prediction equals ground truth") {
  Rng rng(601);
  ScalarGrid gt = testutil::random_scalar(rng, 9, 9, 0.0, 1.0);
  LossConfig cfg;
  DepthLossParts p = depth_loss(gt, gt, ones(9, 9), cfg);
  CHECK(p.rms == 0.0);
  CHECK(p.grad == 0.0);
  CHECK(p.pixels == 81);
  CHECK(p.grad_pixels == 49);  // interior of 9x9
  CHECK(!p.alignment.degenerate);
}

TEST_CASE("depth_loss absorbs an affine transform of the prediction") {
  Rng rng(602);
  ScalarGrid gt = testutil::random_scalar(rng, 16, 16, 0.0, 1.0);
  ScalarGrid pred(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      pred.set(x, y, static_cast<float>(3.1 * gt.at(x, y) - 0.44), true);
    }
  }
  LossConfig cfg;
  DepthLossParts p = depth_loss(pred, gt, ones(16, 16), cfg);
  CHECK(p.rms <= 1e-6);
  CHECK(p.grad <= 1e-5);
  CHECK(p.alignment.scale == doctest::Approx(1.0 / 3.1).epsilon(1e-5));
}

TEST_CASE("depth_loss matches the documented recipe on random instances") {
  LossConfig cfg;
  struct Shape {
    int w, h, scales;
  };
  // 8x8 with 4 scales can only use the 8 and 4 levels; 2x2 is below the
  // stencil and must be skipped.
  const Shape shapes[] = {{8, 8, 4}, {16, 16, 3}, {9, 7, 2}, {12, 5, 1}, {32, 8, 5}};
  const int expected_levels[] = {2, 3, 2, 1, 2};
  int si = 0;
  for (const Shape& s : shapes) {
    Rng rng(700 + si);
    ScalarGrid pred = testutil::random_scalar(rng, s.w, s.h, 0.0, 2.0, 0.1);
    ScalarGrid gt = testutil::random_scalar(rng, s.w, s.h, 0.0, 1.0, 0.1);
    ScalarGrid w(s.w, s.h, 0.0f, true);
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) w.at(x, y) = static_cast<float>(rng.uniform(0.0, 1.5));
    }
    cfg.grad_scales = s.scales;
    DepthLossParts p = depth_loss(pred, gt, w, cfg);

    // RMS oracle on the aligned prediction.
    ScalarGrid aligned = apply_alignment(pred, p.alignment);
    double num = 0.0, den = 0.0;
    long long n = 0;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        if (!aligned.valid_at(x, y) || !gt.valid_at(x, y) || w.at(x, y) <= 0.0f) continue;
        double r = static_cast<double>(aligned.at(x, y)) - gt.at(x, y);
        num += w.at(x, y) * r * r;
        den += w.at(x, y);
        ++n;
      }
    }
    CHECK(p.pixels == n);
    CHECK(p.rms == doctest::Approx(std::sqrt(num / den)).epsilon(1e-9));

    int levels = 0;
    double grad_ref = depth_grad_reference(aligned, gt, w, s.scales, &levels);
    CHECK(levels == expected_levels[si]);
    CHECK(p.grad == doctest::Approx(grad_ref).epsilon(1e-9));
    ++si;
  }
}

TEST_CASE("depth_loss throws on an empty mask or mismatched shapes") {
  LossConfig cfg;
  ScalarGrid g(4, 4, 1.0f, true);
  ScalarGrid zero_w(4, 4, 0.0f, true);
  CHECK_THROWS(depth_loss(g, g, zero_w, cfg));
  ScalarGrid other(5, 4, 1.0f, true);
  CHECK_THROWS(depth_loss(g, other, ones(4, 4), cfg));
}

TEST_CASE("normal_base_loss closed-form cases") {
  int w = 3, h = 3;
  SUBCASE("identical unit normals cost nothing") {
    Rng rng(611);
    VectorGrid n = testutil::random_unit_normals(rng, w, h);
    MeanResult m = normal_base_loss(n, n, ones(w, h));
    CHECK(m.pixels == 9);
    CHECK(std::fabs(m.value) <= 1e-12);
  }
  SUBCASE("orthogonal axes cost 3") {
    VectorGrid nx = constant_normal(w, h, 1, 0, 0);
    VectorGrid ny = constant_normal(w, h, 0, 1, 0);
    MeanResult m = normal_base_loss(nx, ny, ones(w, h));
    CHECK(m.value == 3.0);  // L1 = 2, cosine deficit = 1
  }
  SUBCASE("opposite normals cost 4") {
    VectorGrid nx = constant_normal(w, h, 1, 0, 0);
    VectorGrid mx = constant_normal(w, h, -1, 0, 0);
    MeanResult m = normal_base_loss(nx, mx, ones(w, h));
    CHECK(m.value == 4.0);  // L1 = 2, deficit = 2
  }
  SUBCASE("weights form a weighted mean") {
    VectorGrid p(2, 1, 3, 0.0f, true);
    VectorGrid g(2, 1, 3, 0.0f, true);
    // pixel 0: orthogonal (cost 3); pixel 1: identical (cost 0)
    p.at(0, 0, 0) = 1.0f;
    g.at(0, 0, 1) = 1.0f;
    p.at(1, 0, 2) = 1.0f;
    g.at(1, 0, 2) = 1.0f;
    ScalarGrid w2(2, 1, 0.0f, true);
    w2.at(0, 0) = 3.0f;
    w2.at(1, 0) = 1.0f;
    MeanResult m = normal_base_loss(p, g, w2);
    CHECK(m.value == doctest::Approx(3.0 * 3.0 / 4.0).epsilon(1e-12));
    CHECK(m.pixels == 2);
  }
  SUBCASE("empty mask yields zero with no pixels") {
    VectorGrid n = constant_normal(w, h, 0, 0, 1);
    ScalarGrid zero_w(w, h, 0.0f, true);
    MeanResult m = normal_base_loss(n, n, zero_w);
    CHECK(m.value == 0.0);
    CHECK(m.pixels == 0);
  }
  SUBCASE("near-zero vectors are skipped") {
    VectorGrid p = constant_normal(w, h, 0, 0, 1);
    VectorGrid g = constant_normal(w, h, 0, 0, 1);
    p.at(1, 1, 2) = 1e-8f;  // degenerate, not a unit vector
    MeanResult m = normal_base_loss(p, g, ones(w, h));
    CHECK(m.pixels == 8);
  }
}

TEST_CASE("edge_weight spans [1, 1 + eta] and defaults to 1 off-stencil") {
  SUBCASE("constant normals give the all-ones field") {
    VectorGrid n = constant_normal(6, 6, 0, 0, -1);
    ScalarGrid w = edge_weight(n, 2.0);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) CHECK(w.at(x, y) == 1.0f);
    }
  }
  SUBCASE("a crease maps to the peak value") {
    int W = 12, H = 8;
    VectorGrid n(W, H, 3, 0.0f, true);
    float inv = 1.0f / std::sqrt(2.0f);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (x < W / 2) {
          n.at(x, y, 2) = -1.0f;
        } else {
          n.at(x, y, 0) = inv;
          n.at(x, y, 2) = -inv;
        }
      }
    }
    double eta = 1.5;
    ScalarGrid w = edge_weight(n, eta);
    float peak = 0.0f;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) peak = std::max(peak, w.at(x, y));
    }
    CHECK(peak == doctest::Approx(1.0 + eta).epsilon(1e-6));
    // Far from the crease the Sobel response is zero, the minimum: weight 1.
    CHECK(w.at(1, 4) == 1.0f);
    // Borders carry no stencil and default to 1.
    CHECK(w.at(0, 0) == 1.0f);
    CHECK(w.at(W - 1, H - 1) == 1.0f);
  }
}

TEST_CASE("normal_reg_losses matches a naive recomputation") {
  Rng rng(622);
  int W = 16, H = 12;  // pyramid: 16x12, 8x6, 4x3 (all three levels usable)
  VectorGrid pred = testutil::random_unit_normals(rng, W, H, 0.05);
  VectorGrid gt = testutil::random_unit_normals(rng, W, H, 0.05);
  ScalarGrid sup(W, H, 0.0f, true);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) sup.at(x, y) = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  LossConfig cfg;
  cfg.grad_scales = 3;
  ScalarGrid we = edge_weight(gt, cfg.eta);
  NormalRegParts parts = normal_reg_losses(pred, gt, we, sup, cfg);

  auto level_mean = [](const VectorGrid& ps, const VectorGrid& gs, const ScalarGrid& ew,
                       const ScalarGrid& w, long long* count) {
    double num = 0.0, den = 0.0;
    long long n = 0;
    for (int y = 0; y < ps.height(); ++y) {
      for (int x = 0; x < ps.width(); ++x) {
        if (!ps.valid_at(x, y) || !gs.valid_at(x, y) || !ew.valid_at(x, y)) continue;
        if (!w.valid_at(x, y) || w.at(x, y) <= 0.0f) continue;
        double l1 = 0.0;
        for (int c = 0; c < ps.channels(); ++c) {
          l1 += std::fabs(static_cast<double>(ps.at(x, y, c)) - gs.at(x, y, c));
        }
        double wv = static_cast<double>(w.at(x, y)) * ew.at(x, y);
        num += wv * l1;
        den += wv;
        ++n;
      }
    }
    if (count) *count = n;
    return den > 0.0 ? num / den : 0.0;
  };

  long long grad_n = 0;
  double grad_ref = level_mean(sobel_gradients(pred), sobel_gradients(gt), we, sup, &grad_n);
  CHECK(parts.grad == doctest::Approx(grad_ref).epsilon(1e-9));
  CHECK(parts.grad_pixels == grad_n);

  VectorGrid p = pred, g = gt;
  ScalarGrid e = we, w = sup;
  double lap_sum = 0.0;
  int levels = 0;
  long long lap_n0 = 0;
  for (int l = 0; l < cfg.grad_scales; ++l) {
    if (l > 0) {
      p = downsample2(p);
      g = downsample2(g);
      e = downsample2(e);
      w = downsample2(w);
    }
    if (p.width() < 3 || p.height() < 3) break;
    long long n = 0;
    lap_sum += level_mean(laplacian(p), laplacian(g), e, w, &n);
    if (l == 0) lap_n0 = n;
    ++levels;
  }
  CHECK(levels == 3);
  CHECK(parts.lap == doctest::Approx(lap_sum / levels).epsilon(1e-9));
  CHECK(parts.lap_pixels == lap_n0);

  SUBCASE("identical normals cost nothing") {
    NormalRegParts zero = normal_reg_losses(gt, gt, we, sup, cfg);
    CHECK(zero.grad == 0.0);
    CHECK(zero.lap == 0.0);
  }
}

TEST_CASE("seg_bce_loss closed-form values") {
  SUBCASE("uniform half prediction costs ln 2 regardless of target") {
    ScalarGrid p(4, 4, 0.5f, true);
    Rng rng(633);
    ScalarGrid g = testutil::random_mask(rng, 4, 4, 0.5);
    MeanResult m = seg_bce_loss(p, g);
    CHECK(m.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(m.pixels == 16);
  }
  SUBCASE("confident wrong answers hit the clamp") {
    ScalarGrid p(2, 2, 0.0f, true);
    ScalarGrid g(2, 2, 1.0f, true);
    MeanResult m = seg_bce_loss(p, g);
    CHECK(m.value == doctest::Approx(-std::log(1e-7)).epsilon(1e-12));
    ScalarGrid p1(2, 2, 1.0f, true);
    ScalarGrid g0(2, 2, 0.0f, true);
    MeanResult m2 = seg_bce_loss(p1, g0);
    CHECK(m2.value == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
  }
  SUBCASE("confident right answers cost almost nothing") {
    ScalarGrid p(2, 2, 1.0f, true);
    ScalarGrid g(2, 2, 1.0f, true);
    MeanResult m = seg_bce_loss(p, g);
    CHECK(m.value <= 1.1e-7);
    CHECK(m.value > 0.0);
  }
  SUBCASE("no overlapping valid pixels") {
    ScalarGrid p(2, 2, 0.5f, false);
    ScalarGrid g(2, 2, 1.0f, true);
    MeanResult m = seg_bce_loss(p, g);
    CHECK(m.value == 0.0);
    CHECK(m.pixels == 0);
  }
  SUBCASE("shape mismatch throws") {
    ScalarGrid p(2, 2, 0.5f, true);
    ScalarGrid g(3, 2, 1.0f, true);
    CHECK_THROWS(seg_bce_loss(p, g));
  }
}

TEST_CASE("warp") {
  Rng rng(644);
  ScalarGrid img = testutil::random_scalar(rng, 8, 6, 0.0, 1.0, 0.1);

  SUBCASE("zero flow reproduces the image") {
    ScalarGrid out = warp(img, zero_flow(8, 6));
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 8; ++x) {
        CHECK(out.valid_at(x, y) == img.valid_at(x, y));
        if (img.valid_at(x, y)) CHECK(out.at(x, y) == img.at(x, y));
      }
    }
  }
  SUBCASE("integer shifts copy exactly and clip at the border") {
    VectorGrid flow(8, 6, 2, 0.0f, true);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 8; ++x) flow.at(x, y, 0) = 1.0f;
    }
    ScalarGrid out = warp(img, flow);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 7; ++x) {
        CHECK(out.valid_at(x, y) == img.valid_at(x + 1, y));
        if (img.valid_at(x + 1, y)) CHECK(out.at(x, y) == img.at(x + 1, y));
      }
      CHECK(!out.valid_at(7, y));  // target out of bounds
    }
  }
  SUBCASE("invalid flow pixels give invalid output") {
    VectorGrid flow = zero_flow(8, 6);
    flow.set_valid(3, 3, false);
    ScalarGrid out = warp(img, flow);
    CHECK(!out.valid_at(3, 3));
  }
  SUBCASE("fractional flow blends neighbors") {
    ScalarGrid two(2, 1);
    two.set(0, 0, 1.0f);
    two.set(1, 0, 3.0f);
    VectorGrid flow(2, 1, 2, 0.0f, true);
    flow.at(0, 0, 0) = 0.5f;
    ScalarGrid out = warp(two, flow);
    CHECK(out.at(0, 0) == 2.0f);
  }
  SUBCASE("flow shape mismatch throws") {
    CHECK_THROWS(warp(img, zero_flow(7, 6)));
    VectorGrid bad(8, 6, 3, 0.0f, true);
    CHECK_THROWS(warp(img, bad));
  }
}

TEST_CASE("warp_normalized renormalizes and drops degenerate blends") {
  VectorGrid n(2, 1, 3, 0.0f, true);
  n.at(0, 0, 0) = 1.0f;  // +x
  n.at(1, 0, 1) = 1.0f;  // +y
  VectorGrid flow(2, 1, 2, 0.0f, true);
  flow.at(0, 0, 0) = 0.5f;
  VectorGrid out = warp_normalized(n, flow);
  REQUIRE(out.valid_at(0, 0));
  float inv = 1.0f / std::sqrt(2.0f);
  CHECK(out.at(0, 0, 0) == doctest::Approx(inv).epsilon(1e-6));
  CHECK(out.at(0, 0, 1) == doctest::Approx(inv).epsilon(1e-6));
  CHECK(out.at(0, 0, 2) == 0.0f);

  // Opposite vectors cancel at the midpoint: the blend has no direction.
  VectorGrid opp(2, 1, 3, 0.0f, true);
  opp.at(0, 0, 0) = 1.0f;
  opp.at(1, 0, 0) = -1.0f;
  VectorGrid out2 = warp_normalized(opp, flow);
  CHECK(!out2.valid_at(0, 0));
  CHECK(out2.valid_at(1, 0));
}

TEST_CASE("cycle_mask accepts consistent round trips and rejects the rest") {
  int W = 10, H = 4;
  VectorGrid fwd(W, H, 2, 0.0f, true);
  VectorGrid bwd(W, H, 2, 0.0f, true);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      fwd.at(x, y, 0) = 2.25f;
      bwd.at(x, y, 0) = -2.25f;
    }
  }
  ScalarGrid m = cycle_mask(fwd, bwd, 1.0);
  CHECK(m.valid_count() == W * H);  // fully-valid 0/1 grid
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      bool in_bounds = x + 2.25 <= W - 1;
      CHECK(m.at(x, y) == (in_bounds ? 1.0f : 0.0f));
    }
  }

  SUBCASE("the tolerance boundary is inclusive") {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) bwd.at(x, y, 0) = -1.25f;  // residual is exactly 1
    }
    ScalarGrid pass = cycle_mask(fwd, bwd, 1.0);
    CHECK(pass.at(0, 0) == 1.0f);
    ScalarGrid fail = cycle_mask(fwd, bwd, 0.999);
    CHECK(fail.at(0, 0) == 0.0f);
  }
  SUBCASE("invalid forward flow is rejected") {
    fwd.set_valid(1, 1, false);
    ScalarGrid m2 = cycle_mask(fwd, bwd, 1.0);
    CHECK(m2.at(1, 1) == 0.0f);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS(cycle_mask(fwd, bwd, 0.0));
    VectorGrid other(W + 1, H, 2, 0.0f, true);
    CHECK_THROWS(cycle_mask(fwd, other, 1.0));
  }
}

TEST_CASE("depth_edge_mask zeroes a band around a step edge") {
  int W = 16, H = 8, c = 8;
  ScalarGrid depth(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) depth.set(x, y, x < c ? 1.0f : 2.0f);
  }
  LossConfig cfg;

  SUBCASE("radius 1 blanks four columns") {
    cfg.edge_dilate_radius = 1;
    ScalarGrid m = depth_edge_mask(depth, cfg);
    CHECK(m.valid_count() == W * H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        bool blanked = x >= c - 2 && x <= c + 1;
        CHECK(m.at(x, y) == (blanked ? 0.0f : 1.0f));
      }
    }
  }
  SUBCASE("radius 2 blanks six columns") {
    cfg.edge_dilate_radius = 2;
    ScalarGrid m = depth_edge_mask(depth, cfg);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        bool blanked = x >= c - 3 && x <= c + 2;
        CHECK(m.at(x, y) == (blanked ? 0.0f : 1.0f));
      }
    }
  }
  SUBCASE("a small step below the threshold is not an edge") {
    ScalarGrid flat(W, H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) flat.set(x, y, x < c ? 1.00f : 1.05f);
    }
    // Sobel magnitude / 8 = step / 2 = 0.025 < default threshold 0.05.
    ScalarGrid m = depth_edge_mask(flat, cfg);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) CHECK(m.at(x, y) == 1.0f);
    }
  }
}

TEST_CASE("temporal_depth_loss") {
  LossConfig cfg;
  int W = 16, H = 16;

  SUBCASE("a static scene with zero flow costs exactly zero") {
    Rng rng(655);
    ScalarGrid d = testutil::random_scalar(rng, W, H, 1.0, 1.2);
    TemporalLossResult r =
        temporal_depth_loss(d, d, zero_flow(W, H), zero_flow(W, H), cfg);
    CHECK(r.value == 0.0);
    CHECK(!r.empty_mask);
    CHECK(r.pixels > 0);
  }
  SUBCASE("a constant offset appears once per direction") {
    ScalarGrid a(W, H, 1.0f, true);
    ScalarGrid b(W, H, 1.2f, true);
    TemporalLossResult r =
        temporal_depth_loss(a, b, zero_flow(W, H), zero_flow(W, H), cfg);
    CHECK(r.value == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(r.pixels == 2 * W * H);
  }
  SUBCASE("edge bands are excluded from the mean") {
    ScalarGrid a(W, H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) a.set(x, y, x < 8 ? 1.0f : 2.0f);
    }
    ScalarGrid b(W, H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) b.set(x, y, a.at(x, y) + 0.3f);
    }
    TemporalLossResult r =
        temporal_depth_loss(a, b, zero_flow(W, H), zero_flow(W, H), cfg);
    // radius-2 dilation blanks columns 5..10: 10 columns remain per row
    CHECK(r.pixels == 2 * 10 * H);
    CHECK(r.value == doctest::Approx(0.6).epsilon(1e-6));
  }
  SUBCASE("precomputed edge masks match the internal path bitwise") {
    Rng rng(656);
    ScalarGrid a = testutil::random_scalar(rng, W, H, 1.0, 3.0);
    ScalarGrid b = testutil::random_scalar(rng, W, H, 1.0, 3.0);
    VectorGrid f = testutil::random_flow(rng, W, H, 1.5);
    VectorGrid g = testutil::random_flow(rng, W, H, 1.5);
    ScalarGrid ea = depth_edge_mask(a, cfg);
    ScalarGrid eb = depth_edge_mask(b, cfg);
    TemporalLossResult internal = temporal_depth_loss(a, b, f, g, cfg);
    TemporalLossResult external = temporal_depth_loss(a, b, f, g, cfg, &ea, &eb);
    CHECK(internal.value == external.value);
    CHECK(internal.pixels == external.pixels);
  }
  SUBCASE("an empty direction sets the flag and contributes zero") {
    ScalarGrid a(W, H, 1.0f, true);
    ScalarGrid b(W, H, 1.2f, true);
    ScalarGrid pass(W, H, 1.0f, true);
    ScalarGrid block(W, H, 0.0f, true);
    TemporalLossResult r = temporal_depth_loss(a, b, zero_flow(W, H), zero_flow(W, H),
                                               cfg, &pass, &block);
    CHECK(r.empty_mask);
    CHECK(r.pixels == W * H);
    CHECK(r.value == doctest::Approx(0.2).epsilon(1e-6));
  }
  SUBCASE("failing cycles exclude pixels") {
    ScalarGrid a(W, H, 1.0f, true);
    ScalarGrid b(W, H, 1.2f, true);
    // Forward claims +4 px, backward claims -1 px: round trip misses by 3.
    VectorGrid f(W, H, 2, 0.0f, true);
    VectorGrid g(W, H, 2, 0.0f, true);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        f.at(x, y, 0) = 4.0f;
        g.at(x, y, 0) = -1.0f;
      }
    }
    TemporalLossResult r = temporal_depth_loss(a, b, f, g, cfg);
    CHECK(r.pixels == 0);
    CHECK(r.empty_mask);
    CHECK(r.value == 0.0);
  }
}

TEST_CASE("temporal_normal_loss") {
  LossConfig cfg;
  int W = 12, H = 12;

  SUBCASE("identical frames with zero flow cost nearly nothing") {
    Rng rng(666);
    VectorGrid n = testutil::random_unit_normals(rng, W, H);
    TemporalLossResult r =
        temporal_normal_loss(n, n, zero_flow(W, H), zero_flow(W, H), cfg);
    CHECK(std::fabs(r.value) <= 1e-12);
    CHECK(r.pixels == 2 * W * H);
  }
  SUBCASE("orthogonal normal fields cost exactly two") {
    VectorGrid nx = constant_normal(W, H, 1, 0, 0);
    VectorGrid ny = constant_normal(W, H, 0, 1, 0);
    TemporalLossResult r =
        temporal_normal_loss(nx, ny, zero_flow(W, H), zero_flow(W, H), cfg);
    CHECK(r.value == 2.0);
  }
  SUBCASE("edge gates apply when provided") {
    VectorGrid nx = constant_normal(W, H, 1, 0, 0);
    VectorGrid ny = constant_normal(W, H, 0, 1, 0);
    ScalarGrid half(W, H, 0.0f, true);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W / 2; ++x) half.at(x, y) = 1.0f;
    }
    ScalarGrid pass(W, H, 1.0f, true);
    TemporalLossResult r = temporal_normal_loss(nx, ny, zero_flow(W, H), zero_flow(W, H),
                                                cfg, &half, &pass);
    CHECK(r.pixels == W * H / 2 + W * H);
    CHECK(r.value == 2.0);  // both directional means still equal 1
  }
}

TEST_CASE("loss config") {
  SUBCASE("defaults serialize the stated weights exactly") {
    LossConfig cfg;
    CHECK(cfg.lambda_d == 1.0);
    CHECK(cfg.lambda_n == 0.1);
    CHECK(cfg.lambda_s == 0.05);
    CHECK(cfg.lambda_temp_d == 1.0);
    CHECK(cfg.lambda_temp_n == 0.1);
    LossConfig round = LossConfig::from_json_text(cfg.to_json_text());
    CHECK(round.lambda_d == cfg.lambda_d);
    CHECK(round.lambda_n == cfg.lambda_n);
    CHECK(round.lambda_s == cfg.lambda_s);
    CHECK(round.lambda_temp_d == cfg.lambda_temp_d);
    CHECK(round.lambda_temp_n == cfg.lambda_temp_n);
    CHECK(round.omega_grad == cfg.omega_grad);
    CHECK(round.grad_scales == cfg.grad_scales);
    CHECK(round.alpha == cfg.alpha);
    CHECK(round.beta == cfg.beta);
    CHECK(round.eta == cfg.eta);
    CHECK(round.tau_c == cfg.tau_c);
    CHECK(round.edge_threshold == cfg.edge_threshold);
    CHECK(round.edge_dilate_radius == cfg.edge_dilate_radius);
  }
  SUBCASE("partial JSON keeps defaults for missing keys") {
    LossConfig cfg = LossConfig::from_json_text(R"({"lambda_d": 2.5, "tau_c": 0.5})");
    CHECK(cfg.lambda_d == 2.5);
    CHECK(cfg.tau_c == 0.5);
    CHECK(cfg.lambda_n == 0.1);
    CHECK(cfg.grad_scales == 4);
  }
  SUBCASE("bad JSON inputs throw") {
    CHECK_THROWS(LossConfig::from_json_text("not json"));
    CHECK_THROWS(LossConfig::from_json_text("[1, 2]"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"lambda_q": 1.0})"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"lambda_d": "high"})"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"grad_scales": 2.5})"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"lambda_d": -1.0})"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"tau_c": 0.0})"));
    CHECK_THROWS(LossConfig::from_json_text(R"({"grad_scales": 0})"));
  }
  SUBCASE("flat TOML documents are accepted") {
    LossConfig cfg = LossConfig::from_toml_text(
        "# weights\n"
        "[loss]\n"
        "lambda_d = 2.0\n"
        "tau_c = 0.5  # pixels\n"
        "edge_dilate_radius = 3\n");
    CHECK(cfg.lambda_d == 2.0);
    CHECK(cfg.tau_c == 0.5);
    CHECK(cfg.edge_dilate_radius == 3);
    CHECK(cfg.lambda_n == 0.1);
    CHECK_THROWS(LossConfig::from_toml_text("lambda_d\n"));
    CHECK_THROWS(LossConfig::from_toml_text("lambda_d = fast\n"));
  }
  SUBCASE("load dispatches on the file extension") {
    testutil::TempDir tmp("tcdp_cfg");
    std::ofstream(tmp.str("c.json")) << R"({"lambda_d": 3.0})";
    std::ofstream(tmp.str("c.toml")) << "lambda_d = 4.0\n";
    CHECK(LossConfig::load(tmp.str("c.json")).lambda_d == 3.0);
    CHECK(LossConfig::load(tmp.str("c.toml")).lambda_d == 4.0);
    CHECK_THROWS(LossConfig::load(tmp.str("missing.json")));
  }
}

TEST_CASE("recombine applies the documented weighting") {
  LossBreakdown b;
  b.depth = 0.3;
  b.depth_grad = 0.11;
  b.normal_base = 0.7;
  b.normal_grad = 0.13;
  b.normal_lap = 0.17;
  b.seg = 0.23;
  b.temp_depth = 0.29;
  b.temp_normal = 0.31;
  LossConfig cfg;
  cfg.lambda_d = 2.0;
  cfg.omega_grad = 0.25;
  cfg.lambda_n = 0.5;
  cfg.alpha = 0.125;
  cfg.beta = 0.375;
  cfg.lambda_s = 0.75;
  cfg.lambda_temp_d = 1.5;
  cfg.lambda_temp_n = 0.0625;
  double expect = 2.0 * (0.3 + 0.25 * 0.11) + 0.5 * (0.7 + 0.125 * 0.13 + 0.375 * 0.17) +
                  0.75 * 0.23 + 1.5 * 0.29 + 0.0625 * 0.31;
  CHECK(b.recombine(cfg) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("stage1_loss composes the per-frame terms") {
  Rng rng(677);
  int W = 24, H = 20;
  FrameGroundTruth gt;
  gt.depth = testutil::random_scalar(rng, W, H, 1.0, 5.0);
  gt.normal = testutil::random_unit_normals(rng, W, H);
  gt.mask = testutil::random_mask(rng, W, H, 0.8);

  SUBCASE("predicting the ground truth costs at most rounding noise") {
    FramePrediction pred;
    pred.depth = gt.depth;  // raw depth; alignment absorbs the normalization
    pred.normal = gt.normal;
    pred.seg = gt.mask;
    LossConfig cfg;
    LossBreakdown b = stage1_loss(pred, gt, cfg);
    CHECK(b.total <= 1e-6);
    CHECK(b.depth <= 1e-6);
    CHECK(b.normal_base <= 1e-9);
    CHECK(b.seg <= 1.1e-7);
    CHECK(!b.degenerate_alignment);
    CHECK(!b.negative_scale);
    CHECK(!b.degenerate_gt_depth);
    CHECK(b.total == b.recombine(cfg));
    CHECK(b.depth_pixels > 0);
    CHECK(b.seg_pixels == W * H);
  }
  SUBCASE("the total tracks each component through the weights") {
    FramePrediction pred;
    pred.depth = testutil::random_scalar(rng, W, H, 0.0, 1.0);
    pred.normal = testutil::random_unit_normals(rng, W, H);
    pred.seg = testutil::random_mask(rng, W, H, 0.5);
    LossConfig cfg;
    LossBreakdown b = stage1_loss(pred, gt, cfg);
    CHECK(b.total == b.recombine(cfg));
    CHECK(b.total > 0.0);
    // Stage 1 never touches the temporal terms.
    CHECK(b.temp_depth == 0.0);
    CHECK(b.temp_normal == 0.0);

    LossConfig heavier = cfg;
    heavier.lambda_n = 1.0;
    LossBreakdown b2 = stage1_loss(pred, gt, heavier);
    CHECK(b2.normal_base == b.normal_base);
    CHECK(b2.total > b.total);
  }
  SUBCASE("a constant ground-truth depth is flagged") {
    FrameGroundTruth flat = gt;
    flat.depth = ScalarGrid(W, H, 2.0f, true);
    FramePrediction pred;
    pred.depth = testutil::random_scalar(rng, W, H, 0.0, 1.0);
    pred.normal = gt.normal;
    pred.seg = gt.mask;
    LossConfig cfg;
    LossBreakdown b = stage1_loss(pred, gt, cfg);
    LossBreakdown bf = stage1_loss(pred, flat, cfg);
    CHECK(bf.degenerate_gt_depth);
    CHECK(!b.degenerate_gt_depth);
  }
}

TEST_CASE("stage2_loss averages frames and pairs") {
  Rng rng(688);
  int W = 16, H = 16, F = 3;
  std::vector<FramePrediction> preds(F);
  std::vector<FrameGroundTruth> gts(F);
  FrameGroundTruth gt;
  // Smooth depth: per-pixel noise would turn the whole frame into depth
  // edges and empty the temporal masks.
  gt.depth = ScalarGrid(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      gt.depth.set(x, y, static_cast<float>(2.0 + 0.01 * x + 0.02 * y));
    }
  }
  gt.normal = testutil::random_unit_normals(rng, W, H);
  gt.mask = ScalarGrid(W, H, 1.0f, true);
  for (int k = 0; k < F; ++k) {
    gts[k] = gt;
    preds[k].depth = gt.depth;
    preds[k].normal = gt.normal;
    preds[k].seg = gt.mask;
  }
  std::vector<VectorGrid> fwd(F - 1, zero_flow(W, H));
  std::vector<VectorGrid> bwd(F - 1, zero_flow(W, H));
  LossConfig cfg;

  LossBreakdown b = stage2_loss(preds, gts, fwd, bwd, cfg);
  // Identical frames, zero flow: depth residuals are exactly zero and the
  // normal deficit is only the rounding of renormalized dot products.
  CHECK(b.temp_depth == 0.0);
  CHECK(std::fabs(b.temp_normal) <= 1e-12);
  CHECK(!b.empty_temporal_mask);
  CHECK(b.temp_depth_pixels > 0);
  CHECK(b.total <= 1e-6);
  CHECK(b.total == b.recombine(cfg));

  // Frame terms are the mean over frames: F identical frames, same value.
  LossBreakdown one = stage1_loss(preds[0], gts[0], cfg);
  CHECK(b.depth == doctest::Approx(one.depth).epsilon(1e-12));
  CHECK(b.seg == doctest::Approx(one.seg).epsilon(1e-12));
  CHECK(b.depth_pixels == F * one.depth_pixels);

  SUBCASE("argument validation") {
    std::vector<FramePrediction> single(preds.begin(), preds.begin() + 1);
    std::vector<FrameGroundTruth> single_gt(gts.begin(), gts.begin() + 1);
    CHECK_THROWS(stage2_loss(single, single_gt, {}, {}, cfg));
    std::vector<VectorGrid> short_flows(F - 2, zero_flow(W, H));
    CHECK_THROWS(stage2_loss(preds, gts, short_flows, bwd, cfg));
    std::vector<FrameGroundTruth> fewer(gts.begin(), gts.end() - 1);
    CHECK_THROWS(stage2_loss(preds, fewer, fwd, bwd, cfg));
  }
}
