#include <benchmark/benchmark.h>

#include <cmath>
#include <map>

#include "tcdp/align.hpp"
#include "tcdp/features.hpp"
#include "tcdp/losses.hpp"
#include "tcdp/metrics.hpp"
#include "tcdp/synth.hpp"

namespace {

using namespace tcdp;

// One walker frame pair per image size, rendered once and shared by the
// benchmarks below. The prediction is an affine remap of the ground truth
// with a smooth deterministic wobble so the losses have nonzero residuals.
struct PairData {
  SceneSpec scene;
  RenderResult r0, r1;
  FlowResult flow;
  FramePrediction pred;
  FrameGroundTruth gt;
};

const PairData& pair_data(int size) {
  static std::map<int, PairData> cache;
  auto it = cache.find(size);
  if (it != cache.end()) return it->second;

  PairData d;
  WalkerParams p;
  p.width = size;
  p.height = size;
  d.scene = make_walker(17, 2, p);
  d.r0 = raycast_frame(d.scene, 0);
  d.r1 = raycast_frame(d.scene, 1);
  d.flow = analytic_flow(d.scene, 0);

  d.gt.depth = d.r0.depth;
  d.gt.normal = d.r0.normal;
  d.gt.mask = d.r0.mask;

  ScalarGrid nd = normalize_depth(d.r0.depth).grid;
  d.pred.depth = nd;
  d.pred.normal = d.r0.normal;
  d.pred.seg = d.r0.mask;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double w = 0.01 * std::sin(0.37 * x) * std::cos(0.29 * y);
      if (d.pred.depth.valid_at(x, y)) {
        d.pred.depth.at(x, y) = static_cast<float>(0.8 * d.pred.depth.at(x, y) + 0.1 + w);
      }
      if (d.pred.normal.valid_at(x, y)) {
        double n[3], s = 0.0;
        for (int c = 0; c < 3; ++c) {
          n[c] = d.pred.normal.at(x, y, c) + 0.1 * w * (c + 1);
          s += n[c] * n[c];
        }
        s = std::sqrt(s);
        for (int c = 0; c < 3; ++c) d.pred.normal.at(x, y, c) = static_cast<float>(n[c] / s);
      }
      d.pred.seg.at(x, y) = static_cast<float>(0.05 + 0.9 * d.pred.seg.at(x, y));
    }
  }
  return cache.emplace(size, std::move(d)).first->second;
}

void BM_RaycastFrame(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  WalkerParams p;
  p.width = size;
  p.height = size;
  SceneSpec scene = make_walker(17, 2, p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(raycast_frame(scene, 0));
  }
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_RaycastFrame)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

// Includes the two renders of the frame pair.
void BM_AnalyticFlow(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  WalkerParams p;
  p.width = size;
  p.height = size;
  SceneSpec scene = make_walker(17, 2, p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(analytic_flow(scene, 0));
  }
}
BENCHMARK(BM_AnalyticFlow)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_FitScaleShift(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  ScalarGrid gtn = normalize_depth(d.gt.depth).grid;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_scale_shift(d.pred.depth, gtn, d.gt.mask));
  }
}
BENCHMARK(BM_FitScaleShift)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_DepthMetricsAligned(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(depth_metrics(d.pred.depth, d.gt.depth, d.gt.mask, true));
  }
}
BENCHMARK(BM_DepthMetricsAligned)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_NormalMetrics(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(normal_metrics(d.pred.normal, d.gt.normal, d.gt.mask));
  }
}
BENCHMARK(BM_NormalMetrics)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Opw(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(opw(d.r0.depth, d.r1.depth, d.flow.fwd, d.r0.mask));
  }
}
BENCHMARK(BM_Opw)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_TcMean(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tc_mean(d.r0.normal, d.r1.normal, d.flow.fwd, d.r0.mask));
  }
}
BENCHMARK(BM_TcMean)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Warp(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(warp(d.r1.depth, d.flow.fwd));
  }
}
BENCHMARK(BM_Warp)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_CycleMask(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(cycle_mask(d.flow.fwd, d.flow.bwd, 1.0));
  }
}
BENCHMARK(BM_CycleMask)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Stage1Loss(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stage1_loss(d.pred, d.gt, cfg));
  }
}
BENCHMARK(BM_Stage1Loss)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

// Includes deriving both non-edge gates from the depths.
void BM_TemporalDepthLoss(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(temporal_depth_loss(d.r0.depth, d.r1.depth, d.flow.fwd,
                                                 d.flow.bwd, cfg));
  }
}
BENCHMARK(BM_TemporalDepthLoss)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_TemporalNormalLoss(benchmark::State& state) {
  const PairData& d = pair_data(static_cast<int>(state.range(0)));
  LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(temporal_normal_loss(d.r0.normal, d.r1.normal, d.flow.fwd,
                                                  d.flow.bwd, cfg));
  }
}
BENCHMARK(BM_TemporalNormalLoss)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_CwaForward(benchmark::State& state) {
  int c = static_cast<int>(state.range(0));
  int hw = static_cast<int>(state.range(1));
  FeatureVolume f = random_feature_volume(c, hw, hw, 5);
  CwaParams p = random_cwa_params(c, cwa_default_hidden(c), 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cwa_forward(f, p));
  }
}
BENCHMARK(BM_CwaForward)->Args({32, 64})->Args({128, 64})->Unit(benchmark::kMicrosecond);

void BM_CwaGrad(benchmark::State& state) {
  int c = static_cast<int>(state.range(0));
  int hw = static_cast<int>(state.range(1));
  FeatureVolume f = random_feature_volume(c, hw, hw, 5);
  FeatureVolume up = random_feature_volume(c, hw, hw, 7);
  CwaParams p = random_cwa_params(c, cwa_default_hidden(c), 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cwa_grad(f, p, up));
  }
}
BENCHMARK(BM_CwaGrad)->Args({32, 32})->Unit(benchmark::kMicrosecond);

// 1x1 projection at the prior's resolution plus the resize onto the base.
void BM_PriorFuse(benchmark::State& state) {
  FeatureVolume base = random_feature_volume(64, 64, 64, 5);
  FeatureVolume z = random_feature_volume(16, 32, 32, 7);
  PriorProjection p = random_prior_projection(16, 64, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prior_fuse(base, z, p));
  }
}
BENCHMARK(BM_PriorFuse)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
