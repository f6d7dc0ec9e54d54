// Command-line front end: synthetic sequence generation, image and video
// metric evaluation, loss reports, and the CWA gradient self-check.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcdp/align.hpp"
#include "tcdp/features.hpp"
#include "tcdp/image_io.hpp"
#include "tcdp/losses.hpp"
#include "tcdp/manifest.hpp"
#include "tcdp/metrics.hpp"
#include "tcdp/parallel.hpp"
#include "tcdp/report.hpp"
#include "tcdp/synth.hpp"

namespace fs = std::filesystem;
using namespace tcdp;

namespace {

struct FrameData {
  ScalarGrid depth;
  VectorGrid normal;
  ScalarGrid mask;
};

FrameData load_frame(const SequenceManifest& m, int i) {
  const FrameEntry& e = m.frames[i];
  return {load_pfm_scalar(m.resolve(e.depth)), load_normal_png16(m.resolve(e.normal)),
          load_mask_png16(m.resolve(e.mask))};
}

void check_compatible(const SequenceManifest& pred, const SequenceManifest& gt) {
  if (pred.frame_count != gt.frame_count) {
    throw std::runtime_error("prediction and ground-truth manifests list different frame counts");
  }
  if (pred.width != gt.width || pred.height != gt.height) {
    throw std::runtime_error("prediction and ground-truth manifests disagree on image size");
  }
}

void check_thresholds(const std::vector<double>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || (i > 0 && !(t[i] > t[i - 1]))) {
      throw std::runtime_error("--thresholds must be positive and strictly increasing");
    }
  }
}

// Binary fit weights from a soft mask: weight 1 where the mask holds a valid
// value >= 0.5, matching the metric mask semantics.
ScalarGrid crisp_weights(const ScalarGrid& mask) {
  ScalarGrid w(mask.width(), mask.height(), 0.0f, false);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.valid_at(x, y) && mask.at(x, y) >= 0.5f) w.set(x, y, 1.0f, true);
    }
  }
  return w;
}

// One scale/shift for a whole sequence: frames are stacked into a tall grid
// and fitted jointly.
AlignmentParams fit_sequence_alignment(const std::vector<FrameData>& pred,
                                       const std::vector<FrameData>& gt) {
  int w = pred.front().depth.width();
  int h = pred.front().depth.height();
  int f = static_cast<int>(pred.size());
  ScalarGrid sp(w, h * f, 0.0f, false), sg(w, h * f, 0.0f, false), sw(w, h * f, 0.0f, false);
  for (int k = 0; k < f; ++k) {
    ScalarGrid wk = crisp_weights(gt[k].mask);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        sp.set(x, k * h + y, pred[k].depth.at(x, y), pred[k].depth.valid_at(x, y));
        sg.set(x, k * h + y, gt[k].depth.at(x, y), gt[k].depth.valid_at(x, y));
        sw.set(x, k * h + y, wk.at(x, y), wk.valid_at(x, y));
      }
    }
  }
  return fit_scale_shift(sp, sg, sw);
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_file(path, text);
  }
}

// ---- gen-synth ----

struct GenSynthOpts {
  std::uint64_t seed = 1;
  int frames = 16;
  int size = 128;
  int width = 0;   // override --size when nonzero
  int height = 0;
  double motion_scale = 1.0;
  std::string out;
};

void run_gen_synth(const GenSynthOpts& o) {
  WalkerParams wp;
  wp.width = o.width > 0 ? o.width : o.size;
  wp.height = o.height > 0 ? o.height : o.size;
  wp.motion_scale = o.motion_scale;
  SceneSpec scene = make_walker(o.seed, o.frames, wp);
  generate_sequence(scene, o.out);
  std::printf("%s\n", (fs::path(o.out) / "manifest.json").string().c_str());
}

// ---- eval-images ----

struct EvalImagesOpts {
  std::string pred, gt, out_csv, out_json;
  std::vector<double> thresholds{kDefaultAccThresholds[0], kDefaultAccThresholds[1],
                                 kDefaultAccThresholds[2]};
  bool no_align = false;
  bool pixel_pooled = false;
  unsigned jobs = default_worker_count();
};

void run_eval_images(const EvalImagesOpts& o) {
  check_thresholds(o.thresholds);
  SequenceManifest mp = SequenceManifest::load(o.pred);
  SequenceManifest mg = SequenceManifest::load(o.gt);
  check_compatible(mp, mg);

  std::vector<ImageRecord> records(mp.frame_count);
  parallel_for(static_cast<std::size_t>(mp.frame_count), o.jobs, [&](std::size_t i) {
    FrameData p = load_frame(mp, static_cast<int>(i));
    FrameData g = load_frame(mg, static_cast<int>(i));
    ImageRecord r;
    r.index = static_cast<long long>(i);
    r.depth = depth_metrics(p.depth, g.depth, g.mask, !o.no_align);
    r.normal = normal_metrics(p.normal, g.normal, g.mask, o.thresholds);
    records[i] = std::move(r);
  });

  DatasetSummary summary = aggregate(records, {}, o.pixel_pooled);
  if (!o.out_csv.empty()) write_text_file(o.out_csv, image_records_csv(records));
  emit(summary_json(summary), o.out_json);
}

// ---- eval-video ----

struct EvalVideoOpts {
  std::string pred, gt, out_csv, out_json;
  std::string align = "per-sequence";  // per-sequence | per-frame | none
  bool full_frame = false;
  bool pixel_pooled = false;
  unsigned jobs = default_worker_count();
};

void run_eval_video(const EvalVideoOpts& o) {
  SequenceManifest mp = SequenceManifest::load(o.pred);
  SequenceManifest mg = SequenceManifest::load(o.gt);
  check_compatible(mp, mg);
  if (mp.frame_count < 2) {
    throw std::runtime_error("temporal metrics need at least 2 frames");
  }
  if (!mg.has_flows()) {
    throw std::runtime_error("ground-truth manifest lists no flow pairs");
  }

  int f = mp.frame_count;
  std::vector<FrameData> pred(f), gt(f);
  std::vector<VectorGrid> fwd(f - 1);
  parallel_for(static_cast<std::size_t>(f), o.jobs, [&](std::size_t i) {
    pred[i] = load_frame(mp, static_cast<int>(i));
    gt[i] = load_frame(mg, static_cast<int>(i));
    if (i + 1 < static_cast<std::size_t>(f)) {
      fwd[i] = load_flo(mg.resolve(mg.flows_fwd[i]));
    }
  });

  std::vector<ScalarGrid> depth(f);
  if (o.align == "none") {
    for (int k = 0; k < f; ++k) depth[k] = pred[k].depth;
  } else if (o.align == "per-frame") {
    for (int k = 0; k < f; ++k) {
      depth[k] = apply_alignment(pred[k].depth,
                                 fit_scale_shift(pred[k].depth, gt[k].depth,
                                                 crisp_weights(gt[k].mask)));
    }
  } else {
    AlignmentParams a = fit_sequence_alignment(pred, gt);
    for (int k = 0; k < f; ++k) depth[k] = apply_alignment(pred[k].depth, a);
  }

  std::vector<PairRecord> records(f - 1);
  parallel_for(static_cast<std::size_t>(f - 1), o.jobs, [&](std::size_t k) {
    ScalarGrid mask = o.full_frame
                          ? ScalarGrid(mp.width, mp.height, 1.0f, true)
                          : gt[k].mask;
    PairRecord r;
    r.index = static_cast<long long>(k);
    MeanResult od = opw(depth[k], depth[k + 1], fwd[k], mask);
    r.opw_depth = od.value;
    r.tc_rmse = tc_rmse(depth[k], depth[k + 1], fwd[k], mask).value;
    r.opw_normal = opw_normal(pred[k].normal, pred[k + 1].normal, fwd[k], mask).value;
    MeanResult tm = tc_mean(pred[k].normal, pred[k + 1].normal, fwd[k], mask);
    r.tc_mean_deg = tm.value;
    r.tc_abs_deg = tc_abs(pred[k].normal, pred[k + 1].normal, gt[k].normal, gt[k + 1].normal,
                          fwd[k], mask)
                       .value;
    r.depth_pixels = od.pixels;
    r.normal_pixels = tm.pixels;
    records[k] = r;
  });

  DatasetSummary summary = aggregate({}, records, o.pixel_pooled);
  if (!o.out_csv.empty()) write_text_file(o.out_csv, pair_records_csv(records));
  emit(summary_json(summary), o.out_json);
}

// ---- loss ----

struct LossOpts {
  std::string pred, gt, config, out;
  std::string stage = "both";  // 1 | 2 | both
  unsigned jobs = default_worker_count();
};

void run_loss(const LossOpts& o) {
  LossConfig cfg = o.config.empty() ? LossConfig{} : LossConfig::load(o.config);
  cfg.validate();
  SequenceManifest mp = SequenceManifest::load(o.pred);
  SequenceManifest mg = SequenceManifest::load(o.gt);
  check_compatible(mp, mg);

  int f = mp.frame_count;
  std::vector<FramePrediction> preds(f);
  std::vector<FrameGroundTruth> gts(f);
  parallel_for(static_cast<std::size_t>(f), o.jobs, [&](std::size_t i) {
    FrameData p = load_frame(mp, static_cast<int>(i));
    FrameData g = load_frame(mg, static_cast<int>(i));
    preds[i] = {std::move(p.depth), std::move(p.normal), std::move(p.mask)};
    gts[i] = {std::move(g.depth), std::move(g.normal), std::move(g.mask)};
  });

  std::vector<LossBreakdown> stage1;
  if (o.stage != "2") {
    stage1.resize(f);
    parallel_for(static_cast<std::size_t>(f), o.jobs,
                 [&](std::size_t i) { stage1[i] = stage1_loss(preds[i], gts[i], cfg); });
  }

  LossBreakdown stage2;
  bool have_stage2 = false;
  if (o.stage != "1") {
    if (f < 2) {
      if (o.stage == "2") throw std::runtime_error("stage 2 needs at least 2 frames");
    } else if (!mg.has_flows()) {
      if (o.stage == "2") throw std::runtime_error("stage 2 needs flows in the GT manifest");
    } else {
      std::vector<VectorGrid> fwd(f - 1), bwd(f - 1);
      parallel_for(static_cast<std::size_t>(f - 1), o.jobs, [&](std::size_t k) {
        fwd[k] = load_flo(mg.resolve(mg.flows_fwd[k]));
        bwd[k] = load_flo(mg.resolve(mg.flows_bwd[k]));
      });
      stage2 = stage2_loss(preds, gts, fwd, bwd, cfg);
      have_stage2 = true;
    }
  }

  emit(loss_report_json(stage1, have_stage2 ? &stage2 : nullptr, cfg), o.out);
}

// ---- gradcheck ----

struct GradcheckOpts {
  int seeds = 10;
  int channels = 8;
  int hidden = 0;  // 0 = default bottleneck width
  int size = 4;
  double step = 1e-4;
  std::string activation = "relu";
  bool corrupt = false;
};

int run_gradcheck(const GradcheckOpts& o) {
  double worst = 0.0;
  for (int s = 1; s <= o.seeds; ++s) {
    std::uint64_t seed = static_cast<std::uint64_t>(s);
    int hidden = o.hidden > 0 ? o.hidden : cwa_default_hidden(o.channels);
    CwaParams params = random_cwa_params(o.channels, hidden, seed);
    params.activation = o.activation == "gelu" ? Activation::Gelu : Activation::Relu;
    FeatureVolume input = random_feature_volume(o.channels, o.size, o.size, seed * 3 + 1);
    FeatureVolume upstream = random_feature_volume(o.channels, o.size, o.size, seed * 5 + 2);
    GradCheckOptions gco;
    gco.step = o.step;
    gco.corrupt = o.corrupt;
    worst = std::max(worst, cwa_gradcheck(params, input, upstream, gco));
  }
  std::printf("max relative error: %.6e\n", worst);
  return worst < 1e-3 ? 0 : 1;
}

// ---- report ----

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string out;
};

void run_report(const ReportOpts& o) {
  std::string text = "file,images,pairs,depth_rmse,depth_absrel,normal_mean_deg,"
                     "normal_median_deg,opw_depth,tc_rmse,opw_normal,tc_mean_deg,tc_abs_deg\n";
  char buf[512];
  for (const std::string& path : o.inputs) {
    DatasetSummary s = summary_from_json_text(read_text_file(path));
    std::snprintf(buf, sizeof(buf),
                  "%s,%lld,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  path.c_str(), s.image_count, s.pair_count, s.depth_rmse, s.depth_absrel,
                  s.normal_mean_deg, s.normal_median_deg, s.opw_depth, s.tc_rmse, s.opw_normal,
                  s.tc_mean_deg, s.tc_abs_deg);
    text += buf;
  }
  emit(text, o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense prediction toolkit: synthetic ground truth, losses, metrics"};
  app.require_subcommand(1);

  GenSynthOpts gen;
  CLI::App* s = app.add_subcommand("gen-synth", "Render a synthetic walker sequence");
  s->add_option("--seed", gen.seed, "RNG seed");
  s->add_option("--frames", gen.frames, "frame count")->check(CLI::PositiveNumber);
  s->add_option("--size", gen.size, "square image size")->check(CLI::Range(8, 4096));
  s->add_option("--width", gen.width, "image width (overrides --size)")
      ->check(CLI::Range(8, 4096));
  s->add_option("--height", gen.height, "image height (overrides --size)")
      ->check(CLI::Range(8, 4096));
  s->add_option("--motion-scale", gen.motion_scale, "motion amplitude multiplier")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--out", gen.out, "output directory")->required();
  s->callback([&] { run_gen_synth(gen); });

  EvalImagesOpts ei;
  s = app.add_subcommand("eval-images", "Per-image depth and normal metrics");
  s->add_option("--pred", ei.pred, "prediction manifest")->required()->check(CLI::ExistingFile);
  s->add_option("--gt", ei.gt, "ground-truth manifest")->required()->check(CLI::ExistingFile);
  s->add_option("--out-csv", ei.out_csv, "per-image CSV path");
  s->add_option("--out-json", ei.out_json, "summary JSON path (stdout when omitted)");
  s->add_option("--thresholds", ei.thresholds, "accuracy thresholds in degrees")
      ->delimiter(',');
  s->add_flag("--no-align", ei.no_align, "skip per-image scale/shift alignment");
  s->add_flag("--pixel-pooled", ei.pixel_pooled, "pool metrics over pixels instead of images");
  s->add_option("--jobs", ei.jobs, "worker threads")->check(CLI::PositiveNumber);
  s->callback([&] { run_eval_images(ei); });

  EvalVideoOpts ev;
  s = app.add_subcommand("eval-video", "Temporal consistency metrics over adjacent frames");
  s->add_option("--pred", ev.pred, "prediction manifest")->required()->check(CLI::ExistingFile);
  s->add_option("--gt", ev.gt, "ground-truth manifest with flows")
      ->required()
      ->check(CLI::ExistingFile);
  s->add_option("--out-csv", ev.out_csv, "per-pair CSV path");
  s->add_option("--out-json", ev.out_json, "summary JSON path (stdout when omitted)");
  s->add_option("--align", ev.align, "depth alignment: per-sequence, per-frame, none")
      ->check(CLI::IsMember({"per-sequence", "per-frame", "none"}));
  s->add_flag("--full-frame", ev.full_frame, "evaluate everywhere, not just the foreground");
  s->add_flag("--pixel-pooled", ev.pixel_pooled, "pool metrics over pixels instead of pairs");
  s->add_option("--jobs", ev.jobs, "worker threads")->check(CLI::PositiveNumber);
  s->callback([&] { run_eval_video(ev); });

  LossOpts lo;
  s = app.add_subcommand("loss", "Training objective breakdown");
  s->add_option("--pred", lo.pred, "prediction manifest")->required()->check(CLI::ExistingFile);
  s->add_option("--gt", lo.gt, "ground-truth manifest")->required()->check(CLI::ExistingFile);
  s->add_option("--config", lo.config, "loss config (JSON or TOML)")->check(CLI::ExistingFile);
  s->add_option("--stage", lo.stage, "1, 2, or both")->check(CLI::IsMember({"1", "2", "both"}));
  s->add_option("--out", lo.out, "report path (stdout when omitted)");
  s->add_option("--jobs", lo.jobs, "worker threads")->check(CLI::PositiveNumber);
  s->callback([&] { run_loss(lo); });

  GradcheckOpts gc;
  s = app.add_subcommand("gradcheck", "Finite-difference check of the CWA gradients");
  s->add_option("--seeds", gc.seeds, "number of seeded instances")->check(CLI::PositiveNumber);
  s->add_option("--channels", gc.channels, "feature channels")->check(CLI::Range(1, 64));
  s->add_option("--hidden", gc.hidden, "bottleneck width (0 = channels/4)")
      ->check(CLI::Range(0, 64));
  s->add_option("--size", gc.size, "spatial size")->check(CLI::Range(1, 32));
  s->add_option("--step", gc.step, "finite-difference half step");
  s->add_option("--activation", gc.activation, "relu or gelu")
      ->check(CLI::IsMember({"relu", "gelu"}));
  s->add_flag("--corrupt", gc.corrupt, "damage one analytic component (self-test, must fail)");

  ReportOpts rep;
  s = app.add_subcommand("report", "Merge summary JSON files into one CSV table");
  s->add_option("files", rep.inputs, "summary JSON files")
      ->required()
      ->check(CLI::ExistingFile);
  s->add_option("--out", rep.out, "table path (stdout when omitted)");
  s->callback([&] { run_report(rep); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  if (app.got_subcommand("gradcheck")) return run_gradcheck(gc);
  return 0;
}
