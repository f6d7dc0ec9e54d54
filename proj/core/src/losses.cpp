#include "tcdp/losses.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcdp/stencil.hpp"
#include "temporal_common.hpp"

namespace tcdp {

using nlohmann::json;

namespace {

constexpr double kBceEps = 1e-7;

void set_config_field(LossConfig& cfg, const std::string& key, double value) {
  auto as_int = [&](int& dst) {
    if (value != std::floor(value)) {
      throw std::invalid_argument("loss config: " + key + " must be an integer");
    }
    dst = static_cast<int>(value);
  };
  if (key == "lambda_d") cfg.lambda_d = value;
  else if (key == "lambda_n") cfg.lambda_n = value;
  else if (key == "lambda_s") cfg.lambda_s = value;
  else if (key == "lambda_temp_d") cfg.lambda_temp_d = value;
  else if (key == "lambda_temp_n") cfg.lambda_temp_n = value;
  else if (key == "omega_grad") cfg.omega_grad = value;
  else if (key == "grad_scales") as_int(cfg.grad_scales);
  else if (key == "alpha") cfg.alpha = value;
  else if (key == "beta") cfg.beta = value;
  else if (key == "eta") cfg.eta = value;
  else if (key == "tau_c") cfg.tau_c = value;
  else if (key == "edge_threshold") cfg.edge_threshold = value;
  else if (key == "edge_dilate_radius") as_int(cfg.edge_dilate_radius);
  else throw std::invalid_argument("loss config: unknown key '" + key + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Weighted mean machinery used by every spatial loss: weight grids are
// fully-valid with zero meaning "excluded".
struct WeightedMean {
  KahanSum num, den;
  long long n = 0;
  void add(double w, double v) {
    num.add(w * v);
    den.add(w);
    ++n;
  }
  MeanResult result() const {
    double d = den.value();
    return {d > 0.0 ? num.value() / d : 0.0, n};
  }
};

double effective_weight(const ScalarGrid& weights, int x, int y) {
  if (!weights.valid_at(x, y)) return 0.0;
  double w = weights.at(x, y);
  return w > 0.0 ? w : 0.0;
}

// Masked mean of per-pixel |gx| + |gy| (summed over channels) of the Sobel
// stack of `a - b`, at one scale.
MeanResult gradient_l1_level(const ScalarGrid& a, const ScalarGrid& b,
                             const ScalarGrid& weights) {
  ScalarGrid diff(a.width(), a.height(), 0.0f, false);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a.valid_at(x, y) && b.valid_at(x, y)) {
        diff.set(x, y, a.at(x, y) - b.at(x, y), true);
      }
    }
  }
  VectorGrid grad = sobel_gradients(diff);
  WeightedMean mean;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!grad.valid_at(x, y)) continue;
      double w = effective_weight(weights, x, y);
      if (w <= 0.0) continue;
      mean.add(w, std::fabs(grad.at(x, y, 0)) + std::fabs(grad.at(x, y, 1)));
    }
  }
  return mean.result();
}

}  // namespace

void LossConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("loss config: ") + what);
  };
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  check(finite_nonneg(lambda_d), "lambda_d must be finite and >= 0");
  check(finite_nonneg(lambda_n), "lambda_n must be finite and >= 0");
  check(finite_nonneg(lambda_s), "lambda_s must be finite and >= 0");
  check(finite_nonneg(lambda_temp_d), "lambda_temp_d must be finite and >= 0");
  check(finite_nonneg(lambda_temp_n), "lambda_temp_n must be finite and >= 0");
  check(finite_nonneg(omega_grad), "omega_grad must be finite and >= 0");
  check(finite_nonneg(alpha), "alpha must be finite and >= 0");
  check(finite_nonneg(beta), "beta must be finite and >= 0");
  check(finite_nonneg(eta), "eta must be finite and >= 0");
  check(std::isfinite(tau_c) && tau_c > 0.0, "tau_c must be finite and > 0");
  check(finite_nonneg(edge_threshold), "edge_threshold must be finite and >= 0");
  check(edge_dilate_radius >= 0, "edge_dilate_radius must be >= 0");
  check(grad_scales >= 1, "grad_scales must be >= 1");
}

LossConfig LossConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("loss config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("loss config: JSON root must be an object");
  LossConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) {
      throw std::invalid_argument("loss config: " + key + " must be a number");
    }
    set_config_field(cfg, key, value.get<double>());
  }
  cfg.validate();
  return cfg;
}

LossConfig LossConfig::from_toml_text(const std::string& text) {
  LossConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string trimmed = line.substr(first, last - first + 1);
    if (trimmed.front() == '[') continue;  // table headers carry no data here
    auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("loss config: TOML line " + std::to_string(lineno) +
                                  " is not a key = value pair");
    }
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = strip(trimmed.substr(0, eq));
    std::string value = strip(trimmed.substr(eq + 1));
    std::size_t consumed = 0;
    double num;
    try {
      num = std::stod(value, &consumed);
    } catch (const std::exception&) {
      throw std::invalid_argument("loss config: TOML line " + std::to_string(lineno) +
                                  " has a non-numeric value");
    }
    if (consumed != value.size()) {
      throw std::invalid_argument("loss config: TOML line " + std::to_string(lineno) +
                                  " has a non-numeric value");
    }
    set_config_field(cfg, key, num);
  }
  cfg.validate();
  return cfg;
}

LossConfig LossConfig::load(const std::string& path) {
  std::string text = read_text_file(path);
  return ends_with(path, ".toml") ? from_toml_text(text) : from_json_text(text);
}

std::string LossConfig::to_json_text() const {
  json j;
  j["lambda_d"] = lambda_d;
  j["lambda_n"] = lambda_n;
  j["lambda_s"] = lambda_s;
  j["lambda_temp_d"] = lambda_temp_d;
  j["lambda_temp_n"] = lambda_temp_n;
  j["omega_grad"] = omega_grad;
  j["grad_scales"] = grad_scales;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["eta"] = eta;
  j["tau_c"] = tau_c;
  j["edge_threshold"] = edge_threshold;
  j["edge_dilate_radius"] = edge_dilate_radius;
  return j.dump(2);
}

void LossConfig::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path);
  out << to_json_text() << "\n";
}

double LossBreakdown::recombine(const LossConfig& cfg) const {
  return cfg.lambda_d * (depth + cfg.omega_grad * depth_grad) +
         cfg.lambda_n * (normal_base + cfg.alpha * normal_grad + cfg.beta * normal_lap) +
         cfg.lambda_s * seg + cfg.lambda_temp_d * temp_depth + cfg.lambda_temp_n * temp_normal;
}

ScalarGrid supervision_weights(const ScalarGrid& soft_mask) {
  ScalarGrid out(soft_mask.width(), soft_mask.height(), 0.0f, true);
  for (int y = 0; y < soft_mask.height(); ++y) {
    for (int x = 0; x < soft_mask.width(); ++x) {
      if (soft_mask.valid_at(x, y) && soft_mask.at(x, y) >= 0.5f) {
        out.at(x, y) = soft_mask.at(x, y);
      }
    }
  }
  return out;
}

DepthLossParts depth_loss(const ScalarGrid& pred, const ScalarGrid& gt,
                          const ScalarGrid& weights, const LossConfig& cfg) {
  if (pred.width() != gt.width() || pred.height() != gt.height() ||
      pred.width() != weights.width() || pred.height() != weights.height()) {
    throw std::invalid_argument("depth_loss: shape mismatch");
  }
  DepthLossParts out;
  out.alignment = fit_scale_shift(pred, gt, weights);
  if (out.alignment.valid_count == 0) {
    throw std::invalid_argument("depth_loss: empty mask");
  }
  ScalarGrid aligned = apply_alignment(pred, out.alignment);

  WeightedMean sq_mean;
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      if (!aligned.valid_at(x, y) || !gt.valid_at(x, y)) continue;
      double w = effective_weight(weights, x, y);
      if (w <= 0.0) continue;
      double r = static_cast<double>(aligned.at(x, y)) - gt.at(x, y);
      sq_mean.add(w, r * r);
    }
  }
  MeanResult rms = sq_mean.result();
  out.rms = std::sqrt(std::max(0.0, rms.value));
  out.pixels = rms.pixels;

  ScalarGrid a = aligned, b = gt, w = weights;
  KahanSum level_sum;
  int levels = 0;
  for (int l = 0; l < cfg.grad_scales; ++l) {
    if (l > 0) {
      a = downsample2(a);
      b = downsample2(b);
      w = downsample2(w);
    }
    if (a.width() < 3 || a.height() < 3) break;
    MeanResult m = gradient_l1_level(a, b, w);
    if (l == 0) out.grad_pixels = m.pixels;
    level_sum.add(m.value);
    ++levels;
  }
  out.grad = levels > 0 ? level_sum.value() / levels : 0.0;
  return out;
}

MeanResult normal_base_loss(const VectorGrid& pred_n, const VectorGrid& gt_n,
                            const ScalarGrid& weights) {
  if (pred_n.width() != gt_n.width() || pred_n.height() != gt_n.height() ||
      pred_n.channels() != 3 || gt_n.channels() != 3) {
    throw std::invalid_argument("normal_base_loss: expect matching 3-channel grids");
  }
  WeightedMean mean;
  for (int y = 0; y < pred_n.height(); ++y) {
    for (int x = 0; x < pred_n.width(); ++x) {
      if (!pred_n.valid_at(x, y) || !gt_n.valid_at(x, y)) continue;
      double w = effective_weight(weights, x, y);
      if (w <= 0.0) continue;
      // Renormalize in double so float-stored unit vectors compare cleanly
      // (identical inputs give an exact zero L1 and a 1 +- ulp dot).
      double p3[3] = {pred_n.at(x, y, 0), pred_n.at(x, y, 1), pred_n.at(x, y, 2)};
      double g3[3] = {gt_n.at(x, y, 0), gt_n.at(x, y, 1), gt_n.at(x, y, 2)};
      double pn = std::sqrt(p3[0] * p3[0] + p3[1] * p3[1] + p3[2] * p3[2]);
      double gn = std::sqrt(g3[0] * g3[0] + g3[1] * g3[1] + g3[2] * g3[2]);
      if (pn < 1e-6 || gn < 1e-6) continue;
      double l1 = 0.0, dot = 0.0;
      for (int c = 0; c < 3; ++c) {
        double p = p3[c] / pn, g = g3[c] / gn;
        l1 += std::fabs(p - g);
        dot += p * g;
      }
      mean.add(w, l1 + (1.0 - dot));
    }
  }
  return mean.result();
}

ScalarGrid edge_weight(const VectorGrid& gt_n, double eta) {
  VectorGrid grad = sobel_gradients(gt_n);
  ScalarGrid mag(gt_n.width(), gt_n.height(), 0.0f, false);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < grad.height(); ++y) {
    for (int x = 0; x < grad.width(); ++x) {
      if (!grad.valid_at(x, y)) continue;
      double sq = 0.0;
      for (int c = 0; c < grad.channels(); ++c) {
        double v = grad.at(x, y, c);
        sq += v * v;
      }
      double m = std::sqrt(sq);
      mag.set(x, y, static_cast<float>(m), true);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  ScalarGrid out(gt_n.width(), gt_n.height(), 1.0f, true);
  if (!(hi > lo)) return out;  // constant magnitude (or no stencil anywhere)
  double span = hi - lo;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!mag.valid_at(x, y)) continue;
      out.at(x, y) = static_cast<float>(1.0 + eta * ((mag.at(x, y) - lo) / span));
    }
  }
  return out;
}

namespace {

// One level of the edge-weighted stencil-difference mean shared by the
// normal regularizers; `stencil` is sobel_gradients or laplacian output.
MeanResult stencil_l1_level(const VectorGrid& pred_st, const VectorGrid& gt_st,
                            const ScalarGrid& w_edge, const ScalarGrid& weights) {
  WeightedMean mean;
  for (int y = 0; y < pred_st.height(); ++y) {
    for (int x = 0; x < pred_st.width(); ++x) {
      if (!pred_st.valid_at(x, y) || !gt_st.valid_at(x, y)) continue;
      double w = effective_weight(weights, x, y);
      if (w <= 0.0) continue;
      if (!w_edge.valid_at(x, y)) continue;
      double l1 = 0.0;
      for (int c = 0; c < pred_st.channels(); ++c) {
        l1 += std::fabs(static_cast<double>(pred_st.at(x, y, c)) - gt_st.at(x, y, c));
      }
      mean.add(w * w_edge.at(x, y), l1);
    }
  }
  return mean.result();
}

}  // namespace

NormalRegParts normal_reg_losses(const VectorGrid& pred_n, const VectorGrid& gt_n,
                                 const ScalarGrid& w_edge, const ScalarGrid& weights,
                                 const LossConfig& cfg) {
  if (pred_n.width() != gt_n.width() || pred_n.height() != gt_n.height() ||
      pred_n.channels() != 3 || gt_n.channels() != 3) {
    throw std::invalid_argument("normal_reg_losses: expect matching 3-channel grids");
  }
  NormalRegParts out;

  MeanResult grad = stencil_l1_level(sobel_gradients(pred_n), sobel_gradients(gt_n),
                                     w_edge, weights);
  out.grad = grad.value;
  out.grad_pixels = grad.pixels;

  VectorGrid p = pred_n, g = gt_n;
  ScalarGrid we = w_edge, w = weights;
  KahanSum level_sum;
  int levels = 0;
  for (int l = 0; l < cfg.grad_scales; ++l) {
    if (l > 0) {
      p = downsample2(p);
      g = downsample2(g);
      we = downsample2(we);
      w = downsample2(w);
    }
    if (p.width() < 3 || p.height() < 3) break;
    MeanResult m = stencil_l1_level(laplacian(p), laplacian(g), we, w);
    if (l == 0) out.lap_pixels = m.pixels;
    level_sum.add(m.value);
    ++levels;
  }
  out.lap = levels > 0 ? level_sum.value() / levels : 0.0;
  return out;
}

MeanResult seg_bce_loss(const ScalarGrid& pred_s, const ScalarGrid& gt_s) {
  if (pred_s.width() != gt_s.width() || pred_s.height() != gt_s.height()) {
    throw std::invalid_argument("seg_bce_loss: shape mismatch");
  }
  KahanSum sum;
  long long n = 0;
  for (int y = 0; y < pred_s.height(); ++y) {
    for (int x = 0; x < pred_s.width(); ++x) {
      if (!pred_s.valid_at(x, y) || !gt_s.valid_at(x, y)) continue;
      double p = std::clamp(static_cast<double>(pred_s.at(x, y)), kBceEps, 1.0 - kBceEps);
      double g = gt_s.at(x, y);
      sum.add(-(g * std::log(p) + (1.0 - g) * std::log(1.0 - p)));
      ++n;
    }
  }
  return {n > 0 ? sum.value() / n : 0.0, n};
}

ScalarGrid warp(const ScalarGrid& g, const VectorGrid& flow) {
  if (flow.channels() != 2 || flow.width() != g.width() || flow.height() != g.height()) {
    throw std::invalid_argument("warp: flow must be a 2-channel grid matching the input");
  }
  ScalarGrid out(g.width(), g.height(), 0.0f, false);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (!flow.valid_at(x, y)) continue;
      SampleResult s = g.sample_bilinear(x + flow.at(x, y, 0), y + flow.at(x, y, 1));
      if (s.valid) out.set(x, y, static_cast<float>(s.value), true);
    }
  }
  return out;
}

VectorGrid warp(const VectorGrid& g, const VectorGrid& flow) {
  if (flow.channels() != 2 || flow.width() != g.width() || flow.height() != g.height()) {
    throw std::invalid_argument("warp: flow must be a 2-channel grid matching the input");
  }
  VectorGrid out(g.width(), g.height(), g.channels(), 0.0f, false);
  std::vector<double> v(g.channels());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      if (!flow.valid_at(x, y)) continue;
      if (!g.sample_bilinear(x + flow.at(x, y, 0), y + flow.at(x, y, 1), v.data())) continue;
      for (int c = 0; c < g.channels(); ++c) out.at(x, y, c) = static_cast<float>(v[c]);
      out.set_valid(x, y, true);
    }
  }
  return out;
}

VectorGrid warp_normalized(const VectorGrid& normals, const VectorGrid& flow) {
  VectorGrid out = warp(normals, flow);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (!out.valid_at(x, y)) continue;
      double sq = 0.0;
      for (int c = 0; c < out.channels(); ++c) {
        double v = out.at(x, y, c);
        sq += v * v;
      }
      double norm = std::sqrt(sq);
      if (norm < 1e-6) {
        out.invalidate(x, y);
      } else {
        for (int c = 0; c < out.channels(); ++c) {
          out.at(x, y, c) = static_cast<float>(out.at(x, y, c) / norm);
        }
      }
    }
  }
  return out;
}

ScalarGrid cycle_mask(const VectorGrid& fwd, const VectorGrid& bwd, double tau_c) {
  if (fwd.channels() != 2 || bwd.channels() != 2 || fwd.width() != bwd.width() ||
      fwd.height() != bwd.height()) {
    throw std::invalid_argument("cycle_mask: expect matching 2-channel flows");
  }
  if (!(tau_c > 0.0)) throw std::invalid_argument("cycle_mask: tau_c must be > 0");
  ScalarGrid out(fwd.width(), fwd.height(), 0.0f, true);
  double back[2];
  for (int y = 0; y < fwd.height(); ++y) {
    for (int x = 0; x < fwd.width(); ++x) {
      if (!fwd.valid_at(x, y)) continue;
      double u = fwd.at(x, y, 0), v = fwd.at(x, y, 1);
      if (!bwd.sample_bilinear(x + u, y + v, back)) continue;
      double rx = u + back[0], ry = v + back[1];
      if (std::sqrt(rx * rx + ry * ry) <= tau_c) out.at(x, y) = 1.0f;
    }
  }
  return out;
}

ScalarGrid depth_edge_mask(const ScalarGrid& depth, const LossConfig& cfg) {
  VectorGrid grad = sobel_gradients(depth);
  ScalarGrid edges(depth.width(), depth.height(), 0.0f, true);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!grad.valid_at(x, y)) continue;
      double gx = grad.at(x, y, 0) / 8.0;
      double gy = grad.at(x, y, 1) / 8.0;
      if (std::sqrt(gx * gx + gy * gy) > cfg.edge_threshold) edges.at(x, y) = 1.0f;
    }
  }
  ScalarGrid dilated = dilate(edges, cfg.edge_dilate_radius);
  ScalarGrid out(depth.width(), depth.height(), 0.0f, true);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      out.at(x, y) = dilated.at(x, y) != 0.0f ? 0.0f : 1.0f;
    }
  }
  return out;
}

TemporalLossResult temporal_depth_loss(const ScalarGrid& dk, const ScalarGrid& dk1,
                                       const VectorGrid& fwd, const VectorGrid& bwd,
                                       const LossConfig& cfg, const ScalarGrid* edge_mask_k,
                                       const ScalarGrid* edge_mask_k1) {
  ScalarGrid own_edge_k, own_edge_k1;
  if (!edge_mask_k) {
    own_edge_k = depth_edge_mask(dk, cfg);
    edge_mask_k = &own_edge_k;
  }
  if (!edge_mask_k1) {
    own_edge_k1 = depth_edge_mask(dk1, cfg);
    edge_mask_k1 = &own_edge_k1;
  }
  ScalarGrid cyc_fwd = cycle_mask(fwd, bwd, cfg.tau_c);
  ScalarGrid cyc_bwd = cycle_mask(bwd, fwd, cfg.tau_c);

  detail::DepthWarpStats s1 = detail::depth_warp_stats(dk, dk1, fwd, &cyc_fwd, edge_mask_k);
  detail::DepthWarpStats s2 = detail::depth_warp_stats(dk1, dk, bwd, &cyc_bwd, edge_mask_k1);

  TemporalLossResult out;
  out.pixels = s1.n + s2.n;
  out.empty_mask = s1.n == 0 || s2.n == 0;
  double t1 = s1.n > 0 ? s1.sum_abs / s1.n : 0.0;
  double t2 = s2.n > 0 ? s2.sum_abs / s2.n : 0.0;
  out.value = t1 + t2;
  return out;
}

TemporalLossResult temporal_normal_loss(const VectorGrid& nk, const VectorGrid& nk1,
                                        const VectorGrid& fwd, const VectorGrid& bwd,
                                        const LossConfig& cfg, const ScalarGrid* edge_mask_k,
                                        const ScalarGrid* edge_mask_k1) {
  ScalarGrid cyc_fwd = cycle_mask(fwd, bwd, cfg.tau_c);
  ScalarGrid cyc_bwd = cycle_mask(bwd, fwd, cfg.tau_c);

  detail::NormalWarpStats s1 = detail::normal_warp_stats(nk, nk1, fwd, &cyc_fwd, edge_mask_k);
  detail::NormalWarpStats s2 = detail::normal_warp_stats(nk1, nk, bwd, &cyc_bwd, edge_mask_k1);

  TemporalLossResult out;
  out.pixels = s1.n + s2.n;
  out.empty_mask = s1.n == 0 || s2.n == 0;
  double t1 = s1.n > 0 ? s1.sum_deficit / s1.n : 0.0;
  double t2 = s2.n > 0 ? s2.sum_deficit / s2.n : 0.0;
  out.value = t1 + t2;
  return out;
}

LossBreakdown stage1_loss(const FramePrediction& pred, const FrameGroundTruth& gt,
                          const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  ScalarGrid weights = supervision_weights(gt.mask);
  NormalizedDepth gt_norm = normalize_depth(gt.depth);
  out.degenerate_gt_depth = gt_norm.degenerate;

  DepthLossParts d = depth_loss(pred.depth, gt_norm.grid, weights, cfg);
  out.depth = d.rms;
  out.depth_grad = d.grad;
  out.depth_pixels = d.pixels;
  out.degenerate_alignment = d.alignment.degenerate;
  out.negative_scale = d.alignment.negative_scale;

  MeanResult nb = normal_base_loss(pred.normal, gt.normal, weights);
  out.normal_base = nb.value;
  out.normal_pixels = nb.pixels;

  ScalarGrid we = edge_weight(gt.normal, cfg.eta);
  NormalRegParts nr = normal_reg_losses(pred.normal, gt.normal, we, weights, cfg);
  out.normal_grad = nr.grad;
  out.normal_lap = nr.lap;
  out.normal_grad_pixels = nr.grad_pixels;
  out.normal_lap_pixels = nr.lap_pixels;

  MeanResult s = seg_bce_loss(pred.seg, gt.mask);
  out.seg = s.value;
  out.seg_pixels = s.pixels;

  out.total = out.recombine(cfg);
  return out;
}

LossBreakdown stage2_loss(std::span<const FramePrediction> preds,
                          std::span<const FrameGroundTruth> gts,
                          std::span<const VectorGrid> flows_fwd,
                          std::span<const VectorGrid> flows_bwd, const LossConfig& cfg) {
  cfg.validate();
  if (preds.size() < 2) throw std::invalid_argument("stage2_loss: need at least 2 frames");
  if (gts.size() != preds.size()) throw std::invalid_argument("stage2_loss: pred/gt count mismatch");
  if (flows_fwd.size() != preds.size() - 1 || flows_bwd.size() != preds.size() - 1) {
    throw std::invalid_argument("stage2_loss: need frame_count-1 flows per direction");
  }

  LossBreakdown out;
  std::size_t F = preds.size();
  for (std::size_t k = 0; k < F; ++k) {
    LossBreakdown b = stage1_loss(preds[k], gts[k], cfg);
    out.depth += b.depth;
    out.depth_grad += b.depth_grad;
    out.normal_base += b.normal_base;
    out.normal_grad += b.normal_grad;
    out.normal_lap += b.normal_lap;
    out.seg += b.seg;
    out.depth_pixels += b.depth_pixels;
    out.normal_pixels += b.normal_pixels;
    out.normal_grad_pixels += b.normal_grad_pixels;
    out.normal_lap_pixels += b.normal_lap_pixels;
    out.seg_pixels += b.seg_pixels;
    out.degenerate_alignment = out.degenerate_alignment || b.degenerate_alignment;
    out.negative_scale = out.negative_scale || b.negative_scale;
    out.degenerate_gt_depth = out.degenerate_gt_depth || b.degenerate_gt_depth;
  }
  out.depth /= F;
  out.depth_grad /= F;
  out.normal_base /= F;
  out.normal_grad /= F;
  out.normal_lap /= F;
  out.seg /= F;

  std::vector<ScalarGrid> edges(F);
  for (std::size_t k = 0; k < F; ++k) edges[k] = depth_edge_mask(preds[k].depth, cfg);

  std::size_t P = F - 1;
  for (std::size_t k = 0; k < P; ++k) {
    TemporalLossResult td = temporal_depth_loss(preds[k].depth, preds[k + 1].depth, flows_fwd[k],
                                                flows_bwd[k], cfg, &edges[k], &edges[k + 1]);
    TemporalLossResult tn = temporal_normal_loss(preds[k].normal, preds[k + 1].normal,
                                                 flows_fwd[k], flows_bwd[k], cfg, &edges[k],
                                                 &edges[k + 1]);
    out.temp_depth += td.value;
    out.temp_normal += tn.value;
    out.temp_depth_pixels += td.pixels;
    out.temp_normal_pixels += tn.pixels;
    out.empty_temporal_mask = out.empty_temporal_mask || td.empty_mask || tn.empty_mask;
  }
  out.temp_depth /= P;
  out.temp_normal /= P;

  out.total = out.recombine(cfg);
  return out;
}

}  // namespace tcdp
