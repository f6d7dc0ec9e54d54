#include "tcdp/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tcdp/numeric.hpp"

namespace tcdp {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double uniform(std::uint64_t& state, double lo, double hi) {
  return lo + unit_double(splitmix64(state)) * (hi - lo);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? x : 0.0;
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));  // exact GELU
}

double activate_grad(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? 1.0 : 0.0;
  double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
  return cdf + x * pdf;
}

std::string activation_name(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }

Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text << "\n";
}

}  // namespace

FeatureVolume::FeatureVolume(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
  if (c < 1 || h < 1 || w < 1) throw std::invalid_argument("FeatureVolume: bad dimensions");
  values.assign(static_cast<std::size_t>(c) * h * w, fill);
}

std::vector<double> gap(const FeatureVolume& f) {
  std::vector<double> q(f.channels, 0.0);
  double inv = 1.0 / (static_cast<double>(f.height) * f.width);
  for (int c = 0; c < f.channels; ++c) {
    KahanSum s;
    for (int h = 0; h < f.height; ++h) {
      for (int w = 0; w < f.width; ++w) s.add(f.at(c, h, w));
    }
    q[c] = s.value() * inv;
  }
  return q;
}

void CwaParams::validate() const {
  if (channels < 1 || hidden < 1) throw std::invalid_argument("CwaParams: bad dimensions");
  auto need = [](std::size_t got, std::size_t want, const char* what) {
    if (got != want) throw std::invalid_argument(std::string("CwaParams: ") + what + " size mismatch");
  };
  need(w1.size(), static_cast<std::size_t>(hidden) * channels, "w1");
  need(b1.size(), static_cast<std::size_t>(hidden), "b1");
  need(w2.size(), static_cast<std::size_t>(channels) * hidden, "w2");
  need(b2.size(), static_cast<std::size_t>(channels), "b2");
}

CwaResult cwa_forward(const FeatureVolume& f, const CwaParams& p) {
  p.validate();
  if (f.channels != p.channels) throw std::invalid_argument("cwa_forward: channel mismatch");

  CwaResult r;
  r.pooled = gap(f);
  r.preactivation.assign(p.hidden, 0.0);
  for (int j = 0; j < p.hidden; ++j) {
    double acc = p.b1[j];
    for (int c = 0; c < p.channels; ++c) {
      acc += p.w1[static_cast<std::size_t>(j) * p.channels + c] * r.pooled[c];
    }
    r.preactivation[j] = acc;
  }
  std::vector<double> hidden_act(p.hidden);
  for (int j = 0; j < p.hidden; ++j) hidden_act[j] = activate(p.activation, r.preactivation[j]);

  r.attention.assign(p.channels, 0.0);
  for (int c = 0; c < p.channels; ++c) {
    double acc = p.b2[c];
    for (int j = 0; j < p.hidden; ++j) {
      acc += p.w2[static_cast<std::size_t>(c) * p.hidden + j] * hidden_act[j];
    }
    r.attention[c] = sigmoid(acc);
  }

  // Scaling is applied exactly in this per-channel product form so the
  // identity output == a_c * input holds bitwise.
  r.output = FeatureVolume(f.channels, f.height, f.width);
  for (int c = 0; c < f.channels; ++c) {
    double a = r.attention[c];
    for (int h = 0; h < f.height; ++h) {
      for (int w = 0; w < f.width; ++w) r.output.at(c, h, w) = a * f.at(c, h, w);
    }
  }
  return r;
}

CwaGradients cwa_grad(const FeatureVolume& f, const CwaParams& p, const FeatureVolume& upstream) {
  p.validate();
  if (f.channels != p.channels) throw std::invalid_argument("cwa_grad: channel mismatch");
  if (upstream.channels != f.channels || upstream.height != f.height ||
      upstream.width != f.width) {
    throw std::invalid_argument("cwa_grad: upstream shape mismatch");
  }

  CwaResult fwd = cwa_forward(f, p);
  std::vector<double> hidden_act(p.hidden);
  for (int j = 0; j < p.hidden; ++j) hidden_act[j] = activate(p.activation, fwd.preactivation[j]);

  // dL/da_c = sum_hw U(c,h,w) F(c,h,w)
  std::vector<double> d_a(p.channels, 0.0);
  for (int c = 0; c < p.channels; ++c) {
    KahanSum s;
    for (int h = 0; h < f.height; ++h) {
      for (int w = 0; w < f.width; ++w) s.add(upstream.at(c, h, w) * f.at(c, h, w));
    }
    d_a[c] = s.value();
  }

  // Through the sigmoid: dL/do_c = dL/da_c * a (1 - a)
  std::vector<double> d_o(p.channels);
  for (int c = 0; c < p.channels; ++c) {
    d_o[c] = d_a[c] * fwd.attention[c] * (1.0 - fwd.attention[c]);
  }

  CwaGradients g;
  g.d_b2 = d_o;
  g.d_w2.assign(p.w2.size(), 0.0);
  std::vector<double> d_hidden(p.hidden, 0.0);
  for (int c = 0; c < p.channels; ++c) {
    for (int j = 0; j < p.hidden; ++j) {
      g.d_w2[static_cast<std::size_t>(c) * p.hidden + j] = d_o[c] * hidden_act[j];
      d_hidden[j] += d_o[c] * p.w2[static_cast<std::size_t>(c) * p.hidden + j];
    }
  }

  std::vector<double> d_pre(p.hidden);
  for (int j = 0; j < p.hidden; ++j) {
    d_pre[j] = d_hidden[j] * activate_grad(p.activation, fwd.preactivation[j]);
  }

  g.d_b1 = d_pre;
  g.d_w1.assign(p.w1.size(), 0.0);
  std::vector<double> d_q(p.channels, 0.0);
  for (int j = 0; j < p.hidden; ++j) {
    for (int c = 0; c < p.channels; ++c) {
      g.d_w1[static_cast<std::size_t>(j) * p.channels + c] = d_pre[j] * fwd.pooled[c];
      d_q[c] += d_pre[j] * p.w1[static_cast<std::size_t>(j) * p.channels + c];
    }
  }

  // dL/dF has a direct path (U * a) and a pooled path (d_q / (H W)).
  g.d_input = FeatureVolume(f.channels, f.height, f.width);
  double inv_hw = 1.0 / (static_cast<double>(f.height) * f.width);
  for (int c = 0; c < f.channels; ++c) {
    double pooled_term = d_q[c] * inv_hw;
    for (int h = 0; h < f.height; ++h) {
      for (int w = 0; w < f.width; ++w) {
        g.d_input.at(c, h, w) = upstream.at(c, h, w) * fwd.attention[c] + pooled_term;
      }
    }
  }
  return g;
}

FeatureVolume bilinear_resize(const FeatureVolume& f, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) {
    throw std::invalid_argument("bilinear_resize: bad output size");
  }
  FeatureVolume out(f.channels, out_height, out_width);
  double sy = static_cast<double>(f.height) / out_height;
  double sx = static_cast<double>(f.width) / out_width;
  for (int oy = 0; oy < out_height; ++oy) {
    double src_y = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(f.height - 1));
    int y0 = std::min(static_cast<int>(std::floor(src_y)), f.height - 1);
    int y1 = std::min(y0 + 1, f.height - 1);
    double fy = src_y - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      double src_x = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(f.width - 1));
      int x0 = std::min(static_cast<int>(std::floor(src_x)), f.width - 1);
      int x1 = std::min(x0 + 1, f.width - 1);
      double fx = src_x - x0;
      for (int c = 0; c < f.channels; ++c) {
        double v = (1.0 - fy) * ((1.0 - fx) * f.at(c, y0, x0) + fx * f.at(c, y0, x1)) +
                   fy * ((1.0 - fx) * f.at(c, y1, x0) + fx * f.at(c, y1, x1));
        out.at(c, oy, ox) = v;
      }
    }
  }
  return out;
}

void PriorProjection::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("PriorProjection: bad dimensions");
  }
  if (weight.size() != static_cast<std::size_t>(out_channels) * in_channels) {
    throw std::invalid_argument("PriorProjection: weight size mismatch");
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("PriorProjection: bias size mismatch");
  }
}

FeatureVolume project_prior(const FeatureVolume& z, const PriorProjection& p) {
  p.validate();
  if (z.channels != p.in_channels) throw std::invalid_argument("project_prior: channel mismatch");
  FeatureVolume out(p.out_channels, z.height, z.width);
  for (int o = 0; o < p.out_channels; ++o) {
    for (int h = 0; h < z.height; ++h) {
      for (int w = 0; w < z.width; ++w) {
        double acc = p.bias[o];
        for (int i = 0; i < p.in_channels; ++i) {
          acc += p.weight[static_cast<std::size_t>(o) * p.in_channels + i] * z.at(i, h, w);
        }
        out.at(o, h, w) = acc;
      }
    }
  }
  return out;
}

FeatureVolume prior_fuse(const FeatureVolume& base, const FeatureVolume& z,
                         const PriorProjection& p) {
  if (p.out_channels != base.channels) {
    throw std::invalid_argument("prior_fuse: projection does not target the base channels");
  }
  FeatureVolume projected = project_prior(z, p);
  FeatureVolume resized = bilinear_resize(projected, base.height, base.width);
  FeatureVolume out = base;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += resized.values[i];
  return out;
}

CwaParams CwaParams::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("CwaParams: invalid JSON: ") + e.what());
  }
  CwaParams p;
  try {
    p.channels = j.at("channels").get<int>();
    p.hidden = j.at("hidden").get<int>();
    p.activation = activation_from_name(j.value("activation", "relu"));
    p.w1 = j.at("w1").get<std::vector<double>>();
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w2 = j.at("w2").get<std::vector<double>>();
    p.b2 = j.at("b2").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("CwaParams: bad schema: ") + e.what());
  }
  p.validate();
  return p;
}

std::string CwaParams::to_json_text() const {
  json j;
  j["channels"] = channels;
  j["hidden"] = hidden;
  j["activation"] = activation_name(activation);
  j["w1"] = w1;
  j["b1"] = b1;
  j["w2"] = w2;
  j["b2"] = b2;
  return j.dump(2);
}

CwaParams CwaParams::load_json(const std::string& path) {
  return from_json_text(read_text_file(path));
}

void CwaParams::save_json(const std::string& path) const { write_text_file(path, to_json_text()); }

PriorProjection PriorProjection::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("PriorProjection: invalid JSON: ") + e.what());
  }
  PriorProjection p;
  try {
    p.in_channels = j.at("in_channels").get<int>();
    p.out_channels = j.at("out_channels").get<int>();
    p.weight = j.at("weight").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("PriorProjection: bad schema: ") + e.what());
  }
  p.validate();
  return p;
}

std::string PriorProjection::to_json_text() const {
  json j;
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  j["weight"] = weight;
  j["bias"] = bias;
  return j.dump(2);
}

PriorProjection PriorProjection::load_json(const std::string& path) {
  return from_json_text(read_text_file(path));
}

void PriorProjection::save_json(const std::string& path) const {
  write_text_file(path, to_json_text());
}

FeatureVolume random_feature_volume(int c, int h, int w, std::uint64_t seed, double lo, double hi) {
  FeatureVolume f(c, h, w);
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ull + 0x243F6A8885A308D3ull;
  for (double& v : f.values) v = uniform(state, lo, hi);
  return f;
}

CwaParams random_cwa_params(int channels, int hidden, std::uint64_t seed) {
  CwaParams p;
  p.channels = channels;
  p.hidden = hidden;
  std::uint64_t state = seed * 0xD1B54A32D192ED03ull + 0x9E3779B97F4A7C15ull;
  p.w1.resize(static_cast<std::size_t>(hidden) * channels);
  p.b1.resize(hidden);
  p.w2.resize(static_cast<std::size_t>(channels) * hidden);
  p.b2.resize(channels);
  for (double& v : p.w1) v = uniform(state, -1.0, 1.0);
  for (double& v : p.b1) v = uniform(state, -0.5, 0.5);
  for (double& v : p.w2) v = uniform(state, -1.0, 1.0);
  for (double& v : p.b2) v = uniform(state, -0.5, 0.5);
  return p;
}

PriorProjection random_prior_projection(int in_channels, int out_channels, std::uint64_t seed) {
  PriorProjection p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  std::uint64_t state = seed * 0xBF58476D1CE4E5B9ull + 0x94D049BB133111EBull;
  p.weight.resize(static_cast<std::size_t>(out_channels) * in_channels);
  p.bias.resize(out_channels);
  for (double& v : p.weight) v = uniform(state, -1.0, 1.0);
  for (double& v : p.bias) v = uniform(state, -0.5, 0.5);
  return p;
}

double cwa_gradcheck(const CwaParams& params, const FeatureVolume& input,
                     const FeatureVolume& upstream, const GradCheckOptions& opts) {
  params.validate();
  if (input.channels != params.channels || upstream.channels != input.channels ||
      upstream.height != input.height || upstream.width != input.width) {
    throw std::invalid_argument("cwa_gradcheck: shape mismatch");
  }
  if (!(opts.step > 0.0)) throw std::invalid_argument("cwa_gradcheck: step must be > 0");

  CwaParams p = params;
  if (p.activation == Activation::Relu) {
    // Move preactivations off the ReLU kink so both central-difference sides
    // see the same linear piece.
    for (int tries = 0; tries < 8; ++tries) {
      std::vector<double> pre = cwa_forward(input, p).preactivation;
      bool near_kink = false;
      for (int j = 0; j < p.hidden; ++j) {
        if (std::fabs(pre[j]) < 1e-3) {
          p.b1[j] += 0.01;
          near_kink = true;
        }
      }
      if (!near_kink) break;
    }
  }

  auto loss = [&](const FeatureVolume& f, const CwaParams& q) {
    FeatureVolume out = cwa_forward(f, q).output;
    KahanSum s;
    for (std::size_t i = 0; i < out.values.size(); ++i) s.add(out.values[i] * upstream.values[i]);
    return s.value();
  };

  CwaGradients g = cwa_grad(input, p, upstream);
  if (opts.corrupt) g.d_input.values[0] += 0.01 * (1.0 + std::fabs(g.d_input.values[0]));

  double h = opts.step;
  double worst = 0.0;
  auto check = [&](double analytic, double* slot) {
    double saved = *slot;
    *slot = saved + h;
    double up = loss(input, p);
    *slot = saved - h;
    double down = loss(input, p);
    *slot = saved;
    double numeric = (up - down) / (2.0 * h);
    double rel = std::fabs(analytic - numeric) /
                 std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
    worst = std::max(worst, rel);
  };

  FeatureVolume probe = input;
  auto loss_probe = [&](std::size_t i, double delta) {
    double saved = probe.values[i];
    probe.values[i] = saved + delta;
    double v = loss(probe, p);
    probe.values[i] = saved;
    return v;
  };
  for (std::size_t i = 0; i < probe.values.size(); ++i) {
    double numeric = (loss_probe(i, h) - loss_probe(i, -h)) / (2.0 * h);
    double analytic = g.d_input.values[i];
    double rel = std::fabs(analytic - numeric) /
                 std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
    worst = std::max(worst, rel);
  }
  for (std::size_t i = 0; i < p.w1.size(); ++i) check(g.d_w1[i], &p.w1[i]);
  for (std::size_t i = 0; i < p.b1.size(); ++i) check(g.d_b1[i], &p.b1[i]);
  for (std::size_t i = 0; i < p.w2.size(); ++i) check(g.d_w2[i], &p.w2[i]);
  for (std::size_t i = 0; i < p.b2.size(); ++i) check(g.d_b2[i], &p.b2[i]);
  return worst;
}

}  // namespace tcdp
