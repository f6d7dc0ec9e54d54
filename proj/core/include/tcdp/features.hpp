#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tcdp {

// Dense C x H x W feature block, channel-major ("values[c][h][w]"), double
// precision so analytic gradients can be checked against finite differences.
struct FeatureVolume {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  FeatureVolume() = default;
  FeatureVolume(int c, int h, int w, double fill = 0.0);
  std::size_t idx(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * height + h) * width + w;
  }
  double at(int c, int h, int w) const { return values[idx(c, h, w)]; }
  double& at(int c, int h, int w) { return values[idx(c, h, w)]; }
  std::size_t size() const { return values.size(); }
};

// Global average pooling: per-channel spatial mean.
std::vector<double> gap(const FeatureVolume& f);

enum class Activation { Relu, Gelu };

// Two-layer bottleneck of the channel-weighting block. w1 is hidden x C,
// w2 is C x hidden, both row-major.
struct CwaParams {
  int channels = 0;
  int hidden = 0;  // default choice elsewhere: ceil(channels / 4)
  Activation activation = Activation::Relu;
  std::vector<double> w1, b1;  // hidden x C, hidden
  std::vector<double> w2, b2;  // C x hidden, C

  void validate() const;
  static CwaParams from_json_text(const std::string& text);
  static CwaParams load_json(const std::string& path);
  std::string to_json_text() const;
  void save_json(const std::string& path) const;
};

inline int cwa_default_hidden(int channels) { return (channels + 3) / 4; }

struct CwaResult {
  FeatureVolume output;             // a_c * F(c, h, w)
  std::vector<double> attention;    // a, in (0, 1)^C
  std::vector<double> pooled;       // q = gap(F)
  std::vector<double> preactivation;  // w1 q + b1, exposed for harness conditioning
};

// Channel re-weighting: q = gap(F), a = sigmoid(w2 act(w1 q + b1) + b2),
// output(c, h, w) = a_c * F(c, h, w) evaluated exactly in that form.
CwaResult cwa_forward(const FeatureVolume& f, const CwaParams& p);

struct CwaGradients {
  FeatureVolume d_input;
  std::vector<double> d_w1, d_b1, d_w2, d_b2;
};

// Reverse-mode gradient of the scalar L = <upstream, cwa_forward(f).output>
// with respect to the input volume and all parameters.
CwaGradients cwa_grad(const FeatureVolume& f, const CwaParams& p, const FeatureVolume& upstream);

// Bilinear resize with the half-pixel (align-corners-false) mapping
// src = (dst + 0.5) * size_in / size_out - 0.5, edge-clamped. Constant
// inputs are preserved exactly.
FeatureVolume bilinear_resize(const FeatureVolume& f, int out_height, int out_width);

// 1x1 projection of a prior feature block: out(o, h, w) = sum_i P[o][i] *
// z(i, h, w) + b[o], with P row-major C_out x C_in.
struct PriorProjection {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;  // C_out x C_in
  std::vector<double> bias;    // C_out

  void validate() const;
  static PriorProjection from_json_text(const std::string& text);
  static PriorProjection load_json(const std::string& path);
  std::string to_json_text() const;
  void save_json(const std::string& path) const;
};

FeatureVolume project_prior(const FeatureVolume& z, const PriorProjection& p);

// Residual prior injection: base + bilinear_resize(project_prior(z), base H/W).
FeatureVolume prior_fuse(const FeatureVolume& base, const FeatureVolume& z,
                         const PriorProjection& p);

// Deterministic test-instance generators (splitmix-style seeding).
FeatureVolume random_feature_volume(int c, int h, int w, std::uint64_t seed,
                                    double lo = -1.0, double hi = 1.0);
CwaParams random_cwa_params(int channels, int hidden, std::uint64_t seed);
PriorProjection random_prior_projection(int in_channels, int out_channels, std::uint64_t seed);

struct GradCheckOptions {
  double step = 1e-4;    // central-difference half-width
  bool corrupt = false;  // self-test: damage one analytic component, the check must fail
};

// Compares cwa_grad against central finite differences of
// L = <upstream, cwa_forward(input).output> over every input coordinate and
// every parameter. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1). When a ReLU preactivation sits within 1e-3
// of its kink, b1 is nudged by +0.01 first so the difference quotient stays
// one-sided.
double cwa_gradcheck(const CwaParams& params, const FeatureVolume& input,
                     const FeatureVolume& upstream, const GradCheckOptions& opts = {});

}  // namespace tcdp
