#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samg/backend.hpp"
#include "samg/identify.hpp"
#include "samg/segment.hpp"
#include "samg/weights.hpp"

namespace samg {

struct AdaptationConfig {
  int steps = 1000;
  double learning_rate = 1e-3;
  AdaptedWeights init{};

  void validate() const {
    if (steps < 0) throw Error(Error::Kind::kInvalidArgument, "adaptation steps must be >= 0");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
      throw Error(Error::Kind::kInvalidArgument, "adaptation learning rate must be a positive finite number");
  }
};

/// Frozen candidates plus the supervision mask at logits resolution.
struct AdaptationSample {
  MaskCandidates candidates;
  BinaryMask target;  // width = logits cols, height = logits rows
};

namespace detail {

inline void check_sample(const AdaptationSample& s) {
  if (s.target.width() != s.candidates.cols() || s.target.height() != s.candidates.rows())
    throw Error(Error::Kind::kDimensionMismatch, "adaptation target must match the logits resolution");
}

// log(1 + e^m) - y*m, stable for large |m|.
inline double bce_with_logit(double m, bool y) {
  return std::max(m, 0.0) - (y ? m : 0.0) + std::log1p(std::exp(-std::abs(m)));
}

inline double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

}  // namespace detail

/// Mean sigmoid binary cross-entropy of the weighted logits over every cell of every sample.
inline double adaptation_loss(std::span<const AdaptationSample> samples, const AdaptedWeights& w) {
  const auto k = mixing_coefficients(w);
  double total = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    detail::check_sample(s);
    auto m1 = s.candidates.logits[0].values(), m2 = s.candidates.logits[1].values(), m3 = s.candidates.logits[2].values();
    auto y = s.target.bits();
    for (std::size_t i = 0; i < m1.size(); ++i) total += detail::bce_with_logit(k[0] * m1[i] + k[1] * m2[i] + k[2] * m3[i], y[i] != 0);
    n += m1.size();
  }
  if (n == 0) throw Error(Error::Kind::kInvalidArgument, "adaptation loss over zero cells");
  return total / static_cast<double>(n);
}

inline double adaptation_loss(const MaskCandidates& mc, const AdaptedWeights& w, const BinaryMask& gt) {
  const AdaptationSample s{mc, gt};
  return adaptation_loss(std::span<const AdaptationSample>(&s, 1), w);
}

/// Closed-form gradient: dL/dwi = mean (sigmoid(M) - y) * (Mi - M3). The
/// candidates are constants, so nothing is differentiated through the decoder.
inline std::pair<double, double> loss_gradient(std::span<const AdaptationSample> samples, const AdaptedWeights& w) {
  const auto k = mixing_coefficients(w);
  double g1 = 0, g2 = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    detail::check_sample(s);
    auto m1 = s.candidates.logits[0].values(), m2 = s.candidates.logits[1].values(), m3 = s.candidates.logits[2].values();
    auto y = s.target.bits();
    for (std::size_t i = 0; i < m1.size(); ++i) {
      const double m = k[0] * m1[i] + k[1] * m2[i] + k[2] * m3[i];
      const double r = detail::sigmoid(m) - (y[i] ? 1.0 : 0.0);
      g1 += r * (static_cast<double>(m1[i]) - m3[i]);
      g2 += r * (static_cast<double>(m2[i]) - m3[i]);
    }
    n += m1.size();
  }
  if (n == 0) throw Error(Error::Kind::kInvalidArgument, "adaptation gradient over zero cells");
  return {g1 / static_cast<double>(n), g2 / static_cast<double>(n)};
}

inline std::pair<double, double> loss_gradient(const MaskCandidates& mc, const AdaptedWeights& w, const BinaryMask& gt) {
  const AdaptationSample s{mc, gt};
  return loss_gradient(std::span<const AdaptationSample>(&s, 1), w);
}

/// Upper bound on the gradient's Lipschitz constant: sigmoid' <= 1/4, so the
/// Hessian is dominated by mean((M1-M3)^2 + (M2-M3)^2) / 4.
inline double gradient_lipschitz_bound(std::span<const AdaptationSample> samples) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    auto m1 = s.candidates.logits[0].values(), m2 = s.candidates.logits[1].values(), m3 = s.candidates.logits[2].values();
    for (std::size_t i = 0; i < m1.size(); ++i) {
      const double a = static_cast<double>(m1[i]) - m3[i], b = static_cast<double>(m2[i]) - m3[i];
      acc += a * a + b * b;
    }
    n += m1.size();
  }
  return n ? 0.25 * acc / static_cast<double>(n) : 0.0;
}

struct AdaptationResult {
  AdaptedWeights weights;
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
};

/// Plain gradient descent on (w1, w2) from config.init.
inline AdaptationResult optimize_weights(std::span<const AdaptationSample> samples, const AdaptationConfig& config) {
  config.validate();
  AdaptationResult res;
  AdaptedWeights w = config.init;
  res.loss_trace.reserve(static_cast<std::size_t>(config.steps) + 1);
  for (int step = 0; step <= config.steps; ++step) {
    const double loss = adaptation_loss(samples, w);
    if (!std::isfinite(loss))
      throw Error(Error::Kind::kNumeric, "non-finite adaptation loss at step " + std::to_string(step));
    res.loss_trace.push_back(loss);
    if (step == config.steps) break;
    const auto [g1, g2] = loss_gradient(samples, w);
    w.w1 -= config.learning_rate * g1;
    w.w2 -= config.learning_rate * g2;
  }
  res.weights = w;
  res.initial_loss = res.loss_trace.front();
  res.final_loss = res.loss_trace.back();
  return res;
}

/// Pass-1 candidates for every object of the reference frame, each paired with
/// its object mask resampled to logits resolution.
inline std::vector<AdaptationSample> reference_samples(const Image& image, const std::vector<BinaryMask>& gt_masks,
                                                       const PointFeatureBundle& bundle, const EncoderBackend& backend) {
  if (gt_masks.size() != bundle.objects.size())
    throw Error(Error::Kind::kValidation, "adaptation needs one mask per bundle object (" +
                                              std::to_string(bundle.objects.size()) + " objects, " +
                                              std::to_string(gt_masks.size()) + " masks)");
  const FrameFeatures features = encode_frame(image, backend);
  std::vector<AdaptationSample> samples;
  for (std::size_t i = 0; i < bundle.objects.size(); ++i) {
    const auto& m = gt_masks[i];
    if (m.width() != image.width() || m.height() != image.height())
      throw Error(Error::Kind::kDimensionMismatch, "adaptation mask dimensions differ from the image");
    const PromptSet prompts = select_prompts(object_maps(bundle.objects[i], features));
    MaskCandidates mc = detail::run_pass(backend, features.seg, prompts, 1);
    BinaryMask target = resample_nearest(m, mc.cols(), mc.rows());
    samples.push_back({std::move(mc), std::move(target)});
  }
  return samples;
}

/// One-shot adaptation on the reference pair. Only bundle.weights is written.
inline AdaptationResult adapt_weights(const Image& image, const std::vector<BinaryMask>& gt_masks,
                                      PointFeatureBundle& bundle, const EncoderBackend& backend,
                                      const AdaptationConfig& config = {}) {
  config.validate();
  const auto samples = reference_samples(image, gt_masks, bundle, backend);
  AdaptationResult res = optimize_weights(samples, config);
  bundle.weights = res.weights;
  return res;
}

}  // namespace samg
