#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "samg/backend.hpp"

namespace samg {

/// Deterministic stand-in for the real encoders and decoder.
///
/// Encoders: every cell samples the pixel at its centre and embeds it as a
/// random Fourier code of the RGB colour (an RBF-kernel code, so cosine
/// similarity falls off quickly with colour distance) concatenated with a
/// low-amplitude sinusoidal code of the normalised position. The context
/// encoder samples a 32x32 grid with an independent code and bilinearly
/// resizes it to 64x64, mirroring the real alignment path.
///
/// Decoder: colour-connected region growing from the positive points.
/// Candidate 0 grows from every positive, candidate 1 from the positives
/// that agree with the majority seed colour, candidate 2 from the first
/// positive only. Negative points veto the pixels of their grid cell in all
/// three. Scores measure colour homogeneity, so a candidate that leaked onto a
/// second colour scores lower. Box and prior logits are accepted and ignored.
class SyntheticBackend final : public EncoderBackend {
 public:
  struct Options {
    int segmenter_dim = 256;
    int context_dim = 768;
    int context_raw_side = 32;
    std::uint64_t seed = 0x5A4D'2024ULL;
    float positional_amplitude = 0.05f;
    float color_bandwidth = 0.08f;  // RBF bandwidth in unit-RGB
    int region_tolerance = 28;      // max per-channel distance to the seed colour
    float logit_magnitude = 8.0f;
  };

  SyntheticBackend() : SyntheticBackend(Options{}) {}
  explicit SyntheticBackend(Options opts)
      : opts_(opts),
        seg_code_(make_code(opts.segmenter_dim, opts.seed, opts.positional_amplitude, opts.color_bandwidth)),
        ctx_code_(make_code(opts.context_dim, opts.seed ^ 0x9E37'79B9'7F4A'7C15ULL, opts.positional_amplitude,
                            opts.color_bandwidth)) {}

  std::string name() const override { return "synthetic"; }
  int segmenter_dim() const override { return opts_.segmenter_dim; }
  int context_dim() const override { return opts_.context_dim; }
  const Options& options() const noexcept { return opts_; }

  ImageEmbedding encode_segmenter(const Image& image) const override {
    ImageEmbedding emb;
    emb.features = sample_grid(image, kGridSide, seg_code_);
    emb.backend_state = std::make_shared<const Image>(image);
    return emb;
  }

  FeatureGrid encode_context(const Image& image) const override {
    FeatureGrid raw = sample_grid(image, opts_.context_raw_side, ctx_code_);
    return bilinear_resize(raw, kGridSide, kGridSide);
  }

  MaskCandidates decode(const ImageEmbedding& embedding, const PromptSet& prompts) const override {
    if (prompts.positives.empty())
      throw Error(Error::Kind::kInvalidArgument, "decode requires at least one positive point");
    auto frame = std::static_pointer_cast<const Image>(embedding.backend_state);
    if (!frame) throw Error(Error::Kind::kBackend, "synthetic decoder received an embedding from another backend");
    const Image& img = *frame;
    const int w = img.width(), h = img.height();

    std::vector<PixelPoint> seeds;
    seeds.reserve(prompts.positives.size());
    for (const auto& p : prompts.positives) seeds.push_back(to_pixel(p, w, h));

    // Greedy clustering of seed colours; the largest cluster wins, earliest on ties.
    std::vector<int> cluster(seeds.size(), -1);
    std::vector<int> cluster_size;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (cluster[i] >= 0) continue;
      const int id = static_cast<int>(cluster_size.size());
      cluster_size.push_back(0);
      for (std::size_t j = i; j < seeds.size(); ++j) {
        if (cluster[j] < 0 && color_distance(img.pixel(seeds[i].y, seeds[i].x), img.pixel(seeds[j].y, seeds[j].x)) <=
                                  opts_.region_tolerance) {
          cluster[j] = id;
          ++cluster_size[static_cast<std::size_t>(id)];
        }
      }
    }
    int majority = 0;
    for (std::size_t k = 1; k < cluster_size.size(); ++k)
      if (cluster_size[k] > cluster_size[static_cast<std::size_t>(majority)]) majority = static_cast<int>(k);

    std::vector<std::uint8_t> all(static_cast<std::size_t>(w) * h, 0), agree(all.size(), 0), first(all.size(), 0);
    std::unordered_map<std::uint32_t, std::vector<std::uint8_t>> grown;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const std::uint32_t key = static_cast<std::uint32_t>(seeds[i].y) * static_cast<std::uint32_t>(w) +
                                static_cast<std::uint32_t>(seeds[i].x);
      auto it = grown.find(key);
      if (it == grown.end()) it = grown.emplace(key, grow_region(img, seeds[i])).first;
      const auto& region = it->second;
      for (std::size_t k = 0; k < region.size(); ++k) {
        if (!region[k]) continue;
        all[k] = 1;
        if (cluster[i] == majority) agree[k] = 1;
        if (i == 0) first[k] = 1;
      }
    }

    std::vector<std::uint8_t> veto(all.size(), 0);
    for (const auto& n : prompts.negatives) {
      const int cr = cell_of(n.y, kDecoderInputSide), cc = cell_of(n.x, kDecoderInputSide);
      for (int r = 0; r < h; ++r) {
        if ((r * kGridSide) / h != cr) continue;
        for (int c = 0; c < w; ++c)
          if ((c * kGridSide) / w == cc) veto[static_cast<std::size_t>(r) * w + c] = 1;
      }
    }

    MaskCandidates out;
    const std::vector<std::uint8_t>* sets[kCandidateCount] = {&all, &agree, &first};
    for (int k = 0; k < kCandidateCount; ++k) {
      LogitGrid g(h, w, -opts_.logit_magnitude);
      auto vals = g.values();
      const auto& s = *sets[k];
      for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] && !veto[i]) vals[i] = opts_.logit_magnitude;
      out.scores[static_cast<std::size_t>(k)] = homogeneity(img, g);
      out.logits[static_cast<std::size_t>(k)] = std::move(g);
    }
    return out;
  }

 private:
  struct Code {
    int dim = 0;
    int color_dims = 0;
    int pos_dims = 0;
    float color_scale = 0.0f;
    float pos_scale = 0.0f;
    std::vector<float> omega;  // color_dims x 3
    std::vector<float> phase;  // color_dims
  };

  static Code make_code(int dim, std::uint64_t seed, float pos_amplitude, float bandwidth) {
    if (dim < 1) throw Error(Error::Kind::kInvalidArgument, "synthetic encoder dim must be >= 1");
    Code code;
    code.dim = dim;
    code.pos_dims = pos_amplitude > 0.0f && dim >= 64 ? (dim / 16) / 4 * 4 : 0;
    code.color_dims = dim - code.pos_dims;
    code.color_scale = std::sqrt(2.0f / static_cast<float>(code.color_dims));
    code.pos_scale = code.pos_dims > 0 ? pos_amplitude / std::sqrt(code.pos_dims / 2.0f) : 0.0f;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f / bandwidth);
    std::uniform_real_distribution<float> uniform(0.0f, 2.0f * std::numbers::pi_v<float>);
    code.omega.resize(static_cast<std::size_t>(code.color_dims) * 3);
    code.phase.resize(static_cast<std::size_t>(code.color_dims));
    for (auto& o : code.omega) o = normal(rng);
    for (auto& p : code.phase) p = uniform(rng);
    return code;
  }

  static void embed_color(const Code& code, const std::uint8_t* rgb, std::span<float> dst) {
    const float r = rgb[0] / 255.0f, g = rgb[1] / 255.0f, b = rgb[2] / 255.0f;
    for (int k = 0; k < code.color_dims; ++k) {
      const float* o = &code.omega[static_cast<std::size_t>(k) * 3];
      dst[static_cast<std::size_t>(k)] =
          code.color_scale * std::cos(o[0] * r + o[1] * g + o[2] * b + code.phase[static_cast<std::size_t>(k)]);
    }
  }

  static void embed_position(const Code& code, float y, float x, std::span<float> dst) {
    for (int q = 0; q < code.pos_dims / 4; ++q) {
      const float f = std::numbers::pi_v<float> * static_cast<float>(q + 1);
      float* p = &dst[static_cast<std::size_t>(code.color_dims + 4 * q)];
      p[0] = code.pos_scale * std::sin(f * y);
      p[1] = code.pos_scale * std::cos(f * y);
      p[2] = code.pos_scale * std::sin(f * x);
      p[3] = code.pos_scale * std::cos(f * x);
    }
  }

  static FeatureGrid sample_grid(const Image& image, int side, const Code& code) {
    FeatureGrid grid(side, side, code.dim);
    std::unordered_map<std::uint32_t, std::vector<float>> cache;
    const int w = image.width(), h = image.height();
    for (int r = 0; r < side; ++r) {
      const int py = static_cast<int>((static_cast<long long>(2 * r + 1) * h) / (2LL * side));
      for (int c = 0; c < side; ++c) {
        const int px = static_cast<int>((static_cast<long long>(2 * c + 1) * w) / (2LL * side));
        const std::uint8_t* rgb = image.pixel(py, px);
        const std::uint32_t key = (std::uint32_t{rgb[0]} << 16) | (std::uint32_t{rgb[1]} << 8) | rgb[2];
        auto it = cache.find(key);
        if (it == cache.end()) {
          std::vector<float> v(static_cast<std::size_t>(code.color_dims));
          embed_color(code, rgb, v);
          it = cache.emplace(key, std::move(v)).first;
        }
        auto dst = grid.cell(r, c);
        std::copy(it->second.begin(), it->second.end(), dst.begin());
        embed_position(code, (py + 0.5f) / h, (px + 0.5f) / w, dst);
      }
    }
    return grid;
  }

  static int color_distance(const std::uint8_t* a, const std::uint8_t* b) {
    int d = 0;
    for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(int{a[k]} - int{b[k]}));
    return d;
  }

  static int cell_of(float coord, int side) {
    const int c = static_cast<int>(std::floor(coord * kGridSide / side));
    return std::clamp(c, 0, kGridSide - 1);
  }

  static PixelPoint to_pixel(const InputPoint& p, int w, int h) {
    const int x = std::clamp(static_cast<int>(std::floor(p.x * w / kDecoderInputSide)), 0, w - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.y * h / kDecoderInputSide)), 0, h - 1);
    return {x, y};
  }

  std::vector<std::uint8_t> grow_region(const Image& img, PixelPoint seed) const {
    const int w = img.width(), h = img.height();
    std::vector<std::uint8_t> in(static_cast<std::size_t>(w) * h, 0);
    const std::uint8_t* ref = img.pixel(seed.y, seed.x);
    std::vector<PixelPoint> stack{seed};
    in[static_cast<std::size_t>(seed.y) * w + seed.x] = 1;
    while (!stack.empty()) {
      const PixelPoint p = stack.back();
      stack.pop_back();
      const PixelPoint nbrs[4] = {{p.x - 1, p.y}, {p.x + 1, p.y}, {p.x, p.y - 1}, {p.x, p.y + 1}};
      for (const auto& n : nbrs) {
        if (n.x < 0 || n.y < 0 || n.x >= w || n.y >= h) continue;
        auto& flag = in[static_cast<std::size_t>(n.y) * w + n.x];
        if (flag || color_distance(img.pixel(n.y, n.x), ref) > opts_.region_tolerance) continue;
        flag = 1;
        stack.push_back(n);
      }
    }
    return in;
  }

  static float homogeneity(const Image& img, const LogitGrid& g) {
    double sum[3] = {0, 0, 0};
    std::size_t n = 0;
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c)
        if (g(r, c) > 0) {
          const std::uint8_t* p = img.pixel(r, c);
          for (int k = 0; k < 3; ++k) sum[k] += p[k];
          ++n;
        }
    if (n == 0) return 0.0f;
    const double mean[3] = {sum[0] / n, sum[1] / n, sum[2] / n};
    double dev = 0;
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c)
        if (g(r, c) > 0) {
          const std::uint8_t* p = img.pixel(r, c);
          double m = 0;
          for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(p[k] - mean[k]));
          dev += m;
        }
    return static_cast<float>(1.0 - dev / (static_cast<double>(n) * 255.0));
  }

  Options opts_;
  Code seg_code_;
  Code ctx_code_;
};

}  // namespace samg
