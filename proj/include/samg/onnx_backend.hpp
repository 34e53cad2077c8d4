#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "samg/backend.hpp"
#include "samg/bundle_io.hpp"

namespace samg {

/// Exported encoder/decoder graphs run through OpenCV's DNN module.
///
/// The model directory holds a manifest.json:
///   segmenter: {file, input_size, mean[3], std[3], input, output}
///   context:   {file, input_size, mean[3], std[3], input, output}
///   decoder:   {file, inputs{...}, outputs{masks, scores}, mask_input_size, point_count?}
/// Images are stretched to the square input size, so decoder coordinates map
/// linearly onto the frame. Decoder inputs follow the usual exported
/// promptable-decoder layout: image_embeddings, point_coords, point_labels,
/// mask_input, has_mask_input. A box is appended as two points with labels 2
/// and 3; without a box a padding point with label -1 is appended. Graphs
/// exported with a static point count get the prompt padded with label -1.
class OnnxBackend final : public EncoderBackend {
 public:
  struct EncoderSpec {
    std::filesystem::path file;
    int input_size = 1024;
    std::array<float, 3> mean{123.675f, 116.28f, 103.53f};
    std::array<float, 3> std{58.395f, 57.12f, 57.375f};
    std::string input = "image";
    std::string output;
  };
  struct DecoderSpec {
    std::filesystem::path file;
    std::string embeddings = "image_embeddings";
    std::string point_coords = "point_coords";
    std::string point_labels = "point_labels";
    std::string mask_input = "mask_input";
    std::string has_mask_input = "has_mask_input";
    std::string orig_im_size;  // empty when the graph has no such input
    std::string masks = "low_res_masks";
    std::string scores = "iou_predictions";
    int mask_input_size = 256;
    int point_count = 0;  // > 0: pad prompts to this many points for static-shape graphs
  };

  static std::filesystem::path default_model_dir() {
    if (const char* env = std::getenv("SAMG_MODEL_DIR"); env && *env) return env;
    return "models";
  }

  static bool available(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "manifest.json"); }

  explicit OnnxBackend(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(read_file(manifest_path));
      seg_spec_ = encoder_spec(m.at("segmenter"), dir);
      ctx_spec_ = encoder_spec(m.at("context"), dir);
      dec_spec_ = decoder_spec(m.at("decoder"), dir);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Error::Kind::kFormat, "malformed " + manifest_path.string() + ": " + e.what());
    }
    seg_net_ = load(seg_spec_.file);
    ctx_net_ = load(ctx_spec_.file);
    dec_net_ = load(dec_spec_.file);
    // Probe the encoders once for their channel counts.
    const Image probe(seg_spec_.input_size, seg_spec_.input_size, 0);
    seg_dim_ = encode_segmenter(probe).features.dim();
    ctx_dim_ = encode_context(probe).dim();
  }

  std::string name() const override { return "onnx"; }
  int segmenter_dim() const override { return seg_dim_; }
  int context_dim() const override { return ctx_dim_; }

  ImageEmbedding encode_segmenter(const Image& image) const override {
    cv::Mat out = run_encoder(seg_net_, seg_mutex_, seg_spec_, image);
    FeatureGrid g = to_grid(out, "segmenter");
    if (g.rows() != kGridSide || g.cols() != kGridSide) g = bilinear_resize(g, kGridSide, kGridSide);
    return ImageEmbedding{std::move(g), nullptr};
  }

  FeatureGrid encode_context(const Image& image) const override {
    cv::Mat out = run_encoder(ctx_net_, ctx_mutex_, ctx_spec_, image);
    FeatureGrid g = to_grid(out, "context");
    return bilinear_resize(g, kGridSide, kGridSide);
  }

  MaskCandidates decode(const ImageEmbedding& emb, const PromptSet& prompts) const override {
    const FeatureGrid& f = emb.features;
    const int sizes_emb[4] = {1, f.dim(), f.rows(), f.cols()};
    cv::Mat embeddings(4, sizes_emb, CV_32F);
    auto* e = embeddings.ptr<float>();
    for (int r = 0; r < f.rows(); ++r)
      for (int c = 0; c < f.cols(); ++c) {
        auto v = f.cell(r, c);
        for (int k = 0; k < f.dim(); ++k)
          e[(static_cast<std::size_t>(k) * f.rows() + r) * f.cols() + c] = v[static_cast<std::size_t>(k)];
      }

    std::vector<std::array<float, 3>> pts;
    for (const auto& p : prompts.positives) pts.push_back({p.x, p.y, 1.0f});
    for (const auto& p : prompts.negatives) pts.push_back({p.x, p.y, 0.0f});
    if (prompts.box) {
      pts.push_back({static_cast<float>(prompts.box->min_col), static_cast<float>(prompts.box->min_row), 2.0f});
      pts.push_back({static_cast<float>(prompts.box->max_col), static_cast<float>(prompts.box->max_row), 3.0f});
    } else {
      pts.push_back({0.0f, 0.0f, -1.0f});
    }
    if (dec_spec_.point_count > 0) {
      if (static_cast<int>(pts.size()) > dec_spec_.point_count)
        throw Error(Error::Kind::kBackend, "prompt has " + std::to_string(pts.size()) +
                                              " points but the decoder graph accepts " +
                                              std::to_string(dec_spec_.point_count));
      pts.resize(static_cast<std::size_t>(dec_spec_.point_count), {0.0f, 0.0f, -1.0f});
    }
    const int n = static_cast<int>(pts.size());
    const int sizes_pc[3] = {1, n, 2};
    const int sizes_pl[2] = {1, n};
    cv::Mat coords(3, sizes_pc, CV_32F), labels(2, sizes_pl, CV_32F);
    for (int i = 0; i < n; ++i) {
      coords.ptr<float>()[2 * i] = pts[static_cast<std::size_t>(i)][0];
      coords.ptr<float>()[2 * i + 1] = pts[static_cast<std::size_t>(i)][1];
      labels.ptr<float>()[i] = pts[static_cast<std::size_t>(i)][2];
    }

    const int ms = dec_spec_.mask_input_size;
    const int sizes_mask[4] = {1, 1, ms, ms};
    cv::Mat mask_input(4, sizes_mask, CV_32F, cv::Scalar(0));
    if (prompts.prior_logits) {
      LogitGrid prior = *prompts.prior_logits;
      if (prior.rows() != ms || prior.cols() != ms) prior = bilinear_resize(prior, ms, ms);
      std::copy(prior.values().begin(), prior.values().end(), mask_input.ptr<float>());
    }
    const int one[1] = {1};
    cv::Mat has_mask(1, one, CV_32F, cv::Scalar(prompts.prior_logits ? 1.0f : 0.0f));

    std::vector<cv::Mat> outs;
    {
      std::lock_guard lock(dec_mutex_);
      dec_net_.setInput(embeddings, dec_spec_.embeddings);
      dec_net_.setInput(coords, dec_spec_.point_coords);
      dec_net_.setInput(labels, dec_spec_.point_labels);
      dec_net_.setInput(mask_input, dec_spec_.mask_input);
      dec_net_.setInput(has_mask, dec_spec_.has_mask_input);
      if (!dec_spec_.orig_im_size.empty()) {
        const int two[1] = {2};
        cv::Mat size(1, two, CV_32F);
        size.ptr<float>()[0] = static_cast<float>(kDecoderInputSide);
        size.ptr<float>()[1] = static_cast<float>(kDecoderInputSide);
        dec_net_.setInput(size, dec_spec_.orig_im_size);
      }
      try {
        dec_net_.forward(outs, std::vector<cv::String>{dec_spec_.masks, dec_spec_.scores});
      } catch (const cv::Exception& ex) {
        throw Error(Error::Kind::kBackend, std::string("decoder forward failed: ") + ex.what());
      }
    }
    const cv::Mat& masks = outs.at(0);
    const cv::Mat& scores = outs.at(1);
    if (masks.dims != 4 || masks.size[1] != kCandidateCount || scores.total() != kCandidateCount)
      throw Error(Error::Kind::kBackend, "decoder must return 1x3xHxW masks and 3 scores");
    const int h = masks.size[2], w = masks.size[3];
    MaskCandidates mc;
    for (int k = 0; k < kCandidateCount; ++k) {
      LogitGrid g(h, w);
      const float* src = masks.ptr<float>() + static_cast<std::size_t>(k) * h * w;
      std::copy(src, src + static_cast<std::size_t>(h) * w, g.values().begin());
      mc.logits[static_cast<std::size_t>(k)] = std::move(g);
      mc.scores[static_cast<std::size_t>(k)] = scores.ptr<float>()[k];
    }
    return mc;
  }

 private:
  static EncoderSpec encoder_spec(const nlohmann::json& j, const std::filesystem::path& dir) {
    EncoderSpec s;
    s.file = dir / j.at("file").get<std::string>();
    s.input_size = j.value("input_size", s.input_size);
    if (j.contains("mean")) s.mean = j["mean"].get<std::array<float, 3>>();
    if (j.contains("std")) s.std = j["std"].get<std::array<float, 3>>();
    s.input = j.value("input", s.input);
    s.output = j.value("output", std::string{});
    return s;
  }

  static DecoderSpec decoder_spec(const nlohmann::json& j, const std::filesystem::path& dir) {
    DecoderSpec s;
    s.file = dir / j.at("file").get<std::string>();
    if (j.contains("inputs")) {
      const auto& in = j["inputs"];
      s.embeddings = in.value("image_embeddings", s.embeddings);
      s.point_coords = in.value("point_coords", s.point_coords);
      s.point_labels = in.value("point_labels", s.point_labels);
      s.mask_input = in.value("mask_input", s.mask_input);
      s.has_mask_input = in.value("has_mask_input", s.has_mask_input);
      s.orig_im_size = in.value("orig_im_size", s.orig_im_size);
    }
    if (j.contains("outputs")) {
      s.masks = j["outputs"].value("masks", s.masks);
      s.scores = j["outputs"].value("scores", s.scores);
    }
    s.mask_input_size = j.value("mask_input_size", s.mask_input_size);
    s.point_count = j.value("point_count", s.point_count);
    return s;
  }

  static cv::dnn::Net load(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) throw Error(Error::Kind::kNotFound, "model file missing: " + file.string());
    try {
      cv::dnn::Net net = cv::dnn::readNetFromONNX(file.string());
      net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
      net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
      return net;
    } catch (const cv::Exception& e) {
      throw Error(Error::Kind::kBackend, "cannot load " + file.string() + ": " + e.what());
    }
  }

  static cv::Mat run_encoder(cv::dnn::Net& net, std::mutex& mu, const EncoderSpec& spec, const Image& image) {
    cv::Mat rgb(image.height(), image.width(), CV_8UC3, const_cast<std::uint8_t*>(image.bytes().data()));
    cv::Mat resized, f;
    cv::resize(rgb, resized, cv::Size(spec.input_size, spec.input_size), 0, 0, cv::INTER_LINEAR);
    resized.convertTo(f, CV_32FC3);
    f -= cv::Scalar(spec.mean[0], spec.mean[1], spec.mean[2]);
    cv::divide(f, cv::Scalar(spec.std[0], spec.std[1], spec.std[2]), f);
    cv::Mat blob = cv::dnn::blobFromImage(f);
    std::lock_guard lock(mu);
    try {
      net.setInput(blob, spec.input);
      return net.forward(spec.output).clone();
    } catch (const cv::Exception& e) {
      throw Error(Error::Kind::kBackend, std::string("encoder forward failed: ") + e.what());
    }
  }

  // Accepts NCHW feature maps or [1, tokens, C] sequences (a leading class
  // token is dropped when tokens = side^2 + 1).
  static FeatureGrid to_grid(const cv::Mat& out, const char* which) {
    if (out.dims == 4 && out.size[0] == 1) {
      const int c = out.size[1], h = out.size[2], w = out.size[3];
      FeatureGrid g(h, w, c);
      const float* src = out.ptr<float>();
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
          auto dst = g.cell(r, col);
          for (int k = 0; k < c; ++k) dst[static_cast<std::size_t>(k)] = src[(static_cast<std::size_t>(k) * h + r) * w + col];
        }
      return g;
    }
    if (out.dims == 3 && out.size[0] == 1) {
      int tokens = out.size[1];
      const int c = out.size[2];
      int skip = 0;
      int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
      if (side * side != tokens) {
        side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens - 1))));
        skip = 1;
      }
      if (side * side + skip != tokens)
        throw Error(Error::Kind::kBackend, std::string(which) + " encoder token count is not a square grid");
      FeatureGrid g(side, side, c);
      const float* src = out.ptr<float>() + static_cast<std::size_t>(skip) * c;
      std::copy(src, src + static_cast<std::size_t>(side) * side * c, g.values().begin());
      return g;
    }
    throw Error(Error::Kind::kBackend, std::string(which) + " encoder output has an unsupported shape");
  }

  EncoderSpec seg_spec_, ctx_spec_;
  DecoderSpec dec_spec_;
  mutable cv::dnn::Net seg_net_, ctx_net_, dec_net_;
  mutable std::mutex seg_mutex_, ctx_mutex_, dec_mutex_;
  int seg_dim_ = 0, ctx_dim_ = 0;
};

}  // namespace samg
