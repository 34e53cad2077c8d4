#include <gtest/gtest.h>

#include <cstdlib>

#include "samg/onnx_backend.hpp"
#include "samg/scene.hpp"
#include "samg/eval.hpp"
#include "samg/segment.hpp"

using namespace samg;

namespace {

std::filesystem::path smoke_dir() {
  const char* d = std::getenv("SAMG_SMOKE_MODELS");
  return d ? d : "";
}

}  // namespace

class OnnxSmoke : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!OnnxBackend::available(smoke_dir())) GTEST_SKIP() << "smoke models not generated (torch/onnx unavailable)";
    backend_ = std::make_unique<OnnxBackend>(smoke_dir());
  }
  std::unique_ptr<OnnxBackend> backend_;
};

TEST_F(OnnxSmoke, EncodersProduceGridShapes) {
  const auto frame = scene::generate_scene(scene::default_scene(), scene::make_setting(scene::SettingName::kTrain), 0, 0);
  const auto seg = backend_->encode_segmenter(frame.image);
  const auto ctx = backend_->encode_context(frame.image);
  EXPECT_EQ(seg.features.rows(), 64);
  EXPECT_EQ(seg.features.cols(), 64);
  EXPECT_EQ(seg.features.dim(), backend_->segmenter_dim());
  EXPECT_EQ(ctx.rows(), 64);
  EXPECT_EQ(ctx.dim(), backend_->context_dim());
  EXPECT_TRUE(seg.features.all_finite());
  EXPECT_TRUE(ctx.all_finite());
}

TEST_F(OnnxSmoke, PipelineRunsEndToEnd) {
  const auto spec = scene::default_scene();
  const auto ref = eval::build_reference(spec, *backend_);
  EXPECT_EQ(ref.bundle.seg_dim(), backend_->segmenter_dim());
  EXPECT_EQ(ref.bundle.ctx_dim(), backend_->context_dim());
  const auto res = segment_frame(ref.frame.image, ref.bundle, *backend_);
  ASSERT_EQ(res.object_masks.size(), 3u);
  EXPECT_EQ(res.union_mask.width(), 84);
  for (const auto& d : res.diagnostics) {
    EXPECT_EQ(d.passes[0].prompts.point_count(), 5u);
    EXPECT_EQ(d.passes[2].prompts.point_count(), 7u);
    for (float s : d.passes[2].scores) EXPECT_TRUE(std::isfinite(s));
  }
}

TEST_F(OnnxSmoke, DecodeIsDeterministic) {
  const auto frame = scene::generate_scene(scene::default_scene(), scene::make_setting(scene::SettingName::kTrain), 0, 0);
  const auto emb = backend_->encode_segmenter(frame.image);
  PromptSet p;
  p.positives = {grid_to_input_coords({10, 10}), grid_to_input_coords({20, 30})};
  p.negatives = {grid_to_input_coords({60, 60})};
  const auto a = backend_->decode(emb, p);
  const auto b = backend_->decode(emb, p);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_NO_THROW(a.validate());
}

TEST(OnnxBackend, MissingManifestIsReported) {
  EXPECT_FALSE(OnnxBackend::available("/nonexistent"));
  EXPECT_THROW(OnnxBackend("/nonexistent"), Error);
}
