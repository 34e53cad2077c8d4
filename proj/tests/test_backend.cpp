#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "samg/backend.hpp"
#include "samg/synthetic_backend.hpp"

using namespace samg;

namespace {

// Independent bilinear oracle (half-pixel centres, edge clamp), one output at a time.
double bilinear_oracle(const FeatureGrid& g, int out_rows, int out_cols, int r, int c, int k) {
  auto coord = [](int o, int in, int out) {
    double s = (o + 0.5) * in / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  const double y = coord(r, g.rows(), out_rows), x = coord(c, g.cols(), out_cols);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, g.rows() - 1), x1 = std::min(x0 + 1, g.cols() - 1);
  const double fy = y - y0, fx = x - x0;
  auto v = [&](int rr, int cc) { return static_cast<double>(g.cell(rr, cc)[static_cast<std::size_t>(k)]); };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

Image two_color_image(int side) {
  Image img(side, side, 0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      auto* p = img.pixel(r, c);
      const bool obj = (r - side / 2) * (r - side / 2) + (c - side / 3) * (c - side / 3) < (side / 5) * (side / 5);
      p[0] = obj ? 220 : 30;
      p[1] = obj ? 40 : 70;
      p[2] = obj ? 40 : 140;
    }
  return img;
}

}  // namespace

TEST(GridToInputCoords, FixedCells) {
  EXPECT_EQ(grid_to_input_coords({0, 0}), (InputPoint{8, 8}));
  EXPECT_EQ(grid_to_input_coords({63, 63}), (InputPoint{1016, 1016}));
  // Row 32, column 16: x = 16*16+8, y = 32*16+8.
  EXPECT_EQ(grid_to_input_coords({32, 16}), (InputPoint{264, 520}));
}

TEST(GridToInputCoords, InjectiveAndStrictlyInside) {
  std::set<std::pair<float, float>> seen;
  for (int r = 0; r < kGridSide; ++r)
    for (int c = 0; c < kGridSide; ++c) {
      const auto p = grid_to_input_coords({r, c});
      EXPECT_GT(p.x, 0);
      EXPECT_GT(p.y, 0);
      EXPECT_LT(p.x, kDecoderInputSide);
      EXPECT_LT(p.y, kDecoderInputSide);
      seen.insert({p.x, p.y});
    }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(kGridSide * kGridSide));
  EXPECT_THROW(grid_to_input_coords({64, 0}), Error);
}

TEST(GridBoxToInput, CoversWholeCells) {
  EXPECT_EQ(grid_box_to_input({0, 0, 63, 63}), (BBox{0, 0, 1023, 1023}));
  EXPECT_EQ(grid_box_to_input({2, 3, 4, 5}), (BBox{32, 48, 79, 95}));
}

TEST(BilinearResize, ConstantStaysConstant) {
  FeatureGrid g(32, 32, 3);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      auto v = g.cell(r, c);
      v[0] = 0.25f;
      v[1] = -1.5f;
      v[2] = 3.0f;
    }
  const auto out = bilinear_resize(g, 64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      EXPECT_FLOAT_EQ(out.cell(r, c)[0], 0.25f);
      EXPECT_FLOAT_EQ(out.cell(r, c)[1], -1.5f);
      EXPECT_FLOAT_EQ(out.cell(r, c)[2], 3.0f);
    }
}

TEST(BilinearResize, HotCellMatchesOracleAndStaysLocal) {
  FeatureGrid g(32, 32, 1);
  g.cell(10, 20)[0] = 1.0f;
  const auto out = bilinear_resize(g, 64, 64);
  double total = 0, near = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const double v = out.cell(r, c)[0];
      EXPECT_NEAR(v, bilinear_oracle(g, 64, 64, r, c, 0), 1e-6);
      total += v;
      // Output cells 2*10-1 .. 2*10+2 sit within one source cell of the hot one.
      if (r >= 19 && r <= 22 && c >= 39 && c <= 42) near += v;
    }
  EXPECT_GT(total, 0);
  EXPECT_NEAR(near, total, 1e-9);
  // The 2x2 block mapped from the hot cell carries the peak.
  EXPECT_FLOAT_EQ(out.cell(20, 40)[0], 0.5625f);
  EXPECT_FLOAT_EQ(out.cell(21, 41)[0], 0.5625f);
}

TEST(BilinearResize, RandomGridMatchesOracle) {
  std::mt19937 rng(17);
  std::normal_distribution<float> n;
  FeatureGrid g(32, 32, 4);
  for (auto& v : g.values()) v = n(rng);
  const auto out = bilinear_resize(g, 64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      for (int k = 0; k < 4; ++k) EXPECT_NEAR(out.cell(r, c)[static_cast<std::size_t>(k)], bilinear_oracle(g, 64, 64, r, c, k), 1e-5);
}

TEST(SyntheticBackend, ShapesAt84And160) {
  SyntheticBackend be;
  for (int side : {84, 160}) {
    const Image img = two_color_image(side);
    const auto seg = be.encode_segmenter(img).features;
    const auto ctx = be.encode_context(img);
    EXPECT_EQ(seg.rows(), 64);
    EXPECT_EQ(seg.cols(), 64);
    EXPECT_EQ(seg.dim(), 256);
    EXPECT_EQ(ctx.rows(), 64);
    EXPECT_EQ(ctx.cols(), 64);
    EXPECT_EQ(ctx.dim(), 768);
  }
}

TEST(SyntheticBackend, ConstantImageGivesConstantGrid) {
  SyntheticBackend::Options o;
  o.positional_amplitude = 0;
  SyntheticBackend be(o);
  const Image img(84, 84, 90);
  for (const auto& g : {be.encode_segmenter(img).features, be.encode_context(img)}) {
    const auto first = g.cell(0, 0);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        const auto v = g.cell(r, c);
        ASSERT_TRUE(std::equal(v.begin(), v.end(), first.begin()));
      }
  }
}

TEST(SyntheticBackend, DeterministicAcrossThreads) {
  SyntheticBackend be;
  const Image img = two_color_image(84);
  const auto ref = be.encode_segmenter(img).features;
  FeatureGrid other;
  std::thread t([&] { other = be.encode_segmenter(img).features; });
  t.join();
  EXPECT_EQ(ref, other);
  EXPECT_EQ(be.encode_context(img), SyntheticBackend().encode_context(img));
}

TEST(SyntheticDecoder, SinglePositiveGivesRegionInAllCandidates) {
  SyntheticBackend be;
  const Image img = two_color_image(84);
  const auto emb = be.encode_segmenter(img);
  PromptSet p;
  p.positives.push_back(grid_to_input_coords({32, 21}));  // pixel (42, 28): inside the disk
  const auto mc = be.decode(emb, p);
  mc.validate();
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(mc.logits[static_cast<std::size_t>(k)], mc.logits[0]);
    EXPECT_EQ(mc.scores[static_cast<std::size_t>(k)], mc.scores[0]);
  }
  for (int r = 0; r < 84; ++r)
    for (int c = 0; c < 84; ++c) EXPECT_EQ(mc.logits[0](r, c) > 0, img.pixel(r, c)[0] == 220) << r << "," << c;
}

TEST(SyntheticDecoder, NegativeInsideRegionSuppressesItsCell) {
  SyntheticBackend be;
  const Image img = two_color_image(84);
  const auto emb = be.encode_segmenter(img);
  PromptSet p;
  p.positives.push_back(grid_to_input_coords({32, 21}));
  p.negatives.push_back(grid_to_input_coords({34, 22}));
  const auto mc = be.decode(emb, p);
  // Cell (34, 22) covers pixel rows/cols with floor(p*64/84) == 34 / 22.
  for (int r = 0; r < 84; ++r)
    for (int c = 0; c < 84; ++c)
      if (r * 64 / 84 == 34 && c * 64 / 84 == 22) {
        for (const auto& l : mc.logits) EXPECT_LT(l(r, c), 0.0f);
      }
  EXPECT_GT(mc.logits[0](42, 28), 0.0f);
}

TEST(SyntheticDecoder, AlwaysThreeFiniteCandidates) {
  SyntheticBackend be;
  std::mt19937 rng(4);
  Image img(84, 84);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng());
  const auto emb = be.encode_segmenter(img);
  std::uniform_int_distribution<int> cell(0, 63);
  for (int t = 0; t < 10; ++t) {
    PromptSet p;
    for (int i = 0; i < 4; ++i) p.positives.push_back(grid_to_input_coords({cell(rng), cell(rng)}));
    p.negatives.push_back(grid_to_input_coords({cell(rng), cell(rng)}));
    const auto mc = be.decode(emb, p);
    EXPECT_NO_THROW(mc.validate());
    EXPECT_EQ(mc.logits.size(), 3u);
  }
}

TEST(SyntheticDecoder, RejectsPromptWithoutPositives) {
  SyntheticBackend be;
  const auto emb = be.encode_segmenter(Image(16, 16));
  EXPECT_THROW(be.decode(emb, PromptSet{}), Error);
}

TEST(LogitsToFrameMask, ThresholdAtZero) {
  LogitGrid g(2, 2, std::vector<float>{-1.0f, 0.0f, 0.5f, 2.0f});
  const auto m = threshold_logits(g);
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_FALSE(m.at(0, 1));
  EXPECT_TRUE(m.at(1, 0));
  EXPECT_TRUE(m.at(1, 1));
}
