#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "samg/identify.hpp"
#include "samg/synthetic_backend.hpp"

using namespace samg;

namespace {

FeatureGrid random_grid(int side, int dim, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n;
  FeatureGrid g(side, side, dim);
  for (auto& v : g.values()) v = n(rng);
  return g;
}

// Scene: solid background, disk of one colour, rectangle of another.
struct Scene {
  Image image{84, 84};
  std::vector<BinaryMask> masks;
};

Scene two_object_scene(int side = 84) {
  Scene s;
  s.image = Image(side, side);
  BinaryMask disk(side, side), box(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      auto* p = s.image.pixel(r, c);
      p[0] = 30, p[1] = 60, p[2] = 120;
      const double dr = r - side * 0.3, dc = c - side * 0.3;
      if (dr * dr + dc * dc < (side * 0.12) * (side * 0.12)) {
        p[0] = 220, p[1] = 50, p[2] = 50;
        disk.set(r, c);
      } else if (r > side * 0.6 && r < side * 0.8 && c > side * 0.5 && c < side * 0.85) {
        p[0] = 60, p[1] = 200, p[2] = 80;
        box.set(r, c);
      }
    }
  s.masks = {disk, box};
  return s;
}

ExtraPoints points_in(const BinaryMask& m) {
  std::vector<PixelPoint> in;
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (m.at(r, c)) in.push_back({c, r});
  return {in[in.size() / 4], in[in.size() / 2], in[3 * in.size() / 4]};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST(FetchType1, SingleCellIsThatCell) {
  FeatureGrid g = random_grid(64, 5, 1);
  BinaryMask m(64, 64);
  m.set(7, 9);
  const auto v = fetch_type1(g, m);
  for (int k = 0; k < 5; ++k) EXPECT_FLOAT_EQ(static_cast<float>(v[static_cast<std::size_t>(k)]), g.cell(7, 9)[static_cast<std::size_t>(k)]);
}

TEST(FetchType1, MeanPlusMaxOverTwo) {
  FeatureGrid g(64, 64, 2);
  g.cell(0, 0)[0] = 1;
  g.cell(0, 1)[1] = 1;
  BinaryMask m(64, 64);
  m.set(0, 0);
  m.set(0, 1);
  const auto v = fetch_type1(g, m);
  EXPECT_DOUBLE_EQ(v[0], 0.75);
  EXPECT_DOUBLE_EQ(v[1], 0.75);
}

TEST(FetchType1, MatchesLoopOracleAndPerDimensionBounds) {
  const FeatureGrid g = random_grid(64, 8, 7);
  std::mt19937 rng(7);
  std::bernoulli_distribution bit(0.2);
  BinaryMask m(64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) m.set(r, c, bit(rng));
  const auto v = fetch_type1(g, m);
  for (int k = 0; k < 8; ++k) {
    double sum = 0, mx = -1e30, mn = 1e30;
    int n = 0;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (m.at(r, c)) {
          const double x = g.cell(r, c)[static_cast<std::size_t>(k)];
          sum += x, ++n, mx = std::max(mx, x), mn = std::min(mn, x);
        }
    EXPECT_NEAR(v[static_cast<std::size_t>(k)], (sum / n + mx) / 2, 1e-6);
    EXPECT_GE(v[static_cast<std::size_t>(k)], mn);
    EXPECT_LE(v[static_cast<std::size_t>(k)], mx);
  }
}

TEST(FetchType1, EmptyMaskRejected) { EXPECT_THROW(fetch_type1(random_grid(64, 2, 1), BinaryMask(84, 84)), Error); }

TEST(DownsampleMask, ThinLineSurvives) {
  BinaryMask m(160, 160);
  for (int r = 0; r < 160; ++r) m.set(r, 80);
  const auto g = downsample_mask_to_grid(m);
  for (int r = 0; r < 64; ++r) EXPECT_TRUE(g.at(r, 32));
  EXPECT_EQ(g.count(), 64u);
}

TEST(PixelToCell, FixedCases) {
  EXPECT_EQ(pixel_to_cell({0, 0}, 84, 84), (GridCell{0, 0}));
  EXPECT_EQ(pixel_to_cell({83, 83}, 84, 84), (GridCell{63, 63}));
  // x = 80 (column), y = 40 (row) on 160x160.
  EXPECT_EQ(pixel_to_cell({80, 40}, 160, 160), (GridCell{16, 32}));
  EXPECT_THROW(pixel_to_cell({84, 0}, 84, 84), Error);
}

TEST(FetchType2, OriginCell) {
  const FeatureGrid g = random_grid(64, 4, 3);
  const auto [v, cell] = fetch_type2(g, {0, 0}, 84, 84);
  EXPECT_EQ(cell, (GridCell{0, 0}));
  for (int k = 0; k < 4; ++k) EXPECT_EQ(v[static_cast<std::size_t>(k)], g.cell(0, 0)[static_cast<std::size_t>(k)]);
}

TEST(BuildBundle, SingleObjectShapes) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  const auto b = build_bundle(s.image, {s.masks[0]}, {points_in(s.masks[0])}, be);
  EXPECT_EQ(b.feature_rows(), 4);
  EXPECT_EQ(b.seg_dim(), 256);
  EXPECT_EQ(b.ctx_dim(), 768);
  EXPECT_EQ(b.seg_matrix().size(), 4u * 256);
  EXPECT_EQ(b.ctx_matrix().size(), 4u * 768);
}

TEST(BuildBundle, ThreeObjectShapes) {
  SyntheticBackend be;
  auto s = two_object_scene();
  BinaryMask third(84, 84);
  for (int r = 70; r < 78; ++r)
    for (int c = 5; c < 20; ++c) {
      third.set(r, c);
      auto* p = s.image.pixel(r, c);
      p[0] = 230, p[1] = 200, p[2] = 40;
    }
  s.masks.push_back(third);
  std::vector<ExtraPoints> pts;
  for (const auto& m : s.masks) pts.push_back(points_in(m));
  const auto b = build_bundle(s.image, s.masks, pts, be);
  EXPECT_EQ(b.feature_rows(), 12);
  EXPECT_EQ(b.seg_matrix().size(), 12u * 256);
  EXPECT_EQ(b.ctx_matrix().size(), 12u * 768);
  for (const auto& o : b.objects) EXPECT_EQ(o.type2.size(), 3u);
}

TEST(BuildBundle, Type2FeaturesOnUniformObjectAgree) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  // Interior points: the context grid is upsampled from 32x32, so cells at the rim blend with the background.
  const ExtraPoints interior{PixelPoint{22, 25}, PixelPoint{25, 28}, PixelPoint{28, 24}};
  const auto b = build_bundle(s.image, {s.masks[0]}, {interior}, be);
  const auto& t = b.objects[0].type2;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      EXPECT_GE(cosine(t[static_cast<std::size_t>(i)].seg, t[static_cast<std::size_t>(j)].seg), 0.99);
      EXPECT_GE(cosine(t[static_cast<std::size_t>(i)].ctx, t[static_cast<std::size_t>(j)].ctx), 0.99);
    }
}

TEST(BuildBundle, SourceCellsInsideDownsampledMask) {
  SyntheticBackend be;
  const auto s = two_object_scene(160);
  std::vector<ExtraPoints> pts{points_in(s.masks[0]), points_in(s.masks[1])};
  const auto b = build_bundle(s.image, s.masks, pts, be);
  for (const auto& o : b.objects) {
    const auto grid = downsample_mask_to_grid(o.mask);
    for (const auto& t : o.type2) {
      ASSERT_TRUE(t.source_cell.has_value());
      EXPECT_TRUE(grid.at(t.source_cell->row, t.source_cell->col));
    }
  }
}

TEST(BuildBundle, Deterministic) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  std::vector<ExtraPoints> pts{points_in(s.masks[0]), points_in(s.masks[1])};
  EXPECT_EQ(build_bundle(s.image, s.masks, pts, be), build_bundle(s.image, s.masks, pts, SyntheticBackend()));
}

TEST(BuildBundle, PointOutsideMaskNamesObjectAndPoint) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  auto p1 = points_in(s.masks[1]);
  p1[2] = {0, 0};
  try {
    build_bundle(s.image, s.masks, {points_in(s.masks[0]), p1}, be);
    FAIL() << "expected validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::kValidation);
    EXPECT_NE(std::string(e.what()).find("object 1, point 2"), std::string::npos) << e.what();
  }
}

TEST(BuildBundle, MissingPointSetsRejected) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  try {
    build_bundle(s.image, s.masks, {points_in(s.masks[0])}, be);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("exactly 3 extra points"), std::string::npos);
  }
}

TEST(BuildBundle, EmptyMaskRejected) {
  SyntheticBackend be;
  const auto s = two_object_scene();
  EXPECT_THROW(build_bundle(s.image, {BinaryMask(84, 84)}, {ExtraPoints{}}, be), Error);
}
