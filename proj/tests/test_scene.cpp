#include <gtest/gtest.h>

#include "samg/scene.hpp"

using namespace samg;
using namespace samg::scene;

namespace {

bool objects_equal(const SceneFrame& a, const SceneFrame& b) {
  for (const auto& m : a.masks)
    for (int r = 0; r < m.height(); ++r)
      for (int c = 0; c < m.width(); ++c)
        if (m.at(r, c) && !std::equal(a.image.pixel(r, c), a.image.pixel(r, c) + 3, b.image.pixel(r, c))) return false;
  return true;
}

int background_diffs(const SceneFrame& a, const SceneFrame& b) {
  BinaryMask any(a.image.width(), a.image.height());
  for (const auto& m : a.masks) any = mask_union(any, m);
  for (const auto& m : b.masks) any = mask_union(any, m);
  int n = 0;
  for (int r = 0; r < any.height(); ++r)
    for (int c = 0; c < any.width(); ++c)
      if (!any.at(r, c) && !std::equal(a.image.pixel(r, c), a.image.pixel(r, c) + 3, b.image.pixel(r, c))) ++n;
  return n;
}

}  // namespace

TEST(Scene, DeterministicForFixedInputs) {
  const auto spec = default_scene();
  for (auto s : kPerturbedSettings) {
    const auto a = generate_scene(spec, make_setting(s), 5, 99);
    const auto b = generate_scene(spec, make_setting(s), 5, 99);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.masks, b.masks);
  }
}

TEST(Scene, ColourSeedChangesBackgroundOnly) {
  const auto spec = default_scene();
  const auto a = generate_scene(spec, make_setting(SettingName::kColorEasy), 3, 1);
  const auto b = generate_scene(spec, make_setting(SettingName::kColorEasy), 3, 2);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_TRUE(objects_equal(a, b));
  EXPECT_GT(background_diffs(a, b), 84 * 84 / 2);
}

TEST(Scene, VideoBackgroundAnimatesAndMasksFollowTrajectories) {
  const auto spec = default_scene();
  const auto f0 = generate_scene(spec, make_setting(SettingName::kVideoHard), 0, 4);
  const auto f1 = generate_scene(spec, make_setting(SettingName::kVideoHard), 1, 4);
  EXPECT_GT(background_diffs(f0, f1), 100);
  for (int frame : {0, 1, 17}) {
    const auto f = generate_scene(spec, make_setting(SettingName::kVideoHard), frame, 4);
    for (std::size_t i = 0; i < spec.objects.size(); ++i)
      EXPECT_EQ(f.masks[i], rasterize(spec.objects[i], trajectory(spec.objects[i], frame), 84, 84));
  }
}

TEST(Scene, TrainSettingIgnoresSeedInColourPalette) {
  const auto spec = default_scene();
  const auto a = generate_scene(spec, make_setting(SettingName::kTrain), 0, 0);
  EXPECT_EQ(a.masks.size(), 3u);
  // Background pixel in the upper-right corner takes the scene background colour.
  EXPECT_EQ(a.image.pixel(0, 83)[0], spec.background[0]);
  EXPECT_EQ(a.image.pixel(0, 83)[2], spec.background[2]);
}

TEST(Scene, ObjectsNeverOverlapOrLeaveCanvas) {
  for (int side : {84, 160}) {
    const auto spec = default_scene(side, side);
    for (int frame = 0; frame < 400; ++frame) {
      const auto f = generate_scene(spec, make_setting(SettingName::kColorEasy), frame, 1);
      for (const auto& m : f.masks) ASSERT_FALSE(m.none()) << side << " frame " << frame;
    }
  }
}

TEST(Scene, ObjectsKeepExactColourWithoutLighting) {
  const auto spec = default_scene();
  const auto f = generate_scene(spec, make_setting(SettingName::kColorHard), 8, 3);
  for (std::size_t i = 0; i < f.masks.size(); ++i)
    for (int r = 0; r < 84; ++r)
      for (int c = 0; c < 84; ++c)
        if (f.masks[i].at(r, c)) {
          for (int k = 0; k < 3; ++k) ASSERT_EQ(f.image.pixel(r, c)[k], spec.objects[i].color[static_cast<std::size_t>(k)]);
        }
}

TEST(Scene, RejectsOverlapAndDuplicateColours) {
  auto spec = default_scene();
  spec.objects[1].anchor_x = spec.objects[0].anchor_x;
  spec.objects[1].anchor_y = spec.objects[0].anchor_y;
  EXPECT_THROW(generate_scene(spec, make_setting(SettingName::kTrain), 0, 0), Error);
  spec = default_scene();
  spec.objects[2].color = spec.objects[0].color;
  EXPECT_THROW(generate_scene(spec, make_setting(SettingName::kTrain), 0, 0), Error);
  spec = default_scene();
  spec.objects[0].anchor_x = -100;
  EXPECT_THROW(generate_scene(spec, make_setting(SettingName::kTrain), 0, 0), Error);
}

TEST(Scene, SettingNamesRoundTrip) {
  for (auto s : {SettingName::kTrain, SettingName::kColorEasy, SettingName::kColorHard, SettingName::kVideoEasy,
                 SettingName::kVideoHard})
    EXPECT_EQ(parse_setting_name(setting_name(s)), s);
  EXPECT_EQ(setting_name(SettingName::kVideoHard), "video_hard");
  EXPECT_THROW(parse_setting_name("video_medium"), Error);
}
