#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "samg/adapt.hpp"
#include "samg/identify.hpp"
#include "samg/scene.hpp"
#include "samg/segment.hpp"

namespace samg::eval {

inline constexpr int kReportSchemaVersion = 1;

/// Three on-object points whose grid cell also samples an on-object pixel, so
/// thin parts still yield a type-2 feature of the object's colour. Points are
/// taken at the quartiles of the eligible pixels in row-major order.
inline ExtraPoints auto_extra_points(const BinaryMask& mask, int grid_side = kGridSide) {
  const int w = mask.width(), h = mask.height();
  std::vector<PixelPoint> eligible, any;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      any.push_back({x, y});
      const GridCell cell = pixel_to_cell({x, y}, w, h, grid_side);
      const int sy = static_cast<int>((static_cast<long long>(2 * cell.row + 1) * h) / (2LL * grid_side));
      const int sx = static_cast<int>((static_cast<long long>(2 * cell.col + 1) * w) / (2LL * grid_side));
      if (mask.at(sy, sx)) eligible.push_back({x, y});
    }
  }
  const auto& pool = eligible.empty() ? any : eligible;
  if (pool.empty()) throw Error(Error::Kind::kValidation, "cannot pick extra points from an empty mask");
  const std::size_t n = pool.size();
  return {pool[n / 4], pool[n / 2], pool[(3 * n) / 4]};
}

struct Reference {
  scene::SceneFrame frame;
  PointFeatureBundle bundle;
};

/// Bundle built from frame 0 of the unperturbed scene.
inline Reference build_reference(const scene::SceneSpec& spec, const EncoderBackend& backend,
                                 std::string task_name = "synthetic") {
  Reference ref;
  ref.frame = scene::generate_scene(spec, scene::make_setting(scene::SettingName::kTrain), 0, 0);
  std::vector<ExtraPoints> pts;
  for (const auto& m : ref.frame.masks) pts.push_back(auto_extra_points(m));
  ref.bundle = build_bundle(ref.frame.image, ref.frame.masks, pts, backend, std::move(task_name));
  return ref;
}

struct SettingStats {
  std::string name;
  int frames = 0;
  int failed_frames = 0;  // frames where the pipeline threw
  double mean_iou = 0;
  double std_iou = 0;
  double min_iou = 0;
  std::vector<double> per_object_mean_iou;
  double wall_ms_per_frame = 0;

  bool operator==(const SettingStats&) const = default;
};

struct SuiteReport {
  int schema_version = kReportSchemaVersion;
  std::string backend;
  std::uint64_t seed = 0;
  int frames_per_setting = 0;
  double reference_iou = 0;  // segmentation of the reference frame itself
  std::vector<SettingStats> settings;

  bool operator==(const SuiteReport&) const = default;
};

struct SuiteOptions {
  int frames = 100;
  std::uint64_t seed = 1;
  std::vector<scene::SettingName> settings{scene::kPerturbedSettings.begin(), scene::kPerturbedSettings.end()};
};

/// Frame i of a colour setting draws new background colours from (seed, i);
/// video settings keep one palette per suite and animate with i. Objects move
/// along their trajectories in both.
inline scene::SceneFrame suite_frame(const scene::SceneSpec& spec, scene::SettingName setting, int i,
                                     std::uint64_t seed) {
  const bool video = setting == scene::SettingName::kVideoEasy || setting == scene::SettingName::kVideoHard;
  const std::uint64_t frame_seed = video ? seed : scene::detail::mix(seed, static_cast<std::uint64_t>(i));
  return scene::generate_scene(spec, scene::make_setting(setting), i + 1, frame_seed);
}

/// Per-frame IoU of the union mask against the union of the ground truth.
inline double frame_iou(const SegmentationResult& res, const scene::SceneFrame& f) {
  BinaryMask gt(f.image.width(), f.image.height());
  for (const auto& m : f.masks) gt = mask_union(gt, m);
  return iou(res.union_mask, gt);
}

inline SuiteReport run_suite(const PointFeatureBundle& bundle, const EncoderBackend& backend,
                             const scene::SceneSpec& spec, const SuiteOptions& opt) {
  if (opt.frames <= 0) throw Error(Error::Kind::kInvalidArgument, "empty suite: frame count must be positive");
  if (opt.settings.empty()) throw Error(Error::Kind::kInvalidArgument, "empty suite: no settings selected");
  if (bundle.objects.size() != spec.objects.size())
    throw Error(Error::Kind::kValidation, "bundle object count does not match the scene");

  SuiteReport report;
  report.backend = std::string(backend.name());
  report.seed = opt.seed;
  report.frames_per_setting = opt.frames;
  {
    const auto ref = scene::generate_scene(spec, scene::make_setting(scene::SettingName::kTrain), 0, 0);
    report.reference_iou = frame_iou(segment_frame(ref.image, bundle, backend), ref);
  }

  for (const auto setting : opt.settings) {
    SettingStats st;
    st.name = std::string(scene::setting_name(setting));
    st.frames = opt.frames;
    std::vector<double> ious;
    std::vector<double> obj_sum(bundle.objects.size(), 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < opt.frames; ++i) {
      const auto frame = suite_frame(spec, setting, i, opt.seed);
      try {
        const auto res = segment_frame(frame.image, bundle, backend);
        ious.push_back(frame_iou(res, frame));
        for (std::size_t k = 0; k < obj_sum.size(); ++k) obj_sum[k] += iou(res.object_masks[k], frame.masks[k]);
      } catch (const Error&) {
        ++st.failed_frames;
        ious.push_back(0.0);
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    st.wall_ms_per_frame = std::chrono::duration<double, std::milli>(t1 - t0).count() / opt.frames;
    double sum = 0;
    for (double v : ious) sum += v;
    st.mean_iou = sum / static_cast<double>(ious.size());
    double var = 0;
    for (double v : ious) var += (v - st.mean_iou) * (v - st.mean_iou);
    st.std_iou = std::sqrt(var / static_cast<double>(ious.size()));
    st.min_iou = *std::min_element(ious.begin(), ious.end());
    for (double s : obj_sum) st.per_object_mean_iou.push_back(s / opt.frames);
    report.settings.push_back(std::move(st));
  }
  return report;
}

inline const SettingStats& find_setting(const SuiteReport& r, std::string_view name) {
  for (const auto& s : r.settings)
    if (s.name == name) return s;
  throw Error(Error::Kind::kNotFound, "setting '" + std::string(name) + "' not in report");
}

/// With include_timing = false the output depends only on the inputs.
inline nlohmann::json report_to_json(const SuiteReport& r, bool include_timing = true) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["backend"] = r.backend;
  j["seed"] = r.seed;
  j["frames_per_setting"] = r.frames_per_setting;
  j["reference_iou"] = r.reference_iou;
  j["settings"] = nlohmann::json::array();
  for (const auto& s : r.settings) {
    nlohmann::json js{{"name", s.name},
                      {"frames", s.frames},
                      {"failed_frames", s.failed_frames},
                      {"mean_iou", s.mean_iou},
                      {"std_iou", s.std_iou},
                      {"min_iou", s.min_iou},
                      {"per_object_mean_iou", s.per_object_mean_iou}};
    if (include_timing) js["wall_ms_per_frame"] = s.wall_ms_per_frame;
    j["settings"].push_back(std::move(js));
  }
  return j;
}

inline SuiteReport report_from_json(const nlohmann::json& j) {
  try {
    SuiteReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
      throw Error(Error::Kind::kVersionMismatch, "unsupported report schema_version " + std::to_string(r.schema_version));
    r.backend = j.at("backend").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.frames_per_setting = j.at("frames_per_setting").get<int>();
    r.reference_iou = j.at("reference_iou").get<double>();
    for (const auto& js : j.at("settings")) {
      SettingStats s;
      s.name = js.at("name").get<std::string>();
      s.frames = js.at("frames").get<int>();
      s.failed_frames = js.at("failed_frames").get<int>();
      s.mean_iou = js.at("mean_iou").get<double>();
      s.std_iou = js.at("std_iou").get<double>();
      s.min_iou = js.at("min_iou").get<double>();
      s.per_object_mean_iou = js.at("per_object_mean_iou").get<std::vector<double>>();
      s.wall_ms_per_frame = js.value("wall_ms_per_frame", 0.0);
      r.settings.push_back(std::move(s));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::kFormat, std::string("malformed suite report: ") + e.what());
  }
}

}  // namespace samg::eval
