#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "samg/types.hpp"

namespace samg::scene {

using Rgb = std::array<std::uint8_t, 3>;

enum class Shape { kDisk, kRectangle, kChain };
enum class BackgroundKind { kStaticColor, kTexture, kAnimatedNoise, kAnimatedTexture };

struct SceneObject {
  Shape shape = Shape::kDisk;
  Rgb color{};
  double size = 8;  // disk radius, rectangle half-width, chain link length (pixels)
  std::uint64_t trajectory_seed = 0;
  double anchor_x = 0;  // rest position of the centre (chain: base joint)
  double anchor_y = 0;
  double amplitude = 4;  // motion amplitude in pixels
};

struct SceneSpec {
  int width = 84;
  int height = 84;
  std::vector<SceneObject> objects;
  Rgb background{40, 60, 110};
  Rgb table_a{120, 100, 80};
  Rgb table_b{150, 130, 100};
  int table_rows = 14;  // bottom band rendered with the table texture
};

enum class SettingName { kTrain, kColorEasy, kColorHard, kVideoEasy, kVideoHard };

struct PerturbationSetting {
  SettingName name = SettingName::kTrain;
  BackgroundKind background = BackgroundKind::kTexture;
  int palette_min = 0;         // background / table colour channel range
  int palette_max = 255;
  int object_margin = 64;      // min per-channel distance of background colours to object colours
  bool stripe_table = false;   // table texture swapped from checker to stripes
  int noise_octaves = 0;
  double noise_speed = 0;      // lattice cells per frame
  double contrast = 0;         // 0..1 spread of the animated palette ramp
  double scroll_speed = 0;     // pixels per frame for the scrolling texture
  double light_amplitude = 0;  // drifting brightness gradient
};

inline std::string_view setting_name(SettingName n) {
  switch (n) {
    case SettingName::kTrain: return "train";
    case SettingName::kColorEasy: return "color_easy";
    case SettingName::kColorHard: return "color_hard";
    case SettingName::kVideoEasy: return "video_easy";
    case SettingName::kVideoHard: return "video_hard";
  }
  return "unknown";
}

inline SettingName parse_setting_name(std::string_view s) {
  for (auto n : {SettingName::kTrain, SettingName::kColorEasy, SettingName::kColorHard, SettingName::kVideoEasy,
                 SettingName::kVideoHard})
    if (setting_name(n) == s) return n;
  throw Error(Error::Kind::kInvalidArgument, "unknown setting '" + std::string(s) + "'");
}

/// Hard variants widen their easy counterpart: broader palette and a table
/// texture swap for colour, faster and higher-contrast animation for video.
inline PerturbationSetting make_setting(SettingName n) {
  PerturbationSetting s;
  s.name = n;
  switch (n) {
    case SettingName::kTrain:
      s.background = BackgroundKind::kTexture;
      break;
    case SettingName::kColorEasy:
      s.background = BackgroundKind::kTexture;
      s.palette_min = 20;
      s.palette_max = 150;
      s.object_margin = 64;
      break;
    case SettingName::kColorHard:
      s.background = BackgroundKind::kTexture;
      s.palette_min = 0;
      s.palette_max = 255;
      s.object_margin = 44;
      s.stripe_table = true;
      break;
    case SettingName::kVideoEasy:
      s.background = BackgroundKind::kAnimatedNoise;
      s.palette_min = 20;
      s.palette_max = 170;
      s.object_margin = 60;
      s.noise_octaves = 2;
      s.noise_speed = 0.05;
      s.contrast = 0.4;
      s.light_amplitude = 0.04;
      break;
    case SettingName::kVideoHard:
      s.background = BackgroundKind::kAnimatedTexture;
      s.palette_min = 0;
      s.palette_max = 255;
      s.object_margin = 44;
      s.noise_octaves = 4;
      s.noise_speed = 0.25;
      s.contrast = 1.0;
      s.scroll_speed = 1.5;
      s.light_amplitude = 0.08;
      break;
  }
  return s;
}

inline constexpr std::array<SettingName, 4> kPerturbedSettings = {SettingName::kColorEasy, SettingName::kColorHard,
                                                                  SettingName::kVideoEasy, SettingName::kVideoHard};

/// Three objects laid out in disjoint lanes of a width x height canvas: a disk,
/// a rectangle and a thin three-link chain.
inline SceneSpec default_scene(int width = 84, int height = 84) {
  const double sx = width / 84.0, sy = height / 84.0, s = std::min(sx, sy);
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.table_rows = static_cast<int>(std::lround(14 * sy));
  spec.objects = {
      {Shape::kDisk, {220, 50, 50}, 9 * s, 11, 20 * sx, 20 * sy, 4 * s},
      {Shape::kRectangle, {60, 200, 80}, 8 * s, 23, 62 * sx, 20 * sy, 4 * s},
      {Shape::kChain, {230, 200, 40}, 12 * s, 37, 16 * sx, 54 * sy, 3 * s},
  };
  return spec;
}

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

inline double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Position and joint angles of an object at a frame; pure function of the
/// object's trajectory seed.
struct Pose {
  double x = 0;
  double y = 0;
  std::array<double, 3> angles{};  // chain link directions (radians)
};

inline Pose trajectory(const SceneObject& obj, int frame_index) {
  using detail::mix;
  using detail::unit;
  const double two_pi = 2 * std::numbers::pi;
  const double t = frame_index;
  const double px = 17 + 14 * unit(mix(obj.trajectory_seed, 1));
  const double py = 19 + 14 * unit(mix(obj.trajectory_seed, 2));
  const double fx = two_pi * unit(mix(obj.trajectory_seed, 3));
  const double fy = two_pi * unit(mix(obj.trajectory_seed, 4));
  Pose p;
  p.x = obj.anchor_x + obj.amplitude * std::sin(two_pi * t / px + fx);
  p.y = obj.anchor_y + obj.amplitude * std::cos(two_pi * t / py + fy);
  double heading = -0.25;
  for (int j = 0; j < 3; ++j) {
    const double period = 23 + 11 * unit(mix(obj.trajectory_seed, 10 + j));
    const double phase = two_pi * unit(mix(obj.trajectory_seed, 20 + j));
    heading += (j == 0 ? 0.0 : 0.35 * (j % 2 ? 1 : -1)) + 0.3 * std::sin(two_pi * t / period + phase);
    p.angles[static_cast<std::size_t>(j)] = heading;
  }
  return p;
}

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

inline BinaryMask rasterize(const SceneObject& obj, const Pose& pose, int width, int height) {
  BinaryMask m(width, height);
  const double thickness = std::max(1.6, 1.6 * obj.size / 12.0);
  std::array<double, 4> jx{pose.x}, jy{pose.y};
  for (int j = 0; j < 3; ++j) {
    jx[static_cast<std::size_t>(j + 1)] = jx[static_cast<std::size_t>(j)] + obj.size * std::cos(pose.angles[static_cast<std::size_t>(j)]);
    jy[static_cast<std::size_t>(j + 1)] = jy[static_cast<std::size_t>(j)] + obj.size * std::sin(pose.angles[static_cast<std::size_t>(j)]);
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      bool in = false;
      switch (obj.shape) {
        case Shape::kDisk:
          in = (x - pose.x) * (x - pose.x) + (y - pose.y) * (y - pose.y) <= obj.size * obj.size;
          break;
        case Shape::kRectangle:
          in = std::abs(x - pose.x) <= obj.size && std::abs(y - pose.y) <= obj.size * 0.7;
          break;
        case Shape::kChain:
          for (int j = 0; j < 3 && !in; ++j)
            in = segment_distance(x, y, jx[static_cast<std::size_t>(j)], jy[static_cast<std::size_t>(j)],
                                  jx[static_cast<std::size_t>(j + 1)], jy[static_cast<std::size_t>(j + 1)]) <= thickness;
          break;
      }
      if (in) m.set(r, c);
    }
  }
  return m;
}

struct SceneFrame {
  Image image;
  std::vector<BinaryMask> masks;  // one per scene object, in object order
};

namespace detail {

inline Rgb random_color(std::uint64_t h, int lo, int hi) {
  Rgb c{};
  for (int k = 0; k < 3; ++k)
    c[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(lo + static_cast<int>(unit(mix(h, 100 + k)) * (hi - lo + 1)) % (hi - lo + 1));
  return c;
}

// Smooth value noise on an integer lattice, animated along a third axis.
inline double value_noise(double x, double y, double z, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(x - fx), ty = smooth(y - fy), tz = smooth(z - fz);
  auto lattice = [&](double i, double j, double k) {
    const auto h = mix(mix(mix(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(i))),
                           static_cast<std::uint64_t>(static_cast<std::int64_t>(j))),
                       static_cast<std::uint64_t>(static_cast<std::int64_t>(k)));
    return unit(h);
  };
  double v[2];
  for (int dz = 0; dz < 2; ++dz) {
    const double a = lattice(fx, fy, fz + dz), b = lattice(fx + 1, fy, fz + dz);
    const double c = lattice(fx, fy + 1, fz + dz), d = lattice(fx + 1, fy + 1, fz + dz);
    const double top = a + (b - a) * tx, bot = c + (d - c) * tx;
    v[dz] = top + (bot - top) * ty;
  }
  return v[0] + (v[1] - v[0]) * tz;
}

inline void set_rgb(std::uint8_t* p, double r, double g, double b) {
  p[0] = static_cast<std::uint8_t>(std::clamp(std::lround(r), 0L, 255L));
  p[1] = static_cast<std::uint8_t>(std::clamp(std::lround(g), 0L, 255L));
  p[2] = static_cast<std::uint8_t>(std::clamp(std::lround(b), 0L, 255L));
}

// Pushes a background colour until it is at least `margin` away (per-channel
// max) from every reference colour.
inline void repel(std::uint8_t* p, const std::vector<std::array<double, 3>>& refs, int margin) {
  for (int round = 0; round < 3; ++round) {
    bool moved = false;
    for (const auto& ref : refs) {
      int best = 0;
      double dmax = -1;
      for (int k = 0; k < 3; ++k) {
        const double d = std::abs(p[k] - ref[static_cast<std::size_t>(k)]);
        if (d > dmax) {
          dmax = d;
          best = k;
        }
      }
      if (dmax >= margin) continue;
      const double base = ref[static_cast<std::size_t>(best)];
      const double up = base + margin, down = base - margin;
      const bool prefer_up = p[best] >= base;
      double v = prefer_up ? (up <= 255 ? up : down) : (down >= 0 ? down : up);
      p[best] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      moved = true;
    }
    if (!moved) break;
  }
}

}  // namespace detail

/// Deterministic frame plus exact per-object masks. In colour settings only the
/// background and table colours depend on `seed`; in video settings the
/// background animates with `frame_index`. Objects keep their colours and move
/// along their trajectories in every setting.
inline SceneFrame generate_scene(const SceneSpec& spec, const PerturbationSetting& setting, int frame_index,
                                 std::uint64_t seed) {
  using namespace detail;
  if (spec.objects.empty()) throw Error(Error::Kind::kInvalidArgument, "scene has no objects");
  for (std::size_t i = 0; i < spec.objects.size(); ++i)
    for (std::size_t j = i + 1; j < spec.objects.size(); ++j)
      if (spec.objects[i].color == spec.objects[j].color)
        throw Error(Error::Kind::kInvalidArgument, "scene object colours must be pairwise distinct");

  SceneFrame out;
  const int w = spec.width, h = spec.height;
  out.image = Image(w, h);
  BinaryMask occupied(w, h);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    BinaryMask m = rasterize(spec.objects[i], trajectory(spec.objects[i], frame_index), w, h);
    if (m.none()) throw Error(Error::Kind::kInvalidArgument, "object " + std::to_string(i) + " leaves the canvas");
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (m.at(r, c) && occupied.at(r, c))
          throw Error(Error::Kind::kInvalidArgument, "scene objects overlap at frame " + std::to_string(frame_index));
    occupied = mask_union(occupied, m);
    out.masks.push_back(std::move(m));
  }

  const std::uint64_t sh = mix(seed, static_cast<std::uint64_t>(setting.name) + 1);
  Rgb bg = spec.background, ta = spec.table_a, tb = spec.table_b;
  if (setting.name != SettingName::kTrain) {
    bg = random_color(mix(sh, 1), setting.palette_min, setting.palette_max);
    ta = random_color(mix(sh, 2), setting.palette_min, setting.palette_max);
    tb = random_color(mix(sh, 3), setting.palette_min, setting.palette_max);
  }
  const Rgb ramp_a = random_color(mix(sh, 4), setting.palette_min, setting.palette_max);
  const Rgb ramp_b = random_color(mix(sh, 5), setting.palette_min, setting.palette_max);
  const Rgb ramp_c = random_color(mix(sh, 6), setting.palette_min, setting.palette_max);

  const double t = frame_index;
  const double light_dir = 0.07 * t + 2 * std::numbers::pi * unit(mix(sh, 7));
  auto light = [&](int r, int c) {
    if (setting.light_amplitude == 0) return 1.0;
    const double u = (c + 0.5) / w - 0.5, v = (r + 0.5) / h - 0.5;
    return 1.0 + 2 * setting.light_amplitude * (u * std::cos(light_dir) + v * std::sin(light_dir));
  };

  std::vector<std::array<double, 3>> refs;
  const int table_top = h - spec.table_rows;
  const double cell = std::max(2.0, 4.0 * w / 84.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::uint8_t* p = out.image.pixel(r, c);
      const double lf = light(r, c);
      int owner = -1;
      for (std::size_t i = 0; i < out.masks.size(); ++i)
        if (out.masks[i].at(r, c)) owner = static_cast<int>(i);
      if (owner >= 0) {
        const Rgb& oc = spec.objects[static_cast<std::size_t>(owner)].color;
        set_rgb(p, oc[0] * lf, oc[1] * lf, oc[2] * lf);
        continue;
      }
      double rgb[3] = {0, 0, 0};
      switch (setting.background) {
        case BackgroundKind::kStaticColor:
        case BackgroundKind::kTexture: {
          const Rgb* src = &bg;
          if (setting.background == BackgroundKind::kTexture && r >= table_top) {
            const int ci = static_cast<int>(c / cell), ri = static_cast<int>((r - table_top) / cell);
            const bool alt = setting.stripe_table ? (((c + r) / static_cast<int>(cell)) % 2 == 0) : ((ci + ri) % 2 == 0);
            src = alt ? &ta : &tb;
          }
          for (int k = 0; k < 3; ++k) rgb[k] = (*src)[static_cast<std::size_t>(k)];
          break;
        }
        case BackgroundKind::kAnimatedNoise:
        case BackgroundKind::kAnimatedTexture: {
          double n = 0, amp = 1, norm = 0, freq = 4.0 / w;
          for (int o = 0; o < setting.noise_octaves; ++o) {
            n += amp * value_noise(c * freq + 0.3 * t * setting.noise_speed, r * freq, t * setting.noise_speed,
                                   mix(sh, 50 + o));
            norm += amp;
            amp *= 0.5;
            freq *= 2;
          }
          n = norm > 0 ? n / norm : 0.5;
          if (setting.background == BackgroundKind::kAnimatedTexture) {
            const double stripe = std::sin((c + t * setting.scroll_speed) * 0.6 + r * 0.25);
            n = 0.65 * n + 0.35 * (0.5 + 0.5 * stripe);
          }
          n = std::clamp(0.5 + (n - 0.5) * (1 + 2 * setting.contrast), 0.0, 1.0);
          const Rgb& lo = n < 0.5 ? ramp_a : ramp_b;
          const Rgb& hi = n < 0.5 ? ramp_b : ramp_c;
          const double f = n < 0.5 ? n * 2 : (n - 0.5) * 2;
          for (int k = 0; k < 3; ++k)
            rgb[k] = lo[static_cast<std::size_t>(k)] + f * (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]);
          break;
        }
      }
      set_rgb(p, rgb[0] * lf, rgb[1] * lf, rgb[2] * lf);
      if (setting.name == SettingName::kTrain) continue;
      refs.clear();
      for (const auto& obj : spec.objects)
        refs.push_back({obj.color[0] * lf, obj.color[1] * lf, obj.color[2] * lf});
      repel(p, refs, setting.object_margin);
    }
  }
  return out;
}

}  // namespace samg::scene
