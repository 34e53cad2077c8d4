#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "samg/codec.hpp"
#include "samg/identify.hpp"

namespace samg {

inline constexpr std::string_view kBundleMagic = "samg-bundle";
inline constexpr int kBundleFormatVersion = 1;

namespace detail {

inline void append_number(std::string& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  out.append(buf, res.ptr);
}

inline void append_number(std::string& out, double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

// Feature vectors are written at float precision.
inline void append_vector(std::string& out, const std::vector<double>& v) {
  out.push_back('[');
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_number(out, static_cast<float>(v[i]));
  }
  out.push_back(']');
}

// Names the last top-level or object-level key that starts before `offset`,
// so a truncated file reports which section it broke in.
inline std::string section_at(std::string_view text, std::size_t offset) {
  static constexpr std::string_view kSections[] = {"format",   "format_version", "task_name", "reference_size",
                                                    "objects",  "mask",           "type1",     "type2",
                                                    "weights"};
  std::string best = "header";
  std::size_t best_pos = 0;
  const std::string_view prefix = text.substr(0, std::min(offset, text.size()));
  for (auto key : kSections) {
    const std::string quoted = "\"" + std::string(key) + "\":";
    const auto pos = prefix.rfind(quoted);
    if (pos != std::string_view::npos && pos >= best_pos) {
      best_pos = pos;
      best = std::string(key);
    }
  }
  return best;
}

inline std::vector<double> read_floats(const nlohmann::json& j, std::size_t expected, const std::string& where) {
  if (!j.is_array()) throw Error(Error::Kind::kFormat, where + ": expected an array of numbers");
  if (expected && j.size() != expected)
    throw Error(Error::Kind::kFormat, where + ": expected " + std::to_string(expected) + " values, got " +
                                          std::to_string(j.size()));
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(Error::Kind::kFormat, where + ": non-numeric entry");
    out.push_back(static_cast<float>(v.get<double>()));
  }
  return out;
}

}  // namespace detail

/// Canonical JSON text. Feature floats use 9 significant digits, which is
/// exact for float32, so load -> serialize reproduces the bytes.
inline std::string serialize_bundle(const PointFeatureBundle& b) {
  std::string out;
  out.reserve(64 + b.objects.size() * 4 * 16 * static_cast<std::size_t>(b.seg_dim() + b.ctx_dim()));
  out += "{\"format\":\"";
  out += kBundleMagic;
  out += "\",\"format_version\":" + std::to_string(kBundleFormatVersion);
  out += ",\"task_name\":" + nlohmann::json(b.task_name).dump();
  out += ",\"reference_size\":[" + std::to_string(b.reference_width) + "," + std::to_string(b.reference_height) + "]";
  out += ",\"objects\":[";
  for (std::size_t i = 0; i < b.objects.size(); ++i) {
    const auto& o = b.objects[i];
    if (i) out.push_back(',');
    out += "{\"object_id\":" + std::to_string(o.object_id);
    out += ",\"mask\":{\"width\":" + std::to_string(o.mask.width()) + ",\"height\":" + std::to_string(o.mask.height()) +
           ",\"bits\":\"" + codec::base64_encode(codec::pack_bits(o.mask)) + "\"}";
    out += ",\"type1\":{\"seg\":";
    detail::append_vector(out, o.type1.seg);
    out += ",\"ctx\":";
    detail::append_vector(out, o.type1.ctx);
    out += "},\"type2\":[";
    for (std::size_t k = 0; k < o.type2.size(); ++k) {
      const auto& t = o.type2[k];
      if (k) out.push_back(',');
      const GridCell cell = t.source_cell.value_or(GridCell{});
      out += "{\"cell\":[" + std::to_string(cell.row) + "," + std::to_string(cell.col) + "],\"seg\":";
      detail::append_vector(out, t.seg);
      out += ",\"ctx\":";
      detail::append_vector(out, t.ctx);
      out += "}";
    }
    out += "]}";
  }
  out += "],\"weights\":{\"w1\":";
  detail::append_number(out, b.weights.w1);
  out += ",\"w2\":";
  detail::append_number(out, b.weights.w2);
  out += "}}\n";
  return out;
}

inline PointFeatureBundle parse_bundle(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Error::Kind::kFormat, "bundle parse error in section '" + detail::section_at(text, e.byte) +
                                          "' at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || j["format"] != kBundleMagic)
    throw Error(Error::Kind::kVersionMismatch, "not a samg bundle (missing or wrong format magic)");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
      j["format_version"].get<int>() != kBundleFormatVersion)
    throw Error(Error::Kind::kVersionMismatch, "unsupported bundle format_version (expected " +
                                                   std::to_string(kBundleFormatVersion) + ")");
  PointFeatureBundle b;
  try {
    b.task_name = j.at("task_name").get<std::string>();
    const auto& size = j.at("reference_size");
    b.reference_width = size.at(0).get<int>();
    b.reference_height = size.at(1).get<int>();
    const auto& objs = j.at("objects");
    if (!objs.is_array() || objs.empty()) throw Error(Error::Kind::kFormat, "section 'objects': must be a non-empty array");
    std::size_t seg_dim = 0, ctx_dim = 0;
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const auto& jo = objs[i];
      const std::string where = "section 'objects'[" + std::to_string(i) + "]";
      BundleObject o;
      o.object_id = jo.at("object_id").get<int>();
      const auto& jm = jo.at("mask");
      const auto packed = codec::base64_decode(jm.at("bits").get<std::string>());
      o.mask = codec::unpack_bits(packed, jm.at("width").get<int>(), jm.at("height").get<int>());
      const auto& t1 = jo.at("type1");
      o.type1.kind = FeatureKind::kType1;
      o.type1.object_id = o.object_id;
      o.type1.seg = detail::read_floats(t1.at("seg"), seg_dim, where + ".type1.seg");
      o.type1.ctx = detail::read_floats(t1.at("ctx"), ctx_dim, where + ".type1.ctx");
      seg_dim = o.type1.seg.size();
      ctx_dim = o.type1.ctx.size();
      const auto& t2 = jo.at("type2");
      if (!t2.is_array() || t2.size() != kExtraPointsPerObject)
        throw Error(Error::Kind::kFormat, where + ".type2: exactly 3 entries required");
      for (std::size_t k = 0; k < kExtraPointsPerObject; ++k) {
        auto& pf = o.type2[k];
        pf.kind = FeatureKind::kType2;
        pf.object_id = o.object_id;
        pf.source_cell = GridCell{t2[k].at("cell").at(0).get<int>(), t2[k].at("cell").at(1).get<int>()};
        pf.seg = detail::read_floats(t2[k].at("seg"), seg_dim, where + ".type2.seg");
        pf.ctx = detail::read_floats(t2[k].at("ctx"), ctx_dim, where + ".type2.ctx");
      }
      b.objects.push_back(std::move(o));
    }
    const auto& w = j.at("weights");
    b.weights.w1 = w.at("w1").get<double>();
    b.weights.w2 = w.at("w2").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Kind::kFormat, std::string("malformed bundle: ") + e.what());
  }
  return b;
}

inline void save_bundle(const PointFeatureBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Error::Kind::kInvalidArgument, "cannot open " + path.string() + " for writing");
  out << serialize_bundle(bundle);
  if (!out) throw Error(Error::Kind::kInvalidArgument, "failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Error::Kind::kNotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline PointFeatureBundle load_bundle(const std::filesystem::path& path) { return parse_bundle(read_file(path)); }

}  // namespace samg
