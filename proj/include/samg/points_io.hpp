#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "samg/identify.hpp"

namespace samg {

namespace detail {

inline int line_of(std::string_view text, std::size_t byte) {
  const auto end = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n'));
}

}  // namespace detail

/// Extra points file: {"objects": [{"object_id": i, "points": [[x, y] x3]}, ...]}
/// with x = column and y = row in reference pixels. Object i pairs with the
/// i-th mask. `source` names the file in error messages.
inline std::vector<ExtraPoints> parse_extra_points(std::string_view text, std::size_t object_count,
                                                   const std::string& source = "points") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Error::Kind::kFormat,
                source + ":" + std::to_string(detail::line_of(text, e.byte)) + ": invalid JSON: " + e.what());
  }
  const auto fail = [&](const std::string& msg) { throw Error(Error::Kind::kValidation, source + ": " + msg); };
  if (!j.is_object() || !j.contains("objects") || !j["objects"].is_array()) fail("expected an object with an 'objects' array");
  const auto& objs = j["objects"];
  std::vector<ExtraPoints> out(object_count);
  std::vector<bool> seen(object_count, false);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const auto& o = objs[i];
    const int id = o.contains("object_id") ? o["object_id"].get<int>() : static_cast<int>(i);
    if (id < 0 || static_cast<std::size_t>(id) >= object_count)
      fail("object_id " + std::to_string(id) + " has no mask (" + std::to_string(object_count) + " objects)");
    if (!o.contains("points") || !o["points"].is_array() || o["points"].size() != kExtraPointsPerObject)
      fail("object " + std::to_string(id) + ": exactly 3 extra points are required per object");
    for (std::size_t k = 0; k < kExtraPointsPerObject; ++k) {
      const auto& p = o["points"][k];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
        fail("object " + std::to_string(id) + ", point " + std::to_string(k) + ": expected [x, y] integers");
      out[static_cast<std::size_t>(id)][k] = PixelPoint{p[0].get<int>(), p[1].get<int>()};
    }
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (std::size_t i = 0; i < object_count; ++i)
    if (!seen[i])
      fail("object " + std::to_string(i) + " has no points; exactly 3 extra points are required for each of the " +
           std::to_string(object_count) + " objects");
  return out;
}

inline std::string extra_points_json(const std::vector<ExtraPoints>& pts) {
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& q : pts[i]) p.push_back({q.x, q.y});
    j["objects"].push_back({{"object_id", i}, {"points", p}});
  }
  return j.dump() + "\n";
}

}  // namespace samg
