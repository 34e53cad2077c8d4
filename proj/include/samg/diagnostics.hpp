#pragma once

#include <vector>

#include "json.hpp"
#include "samg/segment.hpp"

namespace samg {

inline nlohmann::json box_json(const BBox& b) { return {b.min_row, b.min_col, b.max_row, b.max_col}; }

/// Per-object pass trace: prompts (x, y in decoder input space), box, prior
/// presence, candidate scores and the chosen candidate.
inline nlohmann::json diagnostics_json(const std::vector<ObjectDiagnostics>& diags) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& d : diags) {
    nlohmann::json passes = nlohmann::json::array();
    for (std::size_t i = 0; i < d.passes.size(); ++i) {
      const auto& p = d.passes[i];
      nlohmann::json pos = nlohmann::json::array(), neg = nlohmann::json::array();
      for (const auto& q : p.prompts.positives) pos.push_back({q.x, q.y});
      for (const auto& q : p.prompts.negatives) neg.push_back({q.x, q.y});
      passes.push_back({{"pass", i + 1},
                        {"point_count", p.prompts.point_count()},
                        {"positives", pos},
                        {"negatives", neg},
                        {"box", p.prompts.box ? box_json(*p.prompts.box) : nlohmann::json(nullptr)},
                        {"has_prior_logits", p.has_prior_logits},
                        {"scores", p.scores},
                        {"rough_grid_box", p.rough_grid_box ? box_json(*p.rough_grid_box) : nlohmann::json(nullptr)}});
    }
    objs.push_back({{"object_id", d.object_id}, {"chosen_candidate", d.chosen_candidate}, {"passes", passes}});
  }
  return {{"objects", objs}};
}

}  // namespace samg
