#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "samg/backend.hpp"
#include "samg/identify.hpp"
#include "samg/types.hpp"
#include "samg/weights.hpp"

namespace samg {

/// Fused cosine similarity between one point feature and every grid cell.
struct SimilarityMap {
  Grid<float> values;
  FeatureKind source = FeatureKind::kType1;
  int object_id = 0;
};

/// Both encoder grids of one frame plus their per-cell norms.
struct FrameFeatures {
  ImageEmbedding seg;
  FeatureGrid ctx;
  std::vector<double> seg_norms;
  std::vector<double> ctx_norms;
};

namespace detail {

inline std::vector<double> cell_norms(const FeatureGrid& g) {
  std::vector<double> out(static_cast<std::size_t>(g.rows()) * g.cols());
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      double s = 0;
      for (float v : g.cell(r, c)) s += static_cast<double>(v) * v;
      out[static_cast<std::size_t>(r) * g.cols() + c] = std::sqrt(s);
    }
  return out;
}

inline std::vector<double> unit(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (!(n > 0)) throw Error(Error::Kind::kValidation, "point feature has zero norm");
  std::vector<double> u(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / n;
  return u;
}

// Cosine of a unit vector against every cell; zero-norm cells score 0.
inline void accumulate_cosines(const std::vector<double>& u, const FeatureGrid& g, const std::vector<double>& norms,
                               std::vector<double>& acc) {
  if (static_cast<int>(u.size()) != g.dim())
    throw Error(Error::Kind::kDimensionMismatch, "point feature has " + std::to_string(u.size()) +
                                                     " channels but the frame grid has " + std::to_string(g.dim()));
  const auto d = u.size();
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      const auto idx = static_cast<std::size_t>(r) * g.cols() + c;
      const double n = norms[idx];
      if (!(n > 0)) continue;
      const float* v = g.cell(r, c).data();
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += u[k] * v[k];
      acc[idx] += dot / n;
    }
}

}  // namespace detail

inline FrameFeatures encode_frame(const Image& frame, const EncoderBackend& backend) {
  FrameFeatures f;
  f.seg = backend.encode_segmenter(frame);
  f.ctx = backend.encode_context(frame);
  if (f.seg.features.rows() != f.ctx.rows() || f.seg.features.cols() != f.ctx.cols())
    throw Error(Error::Kind::kBackend, "encoder grids are not aligned");
  f.seg_norms = detail::cell_norms(f.seg.features);
  f.ctx_norms = detail::cell_norms(f.ctx);
  return f;
}

inline SimilarityMap similarity_map(const PointFeature& pf, const FeatureGrid& seg_grid,
                                    const std::vector<double>& seg_norms, const FeatureGrid& ctx_grid,
                                    const std::vector<double>& ctx_norms) {
  if (seg_grid.rows() != ctx_grid.rows() || seg_grid.cols() != ctx_grid.cols())
    throw Error(Error::Kind::kDimensionMismatch, "similarity_map: grids are not aligned");
  std::vector<double> acc(static_cast<std::size_t>(seg_grid.rows()) * seg_grid.cols(), 0.0);
  detail::accumulate_cosines(detail::unit(pf.seg), seg_grid, seg_norms, acc);
  detail::accumulate_cosines(detail::unit(pf.ctx), ctx_grid, ctx_norms, acc);
  SimilarityMap map{Grid<float>(seg_grid.rows(), seg_grid.cols()), pf.kind, pf.object_id};
  auto out = map.values.values();
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(std::clamp(acc[i] / 2.0, -1.0, 1.0));
  return map;
}

/// Mean of the segmenter and context cosine maps for one point feature.
inline SimilarityMap similarity_map(const PointFeature& pf, const FeatureGrid& seg_grid, const FeatureGrid& ctx_grid) {
  return similarity_map(pf, seg_grid, detail::cell_norms(seg_grid), ctx_grid, detail::cell_norms(ctx_grid));
}

inline SimilarityMap similarity_map(const PointFeature& pf, const FrameFeatures& f) {
  return similarity_map(pf, f.seg.features, f.seg_norms, f.ctx, f.ctx_norms);
}

/// First maximum in row-major order.
inline GridCell argmax_cell(const Grid<float>& g) {
  GridCell best{0, 0};
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      if (g(r, c) > g(best.row, best.col)) best = {r, c};
  return best;
}

/// First minimum in row-major order, restricted to an inclusive box.
inline GridCell argmin_cell(const Grid<float>& g, const BBox& box) {
  if (box.min_row > box.max_row || box.min_col > box.max_col || box.min_row < 0 || box.min_col < 0 ||
      box.max_row >= g.rows() || box.max_col >= g.cols())
    throw Error(Error::Kind::kInvalidArgument, "argmin box is empty or outside the grid");
  GridCell best{box.min_row, box.min_col};
  for (int r = box.min_row; r <= box.max_row; ++r)
    for (int c = box.min_col; c <= box.max_col; ++c)
      if (g(r, c) < g(best.row, best.col)) best = {r, c};
  return best;
}

inline GridCell argmin_cell(const Grid<float>& g) { return argmin_cell(g, BBox{0, 0, g.rows() - 1, g.cols() - 1}); }

/// Maps for one object, type-1 first then the three type-2 maps.
using ObjectMaps = std::array<SimilarityMap, 1 + kExtraPointsPerObject>;

inline ObjectMaps object_maps(const BundleObject& obj, const FrameFeatures& f) {
  return {similarity_map(obj.type1, f), similarity_map(obj.type2[0], f), similarity_map(obj.type2[1], f),
          similarity_map(obj.type2[2], f)};
}

/// Pass-1 prompts: argmax of every map as a positive, argmin of the type-1 map
/// as the single negative. Type-2 minima are never used (they can fall on
/// other parts of the same object). Duplicates are kept.
inline PromptSet select_prompts(const ObjectMaps& maps) {
  if (maps[0].source != FeatureKind::kType1)
    throw Error(Error::Kind::kInvalidArgument, "select_prompts: first map must come from the type-1 feature");
  PromptSet p;
  for (const auto& m : maps) p.positives.push_back(grid_to_input_coords(argmax_cell(m.values)));
  p.negatives.push_back(grid_to_input_coords(argmin_cell(maps[0].values)));
  return p;
}

/// Least-similar cell of the type-1 map inside `grid_box`. May repeat an earlier negative.
inline GridCell refine_negative(const SimilarityMap& type1_map, const BBox& grid_box) {
  return argmin_cell(type1_map.values, grid_box);
}

inline std::array<double, kCandidateCount> mixing_coefficients(const AdaptedWeights& w) {
  return {w.w1, w.w2, 1.0 - w.w1 - w.w2};
}

/// M = w1*M1 + w2*M2 + (1 - w1 - w2)*M3, elementwise.
inline LogitGrid weighted_logits(const MaskCandidates& mc, const AdaptedWeights& w) {
  const auto k = mixing_coefficients(w);
  LogitGrid out(mc.rows(), mc.cols());
  auto dst = out.values();
  auto a = mc.logits[0].values(), b = mc.logits[1].values(), c = mc.logits[2].values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = static_cast<float>(k[0] * a[i] + k[1] * b[i] + k[2] * c[i]);
  return out;
}

/// Box of a logits-resolution mask, expressed in grid cells.
inline BBox logits_box_to_grid(const BinaryMask& rough, int grid_side = kGridSide) {
  const BBox px = mask_to_bbox(rough);
  // Pixel p spans [p, p+1); the max edge takes the last cell that span touches.
  auto lo = [grid_side](int p, int side) { return static_cast<int>((static_cast<long long>(p) * grid_side) / side); };
  auto hi = [grid_side](int p, int side) {
    return static_cast<int>(((static_cast<long long>(p) + 1) * grid_side + side - 1) / side) - 1;
  };
  return BBox{lo(px.min_row, rough.height()), lo(px.min_col, rough.width()), hi(px.max_row, rough.height()),
              hi(px.max_col, rough.width())};
}

struct PassDiagnostics {
  PromptSet prompts;  // prior logits are not retained, only their presence
  bool has_prior_logits = false;
  std::array<float, kCandidateCount> scores{};
  std::optional<BBox> rough_grid_box;  // bbox of this pass's weighted rough mask (passes 1-2)
};

struct ObjectDiagnostics {
  int object_id = 0;
  std::array<PassDiagnostics, 3> passes;
  int chosen_candidate = 0;
};

struct ObjectSegmentation {
  BinaryMask mask;
  ObjectDiagnostics diagnostics;
};

namespace detail {

inline MaskCandidates run_pass(const EncoderBackend& backend, const ImageEmbedding& emb, const PromptSet& prompts,
                               int pass) {
  try {
    MaskCandidates mc = backend.decode(emb, prompts);
    mc.validate();
    return mc;
  } catch (const Error& e) {
    throw Error(e.kind(), "decoder pass " + std::to_string(pass) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(Error::Kind::kBackend, "decoder pass " + std::to_string(pass) + ": " + e.what());
  }
}

inline PromptSet strip_prior(const PromptSet& p) {
  PromptSet q = p;
  q.prior_logits.reset();
  return q;
}

}  // namespace detail

/// Three decoder passes for one object. Pass 1 uses 4 positives + 1 negative.
/// Each later pass adds the least-similar type-1 cell inside the previous
/// weighted rough mask's box as a negative and carries that box and the
/// weighted logits forward. The final mask is the highest-scoring candidate of
/// pass 3, thresholded at 0 and resized to the frame.
inline ObjectSegmentation segment_object(const FrameFeatures& features, const BundleObject& obj,
                                         const AdaptedWeights& weights, const EncoderBackend& backend, int frame_width,
                                         int frame_height) {
  const ObjectMaps maps = object_maps(obj, features);
  ObjectSegmentation result;
  result.diagnostics.object_id = obj.object_id;

  PromptSet prompts = select_prompts(maps);
  MaskCandidates mc;
  for (int pass = 1; pass <= 3; ++pass) {
    mc = detail::run_pass(backend, features.seg, prompts, pass);
    auto& diag = result.diagnostics.passes[static_cast<std::size_t>(pass - 1)];
    diag.prompts = detail::strip_prior(prompts);
    diag.has_prior_logits = prompts.prior_logits.has_value();
    diag.scores = mc.scores;
    if (pass == 3) break;

    LogitGrid mixed = weighted_logits(mc, weights);
    const BBox grid_box = logits_box_to_grid(threshold_logits(mixed));
    diag.rough_grid_box = grid_box;
    prompts.negatives.push_back(grid_to_input_coords(refine_negative(maps[0], grid_box)));
    prompts.box = grid_box_to_input(grid_box);
    prompts.prior_logits = std::move(mixed);
  }

  int best = 0;
  for (int k = 1; k < kCandidateCount; ++k)
    if (mc.scores[static_cast<std::size_t>(k)] > mc.scores[static_cast<std::size_t>(best)]) best = k;
  result.diagnostics.chosen_candidate = best;
  result.mask = logits_to_frame_mask(mc.logits[static_cast<std::size_t>(best)], frame_width, frame_height);
  return result;
}

struct SegmentationResult {
  std::vector<BinaryMask> object_masks;
  BinaryMask union_mask;
  Image masked_frame;
  std::vector<ObjectDiagnostics> diagnostics;
};

/// Encodes the frame once per encoder, segments every bundle object in its own
/// decoder calls and ORs the per-object masks.
inline SegmentationResult segment_frame(const Image& frame, const PointFeatureBundle& bundle,
                                        const EncoderBackend& backend) {
  if (bundle.objects.empty()) throw Error(Error::Kind::kInvalidArgument, "bundle has no objects");
  const FrameFeatures features = encode_frame(frame, backend);
  SegmentationResult res;
  res.union_mask = BinaryMask(frame.width(), frame.height());
  for (const auto& obj : bundle.objects) {
    ObjectSegmentation seg = segment_object(features, obj, bundle.weights, backend, frame.width(), frame.height());
    res.union_mask = mask_union(res.union_mask, seg.mask);
    res.object_masks.push_back(std::move(seg.mask));
    res.diagnostics.push_back(std::move(seg.diagnostics));
  }
  res.masked_frame = apply_mask(frame, res.union_mask);
  return res;
}

/// Frames of a stack are segmented independently, in input order.
inline std::vector<SegmentationResult> segment_stack(const std::vector<Image>& frames, const PointFeatureBundle& bundle,
                                                     const EncoderBackend& backend) {
  std::vector<SegmentationResult> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(segment_frame(f, bundle, backend));
  return out;
}

}  // namespace samg
