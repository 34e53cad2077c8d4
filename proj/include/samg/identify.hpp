#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "samg/backend.hpp"
#include "samg/types.hpp"
#include "samg/weights.hpp"

namespace samg {

inline constexpr int kExtraPointsPerObject = 3;

enum class FeatureKind { kType1, kType2 };

/// Embedding vectors that summarise one object, harvested from the reference image.
struct PointFeature {
  FeatureKind kind = FeatureKind::kType1;
  // Held in double so that similarity maps are exactly invariant to rescaling
  // the vector; values produced from encoder grids are float-representable.
  std::vector<double> seg;  // segmenter encoder channels
  std::vector<double> ctx;  // context encoder channels
  std::optional<GridCell> source_cell;  // type-2 only
  int object_id = 0;

  bool operator==(const PointFeature&) const = default;
};

struct BundleObject {
  int object_id = 0;
  BinaryMask mask;
  PointFeature type1;
  std::array<PointFeature, kExtraPointsPerObject> type2;

  bool operator==(const BundleObject&) const = default;
};

struct PointFeatureBundle {
  std::string task_name;
  int reference_width = 0;
  int reference_height = 0;
  std::vector<BundleObject> objects;
  AdaptedWeights weights;

  int seg_dim() const { return objects.empty() ? 0 : static_cast<int>(objects.front().type1.seg.size()); }
  int ctx_dim() const { return objects.empty() ? 0 : static_cast<int>(objects.front().type1.ctx.size()); }

  /// Rows of the stacked point-feature matrices: 1 + 3 per object.
  int feature_rows() const { return static_cast<int>(objects.size()) * (1 + kExtraPointsPerObject); }

  /// Row-major (4k) x dim matrix; per object the type-1 row precedes its three type-2 rows.
  std::vector<double> seg_matrix() const { return stack(&PointFeature::seg); }
  std::vector<double> ctx_matrix() const { return stack(&PointFeature::ctx); }

  bool operator==(const PointFeatureBundle&) const = default;

 private:
  std::vector<double> stack(std::vector<double> PointFeature::*field) const {
    std::vector<double> out;
    for (const auto& o : objects) {
      out.insert(out.end(), (o.type1.*field).begin(), (o.type1.*field).end());
      for (const auto& t : o.type2) out.insert(out.end(), (t.*field).begin(), (t.*field).end());
    }
    return out;
  }
};

/// Pixel -> grid cell by floor scaling on each axis.
inline GridCell pixel_to_cell(PixelPoint p, int width, int height, int grid_side = kGridSide) {
  if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
    throw Error(Error::Kind::kInvalidArgument, "point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                                   ") lies outside the " + std::to_string(width) + "x" +
                                                   std::to_string(height) + " image");
  return GridCell{static_cast<int>((static_cast<long long>(p.y) * grid_side) / height),
                  static_cast<int>((static_cast<long long>(p.x) * grid_side) / width)};
}

/// Grid-resolution mask where a cell is set if any covered pixel is set, so
/// thin structures survive the downsampling.
inline BinaryMask downsample_mask_to_grid(const BinaryMask& mask, int grid_side = kGridSide) {
  BinaryMask out(grid_side, grid_side);
  for (int r = 0; r < mask.height(); ++r) {
    const int gr = static_cast<int>((static_cast<long long>(r) * grid_side) / mask.height());
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      out.set(gr, static_cast<int>((static_cast<long long>(c) * grid_side) / mask.width()));
    }
  }
  return out;
}

/// (mean + max) / 2 per channel over the cells the mask covers. Pools only
/// over covered cells; excluded cells are not zero-padded.
inline std::vector<double> fetch_type1(const FeatureGrid& grid, const BinaryMask& mask) {
  const BinaryMask cells = downsample_mask_to_grid(mask, grid.rows());
  const auto d = static_cast<std::size_t>(grid.dim());
  std::vector<double> sum(d, 0.0);
  std::vector<float> mx(d, -std::numeric_limits<float>::infinity());
  std::size_t n = 0;
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      if (!cells.at(r, c)) continue;
      auto v = grid.cell(r, c);
      for (std::size_t k = 0; k < d; ++k) {
        sum[k] += v[k];
        mx[k] = std::max(mx[k], v[k]);
      }
      ++n;
    }
  }
  if (n == 0)
    throw Error(Error::Kind::kValidation,
                "mask selects no grid cells after downsampling; provide a larger mask or a higher-resolution image");
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k)
    out[k] = static_cast<float>((sum[k] / static_cast<double>(n) + static_cast<double>(mx[k])) / 2.0);
  return out;
}

/// Embedding at the cell containing `point` of a width x height reference image.
inline std::pair<std::vector<double>, GridCell> fetch_type2(const FeatureGrid& grid, PixelPoint point, int width,
                                                           int height) {
  const GridCell cell = pixel_to_cell(point, width, height, grid.rows());
  auto v = grid.cell(cell);
  return {std::vector<double>(v.begin(), v.end()), cell};
}

namespace detail {

inline void require_nonzero(const std::vector<double>& v, int object_id, const char* what) {
  double n = 0;
  for (double x : v) n += x * x;
  if (!(n > 0) || !std::isfinite(n))
    throw Error(Error::Kind::kValidation, "object " + std::to_string(object_id) + ": " + what +
                                              " point feature has zero or non-finite norm");
}

}  // namespace detail

using ExtraPoints = std::array<PixelPoint, kExtraPointsPerObject>;

/// Builds the per-task bundle from one reference frame, one mask per object and
/// three on-object extra points per object.
inline PointFeatureBundle build_bundle(const Image& image, const std::vector<BinaryMask>& masks,
                                       const std::vector<ExtraPoints>& extra_points, const EncoderBackend& backend,
                                       std::string task_name = "task") {
  if (masks.empty()) throw Error(Error::Kind::kValidation, "at least one object mask is required");
  if (extra_points.size() != masks.size())
    throw Error(Error::Kind::kValidation, "exactly 3 extra points are required for each of the " +
                                              std::to_string(masks.size()) + " objects (got point sets for " +
                                              std::to_string(extra_points.size()) + ")");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& m = masks[i];
    const std::string obj = "object " + std::to_string(i);
    if (m.width() != image.width() || m.height() != image.height())
      throw Error(Error::Kind::kDimensionMismatch, obj + ": mask dimensions differ from the image");
    if (m.none()) throw Error(Error::Kind::kValidation, obj + ": mask is empty");
    for (std::size_t k = 0; k < extra_points[i].size(); ++k) {
      const PixelPoint p = extra_points[i][k];
      if (p.x < 0 || p.y < 0 || p.x >= image.width() || p.y >= image.height() || !m.at(p.y, p.x))
        throw Error(Error::Kind::kValidation, obj + ", point " + std::to_string(k) + " (" + std::to_string(p.x) + "," +
                                                  std::to_string(p.y) + ") lies outside the object mask");
    }
  }

  const FeatureGrid seg = backend.encode_segmenter(image).features;
  const FeatureGrid ctx = backend.encode_context(image);

  PointFeatureBundle bundle;
  bundle.task_name = std::move(task_name);
  bundle.reference_width = image.width();
  bundle.reference_height = image.height();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const int id = static_cast<int>(i);
    BundleObject obj;
    obj.object_id = id;
    obj.mask = masks[i];
    obj.type1 = PointFeature{FeatureKind::kType1, fetch_type1(seg, masks[i]), fetch_type1(ctx, masks[i]),
                             std::nullopt, id};
    detail::require_nonzero(obj.type1.seg, id, "type-1 segmenter");
    detail::require_nonzero(obj.type1.ctx, id, "type-1 context");
    for (std::size_t k = 0; k < kExtraPointsPerObject; ++k) {
      auto [sv, cell] = fetch_type2(seg, extra_points[i][k], image.width(), image.height());
      auto cv = ctx.cell(cell);
      obj.type2[k] = PointFeature{FeatureKind::kType2, std::move(sv), std::vector<double>(cv.begin(), cv.end()),
                                  cell, id};
      detail::require_nonzero(obj.type2[k].seg, id, "type-2 segmenter");
      detail::require_nonzero(obj.type2[k].ctx, id, "type-2 context");
    }
    bundle.objects.push_back(std::move(obj));
  }
  return bundle;
}

}  // namespace samg
