#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samg/types.hpp"

namespace samg {

/// Side of the correspondence grid both encoders are aligned to.
inline constexpr int kGridSide = 64;
/// Native input side of the promptable decoder.
inline constexpr int kDecoderInputSide = 1024;

/// rows x cols grid of dim-channel embedding vectors, row-major, channels last.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int rows, int cols, int dim)
      : rows_(rows), cols_(cols), dim_(dim), data_(static_cast<std::size_t>(rows) * cols * dim, 0.0f) {
    if (rows < 1 || cols < 1 || dim < 1) throw Error(Error::Kind::kInvalidArgument, "feature grid shape must be positive");
  }
  FeatureGrid(int rows, int cols, int dim, std::vector<float> data)
      : rows_(rows), cols_(cols), dim_(dim), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols * dim)
      throw Error(Error::Kind::kDimensionMismatch, "feature grid data length does not match shape");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int dim() const noexcept { return dim_; }

  std::span<float> cell(int r, int c) {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const float> cell(int r, int c) const {
    return {data_.data() + (static_cast<std::size_t>(r) * cols_ + c) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::span<const float> cell(GridCell g) const { return cell(g.row, g.col); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const FeatureGrid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
};

/// Output of the segmenter encoder. `backend_state` is opaque and owned by the
/// backend that produced it; decoders that work from pixels keep the frame there.
struct ImageEmbedding {
  FeatureGrid features;
  std::shared_ptr<const void> backend_state;
};

/// Point in the decoder's native input square (x = column, y = row).
struct InputPoint {
  float x = 0.0f;
  float y = 0.0f;
  bool operator==(const InputPoint&) const = default;
};

struct PromptSet {
  std::vector<InputPoint> positives;
  std::vector<InputPoint> negatives;
  std::optional<BBox> box;                   // decoder input coordinates
  std::optional<LogitGrid> prior_logits;     // decoder output resolution

  std::size_t point_count() const noexcept { return positives.size() + negatives.size(); }
};

inline constexpr int kCandidateCount = 3;

struct MaskCandidates {
  std::array<LogitGrid, kCandidateCount> logits;
  std::array<float, kCandidateCount> scores{};

  int rows() const noexcept { return logits[0].rows(); }
  int cols() const noexcept { return logits[0].cols(); }

  void validate() const {
    for (const auto& g : logits) {
      if (g.rows() != logits[0].rows() || g.cols() != logits[0].cols() || g.empty())
        throw Error(Error::Kind::kBackend, "decoder returned candidates of differing shapes");
      for (float v : g.values())
        if (!std::isfinite(v)) throw Error(Error::Kind::kBackend, "decoder returned non-finite logits");
    }
    for (float s : scores)
      if (!std::isfinite(s)) throw Error(Error::Kind::kBackend, "decoder returned non-finite scores");
  }
};

/// Image encoders plus promptable decoder. Implementations are immutable after
/// construction and safe to call concurrently.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::string name() const = 0;
  virtual int segmenter_dim() const = 0;
  virtual int context_dim() const = 0;

  /// 64x64xsegmenter_dim() embedding of an arbitrary RGB frame.
  virtual ImageEmbedding encode_segmenter(const Image& image) const = 0;
  /// 64x64xcontext_dim() embedding, already aligned to the segmenter grid.
  virtual FeatureGrid encode_context(const Image& image) const = 0;
  /// Exactly three candidate logit grids and scores.
  virtual MaskCandidates decode(const ImageEmbedding& embedding, const PromptSet& prompts) const = 0;
};

/// Centre of a grid cell in decoder input coordinates.
inline InputPoint grid_to_input_coords(GridCell cell, int input_side = kDecoderInputSide, int grid_side = kGridSide) {
  if (cell.row < 0 || cell.row >= grid_side || cell.col < 0 || cell.col >= grid_side)
    throw Error(Error::Kind::kInvalidArgument, "grid cell out of range");
  const float stride = static_cast<float>(input_side) / static_cast<float>(grid_side);
  return InputPoint{cell.col * stride + stride / 2, cell.row * stride + stride / 2};
}

/// Grid-space box to the decoder input square; the max edge covers the whole last cell.
inline BBox grid_box_to_input(const BBox& grid_box, int input_side = kDecoderInputSide, int grid_side = kGridSide) {
  const int stride = input_side / grid_side;
  return BBox{grid_box.min_row * stride, grid_box.min_col * stride, (grid_box.max_row + 1) * stride - 1,
              (grid_box.max_col + 1) * stride - 1};
}

namespace detail {

struct LinearTap {
  int lo = 0;
  int hi = 0;
  float frac = 0.0f;  // weight of hi
};

/// Half-pixel-centre sampling positions (the align_corners=false convention).
inline std::vector<LinearTap> linear_taps(int in_size, int out_size) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int hi = std::min(lo + 1, in_size - 1);
    taps[static_cast<std::size_t>(o)] = {lo, hi, static_cast<float>(src - lo)};
  }
  return taps;
}

}  // namespace detail

inline FeatureGrid bilinear_resize(const FeatureGrid& in, int rows, int cols) {
  FeatureGrid out(rows, cols, in.dim());
  const auto rt = detail::linear_taps(in.rows(), rows);
  const auto ct = detail::linear_taps(in.cols(), cols);
  const int d = in.dim();
  for (int r = 0; r < rows; ++r) {
    const auto& ry = rt[static_cast<std::size_t>(r)];
    for (int c = 0; c < cols; ++c) {
      const auto& cx = ct[static_cast<std::size_t>(c)];
      auto a = in.cell(ry.lo, cx.lo), b = in.cell(ry.lo, cx.hi);
      auto e = in.cell(ry.hi, cx.lo), f = in.cell(ry.hi, cx.hi);
      auto dst = out.cell(r, c);
      // Nested lerps reproduce constant regions exactly.
      for (int k = 0; k < d; ++k) {
        const float top = a[k] + cx.frac * (b[k] - a[k]);
        const float bottom = e[k] + cx.frac * (f[k] - e[k]);
        dst[k] = top + ry.frac * (bottom - top);
      }
    }
  }
  return out;
}

inline LogitGrid bilinear_resize(const LogitGrid& in, int rows, int cols) {
  if (in.rows() == rows && in.cols() == cols) return in;
  FeatureGrid tmp(in.rows(), in.cols(), 1, std::vector<float>(in.values().begin(), in.values().end()));
  FeatureGrid res = bilinear_resize(tmp, rows, cols);
  return LogitGrid(rows, cols, std::vector<float>(res.values().begin(), res.values().end()));
}

/// Binary mask = logits > 0.
inline BinaryMask threshold_logits(const LogitGrid& logits) {
  BinaryMask m(logits.cols(), logits.rows());
  for (int r = 0; r < logits.rows(); ++r)
    for (int c = 0; c < logits.cols(); ++c) m.set(r, c, logits(r, c) > 0.0f);
  return m;
}

/// Resizes logits to the frame and thresholds them.
inline BinaryMask logits_to_frame_mask(const LogitGrid& logits, int width, int height) {
  return threshold_logits(bilinear_resize(logits, height, width));
}

}  // namespace samg
