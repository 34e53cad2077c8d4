#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace samg {

/// Library-wide exception. `kind` lets frontends map failures to exit codes
/// and HTTP statuses without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kInvalidArgument,
    kDimensionMismatch,
    kValidation,
    kFormat,
    kVersionMismatch,
    kBackend,
    kNotFound,
    kNumeric,
  };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Dense row-major 2-D array. Used for mask logits and similarity maps.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw Error(Error::Kind::kInvalidArgument, "negative grid size");
  }
  Grid(int rows, int cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
      throw Error(Error::Kind::kDimensionMismatch, "grid data length does not match shape");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using LogitGrid = Grid<float>;

/// 8-bit RGB image, row-major, interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height), data_(checked_len(width, height), fill) {}
  Image(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_len(width, height))
      throw Error(Error::Kind::kDimensionMismatch, "image data length must be width*height*3");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  static constexpr int channels() noexcept { return 3; }

  std::uint8_t* pixel(int row, int col) { return &data_[(static_cast<std::size_t>(row) * width_ + col) * 3]; }
  const std::uint8_t* pixel(int row, int col) const {
    return &data_[(static_cast<std::size_t>(row) * width_ + col) * 3];
  }

  std::span<std::uint8_t> bytes() noexcept { return data_; }
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }

  bool operator==(const Image&) const = default;

 private:
  static std::size_t checked_len(int width, int height) {
    if (width < 1 || height < 1) throw Error(Error::Kind::kInvalidArgument, "image dimensions must be >= 1");
    return static_cast<std::size_t>(width) * height * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
    if (width < 1 || height < 1) throw Error(Error::Kind::kInvalidArgument, "mask dimensions must be >= 1");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool at(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool v = true) { bits_[static_cast<std::size_t>(row) * width_ + col] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool none() const noexcept { return std::find(bits_.begin(), bits_.end(), std::uint8_t{1}) == bits_.end(); }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;  // one byte per pixel, 0 or 1
};

/// Index into the 64x64 embedding grid.
struct GridCell {
  int row = 0;
  int col = 0;
  bool operator==(const GridCell&) const = default;
};

/// Inclusive, axis-aligned box in pixel (or cell) indices.
struct BBox {
  int min_row = 0;
  int min_col = 0;
  int max_row = 0;
  int max_col = 0;
  bool operator==(const BBox&) const = default;

  bool contains(int row, int col) const noexcept {
    return row >= min_row && row <= max_row && col >= min_col && col <= max_col;
  }
};

/// Pixel coordinate in an image. x is the column, y the row.
struct PixelPoint {
  int x = 0;
  int y = 0;
  bool operator==(const PixelPoint&) const = default;
};

/// Tightest box around the set bits. An empty mask yields the full-image box
/// so that the refinement loop never has to abort on a failed pass.
inline BBox mask_to_bbox(const BinaryMask& mask) {
  BBox box{mask.height(), mask.width(), -1, -1};
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      box.min_row = std::min(box.min_row, r);
      box.min_col = std::min(box.min_col, c);
      box.max_row = std::max(box.max_row, r);
      box.max_col = std::max(box.max_col, c);
    }
  }
  if (box.max_row < 0) return BBox{0, 0, mask.height() - 1, mask.width() - 1};
  return box;
}

inline void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw Error(Error::Kind::kDimensionMismatch, std::string(what) + ": mask dimensions differ");
}

/// Intersection over union; two empty masks score 1.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += (ab[i] & bb[i]);
    uni += (ab[i] | bb[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a, b, "mask_union");
  BinaryMask out(a.width(), a.height());
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c) out.set(r, c, a.at(r, c) || b.at(r, c));
  return out;
}

/// Zeroes every pixel outside the mask.
inline Image apply_mask(const Image& image, const BinaryMask& mask) {
  if (image.width() != mask.width() || image.height() != mask.height())
    throw Error(Error::Kind::kDimensionMismatch, "apply_mask: image and mask dimensions differ");
  Image out(image.width(), image.height());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      if (!mask.at(r, c)) continue;
      std::copy_n(image.pixel(r, c), 3, out.pixel(r, c));
    }
  }
  return out;
}

/// Nearest-neighbour resample of a mask to a new size.
inline BinaryMask resample_nearest(const BinaryMask& mask, int width, int height) {
  BinaryMask out(width, height);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(mask.height() - 1, static_cast<int>((static_cast<long long>(2 * r + 1) * mask.height()) / (2LL * height)));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(mask.width() - 1, static_cast<int>((static_cast<long long>(2 * c + 1) * mask.width()) / (2LL * width)));
      out.set(r, c, mask.at(sr, sc));
    }
  }
  return out;
}

}  // namespace samg
