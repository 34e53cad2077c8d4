#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "samg/segment.hpp"
#include "samg/types.hpp"

namespace samg::io {

inline Image from_mat_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1)
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  else if (bgr.channels() == 4)
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  else
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8U);
  Image img(rgb.cols, rgb.rows);
  for (int r = 0; r < rgb.rows; ++r) std::copy_n(rgb.ptr<std::uint8_t>(r), rgb.cols * 3, img.pixel(r, 0));
  return img;
}

inline cv::Mat to_mat_bgr(const Image& img) {
  cv::Mat rgb(img.height(), img.width(), CV_8UC3, const_cast<std::uint8_t*>(img.bytes().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

inline Image read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw Error(Error::Kind::kNotFound, "cannot read image " + path.string());
  return from_mat_bgr(m);
}

inline Image decode_image(const std::vector<std::uint8_t>& encoded) {
  const cv::Mat m = cv::imdecode(encoded, cv::IMREAD_COLOR);
  if (m.empty()) throw Error(Error::Kind::kFormat, "cannot decode image bytes");
  return from_mat_bgr(m);
}

inline std::vector<std::uint8_t> encode_png(const cv::Mat& m) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", m, out)) throw Error(Error::Kind::kFormat, "PNG encoding failed");
  return out;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) { return encode_png(to_mat_bgr(img)); }

inline void write_png(const std::filesystem::path& path, const cv::Mat& m) {
  if (!cv::imwrite(path.string(), m)) throw Error(Error::Kind::kInvalidArgument, "cannot write " + path.string());
}

inline void write_image(const std::filesystem::path& path, const Image& img) { write_png(path, to_mat_bgr(img)); }

inline cv::Mat mask_to_mat(const BinaryMask& m) {
  cv::Mat out(m.height(), m.width(), CV_8UC1);
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) out.at<std::uint8_t>(r, c) = m.at(r, c) ? 255 : 0;
  return out;
}

// Label image: each distinct nonzero value is one object, in ascending order.
inline std::vector<BinaryMask> masks_from_labels(const cv::Mat& labels_in) {
  cv::Mat labels;
  if (labels_in.channels() > 1)
    cv::cvtColor(labels_in, labels, cv::COLOR_BGR2GRAY);
  else
    labels = labels_in;
  labels.convertTo(labels, CV_32S);
  std::map<int, BinaryMask> by_label;
  for (int r = 0; r < labels.rows; ++r)
    for (int c = 0; c < labels.cols; ++c) {
      const int v = labels.at<int>(r, c);
      if (v == 0) continue;
      auto it = by_label.try_emplace(v, labels.cols, labels.rows).first;
      it->second.set(r, c);
    }
  std::vector<BinaryMask> out;
  for (auto& [_, m] : by_label) out.push_back(std::move(m));
  return out;
}

inline std::vector<BinaryMask> read_label_masks(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error(Error::Kind::kNotFound, "cannot read mask image " + path.string());
  return masks_from_labels(m);
}

inline std::vector<BinaryMask> decode_label_masks(const std::vector<std::uint8_t>& encoded) {
  const cv::Mat m = cv::imdecode(encoded, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error(Error::Kind::kFormat, "cannot decode mask image bytes");
  return masks_from_labels(m);
}

inline cv::Mat labels_from_masks(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw Error(Error::Kind::kInvalidArgument, "no masks to encode");
  cv::Mat out = cv::Mat::zeros(masks.front().height(), masks.front().width(), CV_8UC1);
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (int r = 0; r < out.rows; ++r)
      for (int c = 0; c < out.cols; ++c)
        if (masks[i].at(r, c)) out.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::min<std::size_t>(i + 1, 255));
  return out;
}

/// 16-bit grey PNG, value = round((s + 1) / 2 * 65535).
inline cv::Mat similarity_to_mat(const Grid<float>& g) {
  cv::Mat out(g.rows(), g.cols(), CV_16UC1);
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c)
      out.at<std::uint16_t>(r, c) =
          static_cast<std::uint16_t>(std::lround(std::clamp((g(r, c) + 1.0) / 2.0, 0.0, 1.0) * 65535.0));
  return out;
}

/// Raw frame stream: per frame a little-endian u32 width, u32 height, then
/// width*height*3 RGB bytes. Returns nullopt at a clean end of stream.
inline std::optional<Image> read_stream_frame(std::istream& in) {
  std::uint8_t hdr[8];
  in.read(reinterpret_cast<char*>(hdr), 8);
  if (in.gcount() == 0) return std::nullopt;
  if (in.gcount() != 8) throw Error(Error::Kind::kFormat, "truncated frame header in stream");
  auto u32 = [&](int o) {
    return std::uint32_t{hdr[o]} | (std::uint32_t{hdr[o + 1]} << 8) | (std::uint32_t{hdr[o + 2]} << 16) |
           (std::uint32_t{hdr[o + 3]} << 24);
  };
  const std::uint32_t w = u32(0), h = u32(4);
  if (w == 0 || h == 0 || w > 16384 || h > 16384)
    throw Error(Error::Kind::kFormat, "implausible frame size " + std::to_string(w) + "x" + std::to_string(h));
  Image img(static_cast<int>(w), static_cast<int>(h));
  const auto n = static_cast<std::streamsize>(w) * h * 3;
  in.read(reinterpret_cast<char*>(img.pixel(0, 0)), n);
  if (in.gcount() != n) throw Error(Error::Kind::kFormat, "truncated frame payload in stream");
  return img;
}

inline void write_stream_frame(std::ostream& out, const Image& img) {
  std::uint8_t hdr[8];
  const auto w = static_cast<std::uint32_t>(img.width()), h = static_cast<std::uint32_t>(img.height());
  for (int k = 0; k < 4; ++k) {
    hdr[k] = static_cast<std::uint8_t>(w >> (8 * k));
    hdr[4 + k] = static_cast<std::uint8_t>(h >> (8 * k));
  }
  out.write(reinterpret_cast<const char*>(hdr), 8);
  out.write(reinterpret_cast<const char*>(img.bytes().data()), static_cast<std::streamsize>(img.bytes().size()));
}

}  // namespace samg::io
