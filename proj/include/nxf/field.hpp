#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nxf/error.hpp"

namespace nxf {

using Index = Eigen::Index;

/// Dense multi-channel grid, row-major with interleaved channels:
/// value(x, y, ch) lives at data[(y * width + x) * channels + ch].
/// Grid spacing is h_x = h_y = 1 on every level.
template <typename Scalar_>
class Field {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Field() = default;
  Field(Index width, Index height, Index channels)
      : width_(width), height_(height), channels_(channels),
        data_(Storage::Zero(width * height * channels)) {
    if (width < 0 || height < 0 || channels < 1) {
      throw Error(ErrorKind::InvalidArgument, "field dimensions must be non-negative");
    }
  }
  Field(Index width, Index height, Index channels, Scalar fill)
      : Field(width, height, channels) {
    data_.setConstant(fill);
  }

  static Field constant(Index width, Index height, Index channels, Scalar v) {
    return Field(width, height, channels, v);
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index channels() const { return channels_; }
  Index pixels() const { return width_ * height_; }
  Index size() const { return data_.size(); }

  Scalar& operator()(Index x, Index y, Index ch = 0) {
    return data_[(y * width_ + x) * channels_ + ch];
  }
  Scalar operator()(Index x, Index y, Index ch = 0) const {
    return data_[(y * width_ + x) * channels_ + ch];
  }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  bool same_shape(const Field& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  /// Copy of a single channel as a one-channel field.
  Field channel(Index ch) const {
    Field out(width_, height_, 1);
    for (Index p = 0; p < pixels(); ++p) out.data_[p] = data_[p * channels_ + ch];
    return out;
  }

  template <typename Other>
  Field<Other> cast() const {
    Field<Other> out(width_, height_, channels_);
    out.data() = data_.template cast<Other>();
    return out;
  }

  friend bool operator==(const Field& a, const Field& b) {
    return a.same_shape(b) && (a.data_ == b.data_).all();
  }

 private:
  Index width_ = 0;
  Index height_ = 0;
  Index channels_ = 1;
  Storage data_;
};

using Field2D = Field<double>;

/// Binary known-pixel mask.
class Mask {
 public:
  Mask() = default;
  Mask(Index width, Index height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width * height), fill ? 1 : 0) {
    if (width < 0 || height < 0) {
      throw Error(ErrorKind::InvalidArgument, "mask dimensions must be non-negative");
    }
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index pixels() const { return width_ * height_; }

  bool operator()(Index x, Index y) const { return bits_[static_cast<std::size_t>(y * width_ + x)] != 0; }
  void set(Index x, Index y, bool v) { bits_[static_cast<std::size_t>(y * width_ + x)] = v ? 1 : 0; }

  bool at(Index p) const { return bits_[static_cast<std::size_t>(p)] != 0; }
  void set(Index p, bool v) { bits_[static_cast<std::size_t>(p)] = v ? 1 : 0; }

  Index count() const {
    return static_cast<Index>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  double density() const {
    return pixels() == 0 ? 0.0 : static_cast<double>(count()) / static_cast<double>(pixels());
  }

  /// Flat indices of all set pixels in increasing order.
  std::vector<Index> indices() const {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(count()));
    for (Index p = 0; p < pixels(); ++p) {
      if (at(p)) out.push_back(p);
    }
    return out;
  }

  template <typename Scalar>
  bool matches(const Field<Scalar>& f) const {
    return f.width() == width_ && f.height() == height_;
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
  }

 private:
  Index width_ = 0;
  Index height_ = 0;
  std::vector<std::uint8_t> bits_;
};

template <typename Scalar>
struct PyramidLevel {
  Field<Scalar> image;
  Mask mask;
  Field<Scalar> sparse_flow;
  int level_index = 0;
};

namespace detail {

inline void check_poolable(Index w, Index h) {
  if (w < 2 || h < 2) {
    throw Error(ErrorKind::InvalidPyramid,
                "cannot pool a " + std::to_string(w) + "x" + std::to_string(h) + " grid");
  }
}

// Source rows (or columns) covered by output index i along an axis of length n.
// A trailing odd sample is folded into the last block.
inline std::pair<Index, Index> pool_span(Index i, Index n) {
  const Index out = n / 2;
  const Index lo = 2 * i;
  const Index hi = (i == out - 1) ? n : lo + 2;
  return {lo, hi};
}

}  // namespace detail

/// 2x2 average pooling. Output is floor(w/2) x floor(h/2).
template <typename Scalar>
Field<Scalar> avg_pool2(const Field<Scalar>& f) {
  detail::check_poolable(f.width(), f.height());
  const Index ow = f.width() / 2, oh = f.height() / 2, c = f.channels();
  Field<Scalar> out(ow, oh, c);
  for (Index oy = 0; oy < oh; ++oy) {
    const auto [y0, y1] = detail::pool_span(oy, f.height());
    for (Index ox = 0; ox < ow; ++ox) {
      const auto [x0, x1] = detail::pool_span(ox, f.width());
      const Scalar n = static_cast<Scalar>((y1 - y0) * (x1 - x0));
      for (Index ch = 0; ch < c; ++ch) {
        Scalar acc = 0;
        for (Index y = y0; y < y1; ++y)
          for (Index x = x0; x < x1; ++x) acc += f(x, y, ch);
        out(ox, oy, ch) = acc / n;
      }
    }
  }
  return out;
}

/// 2x2 max pooling: an output pixel is known iff any pixel of its block is.
inline Mask max_pool2(const Mask& m) {
  detail::check_poolable(m.width(), m.height());
  const Index ow = m.width() / 2, oh = m.height() / 2;
  Mask out(ow, oh);
  for (Index oy = 0; oy < oh; ++oy) {
    const auto [y0, y1] = detail::pool_span(oy, m.height());
    for (Index ox = 0; ox < ow; ++ox) {
      const auto [x0, x1] = detail::pool_span(ox, m.width());
      bool any = false;
      for (Index y = y0; y < y1 && !any; ++y)
        for (Index x = x0; x < x1 && !any; ++x) any = m(x, y);
      out.set(ox, oy, any);
    }
  }
  return out;
}

template <typename Scalar>
struct SparseField {
  Field<Scalar> flow;
  Mask mask;
};

/// Average of the known samples in each 2x2 block. Blocks without any known
/// sample produce 0 and an unset mask bit.
template <typename Scalar>
SparseField<Scalar> sparse_avg_pool2(const Field<Scalar>& flow, const Mask& m) {
  if (!m.matches(flow)) {
    throw Error(ErrorKind::InvalidArgument, "sparse_avg_pool2: flow and mask dimensions differ");
  }
  detail::check_poolable(flow.width(), flow.height());
  const Index ow = flow.width() / 2, oh = flow.height() / 2, c = flow.channels();
  SparseField<Scalar> out{Field<Scalar>(ow, oh, c), Mask(ow, oh)};
  for (Index oy = 0; oy < oh; ++oy) {
    const auto [y0, y1] = detail::pool_span(oy, flow.height());
    for (Index ox = 0; ox < ow; ++ox) {
      const auto [x0, x1] = detail::pool_span(ox, flow.width());
      Index known = 0;
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) known += m(x, y) ? 1 : 0;
      if (known == 0) continue;
      out.mask.set(ox, oy, true);
      for (Index ch = 0; ch < c; ++ch) {
        Scalar acc = 0;
        for (Index y = y0; y < y1; ++y)
          for (Index x = x0; x < x1; ++x)
            if (m(x, y)) acc += flow(x, y, ch);
        out.flow(ox, oy, ch) = acc / static_cast<Scalar>(known);
      }
    }
  }
  return out;
}

/// Bilinear resampling with half-pixel centres (align-corners = false);
/// sample positions outside the source are clamped to the border.
template <typename Scalar>
Field<Scalar> upsample_bilinear(const Field<Scalar>& f, Index target_w, Index target_h) {
  if (target_w < f.width() || target_h < f.height()) {
    throw Error(ErrorKind::InvalidArgument, "upsample_bilinear: target smaller than source");
  }
  if (f.width() < 1 || f.height() < 1) {
    throw Error(ErrorKind::InvalidArgument, "upsample_bilinear: empty source");
  }
  const Index c = f.channels();
  Field<Scalar> out(target_w, target_h, c);
  const Scalar sx = static_cast<Scalar>(f.width()) / static_cast<Scalar>(target_w);
  const Scalar sy = static_cast<Scalar>(f.height()) / static_cast<Scalar>(target_h);

  auto source_coord = [](Index i, Scalar scale, Index n, Index& i0, Index& i1, Scalar& t) {
    Scalar s = (static_cast<Scalar>(i) + Scalar(0.5)) * scale - Scalar(0.5);
    s = std::clamp(s, Scalar(0), static_cast<Scalar>(n - 1));
    i0 = static_cast<Index>(std::floor(s));
    i1 = std::min(i0 + 1, n - 1);
    t = s - static_cast<Scalar>(i0);
  };

  for (Index y = 0; y < target_h; ++y) {
    Index y0, y1;
    Scalar ty;
    source_coord(y, sy, f.height(), y0, y1, ty);
    for (Index x = 0; x < target_w; ++x) {
      Index x0, x1;
      Scalar tx;
      source_coord(x, sx, f.width(), x0, x1, tx);
      for (Index ch = 0; ch < c; ++ch) {
        const Scalar top = (1 - tx) * f(x0, y0, ch) + tx * f(x1, y0, ch);
        const Scalar bottom = (1 - tx) * f(x0, y1, ch) + tx * f(x1, y1, ch);
        out(x, y, ch) = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

/// Zeroes every pixel of `flow` outside `m`.
template <typename Scalar>
Field<Scalar> apply_mask(const Field<Scalar>& flow, const Mask& m) {
  if (!m.matches(flow)) {
    throw Error(ErrorKind::InvalidArgument, "apply_mask: dimension mismatch");
  }
  Field<Scalar> out = flow;
  for (Index p = 0; p < m.pixels(); ++p) {
    if (m.at(p)) continue;
    for (Index ch = 0; ch < flow.channels(); ++ch) out.data()[p * flow.channels() + ch] = 0;
  }
  return out;
}

/// Coarse-to-fine pyramid, level 0 finest. Level k+1 is built from level k by
/// average pooling (image), max pooling (mask), and known-sample averaging
/// (sparse flow).
template <typename Scalar>
std::vector<PyramidLevel<Scalar>> build_pyramid(const Field<Scalar>& image, const Mask& mask,
                                                const Field<Scalar>& sparse_flow, int levels) {
  if (levels < 1) throw Error(ErrorKind::InvalidPyramid, "pyramid needs at least one level");
  if (!mask.matches(image) || !mask.matches(sparse_flow)) {
    throw Error(ErrorKind::InvalidArgument, "build_pyramid: image, mask and flow dimensions differ");
  }
  const Index need = Index{1} << (levels - 1);
  if (image.width() < need || image.height() < need) {
    throw Error(ErrorKind::InvalidPyramid,
                std::to_string(levels) + " levels need at least " + std::to_string(need) +
                    " pixels per axis, got " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()));
  }
  std::vector<PyramidLevel<Scalar>> out;
  out.reserve(static_cast<std::size_t>(levels));
  out.push_back({image, mask, sparse_flow, 0});
  for (int k = 1; k < levels; ++k) {
    const auto& prev = out.back();
    auto pooled = sparse_avg_pool2(prev.sparse_flow, prev.mask);
    out.push_back({avg_pool2(prev.image), std::move(pooled.mask), std::move(pooled.flow), k});
  }
  return out;
}

}  // namespace nxf
