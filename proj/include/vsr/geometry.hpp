// SPDX-License-Identifier: Apache-2.0
/**
 * @file   geometry.hpp
 * @brief  Landmark-driven affine lip alignment and frame preprocessing.
 *
 * Pixel (row i, col j) sits at image coordinate (x = j, y = i). Warps use
 * inverse mapping: output(p) is the bilinear sample of the input at t^-1(p),
 * where every neighbour outside the input reads as 0.
 */
#ifndef VSR_GEOMETRY_HPP
#define VSR_GEOMETRY_HPP

#include <vsr/random.hpp>
#include <vsr/tensor.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace vsr {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Point2d = Point2<double>;
using Imaged = Image<double>;
using Clip = std::vector<Imaged>;

class CollinearAnchors : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class SingularTransform : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// 2x3 matrix mapping (x, y, 1) to (x', y').
template <typename Scalar>
struct AffineTransform {
  Eigen::Matrix<Scalar, 2, 3> m = Eigen::Matrix<Scalar, 2, 3>::Identity();

  static AffineTransform identity() { return {}; }

  static AffineTransform from(const Eigen::Matrix<Scalar, 2, 2> &linear,
                              const Point2<Scalar> &offset) {
    AffineTransform t;
    t.m.template leftCols<2>() = linear;
    t.m.col(2) = offset;
    return t;
  }

  Eigen::Matrix<Scalar, 2, 2> linear() const { return m.template leftCols<2>(); }
  Point2<Scalar> offset() const { return m.col(2); }
  Scalar determinant() const { return linear().determinant(); }

  Point2<Scalar> apply(const Point2<Scalar> &p) const { return linear() * p + offset(); }

  AffineTransform inverse() const {
    const Scalar det = determinant();
    if (std::abs(det) < Scalar(1e-12))
      throw SingularTransform("affine transform is not invertible");
    const Eigen::Matrix<Scalar, 2, 2> inv = linear().inverse();
    return from(inv, -inv * offset());
  }

  /// this after other
  AffineTransform compose(const AffineTransform &other) const {
    return from(linear() * other.linear(), linear() * other.offset() + offset());
  }
};

using Affine2d = AffineTransform<double>;

/// Rotation by `radians` and uniform `scale` about `center`, then `shift`.
template <typename Scalar>
AffineTransform<Scalar> similarity_about(const Point2<Scalar> &center, Scalar radians,
                                         Scalar scale, const Point2<Scalar> &shift) {
  Eigen::Matrix<Scalar, 2, 2> r;
  r << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  r *= scale;
  return AffineTransform<Scalar>::from(r, center - r * center + shift);
}

template <typename Scalar>
Scalar triangle_area(const std::array<Point2<Scalar>, 3> &p) {
  const Point2<Scalar> a = p[1] - p[0];
  const Point2<Scalar> b = p[2] - p[0];
  return std::abs(a.x() * b.y() - a.y() * b.x()) / Scalar(2);
}

/// Exact 3-point fit: six equations in the six unknowns of the 2x3 matrix,
/// solved by LU with partial pivoting.
template <typename Scalar>
AffineTransform<Scalar> estimate_affine(const std::array<Point2<Scalar>, 3> &src,
                                        const std::array<Point2<Scalar>, 3> &dst) {
  if (triangle_area(src) < Scalar(1e-9))
    throw CollinearAnchors("anchor points are collinear");
  Eigen::Matrix<Scalar, 6, 6> a = Eigen::Matrix<Scalar, 6, 6>::Zero();
  Eigen::Matrix<Scalar, 6, 1> b;
  for (int i = 0; i < 3; ++i) {
    a.row(2 * i) << src[i].x(), src[i].y(), Scalar(1), Scalar(0), Scalar(0), Scalar(0);
    a.row(2 * i + 1) << Scalar(0), Scalar(0), Scalar(0), src[i].x(), src[i].y(), Scalar(1);
    b(2 * i) = dst[i].x();
    b(2 * i + 1) = dst[i].y();
  }
  const Eigen::Matrix<Scalar, 6, 1> sol = a.partialPivLu().solve(b);
  AffineTransform<Scalar> t;
  t.m.row(0) = sol.template head<3>().transpose();
  t.m.row(1) = sol.template tail<3>().transpose();
  return t;
}

template <typename Scalar>
Scalar sample_bilinear(const Image<Scalar> &img, Scalar x, Scalar y) {
  const Scalar fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
  const Scalar ax = x - fx, ay = y - fy;
  auto at = [&](Index r, Index c) -> Scalar {
    if (r < 0 || c < 0 || r >= img.rows() || c >= img.cols())
      return Scalar(0);
    return img(r, c);
  };
  const Scalar top = (Scalar(1) - ax) * at(y0, x0) + ax * at(y0, x0 + 1);
  const Scalar bottom = (Scalar(1) - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1);
  return (Scalar(1) - ay) * top + ay * bottom;
}

template <typename Scalar>
Image<Scalar> warp_affine(const Image<Scalar> &img, const AffineTransform<Scalar> &t,
                          Index out_h, Index out_w) {
  const AffineTransform<Scalar> inv = t.inverse();
  Image<Scalar> out(out_h, out_w);
  for (Index i = 0; i < out_h; ++i)
    for (Index j = 0; j < out_w; ++j) {
      const Point2<Scalar> q = inv.apply(Point2<Scalar>(Scalar(j), Scalar(i)));
      out(i, j) = sample_bilinear(img, q.x(), q.y());
    }
  return out;
}

/// Pixel-centre-aligned scaling transform taking an in_h x in_w grid onto
/// out_h x out_w.
Affine2d resize_transform(Index in_h, Index in_w, Index out_h, Index out_w);
Imaged resize(const Imaged &img, Index out_h, Index out_w);

/// 68 facial landmarks; `anchors` index the left eye, right eye and nose.
struct LandmarkSet {
  static constexpr std::size_t count = 68;
  std::array<Point2d, count> points{};
  std::array<int, 3> anchors{36, 45, 30};

  std::array<Point2d, 3> anchor_points() const {
    return {points[anchors[0]], points[anchors[1]], points[anchors[2]]};
  }
  LandmarkSet transformed(const Affine2d &t) const;
};

/// Target anchor positions in output pixel units.
struct NeutralTemplate {
  std::array<Point2d, 3> anchors;

  /// Left eye (0.30S, 0.35S), right eye (0.70S, 0.35S), nose (0.50S, 0.60S).
  static NeutralTemplate for_size(double size);
};

Affine2d alignment_transform(const LandmarkSet &landmarks, const NeutralTemplate &tmpl);
Imaged align_lips(const Imaged &frame, const LandmarkSet &landmarks,
                  const NeutralTemplate &tmpl, Index out_size);

/// BT.601 luma of an [H x W x 3] RGB frame.
Imaged to_grayscale(const Tensor &rgb);

enum class CropMode { center, random };

struct CropResult {
  Clip frames;
  Index row_offset = 0;
  Index col_offset = 0;
};

/// Resizes every frame to resize_to x resize_to (skipped when already that
/// size), then crops crop x crop at one offset shared by the whole clip.
/// `rng` is only consulted in random mode.
CropResult resize_crop(const Clip &clip, Index resize_to, Index crop, CropMode mode,
                       Rng *rng = nullptr);

/// Inclusive frame interval of the spoken word.
struct BoundaryInterval {
  Index start = 0;
  Index end = 0;

  Index length() const { return end - start + 1; }
  bool valid_for(Index frames) const { return 0 <= start && start <= end && end < frames; }
  /// Word of `length` frames centred in a clip of `frames`.
  static BoundaryInterval centered(Index frames, Index length);
};

std::vector<double> word_boundary_indicator(Index frames, const BoundaryInterval &b);

/// [T x C x ...] -> [T x (C + 1) x ...]; the new last channel is 1 inside the
/// interval and 0 elsewhere.
Tensor append_word_boundary(const Tensor &features, const BoundaryInterval &b);

/// One text line per frame: 68 comma-separated "x,y" pairs.
void write_landmarks(const std::filesystem::path &path,
                     const std::vector<LandmarkSet> &frames);
std::vector<LandmarkSet> read_landmarks(const std::filesystem::path &path);

/// Binary 8-bit PGM (P5); values are clamped to [lo, hi] and scaled to 0..255.
void write_pgm(const std::filesystem::path &path, const Imaged &img, double lo = 0.0,
               double hi = 1.0);

double psnr(const Imaged &a, const Imaged &b, double peak = 1.0);

} // namespace vsr

#endif // VSR_GEOMETRY_HPP
