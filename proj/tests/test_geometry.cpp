// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/geometry.hpp>
#include <vsr/synth.hpp>

#include <cmath>
#include <numbers>

using namespace vsr;

namespace {

using Triple = std::array<Point2d, 3>;

double max_matrix_error(const Affine2d &a, const Eigen::Matrix<double, 2, 3> &b) {
  return (a.m - b).cwiseAbs().maxCoeff();
}

Imaged smooth_image(Index h, Index w, double phase) {
  Imaged img(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j)
      img(i, j) = 0.5 + 0.25 * std::sin(0.21 * j + phase) * std::cos(0.17 * i - phase) +
                  0.1 * std::cos(0.05 * (i + j));
  return img;
}

} // namespace

TEST_CASE("estimate_affine examples") {
  const Triple tri{Point2d(0, 0), Point2d(1, 0), Point2d(0, 1)};
  CHECK(max_matrix_error(estimate_affine(tri, tri), Affine2d::identity().m) < 1e-15);

  const Triple dst{Point2d(1, 2), Point2d(2, 2), Point2d(1, 3)};
  Eigen::Matrix<double, 2, 3> expected;
  expected << 1, 0, 1, 0, 1, 2;
  CHECK(max_matrix_error(estimate_affine(tri, dst), expected) < 1e-15);

  const Triple line{Point2d(0, 0), Point2d(1, 1), Point2d(2, 2)};
  CHECK_THROWS_AS(estimate_affine(line, dst), CollinearAnchors);
}

TEST_CASE("estimate_affine reproduces 1000 random triples") {
  Rng rng(17);
  double worst = 0.0;
  int fitted = 0;
  while (fitted < 1000) {
    Triple src, dst;
    for (int k = 0; k < 3; ++k) {
      src[k] = Point2d(uniform(rng, -50, 150), uniform(rng, -50, 150));
      dst[k] = Point2d(uniform(rng, -50, 150), uniform(rng, -50, 150));
    }
    if (triangle_area(src) < 1.0)
      continue;
    const Affine2d t = estimate_affine(src, dst);
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, (t.apply(src[k]) - dst[k]).cwiseAbs().maxCoeff());
    ++fitted;
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("warp_affine") {
  const Imaged img = smooth_image(9, 11, 0.3);

  SUBCASE("identity is exact") {
    const Imaged out = warp_affine(img, Affine2d::identity(), 9, 11);
    CHECK((out.array() == img.array()).all());
  }
  SUBCASE("translation by one column") {
    Affine2d t;
    t.m(0, 2) = -1.0; // output(x) = input(x + 1)
    const Imaged out = warp_affine(img, t, 9, 11);
    for (Index i = 0; i < 9; ++i) {
      for (Index j = 0; j + 1 < 11; ++j)
        CHECK(out(i, j) == img(i, j + 1));
      CHECK(out(i, 10) == 0.0);
    }
  }
  SUBCASE("2x upscale interpolates linearly") {
    Imaged two(2, 2);
    two << 0, 1, 0, 1;
    const Imaged up = resize(two, 4, 4);
    // Pixel-centre convention: output column j samples input x = (j + 0.5) / 2 - 0.5.
    // Rows 0 and 3 also blend in the zero padding vertically.
    for (Index i = 1; i < 3; ++i) {
      CHECK(up(i, 0) == 0.0);
      CHECK(up(i, 1) == 0.25);
      CHECK(up(i, 2) == 0.75);
      CHECK(up(i, 3) == 0.75);
    }
  }
  SUBCASE("singular transform is rejected") {
    Affine2d t;
    t.m << 1, 2, 0, 2, 4, 0;
    CHECK_THROWS_AS(warp_affine(img, t, 4, 4), SingularTransform);
  }
}

TEST_CASE("warp round trip keeps smooth interiors") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Imaged img = smooth_image(48, 48, uniform(rng, 0, 3));
    const Affine2d t = similarity_about(Point2d(23.5, 23.5), uniform(rng, -0.4, 0.4),
                                        uniform(rng, 0.9, 1.1),
                                        Point2d(uniform(rng, -2, 2), uniform(rng, -2, 2)));
    const Imaged back = warp_affine(warp_affine(img, t, 48, 48), t.inverse(), 48, 48);
    // Interior well inside both the forward image and its preimage.
    const Index lo = 10, n = 28;
    const double p = psnr(back.block(lo, lo, n, n), img.block(lo, lo, n, n));
    CHECK(p > 30.0);
  }
}

TEST_CASE("align_lips") {
  const double size = 40.0;
  const NeutralTemplate tmpl = NeutralTemplate::for_size(size);
  LandmarkSet base;
  base.points.fill(Point2d(size / 2, size / 2));
  for (int k = 0; k < 3; ++k)
    base.points[static_cast<std::size_t>(base.anchors[k])] = tmpl.anchors[k];

  SUBCASE("anchors on the template need no warp") {
    const Imaged img = smooth_image(40, 40, 1.0);
    const Imaged out = align_lips(img, base, tmpl, 40);
    CHECK((out - img).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("recovers a 20 degree rotation") {
    const Point2d centroid =
        (tmpl.anchors[0] + tmpl.anchors[1] + tmpl.anchors[2]) / 3.0;
    const double theta = 20.0 * std::numbers::pi / 180.0;
    const Affine2d rot = similarity_about(centroid, theta, 1.0, Point2d(0, 0));
    const Affine2d recovered = alignment_transform(base.transformed(rot), tmpl);
    const Affine2d inverse = similarity_about(centroid, -theta, 1.0, Point2d(0, 0));
    CHECK(max_matrix_error(recovered, inverse.m) < 1e-9);
  }
  SUBCASE("collinear anchors propagate") {
    LandmarkSet bad = base;
    for (int k = 0; k < 3; ++k)
      bad.points[static_cast<std::size_t>(bad.anchors[k])] = Point2d(k, k);
    CHECK_THROWS_AS(align_lips(smooth_image(8, 8, 0), bad, tmpl, 8), CollinearAnchors);
  }
}

TEST_CASE("aligned synthetic anchors land on the template") {
  GeneratorConfig cfg;
  cfg.max_rotation_deg = 30.0;
  Rng rng(8);
  const NeutralTemplate tmpl = NeutralTemplate::for_size(cfg.size);
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    const VideoClip clip = generate_clip(cfg, i % cfg.n_classes, sample_pose(cfg, rng), 0.0, 100 + i);
    for (const LandmarkSet &lm : clip.landmarks) {
      const Affine2d t = alignment_transform(lm, tmpl);
      const auto anchors = lm.anchor_points();
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, (t.apply(anchors[k]) - tmpl.anchors[k]).norm());
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("alignment cancels pose perturbations") {
  GeneratorConfig cfg;
  cfg.size = 48;
  const NeutralTemplate tmpl = NeutralTemplate::for_size(cfg.size);
  const VideoClip clip = generate_clip(cfg, 3, Pose{}, 0.0, 21);
  const Index s = cfg.size;
  Rng rng(99);
  double worst = 0.0, worst_all = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const Point2d centre((s - 1) / 2.0, (s - 1) / 2.0);
    const Affine2d pose = similarity_about(
        centre, uniform(rng, -25.0, 25.0) * std::numbers::pi / 180.0, uniform(rng, 0.8, 1.2),
        Point2d(uniform(rng, -3, 3), uniform(rng, -3, 3)));
    for (std::size_t t = 0; t < clip.frames.size(); t += 3) {
      const Imaged ref = align_lips(clip.frames[t], clip.landmarks[t], tmpl, s);
      const Imaged moved = warp_affine(clip.frames[t], pose, s, s);
      const LandmarkSet lm = clip.landmarks[t].transformed(pose);
      const Imaged out = align_lips(moved, lm, tmpl, s);
      // Pixels whose source left the posed canvas are padding, not alignment error.
      const Affine2d back = alignment_transform(lm, tmpl).inverse();
      double total = 0.0;
      Index n = 0;
      for (Index i = 0; i < s; ++i)
        for (Index j = 0; j < s; ++j) {
          const Point2d q = back.apply(Point2d(j, i));
          if (q.x() < 0 || q.y() < 0 || q.x() > s - 1 || q.y() > s - 1)
            continue;
          total += std::abs(out(i, j) - ref(i, j));
          ++n;
        }
      worst = std::max(worst, total / static_cast<double>(n));
      worst_all = std::max(worst_all, (out - ref).cwiseAbs().mean());
    }
  }
  MESSAGE("worst per-pixel MAD " << worst << " (" << worst_all << " counting padding)");
  CHECK(worst < 0.05);
}

TEST_CASE("to_grayscale") {
  CHECK(to_grayscale(Tensor::from({1, 1, 3}, {1, 1, 1}))(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(to_grayscale(Tensor::from({1, 1, 3}, {1, 0, 0}))(0, 0) == 0.299);
  CHECK(to_grayscale(Tensor::from({1, 1, 3}, {0, 0, 0}))(0, 0) == 0.0);
  CHECK_THROWS_AS(to_grayscale(Tensor({2, 2, 4}, 0.5)), ShapeError);
  Rng rng(1);
  Array v(5 * 4 * 3);
  for (Index i = 0; i < v.size(); ++i)
    v[i] = uniform(rng, 0, 1);
  const Imaged g = to_grayscale(Tensor({5, 4, 3}, v));
  CHECK(g.minCoeff() >= 0.0);
  CHECK(g.maxCoeff() <= 1.0);
}

TEST_CASE("resize_crop") {
  Clip clip;
  for (int t = 0; t < 3; ++t)
    clip.push_back(smooth_image(96, 96, t));

  const CropResult c = resize_crop(clip, 96, 88, CropMode::center);
  CHECK(c.row_offset == 4);
  CHECK(c.col_offset == 4);
  REQUIRE(c.frames.size() == 3);
  CHECK(c.frames[0].rows() == 88);
  CHECK(c.frames[2](0, 0) == clip[2](4, 4));
  const CropResult again = resize_crop(clip, 96, 88, CropMode::center);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK((again.frames[t].array() == c.frames[t].array()).all());

  Rng rng(5);
  const Clip tiny{Imaged::Zero(12, 12)};
  std::array<std::array<int, 9>, 9> seen{};
  for (int i = 0; i < 10000; ++i) {
    const CropResult r = resize_crop(tiny, 12, 4, CropMode::random, &rng);
    REQUIRE(r.row_offset >= 0);
    REQUIRE(r.row_offset <= 8);
    REQUIRE(r.col_offset >= 0);
    REQUIRE(r.col_offset <= 8);
    ++seen[static_cast<std::size_t>(r.row_offset)][static_cast<std::size_t>(r.col_offset)];
  }
  for (const auto &row : seen)
    for (int n : row)
      CHECK(n > 0);

  CHECK_THROWS(resize_crop(clip, 80, 88, CropMode::center));
}

TEST_CASE("word boundary channel") {
  const BoundaryInterval b = BoundaryInterval::centered(29, 13);
  CHECK(b.start == 8);
  CHECK(b.end == 20);
  const auto ind = word_boundary_indicator(29, b);
  for (Index t = 0; t < 29; ++t)
    CHECK(ind[static_cast<std::size_t>(t)] == ((t >= 8 && t <= 20) ? 1.0 : 0.0));

  const Tensor feats({4, 2, 3, 3}, 0.25);
  const Tensor all = append_word_boundary(feats, {0, 3});
  CHECK(all.shape() == Shape{4, 3, 3, 3});
  for (Index t = 0; t < 4; ++t)
    for (Index k = 0; k < 27; ++k) {
      const double v = all[t * 27 + k];
      CHECK(v == (k < 18 ? 0.25 : 1.0));
    }
  CHECK_THROWS_AS(append_word_boundary(feats, {2, 4}), std::out_of_range);
}

TEST_CASE("landmark file round trip") {
  GeneratorConfig cfg;
  const VideoClip clip = generate_clip(cfg, 1, Pose{7.0, 1.0, -1.0, 1.05}, 0.0, 3);
  const auto path = std::filesystem::temp_directory_path() / "vsr_landmarks_test.txt";
  write_landmarks(path, clip.landmarks);
  const auto back = read_landmarks(path);
  REQUIRE(back.size() == clip.landmarks.size());
  for (std::size_t t = 0; t < back.size(); ++t)
    for (std::size_t i = 0; i < LandmarkSet::count; ++i)
      CHECK((back[t].points[i] - clip.landmarks[t].points[i]).norm() == 0.0);
  std::filesystem::remove(path);
}
