// SPDX-License-Identifier: Apache-2.0
#include <vsr/geometry.hpp>
#include <vsr/io.hpp>
#include <vsr/ops.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace vsr {

Affine2d resize_transform(Index in_h, Index in_w, Index out_h, Index out_w) {
  // output pixel centre (j + 0.5) / out_w == input pixel centre (x + 0.5) / in_w
  const double sx = static_cast<double>(out_w) / static_cast<double>(in_w);
  const double sy = static_cast<double>(out_h) / static_cast<double>(in_h);
  Eigen::Matrix2d lin;
  lin << sx, 0.0, 0.0, sy;
  return Affine2d::from(lin, Point2d(0.5 * (sx - 1.0), 0.5 * (sy - 1.0)));
}

Imaged resize(const Imaged &img, Index out_h, Index out_w) {
  if (img.rows() == out_h && img.cols() == out_w)
    return img;
  return warp_affine(img, resize_transform(img.rows(), img.cols(), out_h, out_w), out_h,
                     out_w);
}

LandmarkSet LandmarkSet::transformed(const Affine2d &t) const {
  LandmarkSet out = *this;
  for (auto &p : out.points)
    p = t.apply(p);
  return out;
}

NeutralTemplate NeutralTemplate::for_size(double s) {
  return {{Point2d(0.30 * s, 0.35 * s), Point2d(0.70 * s, 0.35 * s),
           Point2d(0.50 * s, 0.60 * s)}};
}

Affine2d alignment_transform(const LandmarkSet &landmarks, const NeutralTemplate &tmpl) {
  return estimate_affine(landmarks.anchor_points(), tmpl.anchors);
}

Imaged align_lips(const Imaged &frame, const LandmarkSet &landmarks,
                  const NeutralTemplate &tmpl, Index out_size) {
  return warp_affine(frame, alignment_transform(landmarks, tmpl), out_size, out_size);
}

Imaged to_grayscale(const Tensor &rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3)
    throw ShapeError("to_grayscale expects [H x W x 3], got " + to_string(rgb.shape()));
  const Index h = rgb.dim(0), w = rgb.dim(1);
  Imaged out(h, w);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) {
      const double *px = rgb.data().data() + (i * w + j) * 3;
      out(i, j) = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  return out;
}

CropResult resize_crop(const Clip &clip, Index resize_to, Index crop, CropMode mode,
                       Rng *rng) {
  if (crop <= 0 || crop > resize_to)
    throw ShapeError("crop " + std::to_string(crop) + " larger than resized frame " +
                     std::to_string(resize_to));
  CropResult out;
  const Index margin = resize_to - crop;
  if (mode == CropMode::center) {
    out.row_offset = out.col_offset = margin / 2;
  } else {
    if (rng == nullptr)
      throw std::invalid_argument("random crop needs a generator");
    std::uniform_int_distribution<Index> pick(0, margin);
    out.row_offset = pick(*rng);
    out.col_offset = pick(*rng);
  }
  out.frames.reserve(clip.size());
  for (const Imaged &f : clip) {
    const Imaged r = resize(f, resize_to, resize_to);
    out.frames.emplace_back(r.block(out.row_offset, out.col_offset, crop, crop));
  }
  return out;
}

BoundaryInterval BoundaryInterval::centered(Index frames, Index length) {
  if (length < 1 || length > frames)
    throw std::invalid_argument("word length must be in [1, frames]");
  const Index start = (frames - length) / 2;
  return {start, start + length - 1};
}

std::vector<double> word_boundary_indicator(Index frames, const BoundaryInterval &b) {
  if (!b.valid_for(frames))
    throw std::out_of_range("word boundary [" + std::to_string(b.start) + ", " +
                            std::to_string(b.end) + "] outside " +
                            std::to_string(frames) + " frames");
  std::vector<double> ind(static_cast<std::size_t>(frames), 0.0);
  for (Index t = b.start; t <= b.end; ++t)
    ind[static_cast<std::size_t>(t)] = 1.0;
  return ind;
}

Tensor append_word_boundary(const Tensor &features, const BoundaryInterval &b) {
  if (features.rank() < 2)
    throw ShapeError("append_word_boundary expects [T x C x ...]");
  const Index frames = features.dim(0);
  const auto ind = word_boundary_indicator(frames, b);
  Shape shape = features.shape();
  shape[1] = 1;
  const Index per_frame = numel(shape) / frames;
  Array channel(numel(shape));
  for (Index t = 0; t < frames; ++t)
    channel.segment(t * per_frame, per_frame).setConstant(ind[static_cast<std::size_t>(t)]);
  const Tensor parts[] = {features, Tensor(shape, std::move(channel))};
  return concat(parts, 1);
}

void write_landmarks(const std::filesystem::path &path,
                     const std::vector<LandmarkSet> &frames) {
  std::ostringstream os;
  os.precision(17);
  for (const LandmarkSet &f : frames) {
    for (std::size_t i = 0; i < LandmarkSet::count; ++i)
      os << (i ? "," : "") << f.points[i].x() << ',' << f.points[i].y();
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

std::vector<LandmarkSet> read_landmarks(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open " + path.string());
  std::vector<LandmarkSet> frames;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty())
      continue;
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      const char *first = line.data() + pos;
      const char *last = line.data() + comma;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": malformed coordinate");
      values.push_back(v);
      pos = comma + 1;
    }
    if (values.size() != 2 * LandmarkSet::count)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(2 * LandmarkSet::count) + " values, got " +
                               std::to_string(values.size()));
    LandmarkSet set;
    for (std::size_t i = 0; i < LandmarkSet::count; ++i)
      set.points[i] = Point2d(values[2 * i], values[2 * i + 1]);
    frames.push_back(set);
  }
  return frames;
}

void write_pgm(const std::filesystem::path &path, const Imaged &img, double lo,
               double hi) {
  std::string out = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) +
                    "\n255\n";
  for (Index i = 0; i < img.rows(); ++i)
    for (Index j = 0; j < img.cols(); ++j) {
      const double v = std::clamp((img(i, j) - lo) / (hi - lo), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  write_file_atomic(path, out);
}

double psnr(const Imaged &a, const Imaged &b, double peak) {
  const double mse = (a - b).array().square().mean();
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

} // namespace vsr
