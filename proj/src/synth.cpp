// SPDX-License-Identifier: Apache-2.0
#include <vsr/io.hpp>
#include <vsr/synth.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>

namespace vsr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kVocabularySeed = 0x5EEDF00Dull;

double gauss(const Point2d &q, const Point2d &c, double sx, double sy) {
  const double dx = (q.x() - c.x()) / sx;
  const double dy = (q.y() - c.y()) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

struct FaceLayout {
  double s;
  Point2d face_center, left_eye, right_eye, nose, mouth;
  double face_rx, face_ry;

  explicit FaceLayout(double size)
      : s(size), face_center(0.5 * size, 0.52 * size), left_eye(0.30 * size, 0.35 * size),
        right_eye(0.70 * size, 0.35 * size), nose(0.50 * size, 0.60 * size),
        mouth(0.50 * size, 0.78 * size), face_rx(0.40 * size), face_ry(0.50 * size) {}
};

// Fixed per class: the vocabulary does not depend on the corpus seed.
struct ClassSignature {
  double phase;
  double direction;
  std::array<int, 3> visemes;
};

// Mouth shapes as blob half-widths (rx, ry) in canvas units: spread, closed,
// open, tall.
constexpr std::array<std::array<double, 2>, 4> kVisemes{
    {{0.14, 0.04}, {0.045, 0.045}, {0.11, 0.10}, {0.05, 0.12}}};
constexpr int kMaxClasses = 64;

// Viseme triples, greedily chosen so the first 16 differ pairwise in at least
// two segments.
const std::vector<std::array<int, 3>> &viseme_codes() {
  static const std::vector<std::array<int, 3>> codes = [] {
    std::vector<std::array<int, 3>> all, picked;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c)
          all.push_back({a, b, c});
    auto far = [&](const std::array<int, 3> &x) {
      for (const auto &y : picked)
        if ((x[0] != y[0]) + (x[1] != y[1]) + (x[2] != y[2]) < 2)
          return false;
      return true;
    };
    std::vector<bool> used(all.size(), false);
    for (std::size_t i = 0; i < all.size(); ++i)
      if (far(all[i])) {
        picked.push_back(all[i]);
        used[i] = true;
      }
    for (std::size_t i = 0; i < all.size(); ++i)
      if (!used[i])
        picked.push_back(all[i]);
    return picked;
  }();
  return codes;
}

// Segment lo and blend weight w toward segment lo + 1 at word progress u.
std::pair<std::size_t, double> segment_blend(double u) {
  const double pos = std::clamp(3.0 * u - 0.5, 0.0, 2.0);
  const int lo = std::min(static_cast<int>(pos), 1);
  return {static_cast<std::size_t>(lo), std::clamp((pos - lo - 0.25) / 0.5, 0.0, 1.0)};
}

// Blob half-widths at word progress u in [0, 1), blending neighbouring
// segments.
std::array<double, 2> mouth_shape(const std::array<int, 3> &code, double u) {
  const auto [lo, w] = segment_blend(u);
  const auto &a = kVisemes[static_cast<std::size_t>(code[lo])];
  const auto &b = kVisemes[static_cast<std::size_t>(code[lo + 1])];
  return {(1.0 - w) * a[0] + w * b[0], (1.0 - w) * a[1] + w * b[1]};
}

// Audio mixes a class-specific sinusoid bank with a phonetic part: each
// (segment, viseme) pair owns a bank, and a word plays the banks of its code
// with the same timing as the mouth shapes. The phonetic bank depends on the
// segment too, so permuted codes still sound different. Words sharing a
// viseme share phonetic audio, so the class bank carries most of the energy
// to keep cross-class correlation low.
constexpr double kPhoneticShare = 0.3;

struct AudioBank {
  std::vector<double> freq, phase;
};

AudioBank audio_bank(int audio_dim, const std::string &key) {
  Rng rng(derive_seed(kVocabularySeed, "audio-" + key));
  AudioBank bank;
  for (int a = 0; a < audio_dim; ++a) {
    bank.freq.push_back(uniform(rng, 0.5, 2.5));
    bank.phase.push_back(uniform(rng, 0.0, 2.0 * kPi));
  }
  return bank;
}

double audio_sample(const AudioBank &bank, int a, double u) {
  const auto k = static_cast<std::size_t>(a);
  return std::sin(2.0 * kPi * bank.freq[k] * u + bank.phase[k]);
}

ClassSignature class_signature(const GeneratorConfig &cfg, int class_id) {
  ClassSignature sig;
  const int per_dir = (cfg.n_classes + 1) / 2;
  const int slot = class_id / 2;
  sig.direction = class_id % 2 == 0 ? 1.0 : -1.0;
  sig.phase = 2.0 * kPi * (slot + (class_id % 2 ? 0.5 : 0.0)) / per_dir;
  sig.visemes = viseme_codes()[static_cast<std::size_t>(class_id)];
  return sig;
}

struct ClipStyle {
  double phase_jitter;
  double amp_jitter;
  double texture_angle, texture_phase;
  std::array<Point2d, 2> distractor_start, distractor_velocity;
};

} // namespace

Affine2d Pose::transform(Index size) const {
  const double c = 0.5 * static_cast<double>(size - 1);
  return similarity_about<double>(Point2d(c, c), rotation_deg * kPi / 180.0, scale,
                                  Point2d(tx, ty));
}

void Pose::validate() const {
  if (!(std::abs(rotation_deg) <= 45.0))
    throw std::invalid_argument("pose rotation " + std::to_string(rotation_deg) +
                                " deg exceeds 45 deg");
  if (!(scale > 0.0))
    throw std::invalid_argument("pose scale must be positive");
}

BoundaryInterval GeneratorConfig::word_interval() const {
  return BoundaryInterval::centered(frames, (frames + 1) / 2);
}

void GeneratorConfig::validate() const {
  if (n_classes > kMaxClasses)
    throw std::invalid_argument("generator config: at most " + std::to_string(kMaxClasses) +
                                " classes");
  if (n_classes < 2 || frames < 1 || size < 8 || audio_dim < 1)
    throw std::invalid_argument("generator config: need n_classes >= 2, frames >= 1, "
                                "size >= 8, audio_dim >= 1");
  if (noise_sigma < 0.0 || audio_noise < 0.0 || distractor < 0.0)
    throw std::invalid_argument("generator config: noise levels must be non-negative");
  if (max_rotation_deg < 0.0 || max_rotation_deg > 45.0)
    throw std::invalid_argument("generator config: max rotation must be in [0, 45]");
  if (!(min_scale > 0.0 && min_scale <= max_scale))
    throw std::invalid_argument("generator config: invalid scale range");
}

LandmarkSet canonical_landmarks(Index size) {
  const FaceLayout f(static_cast<double>(size));
  const double s = f.s;
  LandmarkSet l;
  for (int i = 0; i <= 16; ++i) {
    const double a = kPi * i / 16.0;
    l.points[i] = Point2d(f.face_center.x() - f.face_rx * std::cos(a),
                          f.face_center.y() + 0.9 * f.face_ry * std::sin(a));
  }
  for (int i = 0; i < 5; ++i) {
    const double u = (i - 2) / 2.0;
    l.points[17 + i] = f.left_eye + Point2d(0.08 * s * u, -0.08 * s + 0.02 * s * u * u);
    l.points[22 + i] = f.right_eye + Point2d(0.08 * s * u, -0.08 * s + 0.02 * s * u * u);
  }
  for (int i = 0; i < 4; ++i)
    l.points[27 + i] = Point2d(f.nose.x(), 0.38 * s + (f.nose.y() - 0.38 * s) * i / 3.0);
  for (int i = 0; i < 5; ++i)
    l.points[31 + i] = Point2d(f.nose.x() + 0.04 * s * (i - 2), f.nose.y() + 0.03 * s);
  auto ring = [&](int first, int count, const Point2d &c, double rx, double ry) {
    for (int i = 0; i < count; ++i) {
      const double a = 2.0 * kPi * i / count;
      l.points[first + i] = c + Point2d(rx * std::cos(a), ry * std::sin(a));
    }
  };
  ring(37, 5, f.left_eye, 0.05 * s, 0.025 * s);
  ring(42, 3, f.right_eye + Point2d(-0.04 * s, 0.0), 0.03 * s, 0.025 * s);
  ring(46, 2, f.right_eye + Point2d(0.03 * s, 0.0), 0.02 * s, 0.02 * s);
  l.points[36] = f.left_eye;
  l.points[45] = f.right_eye;
  l.points[30] = f.nose;
  ring(48, 12, f.mouth, 0.14 * s, 0.05 * s);
  ring(60, 8, f.mouth, 0.08 * s, 0.025 * s);
  l.anchors = {36, 45, 30};
  return l;
}

Pose sample_pose(const GeneratorConfig &cfg, Rng &rng) {
  Pose p;
  p.rotation_deg = uniform(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg);
  p.tx = uniform(rng, -cfg.max_translation, cfg.max_translation);
  p.ty = uniform(rng, -cfg.max_translation, cfg.max_translation);
  p.scale = cfg.min_scale == cfg.max_scale ? cfg.min_scale
                                           : uniform(rng, cfg.min_scale, cfg.max_scale);
  return p;
}

VideoClip generate_clip(const GeneratorConfig &cfg, int class_id, const Pose &pose,
                        double noise_sigma, std::uint64_t seed, std::string clip_id) {
  cfg.validate();
  pose.validate();
  if (class_id < 0 || class_id >= cfg.n_classes)
    throw std::out_of_range("class id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(cfg.n_classes) + ")");
  Rng rng(seed);
  const FaceLayout face(cfg.size);
  const double s = face.s;
  const ClassSignature sig = class_signature(cfg, class_id);

  ClipStyle style;
  style.phase_jitter = uniform(rng, -0.12, 0.12);
  style.amp_jitter = uniform(rng, 0.9, 1.1);
  style.texture_angle = uniform(rng, 0.0, kPi);
  style.texture_phase = uniform(rng, 0.0, 2.0 * kPi);
  for (int j = 0; j < 2; ++j) {
    style.distractor_start[j] = Point2d(uniform(rng, 0.2 * s, 0.8 * s), uniform(rng, 0.15 * s, 0.6 * s));
    style.distractor_velocity[j] =
        Point2d(uniform(rng, -0.04 * s, 0.04 * s), uniform(rng, -0.03 * s, 0.03 * s));
  }

  VideoClip clip;
  clip.clip_id = std::move(clip_id);
  clip.label = class_id;
  clip.pose = pose;
  clip.boundary = cfg.word_interval();
  const Affine2d posed = pose.transform(cfg.size);
  const Affine2d to_canonical = posed.inverse();
  const LandmarkSet landmarks = canonical_landmarks(cfg.size).transformed(posed);
  const double blob_sigma = 0.05 * s;
  const double texture_k = 2.0 * kPi / (0.12 * s);

  for (int t = 0; t < cfg.frames; ++t) {
    const bool speaking = t >= clip.boundary.start && t <= clip.boundary.end;
    Point2d blob = face.mouth;
    std::array<double, 2> shape{};
    if (speaking) {
      const double u = (t - clip.boundary.start + 0.5) / static_cast<double>(clip.boundary.length());
      const double a = sig.phase + style.phase_jitter + sig.direction * kPi * u;
      blob += style.amp_jitter * Point2d(0.06 * s * std::cos(a), 0.03 * s * std::sin(a));
      shape = mouth_shape(sig.visemes, u);
    }
    std::array<Point2d, 2> distractors;
    for (int j = 0; j < 2; ++j)
      distractors[j] = style.distractor_start[j] + t * style.distractor_velocity[j];

    Imaged frame(cfg.size, cfg.size);
    for (Index i = 0; i < cfg.size; ++i)
      for (Index j = 0; j < cfg.size; ++j) {
        const Point2d q = to_canonical.apply(Point2d(static_cast<double>(j), static_cast<double>(i)));
        const double dx = (q.x() - face.face_center.x()) / face.face_rx;
        const double dy = (q.y() - face.face_center.y()) / face.face_ry;
        double v = 0.15 + 0.45 / (1.0 + std::exp(-8.0 * (1.0 - dx * dx - dy * dy)));
        v -= 0.3 * gauss(q, face.left_eye, blob_sigma, blob_sigma);
        v -= 0.3 * gauss(q, face.right_eye, blob_sigma, blob_sigma);
        v += 0.15 * gauss(q, face.nose, 0.04 * s, 0.04 * s);
        v -= 0.15 * gauss(q, face.mouth, 0.14 * s, 0.04 * s);
        if (speaking) {
          v += gauss(q, blob, shape[0] * s, shape[1] * s);
        } else {
          const double proj = q.x() * std::cos(style.texture_angle) + q.y() * std::sin(style.texture_angle);
          v += 0.12 * std::sin(texture_k * proj + style.texture_phase) *
               gauss(q, face.mouth, 0.15 * s, 0.07 * s);
        }
        if (cfg.distractor > 0.0)
          for (const Point2d &d : distractors)
            v += cfg.distractor * 0.6 * gauss(q, d, blob_sigma, blob_sigma);
        frame(i, j) = std::clamp(v, 0.0, 1.0);
      }
    if (noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, noise_sigma);
      for (Index k = 0; k < frame.size(); ++k)
        frame.data()[k] = std::clamp(frame.data()[k] + noise(rng), 0.0, 1.0);
    }
    clip.frames.push_back(std::move(frame));
    clip.landmarks.push_back(landmarks);
  }

  Array audio = Array::Zero(cfg.frames * cfg.audio_dim);
  std::normal_distribution<double> anoise(0.0, cfg.audio_noise > 0.0 ? cfg.audio_noise : 1.0);
  std::array<AudioBank, 3> banks;
  for (std::size_t k = 0; k < banks.size(); ++k)
    banks[k] = audio_bank(cfg.audio_dim, std::to_string(k) + "-" + std::to_string(sig.visemes[k]));
  const AudioBank word = audio_bank(cfg.audio_dim, "class-" + std::to_string(class_id));
  const double wp = std::sqrt(kPhoneticShare), wc = std::sqrt(1.0 - kPhoneticShare);
  for (int t = 0; t < cfg.frames; ++t)
    for (int a = 0; a < cfg.audio_dim; ++a) {
      double v = 0.0;
      if (t >= clip.boundary.start && t <= clip.boundary.end) {
        const double u = (t - clip.boundary.start + 0.5) / static_cast<double>(clip.boundary.length());
        const auto [lo, w] = segment_blend(u);
        v = wp * ((1.0 - w) * audio_sample(banks[lo], a, u) + w * audio_sample(banks[lo + 1], a, u)) +
            wc * audio_sample(word, a, u);
      }
      if (cfg.audio_noise > 0.0)
        v += anoise(rng);
      audio[t * cfg.audio_dim + a] = v;
    }
  clip.audio = Tensor({cfg.frames, cfg.audio_dim}, std::move(audio));
  return clip;
}

const std::vector<VideoClip> &Dataset::split(const std::string &name) const {
  if (name == "train")
    return train;
  if (name == "val")
    return val;
  if (name == "test")
    return test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

Dataset generate_dataset(const GeneratorConfig &cfg, const SplitCounts &per_class,
                         std::uint64_t seed) {
  cfg.validate();
  if (per_class.train < 1 || per_class.val < 1 || per_class.test < 1)
    throw std::invalid_argument("per-class counts must be >= 1");
  Dataset ds;
  ds.gen = cfg;
  ds.seed = seed;
  auto fill = [&](const char *name, int count, std::vector<VideoClip> &out) {
    for (int c = 0; c < cfg.n_classes; ++c)
      for (int i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s-c%02d-%03d", name, c, i);
        Rng rng(derive_seed(seed, id));
        const Pose pose = sample_pose(cfg, rng);
        out.push_back(generate_clip(cfg, c, pose, cfg.noise_sigma,
                                    derive_seed(seed, std::string(id) + "/render"), id));
      }
  };
  fill("train", per_class.train, ds.train);
  fill("val", per_class.val, ds.val);
  fill("test", per_class.test, ds.test);
  return ds;
}

namespace {

Tensor frames_tensor(const Clip &frames) {
  const Index t = static_cast<Index>(frames.size());
  const Index h = frames.front().rows(), w = frames.front().cols();
  Array a(t * h * w);
  for (Index k = 0; k < t; ++k)
    a.segment(k * h * w, h * w) = Eigen::Map<const Array>(frames[k].data(), h * w);
  return Tensor({t, h, w}, std::move(a));
}

Clip clip_frames(const Tensor &t) {
  if (t.rank() != 3)
    throw FormatError("frames tensor must be [T x H x W]");
  Clip out;
  const Index h = t.dim(1), w = t.dim(2);
  for (Index k = 0; k < t.dim(0); ++k) {
    Imaged f(h, w);
    Eigen::Map<Array>(f.data(), h * w) = t.data().segment(k * h * w, h * w);
    out.push_back(std::move(f));
  }
  return out;
}

} // namespace

void write_dataset(const std::filesystem::path &root, const Dataset &ds) {
  using nlohmann::json;
  std::filesystem::create_directories(root);
  json manifest;
  manifest["version"] = 1;
  manifest["V"] = ds.gen.n_classes;
  manifest["T"] = ds.gen.frames;
  manifest["H"] = ds.gen.size;
  manifest["W"] = ds.gen.size;
  manifest["A"] = ds.gen.audio_dim;
  manifest["seed"] = ds.seed;
  manifest["generator"] = {{"noise_sigma", ds.gen.noise_sigma},
                           {"audio_noise", ds.gen.audio_noise},
                           {"distractor", ds.gen.distractor},
                           {"max_rotation_deg", ds.gen.max_rotation_deg},
                           {"max_translation", ds.gen.max_translation},
                           {"min_scale", ds.gen.min_scale},
                           {"max_scale", ds.gen.max_scale}};
  json splits = json::object();
  for (const char *name : {"train", "val", "test"}) {
    const auto dir = root / name;
    std::filesystem::create_directories(dir);
    json list = json::array();
    for (const VideoClip &c : ds.split(name)) {
      write_vsrt(dir / (c.clip_id + ".frames.vsrt"), frames_tensor(c.frames));
      write_landmarks(dir / (c.clip_id + ".landmarks.txt"), c.landmarks);
      write_vsrt(dir / (c.clip_id + ".audio.vsrt"), c.audio);
      list.push_back({{"clip_id", c.clip_id},
                      {"label", c.label},
                      {"boundary", {c.boundary.start, c.boundary.end}},
                      {"pose",
                       {c.pose.rotation_deg, c.pose.tx, c.pose.ty, c.pose.scale}}});
    }
    splits[name] = std::move(list);
  }
  manifest["splits"] = std::move(splits);
  write_file_atomic(root / "manifest.json", manifest.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path &root) {
  using nlohmann::json;
  const auto path = root / "manifest.json";
  if (!std::filesystem::exists(path))
    throw std::runtime_error("no manifest.json under " + root.string());
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::exception &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.gen.n_classes = m.at("V").get<int>();
    ds.gen.frames = m.at("T").get<int>();
    ds.gen.size = m.at("H").get<int>();
    ds.gen.audio_dim = m.at("A").get<int>();
    ds.seed = m.at("seed").get<std::uint64_t>();
    const json &g = m.at("generator");
    ds.gen.noise_sigma = g.at("noise_sigma").get<double>();
    ds.gen.audio_noise = g.at("audio_noise").get<double>();
    ds.gen.distractor = g.at("distractor").get<double>();
    ds.gen.max_rotation_deg = g.at("max_rotation_deg").get<double>();
    ds.gen.max_translation = g.at("max_translation").get<double>();
    ds.gen.min_scale = g.at("min_scale").get<double>();
    ds.gen.max_scale = g.at("max_scale").get<double>();
    for (const char *name : {"train", "val", "test"}) {
      auto &out = name == std::string("train") ? ds.train
                  : name == std::string("val") ? ds.val
                                               : ds.test;
      for (const json &e : m.at("splits").at(name)) {
        VideoClip c;
        c.clip_id = e.at("clip_id").get<std::string>();
        c.label = e.at("label").get<int>();
        c.boundary = {e.at("boundary").at(0).get<Index>(), e.at("boundary").at(1).get<Index>()};
        const json &p = e.at("pose");
        c.pose = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(),
                  p.at(3).get<double>()};
        const auto dir = root / name;
        c.frames = clip_frames(read_vsrt(dir / (c.clip_id + ".frames.vsrt")));
        c.landmarks = read_landmarks(dir / (c.clip_id + ".landmarks.txt"));
        c.audio = read_vsrt(dir / (c.clip_id + ".audio.vsrt"));
        if (static_cast<int>(c.frames.size()) != ds.gen.frames ||
            static_cast<int>(c.landmarks.size()) != ds.gen.frames)
          throw FormatError("clip " + c.clip_id + " frame count does not match manifest");
        if (!c.boundary.valid_for(ds.gen.frames))
          throw FormatError("clip " + c.clip_id + " has an invalid word boundary");
        out.push_back(std::move(c));
      }
    }
  } catch (const json::exception &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ds;
}

std::vector<AudioExample> audio_examples(const std::vector<VideoClip> &clips) {
  std::vector<AudioExample> out;
  out.reserve(clips.size());
  for (const VideoClip &c : clips)
    out.push_back({c.clip_id, c.audio, c.label});
  return out;
}

} // namespace vsr
