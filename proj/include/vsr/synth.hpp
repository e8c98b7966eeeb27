// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Deterministic synthetic lip-video corpus.
 *
 * Each clip is a face-like canvas whose mouth region carries a class-specific
 * moving blob during the (centred) word interval and a static distractor
 * texture outside it. A class is a sequence of three mouth shapes (blob
 * half-widths) over the word plus a motion path for the blob centre. A
 * per-clip similarity pose is applied to the pixels and to the 68 landmarks.
 * The paired audio stream is silent outside the word. Inside it mixes a
 * class-specific sinusoid bank (70% of the power) with a phonetic part whose
 * bank follows the mouth shape of each segment, with the video's timing,
 * plus noise. The class bank keeps the streams of different classes weakly
 * correlated even when they share mouth shapes.
 *
 * Synthetic landmark layout: 0-16 jaw, 17-26 brows, 27-35 nose (30 = tip),
 * 36-41 and 42-47 eyes (36 and 45 sit on the eye centres), 48-67 mouth.
 */
#ifndef VSR_SYNTH_HPP
#define VSR_SYNTH_HPP

#include <vsr/distill.hpp>
#include <vsr/geometry.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vsr {

struct Pose {
  double rotation_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double scale = 1.0;

  /// Similarity about the canvas centre mapping canonical to posed pixels.
  Affine2d transform(Index size) const;
  void validate() const;
};

struct GeneratorConfig {
  int n_classes = 10;
  int frames = 12;
  int size = 28;
  int audio_dim = 8;
  double noise_sigma = 0.03;
  double audio_noise = 0.1;
  /// Amplitude of class-independent moving blobs over the whole face.
  double distractor = 0.0;
  double max_rotation_deg = 10.0;
  double max_translation = 2.0;
  double min_scale = 0.9;
  double max_scale = 1.1;

  BoundaryInterval word_interval() const;
  void validate() const;
};

struct VideoClip {
  std::string clip_id;
  int label = 0;
  Clip frames; // T frames, size x size, values in [0, 1]
  BoundaryInterval boundary;
  std::vector<LandmarkSet> landmarks; // one per frame
  Tensor audio;                       // [T x A]
  Pose pose;
};

/// Landmarks of the unposed face on a size x size canvas.
LandmarkSet canonical_landmarks(Index size);

VideoClip generate_clip(const GeneratorConfig &cfg, int class_id, const Pose &pose,
                        double noise_sigma, std::uint64_t seed, std::string clip_id = {});

Pose sample_pose(const GeneratorConfig &cfg, Rng &rng);

struct SplitCounts {
  int train = 20;
  int val = 10;
  int test = 10;
};

struct Dataset {
  GeneratorConfig gen;
  std::uint64_t seed = 0;
  std::vector<VideoClip> train, val, test;

  const std::vector<VideoClip> &split(const std::string &name) const;
};

/// Clip ids are `<split>-c<class>-<index>`; per-clip seeds derive from
/// (seed, clip_id) so any clip can be regenerated on its own.
Dataset generate_dataset(const GeneratorConfig &cfg, const SplitCounts &per_class,
                         std::uint64_t seed);

/// `<root>/manifest.json` plus `<root>/<split>/<clip_id>.{frames.vsrt,
/// landmarks.txt,audio.vsrt}`.
void write_dataset(const std::filesystem::path &root, const Dataset &ds);
Dataset load_dataset(const std::filesystem::path &root);

std::vector<AudioExample> audio_examples(const std::vector<VideoClip> &clips);

} // namespace vsr

#endif // VSR_SYNTH_HPP
