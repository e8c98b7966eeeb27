// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/distill.hpp>
#include <vsr/gradcheck.hpp>
#include <vsr/io.hpp>
#include <vsr/synth.hpp>

#include <cmath>
#include <filesystem>

using namespace vsr;

namespace {

Array random_distribution(Index v, Rng &rng) {
  Array p(v);
  for (Index i = 0; i < v; ++i)
    p[i] = uniform(rng, 0.01, 1.0);
  return p / p.sum();
}

Tensor random_logits(Shape shape, Rng &rng) {
  Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i)
    a[i] = uniform(rng, -3, 3);
  return Tensor(std::move(shape), a, true);
}

// KL(sharpen(t) || softmax(s / tau)) * tau^2 for one row, in plain arithmetic.
double kd_oracle(const Array &s, const Array &t, double tau) {
  Array target = t.pow(1.0 / tau);
  target /= target.sum();
  const Array z = s / tau;
  const double lse = z.maxCoeff() + std::log((z - z.maxCoeff()).exp().sum());
  double kl = 0.0;
  for (Index i = 0; i < t.size(); ++i)
    if (target[i] > 0.0)
      kl += target[i] * (std::log(target[i]) - (z[i] - lse));
  return tau * tau * kl;
}

} // namespace

TEST_CASE("kl_divergence") {
  const Array p = (Array(3) << 0.2, 0.5, 0.3).finished();
  CHECK(kl_divergence(p, p) == 0.0);
  const Array one = (Array(2) << 1.0, 0.0).finished();
  const Array half = (Array(2) << 0.5, 0.5).finished();
  CHECK(kl_divergence(one, half) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 500; ++i)
    CHECK(kl_divergence(random_distribution(6, rng), random_distribution(6, rng)) >= 0.0);
  CHECK_THROWS_AS(kl_divergence(half, (Array(2) << 0.7, 0.7).finished()), DistributionError);
  CHECK_THROWS_AS(kl_divergence(half, p), DistributionError);
}

TEST_CASE("sequence_kd_loss") {
  SUBCASE("hand value") {
    const Tensor s = Tensor::from({2}, {0, 0});
    CHECK(sequence_kd_loss(s, Tensor::from({2}, {1, 0}), 1.0).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("matched student is a stationary point") {
    Rng rng(2);
    for (double tau : {0.5, 1.0, 2.0, 4.0}) {
      const Array t = random_distribution(7, rng);
      Tensor s({7}, t.log(), true);
      const Tensor loss = sequence_kd_loss(s, Tensor({7}, t), tau);
      CHECK(std::abs(loss.item()) < 1e-12);
      backward(loss);
      CHECK(s.grad().abs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("agrees with the closed form and is positive when mismatched") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const double tau = uniform(rng, 0.5, 5.0);
      const Tensor s = random_logits({6}, rng);
      const Array t = random_distribution(6, rng);
      const double loss = sequence_kd_loss(s, Tensor({6}, t), tau).item();
      CHECK(std::abs(loss - kd_oracle(s.data(), t, tau)) < 1e-12);
      CHECK(loss > 0.0);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sequence_kd_loss(Tensor({3}, 0.0), Tensor::from({2}, {0.5, 0.5}), 1.0), ShapeError);
    CHECK_THROWS_AS(sequence_kd_loss(Tensor({2}, 0.0), Tensor::from({2}, {0.9, 0.5}), 1.0),
                    DistributionError);
    CHECK_THROWS(sequence_kd_loss(Tensor({2}, 0.0), Tensor::from({2}, {0.5, 0.5}), 0.0));
  }
}

TEST_CASE("frame_kd_loss") {
  Rng rng(4);
  const Index t_len = 5, v = 4;
  const double tau = 2.0;
  const Tensor s = random_logits({t_len, v}, rng);
  Array teacher(t_len * v);
  for (Index t = 0; t < t_len; ++t)
    teacher.segment(t * v, v) = random_distribution(v, rng);
  const double loss = frame_kd_loss(s, Tensor({t_len, v}, teacher), tau).item();
  double looped = 0.0;
  for (Index t = 0; t < t_len; ++t)
    looped += kd_oracle(s.data().segment(t * v, v), teacher.segment(t * v, v), tau);
  CHECK(std::abs(loss - looped / t_len) < 1e-12);

  const Tensor row = narrow(s, 0, 1, 1);
  const Tensor trow({1, v}, teacher.segment(v, v));
  CHECK(frame_kd_loss(row, trow, tau).item() ==
        sequence_kd_loss(reshape(row, {v}), reshape(trow, {v}), tau).item());

  const Tensor matched({t_len, v}, teacher.log());
  CHECK(std::abs(frame_kd_loss(matched, Tensor({t_len, v}, teacher), tau).item()) < 1e-12);
  CHECK_THROWS_AS(frame_kd_loss(s, Tensor({t_len - 1, v}, 0.25), tau), ShapeError);
}

TEST_CASE("KD gradients") {
  Rng rng(5);
  Tensor s = random_logits({3, 4}, rng);
  Array t(12);
  for (Index r = 0; r < 3; ++r)
    t.segment(r * 4, 4) = random_distribution(4, rng);
  const Tensor teacher({3, 4}, t);
  std::vector<Tensor> inputs{s};
  CHECK(finite_diff_check([&] { return frame_kd_loss(s, teacher, 2.5); }, inputs).passed());
  CHECK(finite_diff_check([&] { return sequence_kd_loss(s, teacher, 0.7); }, inputs).passed());
}

TEST_CASE("combined_loss") {
  const Tensor ce = Tensor::scalar(1.0), seq = Tensor::scalar(2.0), frame = Tensor::scalar(3.0);
  CHECK(combined_loss(ce, seq, frame, {1.0, 1.0, 1.0}).item() == 6.0);
  CHECK(combined_loss(ce, seq, frame, {1.0, 0.0, 0.0}).item() == 1.0);

  Rng rng(6);
  Tensor x = random_logits({4}, rng);
  const Tensor t = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4});
  auto parts = [&](double a, double b) {
    x.zero_grad();
    backward(combined_loss(sum(mul(x, x)), sequence_kd_loss(x, t, 2.0),
                           frame_kd_loss(reshape(x, {1, 4}), reshape(t, {1, 4}), 1.0),
                           {2.0, a, b}));
    return Array(x.grad());
  };
  const Array g_all = parts(0.5, 1.5);
  const Array g_ce = parts(0.0, 0.0);
  const Array g_seq = parts(1.0, 0.0) - g_ce;
  const Array g_frame = parts(0.0, 1.0) - g_ce;
  CHECK((g_all - (g_ce + 0.5 * g_seq + 1.5 * g_frame)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("audio teacher") {
  GeneratorConfig gen;
  const Dataset ds = generate_dataset(gen, {}, 11);
  const auto examples = audio_examples(ds.train);
  const TeacherRun run = train_teacher(examples, gen.n_classes, {}, 3);

  SUBCASE("learns the clean audio within 20 epochs") {
    REQUIRE(run.epoch_top1.size() <= 20);
    CHECK(run.epoch_top1.back() >= 99.0);
  }
  SUBCASE("posteriors are distributions") {
    REQUIRE(run.posteriors.size() == examples.size());
    for (const auto &[id, p] : run.posteriors) {
      CHECK(p.frame.shape() == Shape{gen.frames, gen.n_classes});
      CHECK(p.sequence.shape() == Shape{gen.n_classes});
      CHECK_NOTHROW(check_distribution(p.frame));
      CHECK_NOTHROW(check_distribution(p.sequence));
    }
  }
  SUBCASE("cache round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path() / "vsr_teacher_cache_test";
    std::filesystem::remove_all(dir);
    write_posterior_cache(dir, run.posteriors);
    for (const auto &[id, p] : run.posteriors) {
      REQUIRE(has_posteriors(dir, id));
      const TeacherPosteriors back = read_posteriors(dir, id);
      CHECK((back.frame.data() == p.frame.data()).all());
      CHECK((back.sequence.data() == p.sequence.data()).all());
      CHECK(std::filesystem::exists(dir / (id + ".frame.vsrt")));
      CHECK(std::filesystem::exists(dir / (id + ".seq.vsrt")));
    }
    CHECK_FALSE(has_posteriors(dir, "missing"));
    std::filesystem::remove_all(dir);
  }
  SUBCASE("same seed, same posteriors") {
    const TeacherRun again = train_teacher(examples, gen.n_classes, {}, 3);
    for (const auto &[id, p] : run.posteriors) {
      const TeacherPosteriors &q = again.posteriors.at(id);
      CHECK(encode_vsrt(q.frame) == encode_vsrt(p.frame));
      CHECK(encode_vsrt(q.sequence) == encode_vsrt(p.sequence));
    }
  }
  SUBCASE("missing audio is an error") {
    std::vector<AudioExample> bad = examples;
    bad[3].audio = Tensor();
    CHECK_THROWS_AS(train_teacher(bad, gen.n_classes, {}, 3), std::invalid_argument);
  }
}
