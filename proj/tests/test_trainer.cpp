// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/io.hpp>
#include <vsr/optim.hpp>
#include <vsr/trainer.hpp>

#include <cmath>
#include <filesystem>

using namespace vsr;

namespace {

const Dataset &small_corpus() {
  static const Dataset ds = [] {
    GeneratorConfig gen;
    return generate_dataset(gen, {4, 2, 1}, 5);
  }();
  return ds;
}

TrainSetup quick_setup(int epochs) {
  TrainSetup s;
  s.train.epochs = epochs;
  s.train.lr0 = 1e-3;
  return s;
}

} // namespace

TEST_CASE("cosine_lr") {
  CHECK(cosine_lr(0, 100, 3e-4) == 3e-4);
  CHECK(std::abs(cosine_lr(100, 100, 3e-4)) < 1e-20);
  CHECK(std::abs(cosine_lr(50, 100, 3e-4) - 1.5e-4) < 1e-18);
  CHECK(cosine_lr(100, 100, 3e-4, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
  double prev = cosine_lr(0, 977, 1e-3, 2e-5);
  for (long t = 1; t <= 977; ++t) {
    const double lr = cosine_lr(t, 977, 1e-3, 2e-5);
    REQUIRE(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(101, 100, 3e-4), std::out_of_range);
}

TEST_CASE("Adam") {
  SUBCASE("first unit-gradient step moves by lr") {
    Tensor w = Tensor::from({1}, {0.5}).set_requires_grad(true);
    Adam adam({{"w", w}});
    backward(sum(w));
    adam.step(0.01);
    const double expected = 0.5 - 0.01 * 1.0 / (1.0 + 1e-8);
    CHECK(std::abs(w[0] - expected) < 1e-17);
  }
  SUBCASE("zero gradient and zero rate leave parameters alone") {
    Tensor w = Tensor::from({3}, {0.1, -0.2, 0.3}).set_requires_grad(true);
    const Array before = w.data();
    Adam adam({{"w", w}});
    backward(scale(sum(w), 0.0));
    adam.step(0.1);
    CHECK((w.data() == before).all());
    adam.zero_grad();
    backward(sum(mul(w, w)));
    adam.step(0.0);
    CHECK((w.data() == before).all());
  }
  SUBCASE("non-finite gradients abort") {
    Tensor w = Tensor::from({1}, {0.0}).set_requires_grad(true);
    Adam adam({{"w", w}});
    w.node()->grad_buffer()[0] = std::nan("");
    CHECK_THROWS_AS(adam.step(0.1), std::runtime_error);
  }
}

TEST_CASE("top-1 accuracy") {
  const int labels[] = {0, 1, 2, 3};
  const int all[] = {0, 1, 2, 3};
  const int three[] = {0, 1, 2, 0};
  CHECK(top1_percent(all, labels) == 100.0);
  CHECK(top1_percent(three, labels) == 75.0);
  CHECK_THROWS(top1_percent({}, {}));

  const Dataset &ds = small_corpus();
  const TrainSetup s = quick_setup(1);
  const LipReadingNet net(model_for(s, ds.gen), 3);
  const auto val = prepare_clips(ds.val, false, s.prep.resize);
  CHECK(evaluate(net, val, s.prep) == evaluate(net, val, s.prep));
  CHECK_THROWS(evaluate(net, std::span<const PreparedClip>(), s.prep));
}

TEST_CASE("overfits two clips") {
  const Dataset &full = small_corpus();
  Dataset ds;
  ds.gen = full.gen;
  ds.train = {full.train[0], full.train[4]};
  ds.val = ds.train;
  REQUIRE(ds.train[0].label != ds.train[1].label);
  TrainSetup s = quick_setup(500);
  s.train.batch_size = 2;
  s.train.mixup_alpha = 0.0;
  s.train.label_smoothing = 0.0;
  s.model.dropout = 0.0;
  const TrainResult r = train(s, ds);
  int below = 0;
  for (const MetricsRow &m : r.metrics)
    if (m.train_loss < 0.01) {
      below = m.epoch;
      break;
    }
  CHECK(below > 0);
  MESSAGE("loss first below 0.01 at step " << below);
  CHECK(r.metrics.back().val_top1 == 100.0);
}

TEST_CASE("zero learning rate stays at chance") {
  GeneratorConfig gen;
  const Dataset ds = generate_dataset(gen, {20, 10, 1}, 8);
  TrainSetup s = quick_setup(2);
  s.train.lr0 = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    s.train.seed = seed;
    const TrainResult r = train(s, ds);
    const LipReadingNet fresh(r.model_config, derive_seed(seed, "model"));
    const ParamList a = fresh.parameters(), b = r.model->parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK((a[i].tensor.data() == b[i].tensor.data()).all());
    for (const MetricsRow &m : r.metrics)
      CHECK(std::abs(m.val_top1 - 100.0 / gen.n_classes) <= 2.0);
  }
}

TEST_CASE("identical seeds give identical runs") {
  const Dataset &ds = small_corpus();
  TrainSetup s = quick_setup(2);
  s.train.variant = Variant::integrated;
  GeneratorConfig gen = ds.gen;
  const TeacherRun teacher = train_teacher(audio_examples(ds.train), gen.n_classes, {}, 1);
  const TrainResult a = train(s, ds, &teacher.posteriors);
  const TrainResult b = train(s, ds, &teacher.posteriors);
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  const ParamList sa = a.model->state(), sb = b.model->state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i)
    CHECK(encode_vsrt(sa[i].tensor) == encode_vsrt(sb[i].tensor));

  s.train.seed = 2;
  const TrainResult c = train(s, ds, &teacher.posteriors);
  CHECK(metrics_csv(c.metrics) != metrics_csv(a.metrics));
}

TEST_CASE("ablation harness") {
  const Dataset &ds = small_corpus();
  const TrainSetup s = quick_setup(1);
  CHECK_THROWS(ablation_run(s, ds, nullptr));
  const TeacherRun teacher = train_teacher(audio_examples(ds.train), ds.gen.n_classes, {}, 1);
  const auto rows = ablation_run(s, ds, &teacher.posteriors);
  REQUIRE(rows.size() == 5);
  const char *names[] = {"Baseline", "Baseline + KD", "Baseline + Attention",
                         "Baseline + Alignment", "Baseline + KD + Alignment + Attention"};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rows[i].variant == names[i]);
    CHECK(rows[i].val_top1 >= 0.0);
    CHECK(rows[i].val_top1 <= 100.0);
  }
  const std::string csv = metrics_csv(rows);
  CHECK(csv.starts_with("variant,epoch,train_loss,val_top1,seconds\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("variant tags") {
  for (Variant v : kAblationVariants)
    CHECK(parse_variant(variant_tag(v)) == v);
  CHECK_THROWS_AS(parse_variant("everything"), std::invalid_argument);
  CHECK(variant_flags(Variant::integrated).kd);
  CHECK(variant_flags(Variant::integrated).attention);
  CHECK(variant_flags(Variant::integrated).alignment);
  CHECK_FALSE(variant_flags(Variant::baseline).attention);
}

TEST_CASE("metrics file") {
  const MetricsRow rows[] = {{"baseline", 1, 2.5, 40.0, 0.0}};
  const auto path = std::filesystem::temp_directory_path() / "vsr_metrics_test" / "m.csv";
  write_metrics_csv(path, rows);
  CHECK(read_file(path) == "variant,epoch,train_loss,val_top1,seconds\nbaseline,1,2.5,40,0.000\n");
  std::filesystem::remove_all(path.parent_path());
}
