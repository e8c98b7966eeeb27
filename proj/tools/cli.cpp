// SPDX-License-Identifier: Apache-2.0
#include <vsr/cli.hpp>
#include <vsr/config.hpp>
#include <vsr/gradsuite.hpp>
#include <vsr/io.hpp>
#include <vsr/trainer.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <sstream>

namespace vsr {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string data_dir;
  std::string out;
  std::string variant;
  std::vector<std::string> sets;
};

std::string fmt(const char *format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// Defaults, then the config file, then --set pairs, then the dedicated flags.
// --seed is the corpus seed for gen-data and the training seed otherwise.
RunConfig resolve_config(const Globals &g, bool seed_is_data) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  for (const std::string &kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!g.variant.empty())
    set_config_value(cfg, "train.variant", g.variant);
  if (g.seed) {
    if (seed_is_data)
      cfg.data_seed = *g.seed;
    else
      cfg.setup.train.seed = *g.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path need(const std::string &value, const char *flag) {
  if (value.empty())
    throw UsageError(std::string("missing required flag ") + flag);
  return value;
}

PosteriorMap load_teacher(const fs::path &root, const Dataset &ds) {
  const fs::path dir = root / "teacher";
  PosteriorMap map;
  for (const VideoClip &c : ds.train) {
    if (!has_posteriors(dir, c.clip_id))
      throw std::runtime_error("teacher cache " + dir.string() + " has no posteriors for " +
                               c.clip_id + " (run gen-data)");
    map.emplace(c.clip_id, read_posteriors(dir, c.clip_id));
  }
  return map;
}

bool needs_teacher(const RunConfig &cfg) { return variant_flags(cfg.setup.train.variant).kd; }

const VideoClip &find_clip(const Dataset &ds, const std::string &split, const std::string &id) {
  const auto &clips = ds.split(split);
  if (clips.empty())
    throw std::runtime_error("split '" + split + "' is empty");
  if (id.empty())
    return clips.front();
  for (const VideoClip &c : clips)
    if (c.clip_id == id)
      return c;
  throw std::runtime_error("no clip '" + id + "' in split '" + split + "'");
}

// Model rebuilt from a checkpoint directory's config.txt and state tensors.
struct LoadedModel {
  RunConfig cfg;
  std::unique_ptr<LipReadingNet> net;
};

LoadedModel load_model(const fs::path &ckpt, const Dataset &ds) {
  LoadedModel m;
  m.cfg = parse_config(read_file(ckpt / "config.txt"));
  m.net = std::make_unique<LipReadingNet>(model_for(m.cfg.setup, ds.gen), 0);
  load_checkpoint(ckpt, m.net->state());
  return m;
}

int cmd_gen_data(const Globals &g, std::ostream &out) {
  const RunConfig cfg = resolve_config(g, true);
  const fs::path root = need(g.data_dir, "--data-dir");
  const Dataset ds = generate_dataset(cfg.gen, cfg.counts, cfg.data_seed);
  write_dataset(root, ds);
  const TeacherRun teacher =
      train_teacher(audio_examples(ds.train), cfg.gen.n_classes, cfg.teacher, cfg.data_seed);
  write_posterior_cache(root / "teacher", teacher.posteriors);
  write_file_atomic(root / "config.txt", cfg.to_text());
  out << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val / "
      << ds.test.size() << " test clips to " << root.string() << "\n";
  out << "teacher train top1 " << fmt("%.2f", teacher.epoch_top1.back()) << "\n";
  return 0;
}

int cmd_train(const Globals &g, std::ostream &out) {
  RunConfig cfg = resolve_config(g, false);
  const fs::path root = need(g.data_dir, "--data-dir");
  const fs::path dir = need(g.out, "--out");
  const Dataset ds = load_dataset(root);
  cfg.gen = ds.gen;
  cfg.data_seed = ds.seed;
  std::optional<PosteriorMap> teacher;
  if (needs_teacher(cfg))
    teacher = load_teacher(root, ds);
  const TrainResult r = train(cfg.setup, ds, teacher ? &*teacher : nullptr);
  fs::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
  save_checkpoint(dir / "checkpoint", r.model->state(), cfg.to_text());
  const MetricsRow &last = r.metrics.back();
  out << last.variant << " epoch " << last.epoch << " train_loss "
      << fmt("%.6f", last.train_loss) << " val_top1 " << fmt("%.17g", last.val_top1) << "\n";
  return 0;
}

int cmd_eval(const Globals &g, const std::string &checkpoint, const std::string &split,
             std::ostream &out) {
  const fs::path root = need(g.data_dir, "--data-dir");
  const fs::path ckpt = checkpoint.empty() ? need(g.out, "--out or --checkpoint") / "checkpoint"
                                           : fs::path(checkpoint);
  const Dataset ds = load_dataset(root);
  const LoadedModel m = load_model(ckpt, ds);
  const auto clips = prepare_clips(ds.split(split), variant_flags(m.cfg.setup.train.variant).alignment,
                                   m.cfg.setup.prep.resize);
  out << split << "_top1 " << fmt("%.17g", evaluate(*m.net, clips, m.cfg.setup.prep)) << "\n";
  return 0;
}

int cmd_grad_check(const GradSuiteOptions &opts, const std::vector<std::string> &ops,
                   std::ostream &out, std::ostream &err) {
  const auto results = run_grad_suite(opts, ops);
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %6s %9s %8s %14s  %s\n", "op", "cases", "checked",
                "skipped", "max_rel_error", "status");
  out << line;
  int failed = 0;
  for (const OpCheckResult &r : results) {
    std::snprintf(line, sizeof line, "%-24s %6d %9lld %8lld %14.3e  %s\n", r.op.c_str(), r.cases,
                  static_cast<long long>(r.elements), static_cast<long long>(r.skipped),
                  r.max_rel_error, r.passed ? "ok" : "FAIL");
    out << line;
    failed += !r.passed;
  }
  if (failed > 0) {
    err << "error: " << failed << " operation(s) exceed relative error "
        << fmt("%g", opts.check.tolerance) << "\n";
    return 1;
  }
  return 0;
}

int cmd_ablate(const Globals &g, std::ostream &out) {
  RunConfig cfg = resolve_config(g, false);
  const fs::path root = need(g.data_dir, "--data-dir");
  const fs::path dir = need(g.out, "--out");
  const Dataset ds = load_dataset(root);
  const PosteriorMap teacher = load_teacher(root, ds);
  const auto rows = ablation_run(cfg.setup, ds, &teacher);
  write_metrics_csv(dir / "ablation.csv", rows);
  for (const MetricsRow &r : rows)
    out << fmt("%7.2f", r.val_top1) << "  " << r.variant << "\n";
  return 0;
}

int cmd_align_preview(const Globals &g, const std::string &split, const std::string &clip_id,
                      std::ostream &out) {
  const RunConfig cfg = resolve_config(g, false);
  const fs::path root = need(g.data_dir, "--data-dir");
  const fs::path dir = need(g.out, "--out");
  const Dataset ds = load_dataset(root);
  const VideoClip &clip = find_clip(ds, split, clip_id);
  const int side = cfg.setup.prep.resize;
  const NeutralTemplate tmpl = NeutralTemplate::for_size(side);
  fs::create_directories(dir);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "_f%02zu", t);
    write_pgm(dir / (clip.clip_id + stem + "_before.pgm"), clip.frames[t]);
    write_pgm(dir / (clip.clip_id + stem + "_after.pgm"),
              align_lips(clip.frames[t], clip.landmarks[t], tmpl, side));
  }
  out << "wrote " << 2 * clip.frames.size() << " frames of " << clip.clip_id << " to "
      << dir.string() << "\n";
  return 0;
}

int cmd_dump_attention(const Globals &g, const std::string &checkpoint, const std::string &split,
                       const std::string &clip_id, std::ostream &out) {
  const fs::path root = need(g.data_dir, "--data-dir");
  const fs::path dir = need(g.out, "--out");
  const fs::path ckpt = checkpoint.empty() ? dir / "checkpoint" : fs::path(checkpoint);
  const Dataset ds = load_dataset(root);
  const LoadedModel m = load_model(ckpt, ds);
  if (!m.net->config().attention)
    throw std::runtime_error("checkpoint " + ckpt.string() + " has no attention module");
  const VideoClip &clip = find_clip(ds, split, clip_id);
  const auto prepared = prepare_clips({clip}, variant_flags(m.cfg.setup.train.variant).alignment,
                                      m.cfg.setup.prep.resize);
  const PreparedClip *batch[] = {&prepared.front()};
  EvalScope eval;
  NoGradScope no_grad;
  const NetworkOutput o = m.net->forward(make_batch(batch, m.cfg.setup.prep, CropMode::center, nullptr));
  const AttentionBundle &b = *o.attention;
  fs::create_directories(dir);
  write_vsrt(dir / (clip.clip_id + ".temporal.vsrt"), b.temporal_scores);
  for (int k = 0; k < kAttentionHops; ++k) {
    const Tensor &map = b.spatial_maps[static_cast<std::size_t>(k)];
    write_vsrt(dir / (clip.clip_id + ".spatial" + std::to_string(k) + ".vsrt"),
               reshape(map, {map.dim(0), map.dim(2), map.dim(3)}));
  }
  out << "temporal";
  for (double s : b.temporal_scores.data())
    out << ' ' << fmt("%.4f", s);
  out << "\n";
  return 0;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Visual speech recognition toolkit", "vsr"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "corpus seed (gen-data) or training seed");
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--data-dir", g.data_dir, "corpus directory");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--variant", g.variant, "baseline | kd | attention | alignment | integrated");
  app.add_option("--set", g.sets, "override one configuration key (key=value), repeatable")
      ->allow_extra_args(false);

  auto *gen = app.add_subcommand("gen-data", "generate the corpus and the teacher cache");
  auto *trn = app.add_subcommand("train", "train one variant");
  auto *evl = app.add_subcommand("eval", "evaluate a checkpoint");
  auto *gck = app.add_subcommand("grad-check", "finite-difference gradient suite");
  auto *abl = app.add_subcommand("ablate", "train the five variants");
  auto *alp = app.add_subcommand("align-preview", "before/after alignment PGMs for one clip");
  auto *dat = app.add_subcommand("dump-attention", "attention maps and scores for one clip");
  for (auto *sub : {gen, trn, evl, gck, abl, alp, dat})
    sub->fallthrough();

  std::string checkpoint, split = "val", clip_id;
  for (auto *sub : {evl, dat})
    sub->add_option("--checkpoint", checkpoint, "checkpoint directory (default <out>/checkpoint)");
  for (auto *sub : {evl, alp, dat})
    sub->add_option("--split", split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  for (auto *sub : {alp, dat})
    sub->add_option("--clip", clip_id, "clip id (default: first clip of the split)");
  GradSuiteOptions gopts;
  std::vector<std::string> ops;
  gck->add_option("--cases", gopts.cases, "random cases per operation")->check(CLI::PositiveNumber);
  gck->add_option("--network-cases", gopts.network_cases, "random composed networks")
      ->check(CLI::PositiveNumber);
  gck->add_option("--op", ops, "restrict to this operation, repeatable")->allow_extra_args(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  if (app.count("--seed") > 0)
    g.seed = seed;
  if (app.count("--seed") > 0)
    gopts.seed = seed;

  try {
    if (*gen)
      return cmd_gen_data(g, out);
    if (*trn)
      return cmd_train(g, out);
    if (*evl)
      return cmd_eval(g, checkpoint, split, out);
    if (*gck)
      return cmd_grad_check(gopts, ops, out, err);
    if (*abl)
      return cmd_ablate(g, out);
    if (*alp)
      return cmd_align_preview(g, split, clip_id, out);
    return cmd_dump_attention(g, checkpoint, split, clip_id, out);
  } catch (const UsageError &e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace vsr
