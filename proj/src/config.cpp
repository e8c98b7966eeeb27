// SPDX-License-Identifier: Apache-2.0
#include <vsr/config.hpp>
#include <vsr/io.hpp>

#include <charconv>
#include <functional>
#include <set>

namespace vsr {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(Variant v) { return std::string(variant_tag(v)); }

std::string format(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format(const std::vector<int> &v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

void parse_into(int &out, std::string_view v) { out = parse_number<int>(v); }
void parse_into(std::uint64_t &out, std::string_view v) { out = parse_number<std::uint64_t>(v); }
void parse_into(double &out, std::string_view v) { out = parse_number<double>(v); }
void parse_into(Variant &out, std::string_view v) {
  try {
    out = parse_variant(v);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
}

void parse_into(bool &out, std::string_view v) {
  if (v == "true" || v == "1")
    out = true;
  else if (v == "false" || v == "0")
    out = false;
  else
    throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

void parse_into(std::vector<int> &out, std::string_view v) {
  std::vector<int> values;
  while (true) {
    const auto comma = v.find(',');
    values.push_back(parse_number<int>(trim(v.substr(0, comma))));
    if (comma == std::string_view::npos)
      break;
    v = v.substr(comma + 1);
  }
  out = std::move(values);
}

struct Field {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig &)> get;
  std::function<void(RunConfig &, std::string_view)> set;
};

template <typename Ref>
Field field(std::string key, std::string doc, Ref ref) {
  return {std::move(key), std::move(doc),
          [ref](const RunConfig &c) { return format(ref(const_cast<RunConfig &>(c))); },
          [ref](RunConfig &c, std::string_view v) { parse_into(ref(c), v); }};
}

#define VSR_FIELD(key, member, doc)                                                            \
  field(key, doc, [](RunConfig &c) -> auto & { return c.member; })

const std::vector<Field> &fields() {
  static const std::vector<Field> table{
      VSR_FIELD("data.classes", gen.n_classes, "vocabulary size V"),
      VSR_FIELD("data.frames", gen.frames, "frames per clip T"),
      VSR_FIELD("data.size", gen.size, "rendered frame side in pixels"),
      VSR_FIELD("data.audio_dim", gen.audio_dim, "audio features per frame A"),
      VSR_FIELD("data.noise", gen.noise_sigma, "pixel noise sigma"),
      VSR_FIELD("data.audio_noise", gen.audio_noise, "audio noise sigma"),
      VSR_FIELD("data.distractor", gen.distractor, "amplitude of the moving distractor blobs"),
      VSR_FIELD("data.max_rotation", gen.max_rotation_deg, "pose rotation range, +- degrees"),
      VSR_FIELD("data.max_translation", gen.max_translation, "pose translation range, +- px"),
      VSR_FIELD("data.min_scale", gen.min_scale, "pose scale lower bound"),
      VSR_FIELD("data.max_scale", gen.max_scale, "pose scale upper bound"),
      VSR_FIELD("data.train_per_class", counts.train, "training clips per class"),
      VSR_FIELD("data.val_per_class", counts.val, "validation clips per class"),
      VSR_FIELD("data.test_per_class", counts.test, "test clips per class"),
      VSR_FIELD("data.seed", data_seed, "corpus seed (gen-data)"),
      VSR_FIELD("prep.resize", setup.prep.resize, "alignment/resize side before cropping"),
      VSR_FIELD("prep.crop", setup.prep.crop, "crop side fed to the network"),
      VSR_FIELD("prep.word_boundary", setup.prep.word_boundary,
                "append the word-boundary indicator channel"),
      VSR_FIELD("model.stem_width", setup.model.stem_width, "stem conv channels"),
      VSR_FIELD("model.stage_widths", setup.model.stage_widths,
                "SE stage widths, comma-separated"),
      VSR_FIELD("model.se_reduction", setup.model.se_reduction, "SE reduction ratio r"),
      VSR_FIELD("model.gru_hidden", setup.model.gru_hidden, "GRU hidden size H"),
      VSR_FIELD("model.gru_layers", setup.model.gru_layers, "stacked BiGRU layers"),
      VSR_FIELD("model.dropout", setup.model.dropout,
                "dropout after pooling and between GRU layers"),
      VSR_FIELD("model.attention_kernel", setup.model.attention_kernel,
                "spatial attention hop kernel size (odd)"),
      VSR_FIELD("train.variant", setup.train.variant,
                "baseline | kd | attention | alignment | integrated"),
      VSR_FIELD("train.epochs", setup.train.epochs, "training epochs"),
      VSR_FIELD("train.batch_size", setup.train.batch_size, "clips per batch"),
      VSR_FIELD("train.lr0", setup.train.lr0, "initial learning rate"),
      VSR_FIELD("train.lr_min", setup.train.lr_min, "final learning rate"),
      VSR_FIELD("train.beta1", setup.train.adam.beta1, "Adam beta1"),
      VSR_FIELD("train.beta2", setup.train.adam.beta2, "Adam beta2"),
      VSR_FIELD("train.eps", setup.train.adam.eps, "Adam epsilon"),
      VSR_FIELD("train.mixup_alpha", setup.train.mixup_alpha, "mixup Beta(alpha, alpha); 0 = off"),
      VSR_FIELD("train.label_smoothing", setup.train.label_smoothing, "label smoothing epsilon"),
      VSR_FIELD("train.train_fraction", setup.train.train_fraction,
                "stratified fraction of the training split used"),
      VSR_FIELD("train.seed", setup.train.seed, "training seed (init, shuffle, crops, mixup)"),
      VSR_FIELD("train.record_seconds", setup.train.record_seconds,
                "write wall-clock seconds to the metrics CSV (false writes 0)"),
      VSR_FIELD("kd.temperature", setup.kd.temperature, "distillation temperature tau"),
      VSR_FIELD("kd.beta_seq", setup.kd.beta_seq, "sequence-level KD weight"),
      VSR_FIELD("kd.beta_frame", setup.kd.beta_frame, "frame-level KD weight"),
      VSR_FIELD("teacher.hidden", teacher.hidden, "audio teacher hidden units"),
      VSR_FIELD("teacher.epochs", teacher.epochs, "audio teacher epochs"),
      VSR_FIELD("teacher.batch_size", teacher.batch_size, "audio teacher batch size"),
      VSR_FIELD("teacher.lr", teacher.lr, "audio teacher learning rate"),
      VSR_FIELD("teacher.frame_weight", teacher.frame_weight,
                "audio teacher per-frame cross-entropy weight"),
  };
  return table;
}

#undef VSR_FIELD

const Field &find_field(std::string_view key) {
  for (const Field &f : fields())
    if (f.key == key)
      return f;
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

} // namespace

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field &f : fields())
    out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  try {
    gen.validate();
    setup.train.validate();
    setup.kd.validate();
    model_for(setup, gen).validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (counts.train < 1 || counts.val < 1 || counts.test < 1)
    throw ConfigError("per-class clip counts must be >= 1");
  if (setup.prep.crop < 1 || setup.prep.crop > setup.prep.resize)
    throw ConfigError("prep.crop must be in [1, prep.resize]");
  if (teacher.hidden < 1 || teacher.epochs < 1 || teacher.batch_size < 1 || !(teacher.lr > 0.0))
    throw ConfigError("teacher settings must be positive");
}

std::vector<ConfigKey> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> out;
  for (const Field &f : fields())
    out.push_back({f.key, f.get(defaults), f.doc});
  return out;
}

void set_config_value(RunConfig &cfg, std::string_view key, std::string_view value) {
  const Field &f = find_field(key);
  try {
    f.set(cfg, trim(value));
  } catch (const ConfigError &e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

RunConfig parse_config(std::string_view text, RunConfig cfg) {
  std::set<std::string, std::less<>> seen;
  int lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos)
      throw ConfigError(where + "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (!seen.insert(std::string(key)).second)
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path, RunConfig base) {
  try {
    return parse_config(read_file(path), std::move(base));
  } catch (const ConfigError &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

} // namespace vsr
