// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <vsr/cli.hpp>
#include <vsr/config.hpp>
#include <vsr/io.hpp>

#include <filesystem>
#include <sstream>

using namespace vsr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vsr");
  std::vector<const char *> argv;
  for (const std::string &a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Value following `key ` on the first line that contains it.
std::string field_after(const std::string &text, const std::string &key) {
  const auto at = text.find(key + " ");
  REQUIRE(at != std::string::npos);
  const auto begin = at + key.size() + 1;
  return text.substr(begin, text.find_first_of(" \n", begin) - begin);
}

} // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_config("# comment\ntrain.epochs = 7\n\nmodel.stage_widths = 8, 12 # trailing\n"
                                   "kd.temperature=1.5\nprep.word_boundary = false\n");
  CHECK(c.setup.train.epochs == 7);
  CHECK(c.setup.model.stage_widths == std::vector<int>{8, 12});
  CHECK(c.setup.kd.temperature == 1.5);
  CHECK_FALSE(c.setup.prep.word_boundary);

  SUBCASE("round trip through to_text") {
    const RunConfig back = parse_config(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(parse_config(RunConfig{}.to_text()).to_text() == RunConfig{}.to_text());
  }
  SUBCASE("every documented key is settable") {
    const auto keys = config_keys();
    CHECK(keys.size() >= 40);
    std::string text;
    for (const ConfigKey &k : keys)
      text += k.key + " = " + k.default_value + "\n";
    CHECK(parse_config(text).to_text() == RunConfig{}.to_text());
  }
  SUBCASE("errors name the line") {
    auto message = [](const char *text) {
      try {
        parse_config(text);
      } catch (const ConfigError &e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("train.epochs = 3\nmodel.depth = 4\n").starts_with("line 2: unknown key"));
    CHECK(message("train.epochs = 3\ntrain.epochs = 4\n").starts_with("line 2: duplicate key"));
    CHECK(message("train.epochs\n").starts_with("line 1: expected key = value"));
    CHECK(message("train.epochs = ten\n").find("line 1") == 0);
    CHECK(message("train.lr0 = 1e-3x\n").find("line 1") == 0);
    CHECK(message("prep.word_boundary = yes\n").find("line 1") == 0);
    CHECK(message("train.variant = all\n").find("line 1") == 0);
  }
  CHECK_THROWS_AS(parse_config("train.epochs = 0\n").validate(), std::exception);
}

TEST_CASE("command line usage errors") {
  Run r = cli({"--bogus"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") == 0);
  CHECK(r.err.find("gen-data") != std::string::npos);

  r = cli({});
  CHECK(r.code == 1);

  r = cli({"frobnicate"});
  CHECK(r.code == 1);

  r = cli({"train"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--data-dir") != std::string::npos);

  r = cli({"train", "--set", "train.epochs"});
  CHECK(r.code == 1);

  r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("grad-check") != std::string::npos);
}

TEST_CASE("grad-check command") {
  Run r = cli({"grad-check", "--op", "add", "--op", "softmax", "--cases", "5", "--seed", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_error") != std::string::npos);
  CHECK(r.out.find("softmax") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);

  r = cli({"grad-check", "--op", "no_such_op"});
  CHECK(r.code == 1);
}

TEST_CASE("gen-data, train and eval") {
  const fs::path root = fs::temp_directory_path() / "vsr_cli_test";
  fs::remove_all(root);
  const fs::path data = root / "data", run = root / "run";
  const std::vector<std::string> small = {
      "--set", "data.train_per_class=2", "--set", "data.val_per_class=1",
      "--set", "data.test_per_class=1",  "--set", "teacher.epochs=3"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  Run r = cli(with({"gen-data", "--seed", "5", "--data-dir", data.string()}, small));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("wrote 20 train / 10 val / 10 test clips") == 0);
  CHECK(fs::exists(data / "manifest.json"));
  CHECK(fs::exists(data / "teacher"));

  const std::vector<std::string> train_args = {"train", "--data-dir", data.string(), "--out",
                                               run.string(), "--variant", "integrated",
                                               "--set", "train.epochs=2"};
  r = cli(train_args);
  REQUIRE(r.code == 0);
  const std::string val_top1 = field_after(r.out, "val_top1");
  CHECK(fs::exists(run / "metrics.csv"));
  CHECK(fs::exists(run / "checkpoint" / "config.txt"));

  SUBCASE("eval reproduces the final validation accuracy") {
    r = cli({"eval", "--data-dir", data.string(), "--out", run.string()});
    REQUIRE(r.code == 0);
    CHECK(field_after(r.out, "val_top1") == val_top1);
    r = cli({"eval", "--data-dir", data.string(), "--checkpoint", (run / "checkpoint").string(),
             "--split", "test"});
    CHECK(r.code == 0);
    CHECK(r.out.find("test_top1 ") == 0);
  }
  SUBCASE("training twice is bit identical") {
    const std::string csv = read_file(run / "metrics.csv");
    const fs::path again = root / "again";
    auto args = train_args;
    args[4] = again.string();
    REQUIRE(cli(args).code == 0);
    CHECK(read_file(again / "metrics.csv") == csv);
    for (const auto &e : fs::directory_iterator(run / "checkpoint"))
      CHECK(read_file(e.path()) == read_file(again / "checkpoint" / e.path().filename()));
  }
  SUBCASE("previews") {
    r = cli({"align-preview", "--data-dir", data.string(), "--out", (root / "pgm").string()});
    CHECK(r.code == 0);
    CHECK(std::distance(fs::directory_iterator(root / "pgm"), fs::directory_iterator()) == 24);
    r = cli({"dump-attention", "--data-dir", data.string(), "--out", run.string(), "--split",
             "val"});
    CHECK(r.code == 0);
    CHECK(r.out.find("temporal ") == 0);
  }
  SUBCASE("failures are one-line diagnostics") {
    r = cli({"eval", "--data-dir", (root / "nowhere").string(), "--out", run.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("error: ") == 0);
    r = cli({"train", "--data-dir", data.string(), "--out", run.string(), "--set", "model.depth=3"});
    CHECK(r.code == 1);
    CHECK(r.err.find("unknown key") != std::string::npos);
  }
  fs::remove_all(root);
}
