#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "acort/accountant.hpp"
#include "acort/cli.hpp"
#include "acort/run_config.hpp"
#include "acort/toy_world.hpp"

using namespace acort;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("acort_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

class HelpText : public ::testing::TestWithParam<std::string> {};

TEST_P(HelpText, MatchesGolden) {
  const std::string sub = GetParam();
  const Result r = sub == "acort" ? run({"--help"}) : run({sub, "--help"});
  EXPECT_EQ(r.code, kExitOk);
  const fs::path golden = fs::path(ACORT_GOLDEN_DIR) / (sub + ".help.txt");
  ASSERT_TRUE(fs::exists(golden)) << golden;
  EXPECT_EQ(r.out, read_file(golden));
}

INSTANTIATE_TEST_SUITE_P(Cli, HelpText,
                         ::testing::Values("acort", "gen-data", "build-vocab", "encode", "decode", "train", "caption",
                                           "evaluate", "count", "tables", "layer-dist"),
                         [](const auto& info) {
                           std::string n = info.param;
                           for (char& c : n) {
                             if (c == '-') c = '_';
                           }
                           return n;
                         });

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"tables", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"tables", "--suite", "nope"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data"}).code, kExitUsage);  // --out is required
  EXPECT_EQ(run({"encode", "--vocab", "/nonexistent/vocab.tsv"}).code, kExitUsage);
  const Result r = run({"train", "--epochs", "0", "--out", "x"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const fs::path dir = scratch_dir("runtime");
  std::ofstream(dir / "bad.json") << R"({"model": {"hiddn": 4}})";
  Result r = run({"count", "--config", (dir / "bad.json").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("hiddn"), std::string::npos);

  std::ofstream(dir / "vocab.tsv") << "a\tnot-a-number\n";
  r = run({"encode", "--vocab", (dir / "vocab.tsv").string(), "a"});
  EXPECT_EQ(r.code, kExitRuntime);
  fs::remove_all(dir);
}

TEST(Cli, VersionFlag) {
  const Result r = run({"--version"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "acort 0.1.0\n");
}

TEST(Cli, DataVocabEncodeDecodeRoundTrip) {
  const fs::path dir = scratch_dir("roundtrip");
  ASSERT_EQ(run({"gen-data", "--seed", "3", "--n-train", "50", "--n-val", "5", "--n-test", "5", "--out", dir.string()})
                .code,
            kExitOk);
  const auto train = read_scenes_file((dir / "train.jsonl").string());
  EXPECT_EQ(train.size(), 50u);
  EXPECT_EQ(train, generate_dataset(3, 50, 5, 5).train);

  const std::string vocab = (dir / "vocab.tsv").string();
  ASSERT_EQ(run({"build-vocab", "--data", (dir / "train.jsonl").string(), "--min-frequency", "1", "--out", vocab})
                .code,
            kExitOk);

  const std::vector<std::string> captions = {join_words(train[0].caption), join_words(train[1].caption)};
  for (const char* base : {"8", "0"}) {
    const Result enc = run({"encode", "--vocab", vocab, "--radix-base", base, captions[0], captions[1]});
    ASSERT_EQ(enc.code, kExitOk) << enc.err;
    const auto streams = lines(enc.out);
    ASSERT_EQ(streams.size(), 2u);
    const Result dec = run({"decode", "--vocab", vocab, "--radix-base", base, "--strict", streams[0], streams[1]});
    ASSERT_EQ(dec.code, kExitOk) << dec.err;
    EXPECT_EQ(lines(dec.out), captions) << "base " << base;
  }

  const Result unknown = run({"encode", "--vocab", vocab, "--radix-base", "8", "--strict", "a purple circle"});
  EXPECT_EQ(unknown.code, kExitRuntime);
  const Result lenient = run({"encode", "--vocab", vocab, "--radix-base", "8", "a purple circle"});
  EXPECT_EQ(lenient.code, kExitOk);
  // Digit 7 twice is index 63, outside the vocabulary.
  EXPECT_EQ(run({"decode", "--vocab", vocab, "--radix-base", "8", "--strict", "8 7 7 9"}).code, kExitRuntime);
  EXPECT_EQ(run({"decode", "--vocab", vocab, "--radix-base", "8", "8 7 7 9"}).out, "<UNK>\n");
  fs::remove_all(dir);
}

TEST(Cli, TablesAndCount) {
  const Result t = run({"tables", "--suite", "models"});
  ASSERT_EQ(t.code, kExitOk);
  EXPECT_EQ(t.out, emit_tables(config_suite("models")));
  EXPECT_EQ(run({"tables"}).out, emit_tables(config_suite("all")));

  const fs::path dir = scratch_dir("count");
  std::ofstream(dir / "tiny.json") << R"j({"model": {"hidden_size": 8, "mlp_size": 16, "heads": 2, "feature_dim": 16,
      "encoder_layout": "(0x2,1)", "decoder_layout": "(0x2,1)", "encoder_attention": "share_kv",
      "decoder_attention": "no_share", "radix_base": 4, "vocab_size": 30, "max_len": 8}})j";
  const Result c = run({"count", "--config", (dir / "tiny.json").string()});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  const auto rows = lines(c.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], kTablesHeader);
  EXPECT_EQ(rows[1].substr(0, 5), "tiny,");
  EXPECT_NE(rows[1].find(",3362,"), std::string::npos) << rows[1];

  std::ofstream(dir / "novocab.json") << R"({"model": {"hidden_size": 8}})";
  EXPECT_EQ(run({"count", "--config", (dir / "novocab.json").string()}).code, kExitRuntime);
  fs::remove_all(dir);
}

TEST(Cli, LayerDistanceOfFreshSharedModel) {
  const fs::path dir = scratch_dir("layerdist");
  std::ofstream(dir / "cfg.json") << R"j({"model": {"hidden_size": 8, "mlp_size": 16, "heads": 2,
      "encoder_layout": "(0x2,1)"}})j";
  const Result r = run({"layer-dist", "--config", (dir / "cfg.json").string(), "--stack", "encoder"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].substr(0, 4), "0,0,");
  EXPECT_EQ(rows[1].substr(0, 4), "0,0,");
  EXPECT_NE(rows[2].substr(0, 2), "0,");
  fs::remove_all(dir);
}

TEST(Cli, TrainCaptionEvaluateEndToEnd) {
  const fs::path dir = scratch_dir("train");
  ASSERT_EQ(run({"gen-data", "--seed", "4", "--n-train", "20", "--n-val", "4", "--n-test", "3", "--out",
                 (dir / "data").string()})
                .code,
            kExitOk);
  std::ofstream(dir / "run.json") << R"j({"model": {"hidden_size": 16, "mlp_size": 32, "heads": 2,
      "encoder_layout": "(0x2)", "decoder_layout": "(0x2)"},
      "train": {"batch_size": 10, "min_frequency": 1},
      "data": {"train": "data/train.jsonl", "val": "data/val.jsonl"}})j";
  const std::string model = (dir / "model").string();
  const Result t = run({"train", "--config", (dir / "run.json").string(), "--epochs", "2", "--out", model});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"config.json", "vocab.tsv", "model.ckpt", "metrics.csv"}) {
    EXPECT_TRUE(fs::exists(fs::path(model) / f)) << f;
  }
  EXPECT_EQ(lines(read_file(fs::path(model) / "metrics.csv")).size(), 3u);

  const std::string test = (dir / "data" / "test.jsonl").string();
  const Result cap = run({"caption", "--model", model, "--data", test});
  ASSERT_EQ(cap.code, kExitOk) << cap.err;
  EXPECT_EQ(lines(cap.out).size(), 3u);
  const Result beam = run({"caption", "--model", model, "--data", test, "--beam-size", "3"});
  EXPECT_EQ(beam.code, kExitOk) << beam.err;

  const Result ev = run({"evaluate", "--model", model, "--data", test});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  const auto j = nlohmann::json::parse(ev.out);
  EXPECT_EQ(j.at("scenes").get<int>(), 3);
  for (const char* key : {"exact_match", "bleu1", "bleu4", "unique_frac", "avg_len"}) EXPECT_TRUE(j.contains(key));

  const Result ld = run({"layer-dist", "--model", model, "--stack", "decoder", "--metric", "rms", "--clip"});
  EXPECT_EQ(ld.code, kExitOk) << ld.err;
  EXPECT_EQ(lines(ld.out).size(), 2u);
  fs::remove_all(dir);
}

TEST(Cli, ReferenceConfigFilesCount) {
  const std::map<std::string, double> reference = {
      {"ort-base", 55.4},  {"ort-base-4", 40.7},  {"ort-base-2", 26.0},  {"ort-small", 16.7},    {"ort-xsmall", 4.1},
      {"acort-base", 15.0}, {"acort-base-al", 8.4}, {"acort-small", 4.2}, {"acort-xsmall", 2.6}};
  for (const auto& [name, want] : reference) {
    const fs::path cfg = fs::path(ACORT_CONFIG_DIR) / (name + ".json");
    const Result r = run({"count", "--config", cfg.string()});
    ASSERT_EQ(r.code, kExitOk) << name << ": " << r.err;
    const auto rows = lines(r.out);
    ASSERT_EQ(rows.size(), 2u);
    const std::string row = rows[1];
    EXPECT_EQ(row.substr(0, name.size() + 1), name + ",");
    const std::int64_t total = std::stoll(row.substr(row.find_last_of(',', row.rfind(',') - 1) + 1));
    const double millions = static_cast<double>(total) / 1e6;
    EXPECT_LE(std::abs(millions - want) / want, 0.02) << name << ": " << millions;
  }
  EXPECT_NO_THROW(load_run_config((fs::path(ACORT_CONFIG_DIR) / "toy.json").string()));
}
