#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lhdff/cli/commands.hpp"
#include "lhdff/cli/run_config.hpp"
#include "lhdff/error.hpp"

using namespace lhdff;
using namespace lhdff::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::vector<std::string> kTiny{"--set", "width_scale=0.125", "--set", "batch_size=4", "--set",
                                     "warmup_epochs=1", "--set", "dropout=0", "--set", "val_fraction=0"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

class CliCorpus : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "lhdff_cli_test";
    fs::remove_all(root);
    ASSERT_EQ(invoke({"gen", "--clips", "6", "--captions-per-clip", "2", "--seed", "7", "--out",
                      (root / "corpus").string()})
                  .code,
              kExitOk);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }
  static std::string manifest() { return (root / "corpus" / "manifest.csv").string(); }
};
fs::path CliCorpus::root;

}  // namespace

TEST(RunConfig, SerializedFormRoundTrips) {
  RunConfig cfg;
  cfg.set("variant", "fusion-block2");
  cfg.set("base_lr", "0.30000000000000004");
  cfg.set("seed", "18446744073709551615");
  cfg.set("mask_mode", "both");
  cfg.set("corpus", "some dir/manifest.csv");
  cfg.set("augment", "false");
  const auto back = RunConfig::parse(cfg.serialize());
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(back.train.base_lr, 0.1 + 0.2);
  EXPECT_EQ(back.train.seed, 18446744073709551615ull);
  EXPECT_EQ(RunConfig::parse(RunConfig{}.serialize()), RunConfig{});
}

TEST(RunConfig, EveryKeyHasADefaultAndRoundTrips) {
  const RunConfig defaults;
  for (const auto& key : RunConfig::keys()) {
    RunConfig c;
    EXPECT_NO_THROW(c.set(key, defaults.get(key))) << key;
    EXPECT_EQ(c.get(key), defaults.get(key)) << key;
  }
}

TEST(RunConfig, UnknownKeysAndBadValuesAreRejected) {
  RunConfig cfg;
  EXPECT_THROW(cfg.set("warp_factor", "9"), ConfigError);
  EXPECT_THROW(cfg.set("epochs", "ten"), ConfigError);
  EXPECT_THROW(cfg.set("epochs", "-3"), ConfigError);
  EXPECT_THROW(cfg.set("variant", "best"), ConfigError);
  EXPECT_THROW(RunConfig::parse("epochs 3\n"), ParseError);
  const auto c = RunConfig::parse("# comment\nepochs = 3\n\nepochs = 4  \n");
  EXPECT_EQ(c.train.epochs, 4u);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"gen", "--clips", "0", "--out", "/tmp/x"}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  const auto r = invoke({"train", "--out", "/tmp/lhdff_no_corpus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("corpus"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--corpus", "/nonexistent/manifest.csv", "--out", "/tmp/x"}).code, kExitUsage);
  EXPECT_EQ(invoke({"caption", "--checkpoint", "/nonexistent.bin", "--input", "/nonexistent"}).code, kExitUsage);
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
}

TEST_F(CliCorpus, GenIsByteDeterministic) {
  ASSERT_EQ(invoke({"gen", "--clips", "6", "--captions-per-clip", "2", "--seed", "7", "--out",
                    (root / "again").string()})
                .code,
            kExitOk);
  EXPECT_EQ(slurp(root / "again" / "manifest.csv"), slurp(manifest()));
  for (const auto& e : fs::directory_iterator(root / "corpus" / "wav"))
    EXPECT_EQ(slurp(e.path()), slurp(root / "again" / "wav" / e.path().filename()));
}

TEST_F(CliCorpus, EvalSelfEvaluationAndFixedKeys) {
  const auto cands = root / "self.jsonl";
  // Use each clip's first reference as its candidate.
  {
    std::istringstream in(slurp(manifest()));
    std::string line;
    std::getline(in, line);
    std::ofstream out(cands);
    while (std::getline(in, line)) {
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      out << nlohmann::json{{"clip_id", line.substr(0, c1)}, {"caption", line.substr(c1 + 1, c2 - c1 - 1)}}.dump()
          << "\n";
    }
  }
  const auto r = invoke({"eval", "--candidates", cands.string(), "--references", manifest()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::ordered_json::parse(r.out);
  EXPECT_NEAR(j["bleu1"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(j["bleu4"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(j["rougeL"].get<double>(), 1.0, 1e-12);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"bleu1", "bleu2", "bleu3", "bleu4", "rougeL", "cider"}));

  std::ofstream(root / "empty.jsonl").close();
  EXPECT_EQ(invoke({"eval", "--candidates", (root / "empty.jsonl").string(), "--references", manifest()}).code,
            kExitUsage);
}

TEST_F(CliCorpus, TrainCaptionRoundTrip) {
  const auto out_dir = root / "run";
  const auto t = invoke(with_tiny({"train", "--corpus", manifest(), "--epochs", "2", "--seed", "3", "--out",
                                   out_dir.string(), "--variant", "baseline-high"}));
  ASSERT_EQ(t.code, kExitOk) << t.err;
  for (const char* f : {"epoch_000.bin", "epoch_001.bin", "final.bin", "best.bin", "metrics.jsonl", "run.cfg",
                        "vocab.txt"})
    EXPECT_TRUE(fs::exists(out_dir / f)) << f;

  const auto ckpt = (out_dir / "final.bin").string();
  const auto wav_dir = (root / "corpus" / "wav").string();
  const auto greedy = invoke({"caption", "--checkpoint", ckpt, "--input", wav_dir});
  ASSERT_EQ(greedy.code, kExitOk) << greedy.err;
  const auto beam1 = invoke({"caption", "--checkpoint", ckpt, "--input", wav_dir, "--beam", "1"});
  EXPECT_EQ(beam1.out, greedy.out);
  std::istringstream lines(greedy.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("clip_id") && j.contains("caption") && j.contains("score"));
    ++n;
  }
  EXPECT_EQ(n, 6u);

  const auto mismatch = invoke({"caption", "--checkpoint", ckpt, "--input", wav_dir, "--variant", "lhdff"});
  EXPECT_EQ(mismatch.code, kExitUsage);
  EXPECT_NE(mismatch.err.find("baseline-high"), std::string::npos);
  EXPECT_NE(mismatch.err.find("lhdff"), std::string::npos);

  const auto resumed = invoke(with_tiny({"train", "--corpus", manifest(), "--epochs", "3", "--seed", "3", "--out",
                                         (root / "resumed").string(), "--variant", "baseline-high", "--resume",
                                         (out_dir / "epoch_001.bin").string()}));
  EXPECT_EQ(resumed.code, kExitOk) << resumed.err;
}

TEST_F(CliCorpus, DivergenceExitsThree) {
  const auto r = invoke(with_tiny({"train", "--corpus", manifest(), "--epochs", "2", "--out",
                                   (root / "diverge").string(), "--set", "base_lr=1e300", "--set",
                                   "grad_clip_norm=1e300"}));
  EXPECT_EQ(r.code, kExitDiverged) << r.err;
}

TEST_F(CliCorpus, AblateKeepsRowOrderAndIsDeterministic) {
  auto args = [&](const std::string& out) {
    return with_tiny({"ablate", "--corpus", manifest(), "--variants", "baseline-high,lhdff", "--seeds", "1",
                      "--epochs", "2", "--out", (root / out).string()});
  };
  const auto a = invoke(args("abl_a"));
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const auto b = invoke(args("abl_b"));
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(slurp(root / "abl_a" / "ablation.txt"), slurp(root / "abl_b" / "ablation.txt"));
  const auto j = nlohmann::json::parse(slurp(root / "abl_a" / "ablation.json"));
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][0]["variant"], "baseline-high");
  EXPECT_EQ(j["rows"][1]["variant"], "lhdff");
  EXPECT_EQ(j["rows"][0]["status"], "ok");
  const auto table = slurp(root / "abl_a" / "ablation.txt");
  EXPECT_LT(table.find("baseline-high"), table.find("lhdff "));
}
