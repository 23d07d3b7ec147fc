#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "brm_cli.hpp"

namespace brm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "brm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("brm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // A small slice of the sample corpus keeps the runs short.
    auto all = parse_conllu(std::string_view(slurp(std::string(BRM_DATA_DIR) + "/train.conllu")));
    all.resize(12);
    std::ofstream(path("small.conllu")) << to_conllu(all);
    setenv("BRM_LOG", "quiet", 1);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> tiny(std::vector<std::string> args) const {
    for (const char* a : {"--hidden", "64", "--embed-dim", "12", "--word-dim", "16", "--dropout", "0"})
      args.push_back(a);
    return args;
  }

  fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"dance"}).code, 2);
  EXPECT_EQ(run({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run({"train", "--epochs", "many"}).code, 2);
}

TEST_F(Cli, TrainRejectsBadInvocations) {
  Result missing = run({"train", "--train", path("absent.conllu"), "--out", path("m.brm")});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("does not exist"), std::string::npos);
  EXPECT_EQ(run({"train", "--out", path("m.brm")}).code, 2);
  EXPECT_EQ(run({"train", "--train", path("small.conllu"), "--out", path("m.brm"), "--epochs", "0"}).code, 2);
  Result conflict = run({"train", "--train", path("small.conllu"), "--out", path("m.brm"), "--regime", "sup", "--k", "1"});
  EXPECT_EQ(conflict.code, 2);
  EXPECT_NE(conflict.err.find("rl-backtrack"), std::string::npos);
  EXPECT_EQ(run({"train", "--train", path("small.conllu"), "--out", path("m.brm"), "--machine", "chunker"}).code, 2);
  EXPECT_FALSE(fs::exists(path("m.brm")));
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  std::ofstream(path("broken.conllu")) << "1\tx\tx\tX\t_\t_\tseven\t_\t_\t_\n";
  Result r = run({"train", "--train", path("broken.conllu"), "--out", path("m.brm"), "--epochs", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);
  std::ofstream(path("garbage.brm")) << "hello\n";
  EXPECT_EQ(run({"decode", "--model", path("garbage.brm"), "--input", path("small.conllu")}).code, 1);
}

TEST_F(Cli, OverfitPipeline) {
  ASSERT_EQ(run(tiny({"train", "--train", path("small.conllu"), "--dev", path("small.conllu"), "--out", path("m.brm"),
                      "--machine", "tagparser", "--regime", "sup", "--epochs", "60", "--alpha", "0.05"}))
                .code,
            0);
  ASSERT_EQ(run({"decode", "--model", path("m.brm"), "--input", path("small.conllu"), "--output", path("pred.conllu"),
                 "--trace", path("trace.txt")})
                .code,
            0);
  // The output is valid CoNLL-U aligned with the input.
  auto pred = parse_conllu(std::string_view(slurp(path("pred.conllu"))));
  EXPECT_EQ(pred.size(), 12u);
  Result ev = run({"eval", "--gold", path("small.conllu"), "--pred", path("pred.conllu"), "--json"});
  ASSERT_EQ(ev.code, 0);
  auto j = nlohmann::json::parse(ev.out);
  EXPECT_EQ(j["pred"]["uas"], 1.0);
  EXPECT_EQ(j["pred"]["upos"], 1.0);
  EXPECT_NE(slurp(path("trace.txt")).find("# sentence 12"), std::string::npos);

  // Every artifact points back at the manifest.
  auto manifest = nlohmann::json::parse(slurp(path("m.brm.manifest.json")));
  EXPECT_EQ(manifest["config"]["regime"], "sup");
  EXPECT_EQ(manifest["corpora"]["train"]["sentences"], 12);
  std::istringstream metrics(slurp(path("m.brm.metrics.jsonl")));
  std::string line;
  ASSERT_TRUE(std::getline(metrics, line));
  EXPECT_EQ(nlohmann::json::parse(line)["manifest"], path("m.brm.manifest.json"));
  EXPECT_EQ(load_model(path("m.brm")).manifest["corpora"], manifest["corpora"]);
  EXPECT_TRUE(fs::exists(path("pred.conllu.manifest.json")));
}

TEST_F(Cli, BacktrackingModelHonorsK) {
  ASSERT_EQ(run(tiny({"train", "--train", path("small.conllu"), "--out", path("bt.brm"), "--machine", "tagger",
                      "--regime", "rl-backtrack", "--k", "1", "--epochs", "2"}))
                .code,
            0);
  LoadedModel loaded = load_model(path("bt.brm"));
  EXPECT_EQ(loaded.model.machine.k, 1);
  EXPECT_TRUE(loaded.model.machine.backtracking);

  ASSERT_EQ(run({"decode", "--model", path("bt.brm"), "--input", path("small.conllu"), "--output", path("p.conllu"),
                 "--k", "0", "--trace-json", path("t0.jsonl")})
                .code,
            0);
  std::istringstream traces(slurp(path("t0.jsonl")));
  std::string line;
  int count = 0;
  while (std::getline(traces, line)) {
    ++count;
    for (const auto& a : nlohmann::json::parse(line)["actions"]) EXPECT_NE(a["action"], "BACK");
  }
  EXPECT_EQ(count, 12);
  Result st = run({"stats", "--trace-json", path("t0.jsonl"), "--json"});
  ASSERT_EQ(st.code, 0);
  auto j = nlohmann::json::parse(st.out);
  EXPECT_EQ(j["n_backs"], 0);
  EXPECT_EQ(j["defined"], false);
  EXPECT_EQ(j["b_prec"], 0.0);
  EXPECT_EQ(j["ee"], 0.0);

  EXPECT_EQ(run({"decode", "--model", path("bt.brm"), "--input", path("small.conllu"), "--k", "3"}).code, 0);
  EXPECT_EQ(run({"trace", "--model", path("bt.brm"), "--input", path("small.conllu"), "--sentence", "2"}).code, 0);
  EXPECT_EQ(run({"trace", "--model", path("bt.brm"), "--input", path("small.conllu"), "--sentence", "99"}).code, 2);
}

TEST_F(Cli, ModelMachineMismatch) {
  ASSERT_EQ(run(tiny({"train", "--train", path("small.conllu"), "--out", path("tagger.brm"), "--machine", "tagger",
                      "--regime", "rl", "--epochs", "1"}))
                .code,
            0);
  Result r = run({"decode", "--model", path("tagger.brm"), "--input", path("small.conllu"), "--machine", "parser"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("tagger"), std::string::npos);
  // A model trained without BACK cannot be given a BACK budget.
  EXPECT_EQ(run({"decode", "--model", path("tagger.brm"), "--input", path("small.conllu"), "--k", "1"}).code, 2);
}

TEST_F(Cli, EvalIdenticalFilesAndSelfComparison) {
  Result r = run({"eval", "--gold", path("small.conllu"), "--pred", path("small.conllu"), "--compare",
                  path("small.conllu"), "--resamples", "500", "--json"});
  ASSERT_EQ(r.code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["pred"]["upos"], 1.0);
  EXPECT_EQ(j["pred"]["uas"], 1.0);
  EXPECT_EQ(j["bootstrap"]["significant"], false);
  Result text = run({"eval", "--gold", path("small.conllu"), "--pred", path("small.conllu")});
  EXPECT_NE(text.out.find("100.00"), std::string::npos);

  auto other = parse_conllu(std::string_view(slurp(path("small.conllu"))));
  other.pop_back();
  std::ofstream(path("short.conllu")) << to_conllu(other);
  EXPECT_EQ(run({"eval", "--gold", path("small.conllu"), "--pred", path("short.conllu")}).code, 1);
  EXPECT_EQ(run({"eval", "--gold", path("small.conllu"), "--pred", path("small.conllu"), "--metric", "las"}).code, 2);
}

TEST_F(Cli, StatsNeedsAnnotatedTraces) {
  std::ofstream(path("bare.jsonl"))
      << R"({"machine":{"task":"tagger","backtracking":true,"k":1,"tag_count":2},"annotated":false,)"
      << R"js("tags":["_","A"],"input_tags":[],"n":1,"actions":[{"action":"NOBACK"},{"action":"TAG(A)"}]})js" << '\n';
  Result r = run({"stats", "--trace-json", path("bare.jsonl")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("annotation"), std::string::npos);
}

TEST_F(Cli, ManifestReproducesModel) {
  ASSERT_EQ(run({"train", "--train", path("small.conllu"), "--out", path("a.brm"), "--machine", "tagparser",
                 "--regime", "rl-backtrack", "--epochs", "2", "--seed", "5", "--dropout", "0.2", "--hidden", "32",
                 "--embed-dim", "8", "--word-dim", "8"})
                .code,
            0);
  ASSERT_EQ(run({"train", "--config", path("a.brm.manifest.json"), "--out", path("b.brm")}).code, 0);
  EXPECT_EQ(slurp(path("a.brm")), slurp(path("b.brm")));

  // A corpus that no longer matches the manifest is refused.
  auto changed = parse_conllu(std::string_view(slurp(path("small.conllu"))));
  changed.pop_back();
  std::ofstream(path("changed.conllu")) << to_conllu(changed);
  EXPECT_EQ(run({"train", "--config", path("a.brm.manifest.json"), "--train", path("changed.conllu"), "--out",
                 path("c.brm")})
                .code,
            1);
}

TEST_F(Cli, ConfigFileWithOverrides) {
  std::ofstream(path("cfg.json")) << R"({"task": "parser", "regime": "rl", "epochs": 1, "hidden": 32,
                                        "embed_dim": 8, "word_dim": 8})";
  ASSERT_EQ(run({"train", "--config", path("cfg.json"), "--train", path("small.conllu"), "--out", path("p.brm"),
                 "--seed", "3"})
                .code,
            0);
  LoadedModel m = load_model(path("p.brm"));
  EXPECT_EQ(m.model.machine.task, Task::Parser);
  EXPECT_EQ(m.model.config.seed, 3u);
  EXPECT_EQ(m.model.config.hidden, 32);
  std::ofstream(path("bad.json")) << R"({"epochz": 1})";
  EXPECT_EQ(run({"train", "--config", path("bad.json"), "--train", path("small.conllu"), "--out", path("q.brm")}).code,
            2);
}

TEST_F(Cli, SplitWritesFolds) {
  Result r = run({"split", "--corpus", std::string(BRM_DATA_DIR) + "/train.conllu", "--out-dir", path("folds"),
                  "--folds", "10", "--seed", "2", "--write-conllu"});
  ASSERT_EQ(r.code, 0);
  for (int f = 0; f < 10; ++f) {
    auto j = nlohmann::json::parse(slurp(path("folds/fold" + std::to_string(f) + ".json")));
    EXPECT_EQ(j["train"].size() + j["dev"].size() + j["test"].size(), 80u);
    EXPECT_TRUE(fs::exists(path("folds/fold" + std::to_string(f) + ".test.conllu")));
  }
  EXPECT_TRUE(fs::exists(path("folds/manifest.json")));
  EXPECT_EQ(run({"split", "--corpus", path("small.conllu"), "--out-dir", path("f2"), "--folds", "1"}).code, 2);
}

}  // namespace
}  // namespace brm
