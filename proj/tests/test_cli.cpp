#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace fs = std::filesystem;
using namespace ees;

namespace {

const std::string kCli = EES_CLI_PATH;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("ees_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fixture::ProcessResult ees(std::vector<std::string> args, const std::string& stdout_name = "") {
    args.insert(args.begin(), kCli);
    return fixture::run(args, stdout_name.empty() ? "" : path(stdout_name), path("stderr.txt"));
  }

  std::string two_block_stream() {
    const auto frames = fixture::blocks(4, {{0, 5}, {1, 5}});
    save_stream_file(path("trace.embs"), frames);
    return path("trace.embs");
  }

  fs::path dir_;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_F(Cli, SegmentTwoBlockTrace) {
  const auto input = two_block_stream();
  const auto r = ees({"segment", input, "--out", path("h.jsonl"), "--stats", path("stats.json")});
  ASSERT_EQ(r.exit_code, 0) << fixture::slurp(path("stderr.txt"));
  const auto lines = lines_of(fixture::slurp(path("h.jsonl")));
  // one closed level-1 event, then the flushed tail of every level
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0],
            R"({"level":1,"start_frame":0,"end_frame":4,"essential_frame":0,"error_peak":0.0,"provisional":false})");
  EXPECT_EQ(lines[1],
            R"({"level":1,"start_frame":5,"end_frame":9,"essential_frame":5,"error_peak":1.0,"provisional":true})");
  EXPECT_EQ(lines[2],
            R"({"level":2,"start_frame":0,"end_frame":9,"essential_frame":5,"error_peak":1.0,"provisional":true})");
  EXPECT_EQ(lines[3],
            R"({"level":3,"start_frame":0,"end_frame":9,"essential_frame":5,"error_peak":0.0,"provisional":true})");
  const auto stats = nlohmann::json::parse(fixture::slurp(path("stats.json")));
  EXPECT_EQ(stats["counts"], nlohmann::json({2, 1, 1}));
  EXPECT_EQ(stats["compression"], 10.0);
}

TEST_F(Cli, SegmentFromStandardInput) {
  const auto input = two_block_stream();
  // posix_spawn has no stdin redirection helper here; go through a shell
  const auto r = fixture::run({"/bin/sh", "-c", kCli + " segment - < " + input}, path("out.jsonl"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(lines_of(fixture::slurp(path("out.jsonl"))).size(), 4u);
}

TEST_F(Cli, SegmentMissingInputCreatesNoOutput) {
  const auto r = ees({"segment", path("absent.embs"), "--out", path("h.jsonl")});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_FALSE(fs::exists(path("h.jsonl")));
}

TEST_F(Cli, SegmentCorruptInput) {
  std::ofstream(path("bad.embs")) << "not an embedding stream at all";
  EXPECT_EQ(ees({"segment", path("bad.embs"), "--out", path("h.jsonl")}).exit_code, 2);
}

TEST_F(Cli, ConfigErrors) {
  const auto input = two_block_stream();
  EXPECT_EQ(ees({"segment", input, "--threshold", "3"}).exit_code, 3);
  EXPECT_EQ(ees({"segment", input, "--layers", "2", "--threshold", "0.1,0.2,0.3"}).exit_code, 3);
  EXPECT_EQ(ees({"segment", input, "--no-such-flag"}).exit_code, 3);
  EXPECT_EQ(ees({"segment", input, "--config", path("missing.cfg")}).exit_code, 3);
  std::ofstream(path("bad.cfg")) << "colour = blue\n";
  EXPECT_EQ(ees({"segment", input, "--config", path("bad.cfg")}).exit_code, 3);
  EXPECT_EQ(ees({}).exit_code, 3);
}

TEST_F(Cli, ConfigFileEqualsFlags) {
  const auto input = two_block_stream();
  std::ofstream(path("run.cfg")) << "levels = 2\nthresholds = 0.4, 0.4\n";
  ASSERT_EQ(ees({"segment", input, "--config", path("run.cfg"), "--out", path("a.jsonl")}).exit_code, 0);
  ASSERT_EQ(ees({"segment", input, "--layers", "2", "--threshold", "0.4", "--out", path("b.jsonl")}).exit_code, 0);
  EXPECT_EQ(fixture::slurp(path("a.jsonl")), fixture::slurp(path("b.jsonl")));
  EXPECT_EQ(lines_of(fixture::slurp(path("a.jsonl"))).size(), 3u);
}

TEST_F(Cli, ConsolidateNeedsEmbeddings) {
  const auto input = two_block_stream();
  ASSERT_EQ(ees({"segment", input, "--out", path("plain.jsonl")}).exit_code, 0);
  EXPECT_EQ(ees({"consolidate", path("plain.jsonl")}).exit_code, 4);
  EXPECT_NE(fixture::slurp(path("stderr.txt")).find("--emit-embeddings"), std::string::npos);
}

TEST_F(Cli, ConsolidateWritesThreeVectorsPerEvent) {
  const auto input = two_block_stream();
  ASSERT_EQ(ees({"segment", input, "--emit-embeddings", "--out", path("h.jsonl")}).exit_code, 0);
  ASSERT_EQ(ees({"consolidate", path("h.jsonl"), "--out", path("s.json"), "--embs", path("s.embs")}).exit_code, 0)
      << fixture::slurp(path("stderr.txt"));
  const auto j = nlohmann::json::parse(fixture::slurp(path("s.json")));
  EXPECT_EQ(j["metadata"]["essential"], "max_error");
  ASSERT_EQ(j["events"].size(), 1u);
  for (const auto& e : j["events"]) {
    EXPECT_EQ(e["abstract"].size(), 4u);
    EXPECT_EQ(e["coarse"].size(), 4u);
    EXPECT_EQ(e["fine"].size(), 4u);
  }
  EXPECT_EQ(j["events"][0]["span"], nlohmann::json({0, 9}));
  // one level-1 query per block: the earliest of the zero-error tokens, then the E = 1 frame
  EXPECT_EQ(j["events"][0]["essential_frames"], nlohmann::json({0, 5}));

  const auto rows = load_stream_file(path("s.embs"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].vector[0], static_cast<float>(j["events"][0]["abstract"][0].get<double>()));
  EXPECT_EQ(rows[1].vector[1], static_cast<float>(j["events"][0]["coarse"][1].get<double>()));
}

TEST_F(Cli, ConsolidateEssentialStrategies) {
  Rng rng(3);
  save_stream_file(path("r.embs"), fixture::random_stream(rng, 6, 80));
  ASSERT_EQ(ees({"segment", path("r.embs"), "--emit-embeddings", "--out", path("h.jsonl")}).exit_code, 0);
  for (const std::string strategy : {"max_error", "middle", "random"}) {
    ASSERT_EQ(ees({"consolidate", path("h.jsonl"), "--essential", strategy, "--seed", "9", "--out", path("a.json")})
                  .exit_code,
              0);
    ASSERT_EQ(ees({"consolidate", path("h.jsonl"), "--essential", strategy, "--seed", "9", "--out", path("b.json")})
                  .exit_code,
              0);
    EXPECT_EQ(fixture::slurp(path("a.json")), fixture::slurp(path("b.json"))) << strategy;
    EXPECT_EQ(nlohmann::json::parse(fixture::slurp(path("a.json")))["metadata"]["essential"], strategy);
  }
  EXPECT_EQ(ees({"consolidate", path("h.jsonl"), "--essential", "loudest"}).exit_code, 3);
  EXPECT_EQ(ees({"consolidate", path("missing.jsonl")}).exit_code, 2);
  std::ofstream(path("junk.jsonl")) << "{\"level\": 1\n";
  EXPECT_EQ(ees({"consolidate", path("junk.jsonl")}).exit_code, 2);
}

TEST_F(Cli, BenchIsDeterministicAndReportsAllMethods) {
  const std::vector<std::string> args{"bench", "--streams", "5", "--seed", "11"};
  auto a = args, b = args;
  a.insert(a.end(), {"--out", path("a.json"), "--csv", path("a.csv")});
  b.insert(b.end(), {"--out", path("b.json"), "--csv", path("b.csv"), "--jobs", "3"});
  ASSERT_EQ(ees(a).exit_code, 0) << fixture::slurp(path("stderr.txt"));
  ASSERT_EQ(ees(b).exit_code, 0);
  EXPECT_EQ(fixture::slurp(path("a.json")), fixture::slurp(path("b.json")));
  EXPECT_EQ(fixture::slurp(path("a.csv")), fixture::slurp(path("b.csv")));
  const auto j = nlohmann::json::parse(fixture::slurp(path("a.json")));
  ASSERT_EQ(j["streams"].size(), 5u);
  for (const char* method : {"ees", "threshold", "cluster"}) EXPECT_TRUE(j["streams"][0].contains(method));
  EXPECT_EQ(j["metadata"]["sim_threshold"], 0.6);
}

TEST_F(Cli, BenchFromGeneratedManifest) {
  ASSERT_EQ(ees({"generate", "--out-dir", path("corpus"), "--streams", "3", "--frames", "60", "--seed", "4"}).exit_code,
            0);
  ASSERT_EQ(ees({"bench", "--manifest", path("corpus/manifest.json"), "--out", path("m.json")}).exit_code, 0);
  ASSERT_EQ(ees({"bench", "--streams", "3", "--frames", "60", "--seed", "4", "--out", path("g.json")}).exit_code, 0);
  // the files hold float32 rows, so similarities agree only to float precision
  const auto m = nlohmann::json::parse(fixture::slurp(path("m.json")));
  const auto g = nlohmann::json::parse(fixture::slurp(path("g.json")));
  ASSERT_EQ(m["streams"].size(), g["streams"].size());
  for (std::size_t i = 0; i < m["streams"].size(); ++i)
    for (const char* method : {"ees", "threshold", "cluster"}) {
      const auto& a = m["streams"][i][method];
      const auto& b = g["streams"][i][method];
      EXPECT_EQ(a["segments"], b["segments"]);
      EXPECT_EQ(a["f1"], b["f1"]);
      EXPECT_NEAR(a["gap"].get<double>(), b["gap"].get<double>(), 1e-6);
    }
}

TEST_F(Cli, BenchErrors) {
  EXPECT_EQ(ees({"bench", "--corpus", "noisy"}).exit_code, 3);
  EXPECT_EQ(ees({"bench", "--streams", "2", "--dim", "2", "--frames", "200", "--max-cos", "-0.9"}).exit_code, 3);
  EXPECT_EQ(ees({"bench", "--streams", "1", "--sim-threshold", "2"}).exit_code, 3);
  EXPECT_EQ(ees({"bench", "--manifest", path("none.json")}).exit_code, 2);
}

TEST_F(Cli, TrainDeterministicAndLossDoesNotRise) {
  ASSERT_EQ(ees({"generate", "--out-dir", path("corpus"), "--streams", "4", "--frames", "80", "--dim", "16"}).exit_code,
            0);
  const std::vector<std::string> base{"train", "--manifest", path("corpus/manifest.json"), "--epochs", "4"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.eesp"), "--loss-csv", path("loss.csv")});
  b.insert(b.end(), {"--out", path("b.eesp")});
  ASSERT_EQ(ees(a).exit_code, 0) << fixture::slurp(path("stderr.txt"));
  ASSERT_EQ(ees(b).exit_code, 0);
  EXPECT_EQ(fixture::slurp(path("a.eesp")), fixture::slurp(path("b.eesp")));

  const auto rows = lines_of(fixture::slurp(path("loss.csv")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "epoch,mean_loss");
  const double first = std::stod(rows[1].substr(rows[1].find(',') + 1));
  const double last = std::stod(rows[4].substr(rows[4].find(',') + 1));
  EXPECT_LE(last, first);

  // the trained checkpoint drives segmentation
  save_stream_file(path("s.embs"), load_stream_file(path("corpus/stream_000.embs")));
  EXPECT_EQ(ees({"segment", path("s.embs"), "--checkpoint", path("a.eesp"), "--out", path("h.jsonl")}).exit_code, 0);
  EXPECT_EQ(ees({"segment", path("s.embs"), "--checkpoint", path("a.eesp"), "--layers", "2"}).exit_code, 3);
}

TEST_F(Cli, TrainZeroEpochsKeepsInitialWeights) {
  ASSERT_EQ(ees({"generate", "--out-dir", path("corpus"), "--streams", "1", "--frames", "30", "--dim", "8"}).exit_code,
            0);
  const std::string manifest = path("corpus/manifest.json");
  ASSERT_EQ(ees({"train", "--manifest", manifest, "--epochs", "0", "--seed", "5", "--out", path("z.eesp")}).exit_code, 0);
  std::ifstream in(path("z.eesp"), std::ios::binary);
  const Checkpoint ck = read_checkpoint(in);
  PredictorConfig pc = ck.predictor.config;
  const PredictorState init = PredictorState::initialize(pc);
  std::ostringstream x, y;
  write_checkpoint(x, Checkpoint{init, std::nullopt});
  write_checkpoint(y, ck);
  EXPECT_EQ(x.str(), y.str());
  EXPECT_EQ(pc.kind, PredictorKind::linear_ar);
}

TEST_F(Cli, TrainErrors) {
  std::ofstream(path("empty.json")) << R"({"dim": 8, "streams": []})";
  EXPECT_EQ(ees({"train", "--manifest", path("empty.json"), "--out", path("x.eesp")}).exit_code, 3);
  EXPECT_EQ(ees({"train", "--out", path("x.eesp")}).exit_code, 3);
  EXPECT_EQ(ees({"train", "--manifest", path("empty.json")}).exit_code, 3);
}

TEST_F(Cli, GenerateWritesManifestAndTruth) {
  ASSERT_EQ(ees({"generate", "--out-dir", path("c"), "--corpus", "nested", "--streams", "2", "--seed", "3"}).exit_code,
            0);
  const Manifest m = read_manifest(path("c/manifest.json"));
  ASSERT_EQ(m.streams.size(), 2u);
  EXPECT_EQ(m.dim, 64u);
  EXPECT_EQ(m.corpus["kind"], "nested");
  CorpusParams p = CorpusParams::preset(CorpusKind::nested);
  p.streams = 2;
  p.seed = 3;
  for (std::uint32_t i = 0; i < 2; ++i) {
    const SynthStream s = generate_stream(corpus_stream_spec(p, i));
    const auto frames = load_stream_file(m.streams[i].stream);
    ASSERT_EQ(frames.size(), s.frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t)
      EXPECT_EQ(frames[t].vector, s.frames[t].vector.cast<float>().cast<double>());
    const GroundTruth truth = truth_from_json(read_json_file(*m.streams[i].truth));
    EXPECT_EQ(truth.boundary_frames, s.truth.boundary_frames);
    EXPECT_EQ(truth.group_boundaries, s.truth.group_boundaries);
  }
}
