// ees: segment, consolidate, bench, train, generate.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ees/ees.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace ees;

namespace {

enum Exit : int { kOk = 0, kOther = 1, kFormat = 2, kConfig = 3, kMissingEmbeddings = 4 };

// Records only the flags the user actually passed, keyed by config name.
class FlagLayer {
 public:
  void option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[key];
    opts_.emplace_back(key, app->add_option(flag, slot, help));
  }

  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    opts_.emplace_back(key, app->add_flag(flag, help));
    switches_.insert(key);
  }

  KeyValues collect() const {
    KeyValues kv;
    for (const auto& [key, opt] : opts_) {
      if (opt->count() == 0) continue;
      kv[key] = switches_.count(key) ? "true" : values_.at(key);
    }
    return kv;
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> switches_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

void add_engine_flags(CLI::App* app, FlagLayer& f) {
  f.option(app, "--layers", "levels", "Number of hierarchy levels L");
  f.option(app, "--threshold", "thresholds", "Boundary threshold: one value or a comma list per level");
  f.option(app, "--window-cap", "window_cap", "Maximum open-context length per level");
  f.option(app, "--predictor", "predictor", "mean_pool_identity | linear_ar | mlp");
  f.option(app, "--hidden", "hidden", "Hidden width of the mlp predictor");
  f.option(app, "--learning-rate", "learning_rate", "Online learning rate");
  f.flag(app, "--online-learning", "online_learning", "Update the predictor while segmenting");
  f.option(app, "--checkpoint", "checkpoint", "EESP predictor checkpoint");
  f.option(app, "--seed", "seed", "Random seed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig resolve(const std::string& config_path, const FlagLayer& flags, KeyValues file = {}) {
  if (!config_path.empty())
    for (auto& [k, v] : parse_config_text(read_text_file(config_path))) file[k] = v;
  return resolve_config(file, flags.collect(), environment_overrides(environ));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

// Fills the engine's predictor from the checkpoint named in the config, if any.
std::optional<PredictorState> predictor_for(RunConfig& cfg, std::uint32_t dim) {
  cfg.ees.sync_predictor(dim);
  if (cfg.checkpoint.empty()) return std::nullopt;
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  const auto& pc = ckpt.predictor.config;
  if (pc.dim != dim) throw ConfigError("checkpoint dim " + std::to_string(pc.dim) + " differs from stream dim");
  if (pc.levels != cfg.ees.levels) throw ConfigError("checkpoint levels differ from --layers");
  if (pc.window_cap != cfg.ees.window_cap) throw ConfigError("checkpoint window_cap differs from --window-cap");
  cfg.ees.predictor = pc;
  if (ckpt.projections && !cfg.attention.projections) cfg.attention.projections = ckpt.projections;
  return std::move(ckpt.predictor);
}

std::ostream& open_output(const std::string& path, std::unique_ptr<std::ofstream>& holder,
                          std::ios::openmode mode = std::ios::out) {
  if (path.empty() || path == "-") return std::cout;
  holder = std::make_unique<std::ofstream>(path, mode | std::ios::trunc);
  if (!*holder) throw Error("cannot create " + path);
  return *holder;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path);
  out << text;
}

// ---------------------------------------------------------------- segment

struct SegmentArgs {
  std::string input = "-";
  std::string config;
  std::string stats;
  bool allow_non_finite = false;
  FlagLayer flags;
};

int cmd_segment(SegmentArgs& a) {
  RunConfig cfg = resolve(a.config, a.flags);

  std::ifstream file;
  std::istream* in = &std::cin;
  if (a.input != "-") {
    if (!fs::is_regular_file(a.input)) throw FormatError("cannot open input " + a.input);
    file.open(a.input, std::ios::binary);
    if (!file) throw FormatError("cannot open input " + a.input);
    in = &file;
  }
  EmbsReader reader(*in, ReadOptions{a.allow_non_finite});

  auto predictor = predictor_for(cfg, reader.header().dim);
  cfg.ees.retain_tokens = cfg.emit_embeddings;
  cfg.ees.retain_hierarchy = false;
  Engine engine = predictor ? Engine(cfg.ees, std::move(*predictor)) : Engine(cfg.ees);

  std::unique_ptr<std::ofstream> holder;
  std::ostream& out = open_output(cfg.out, holder);
  StatsAccumulator stats(cfg.ees.levels);
  auto emit = [&](const std::vector<EventSegment>& segs) {
    if (segs.empty()) return;
    for (const auto& s : segs) {
      out << segment_jsonl(s, cfg.emit_embeddings);
      stats.add(s);
    }
    out.flush();
  };

  while (auto frame = reader.next()) {
    try {
      emit(engine.ingest(*frame));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("frame ") + std::to_string(frame->index) + ": " + e.what());
    } catch (const DegenerateInputError& e) {
      throw FormatError(std::string("frame ") + std::to_string(frame->index) + ": " + e.what());
    }
  }
  emit(engine.flush_segments());

  const std::string stats_text = stats_json(stats.stats()).dump() + "\n";
  if (a.stats.empty())
    std::cerr << stats_text;
  else
    write_file(a.stats, stats_text);
  return kOk;
}

// ---------------------------------------------------------------- consolidate

struct ConsolidateArgs {
  std::string hierarchy;
  std::string config;
  std::string embs;
  FlagLayer flags;
};

int cmd_consolidate(ConsolidateArgs& a) {
  RunConfig cfg = resolve(a.config, a.flags);
  std::ifstream in(a.hierarchy);
  if (!in) throw FormatError("cannot open hierarchy " + a.hierarchy);
  EventHierarchy h;
  try {
    h = read_hierarchy_jsonl(in);
  } catch (const MissingEmbeddingsError&) {
    throw MissingEmbeddingsError(
        "hierarchy " + a.hierarchy +
        " carries no embeddings; re-run `ees segment --emit-embeddings` to produce a consolidatable hierarchy");
  }
  if (!cfg.checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    if (ckpt.projections) cfg.attention.projections = std::move(ckpt.projections);
  }

  ConsolidationOptions opt{cfg.attention, cfg.essential, cfg.seed};
  ConsolidationResult result;
  try {
    result = consolidate_all(h, opt);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed hierarchy: ") + e.what());
  }

  ordered_json j;
  j["metadata"] = {{"levels", h.depth()},
                   {"essential", std::string(to_string(cfg.essential))},
                   {"seed", cfg.seed},
                   {"projections", cfg.attention.projections ? "learned" : "identity"}};
  ordered_json events = ordered_json::array();
  for (std::size_t i = 0; i < result.summaries.size(); ++i) {
    const auto& s = result.summaries[i];
    ordered_json e;
    e["span"] = {s.event_span.first, s.event_span.last};
    e["abstract"] = vector_json(s.abstract);
    e["coarse"] = vector_json(s.coarse);
    e["fine"] = vector_json(s.fine);
    e["essential_frames"] = result.provenance[i].essential_frames;
    e["essential_indices"] = result.provenance[i].essential_indices;
    events.push_back(std::move(e));
  }
  j["events"] = std::move(events);

  std::unique_ptr<std::ofstream> holder;
  open_output(cfg.out, holder) << j.dump() << '\n';

  if (!a.embs.empty()) {
    std::uint32_t dim = 0;
    if (!result.summaries.empty()) dim = static_cast<std::uint32_t>(result.summaries.front().abstract.size());
    else if (!h.levels.empty() && !h.levels.front().empty()) dim = static_cast<std::uint32_t>(h.levels.front().front().latent.size());
    if (dim == 0) throw FormatError("cannot write EMBS output: hierarchy is empty");
    std::ofstream eo(a.embs, std::ios::binary | std::ios::trunc);
    if (!eo) throw Error("cannot create " + a.embs);
    EmbsWriter w(eo, StreamHeader{dim, 3 * result.summaries.size(), std::nullopt});
    for (const auto& s : result.summaries) {
      w.write_row(s.abstract);
      w.write_row(s.coarse);
      w.write_row(s.fine);
    }
    w.finish();
  }
  return kOk;
}

// ---------------------------------------------------------------- corpus flags

struct CorpusFlags {
  std::string corpus = "clean";
  std::optional<std::uint32_t> streams, frames, dim;
  std::optional<double> noise, drift, max_cos;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "Synthetic corpus preset: clean | drift | nested")
        ->capture_default_str();
    app->add_option("--streams", streams, "Number of streams");
    app->add_option("--frames", frames, "Frames per stream");
    app->add_option("--dim", dim, "Embedding dimension");
    app->add_option("--noise", noise, "Per-frame gaussian noise sigma");
    app->add_option("--drift", drift, "Per-frame centroid drift");
    app->add_option("--max-cos", max_cos, "Maximum cosine between drawn centroids");
  }

  CorpusParams params(std::uint64_t seed) const {
    CorpusParams p = CorpusParams::preset(parse_corpus_kind(corpus));
    if (streams) p.streams = *streams;
    if (frames) p.frames = *frames;
    if (dim) p.dim = *dim;
    if (noise) p.noise_sigma = *noise;
    if (drift) p.drift_rate = *drift;
    if (max_cos) p.max_centroid_cosine = *max_cos;
    p.seed = seed;
    if (p.dim < 1) throw ConfigError("--dim must be >= 1");
    if (p.noise_sigma < 0 || p.drift_rate < 0) throw ConfigError("--noise and --drift must be >= 0");
    return p;
  }
};

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string config;
  std::string manifest;
  std::string csv;
  std::string timing;
  std::string similarity_csv;
  std::optional<double> sim_threshold;
  std::optional<std::size_t> clusters;
  std::uint64_t tolerance = 1;
  unsigned jobs = 1;
  CorpusFlags corpus;
  FlagLayer flags;
};

struct BenchItem {
  std::string id;
  std::vector<FrameEmbedding> frames;
  GroundTruth truth;
};

std::string similarity_matrix_csv(const std::vector<FrameEmbedding>& frames) {
  std::ostringstream out;
  out.precision(6);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = 0; j < frames.size(); ++j) {
      if (j) out << ',';
      out << cosine(frames[i].vector, frames[j].vector);
    }
    out << '\n';
  }
  return out.str();
}

int cmd_bench(BenchArgs& a) {
  RunConfig cfg = resolve(a.config, a.flags);

  std::vector<BenchItem> items;
  ordered_json corpus_meta;
  if (!a.manifest.empty()) {
    const Manifest m = read_manifest(a.manifest);
    if (m.streams.empty()) throw ConfigError("manifest lists no streams");
    for (const auto& e : m.streams) {
      if (!e.truth) throw FormatError("manifest entry " + e.id + " has no ground truth");
      items.push_back({e.id, load_stream_file(e.stream), truth_from_json(read_json_file(*e.truth))});
      if (items.back().frames.empty()) throw FormatError("stream " + e.id + " is empty");
    }
    corpus_meta = {{"manifest", a.manifest}};
  } else {
    const CorpusParams p = a.corpus.params(cfg.seed);
    if (p.streams < 1) throw ConfigError("--streams must be >= 1");
    corpus_meta = corpus_params_json(p);
    for (std::uint32_t i = 0; i < p.streams; ++i) {
      SynthStream s = generate_stream(corpus_stream_spec(p, i));
      items.push_back({stream_id(i), std::move(s.frames), std::move(s.truth)});
    }
  }

  const auto dim = static_cast<std::uint32_t>(items.front().frames.front().vector.size());
  for (const auto& it : items)
    if (it.frames.front().vector.size() != dim) throw FormatError("corpus streams differ in dim");
  auto predictor = predictor_for(cfg, dim);

  BenchOptions opt;
  opt.ees = cfg.ees;
  opt.sim_threshold = a.sim_threshold;
  opt.clusters = a.clusters;
  opt.tolerance = a.tolerance;
  opt.seed = cfg.seed;
  if (opt.sim_threshold && !(*opt.sim_threshold >= -1.0 && *opt.sim_threshold <= 1.0))
    throw ConfigError("--sim-threshold must lie in [-1, 1]");
  if (opt.clusters && *opt.clusters < 1) throw ConfigError("--clusters must be >= 1");
  if (!predictor) predictor = PredictorState::initialize(opt.ees.predictor);

  std::vector<StreamReport> reports(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++)
      reports[i] = evaluate_stream(items[i].id, items[i].frames, items[i].truth, opt, &*predictor);
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(a.jobs, static_cast<unsigned>(items.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ordered_json meta;
  meta["corpus"] = corpus_meta;
  meta["levels"] = cfg.ees.levels;
  meta["thresholds"] = cfg.ees.thresholds;
  meta["window_cap"] = cfg.ees.window_cap;
  meta["predictor"] = std::string(to_string(cfg.ees.predictor.kind));
  meta["sim_threshold"] = opt.resolved_sim_threshold();
  meta["clusters"] = opt.clusters ? ordered_json(*opt.clusters) : ordered_json("planted");
  meta["tolerance"] = opt.tolerance;
  meta["seed"] = cfg.seed;
  meta["similarity_statistic"] = "pairwise_mean";

  std::unique_ptr<std::ofstream> holder;
  open_output(cfg.out, holder) << report_json(reports, meta).dump(2) << '\n';
  if (!a.csv.empty()) write_file(a.csv, report_csv(reports));
  if (!a.timing.empty()) write_file(a.timing, timing_json(reports).dump(2) + "\n");
  if (!a.similarity_csv.empty()) write_file(a.similarity_csv, similarity_matrix_csv(items.front().frames));

  const BenchSummary s = summarize(reports);
  std::fprintf(stderr, "streams=%zu ees_f1=%.4f threshold_f1=%.4f cluster_f1=%.4f gap>threshold=%.2f gap>cluster=%.2f\n",
               reports.size(), s.ees_mean_f1, s.threshold_mean_f1, s.cluster_mean_f1,
               s.ees_beats_threshold_gap, s.ees_beats_cluster_gap);
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string loss_csv;
  std::uint32_t epochs = 1;
  FlagLayer flags;
};

int cmd_train(TrainArgs& a) {
  KeyValues base{{"predictor", "linear_ar"}};
  RunConfig cfg = resolve(a.config, a.flags, base);
  if (cfg.out.empty()) throw ConfigError("train: --out checkpoint path is required");
  const Manifest m = read_manifest(a.manifest);
  if (m.streams.empty()) throw ConfigError("train: empty corpus");
  std::vector<std::vector<FrameEmbedding>> corpus;
  for (const auto& e : m.streams) corpus.push_back(load_stream_file(e.stream));

  TrainingResult r;
  try {
    r = train_predictor(corpus, cfg.ees, a.epochs);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  std::ofstream out(cfg.out, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + cfg.out);
  write_checkpoint(out, Checkpoint{r.state, std::nullopt});

  if (!a.loss_csv.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) csv << e + 1 << ',' << r.epoch_loss[e] << '\n';
    write_file(a.loss_csv, csv.str());
  }
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    std::fprintf(stderr, "epoch %zu mean_loss %.6g\n", e + 1, r.epoch_loss[e]);
  return kOk;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  CorpusFlags corpus;
};

int cmd_generate(GenerateArgs& a) {
  const CorpusParams p = a.corpus.params(a.seed);
  const auto manifest = write_corpus(a.out_dir, p);
  std::cerr << "wrote " << p.streams << " streams, manifest " << manifest.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming elastic-scale event segmentation and consolidation"};
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* s = app.add_subcommand("segment", "Segment an EMBS stream into a JSONL event hierarchy");
  s->add_option("input", seg.input, "EMBS file, or - for standard input")->capture_default_str();
  s->add_option("--config", seg.config, "key = value config file");
  add_engine_flags(s, seg.flags);
  seg.flags.flag(s, "--emit-embeddings", "emit_embeddings", "Include latents and tokens in each record");
  seg.flags.option(s, "--out", "out", "JSONL output (default: standard output)");
  s->add_option("--stats", seg.stats, "Write hierarchy stats JSON here (default: standard error)");
  s->add_flag("--allow-non-finite", seg.allow_non_finite, "Do not reject NaN/Inf while reading");

  ConsolidateArgs con;
  auto* c = app.add_subcommand("consolidate", "Summarize every top-level event of a hierarchy");
  c->add_option("hierarchy", con.hierarchy, "JSONL written by `segment --emit-embeddings`")->required();
  c->add_option("--config", con.config, "key = value config file");
  con.flags.option(c, "--essential", "essential", "max_error | random | middle");
  con.flags.option(c, "--seed", "seed", "Seed for the random strategy");
  con.flags.option(c, "--checkpoint", "checkpoint", "EESP checkpoint with attention projections");
  con.flags.option(c, "--attention-scale", "attention_scale", "Softmax scale (default 1/sqrt(d))");
  con.flags.option(c, "--out", "out", "Summary JSON (default: standard output)");
  c->add_option("--embs", con.embs, "Also write the summaries as an EMBS stream (3 rows per event)");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Compare EES with the threshold and clustering baselines");
  b->add_option("--config", bench.config, "key = value config file");
  bench.corpus.add(b);
  b->add_option("--manifest", bench.manifest, "Load the corpus from a manifest instead of generating it");
  add_engine_flags(b, bench.flags);
  bench.flags.option(b, "--out", "out", "Metrics report JSON (default: standard output)");
  b->add_option("--sim-threshold", bench.sim_threshold, "Threshold baseline similarity (default 1 - epsilon)");
  b->add_option("--clusters", bench.clusters, "k for the clustering baseline (default: planted count)");
  b->add_option("--tolerance", bench.tolerance, "Boundary matching tolerance in frames")->capture_default_str();
  b->add_option("--csv", bench.csv, "Also write per-stream metrics as CSV");
  b->add_option("--timing", bench.timing, "Write wall-clock timing JSON here");
  b->add_option("--jobs", bench.jobs, "Worker threads")->capture_default_str();
  b->add_option("--similarity-csv", bench.similarity_csv, "Dump the first stream's frame similarity matrix");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fit a predictor by replaying a corpus");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--manifest", train.manifest, "Corpus manifest")->required();
  t->add_option("--epochs", train.epochs, "Passes over the corpus")->capture_default_str();
  t->add_option("--loss-csv", train.loss_csv, "Per-epoch mean loss CSV");
  add_engine_flags(t, train.flags);
  train.flags.option(t, "--out", "out", "Checkpoint path");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic corpus with ground truth and a manifest");
  gen.corpus.add(g);
  g->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*s) return cmd_segment(seg);
    if (*c) return cmd_consolidate(con);
    if (*b) return cmd_bench(bench);
    if (*t) return cmd_train(train);
    if (*g) return cmd_generate(gen);
  } catch (const MissingEmbeddingsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissingEmbeddings;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
