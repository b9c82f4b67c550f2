#pragma once

// Corpus manifest and ground-truth files.
//
// manifest.json:
//   {"dim": 64, "corpus": {...generator params...},
//    "streams": [{"id": "stream_000", "stream": "stream_000.embs",
//                 "truth": "stream_000.truth.json"}, ...]}
// Paths are relative to the manifest's directory. "truth" is optional.
//
// <id>.truth.json:
//   {"boundary_frames": [...], "segment_ids": [...], "group_boundaries": [...]}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ees/hierarchy_io.hpp"
#include "ees/stream.hpp"
#include "ees/synth.hpp"

namespace ees {

struct ManifestEntry {
  std::string id;
  std::filesystem::path stream;
  std::optional<std::filesystem::path> truth;
};

struct Manifest {
  std::uint32_t dim = 0;
  std::vector<ManifestEntry> streams;
  ordered_json corpus;  // generator parameters, informational
};

inline ordered_json truth_json(const GroundTruth& t) {
  ordered_json j;
  j["boundary_frames"] = t.boundary_frames;
  j["segment_ids"] = t.segment_ids;
  j["group_boundaries"] = t.group_boundaries;
  return j;
}

inline GroundTruth truth_from_json(const ordered_json& j) {
  GroundTruth t;
  try {
    t.boundary_frames = j.at("boundary_frames").get<std::vector<std::uint64_t>>();
    if (j.contains("segment_ids")) t.segment_ids = j.at("segment_ids").get<std::vector<std::uint32_t>>();
    if (j.contains("group_boundaries"))
      t.group_boundaries = j.at("group_boundaries").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad ground-truth file: ") + e.what());
  }
  for (std::size_t i = 1; i < t.boundary_frames.size(); ++i)
    if (t.boundary_frames[i] <= t.boundary_frames[i - 1])
      throw FormatError("bad ground-truth file: boundaries must increase strictly");
  return t;
}

inline ordered_json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error&) {
    throw FormatError("invalid JSON in " + p.string());
  }
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  const ordered_json j = read_json_file(path);
  const auto base = path.parent_path();
  Manifest m;
  try {
    m.dim = j.value("dim", 0u);
    if (j.contains("corpus")) m.corpus = j["corpus"];
    for (const auto& e : j.at("streams")) {
      ManifestEntry entry;
      entry.stream = base / e.at("stream").get<std::string>();
      entry.id = e.value("id", entry.stream.stem().string());
      if (e.contains("truth")) entry.truth = base / e.at("truth").get<std::string>();
      m.streams.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  return m;
}

inline std::vector<FrameEmbedding> load_stream_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  EmbsReader reader(in);
  std::vector<FrameEmbedding> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

inline void save_stream_file(const std::filesystem::path& p, std::span<const FrameEmbedding> frames,
                             std::optional<Fps> fps = std::nullopt) {
  if (frames.empty()) throw InvalidArgument("save_stream_file: no frames");
  StreamHeader h{static_cast<std::uint32_t>(frames.front().vector.size()), frames.size(), fps};
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot create " + p.string());
  EmbsWriter w(out, h);
  for (const auto& f : frames) w.write(f);
  w.finish();
}

inline ordered_json corpus_params_json(const CorpusParams& p) {
  ordered_json j;
  j["kind"] = std::string(to_string(p.kind));
  j["streams"] = p.streams;
  j["dim"] = p.dim;
  j["frames"] = p.frames;
  j["noise_sigma"] = p.noise_sigma;
  j["drift_rate"] = p.drift_rate;
  j["max_centroid_cosine"] = p.max_centroid_cosine;
  j["min_length"] = p.min_length;
  j["max_length"] = p.max_length;
  j["revisit_pool"] = p.revisit_pool;
  j["chapter_spread"] = p.chapter_spread;
  j["seed"] = p.seed;
  return j;
}

inline std::string stream_id(std::uint32_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "stream_" + digits;
}

/// Writes every stream of a generated corpus plus manifest.json into dir.
inline std::filesystem::path write_corpus(const std::filesystem::path& dir, const CorpusParams& p) {
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["dim"] = p.dim;
  manifest["corpus"] = corpus_params_json(p);
  ordered_json streams = ordered_json::array();
  for (std::uint32_t i = 0; i < p.streams; ++i) {
    const SynthStream s = generate_stream(corpus_stream_spec(p, i));
    const std::string id = stream_id(i);
    save_stream_file(dir / (id + ".embs"), s.frames);
    std::ofstream(dir / (id + ".truth.json")) << truth_json(s.truth).dump() << '\n';
    streams.push_back({{"id", id}, {"stream", id + ".embs"}, {"truth", id + ".truth.json"}});
  }
  manifest["streams"] = std::move(streams);
  const auto path = dir / "manifest.json";
  std::ofstream(path) << manifest.dump(2) << '\n';
  return path;
}

}  // namespace ees
