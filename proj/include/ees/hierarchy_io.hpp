#pragma once

// JSON Lines hierarchy records, one per finalized segment:
//
//   {"level", "start_frame", "end_frame", "essential_frame", "error_peak",
//    "provisional", ["embedding", "tokens", "token_errors"]}
//
// The bracketed fields appear with embeddings enabled and are what
// read_hierarchy_jsonl() needs to rebuild a consolidatable hierarchy.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ees/engine.hpp"
#include "ees/types.hpp"

namespace ees {

using ordered_json = nlohmann::ordered_json;

// Raised when records carry no embeddings; the CLI reports it with exit 4.
struct MissingEmbeddingsError : FormatError {
  using FormatError::FormatError;
};

inline ordered_json vector_json(const Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const ordered_json& a, Eigen::Index expected_dim = -1) {
  if (!a.is_array()) throw FormatError("expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw FormatError("expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  if (expected_dim >= 0 && v.size() != expected_dim) throw FormatError("vector dimension mismatch");
  return v;
}

inline ordered_json segment_record(const EventSegment& s, bool emit_embeddings) {
  ordered_json j;
  j["level"] = s.level;
  j["start_frame"] = s.start_frame;
  j["end_frame"] = s.end_frame;
  j["essential_frame"] = s.essential_frame;
  j["error_peak"] = s.error_peak;
  j["provisional"] = s.provisional;
  if (emit_embeddings) {
    j["embedding"] = vector_json(s.latent);
    ordered_json tokens = ordered_json::array();
    ordered_json errors = ordered_json::array();
    for (const auto& t : s.tokens) {
      tokens.push_back(vector_json(t.vector));
      errors.push_back(t.error);
    }
    j["tokens"] = std::move(tokens);
    j["token_errors"] = std::move(errors);
  }
  return j;
}

inline std::string segment_jsonl(const EventSegment& s, bool emit_embeddings) {
  return segment_record(s, emit_embeddings).dump() + "\n";
}

inline void write_hierarchy_jsonl(std::ostream& out, const EventHierarchy& h, bool emit_embeddings) {
  for (const auto& level : h.levels)
    for (const auto& s : level) out << segment_jsonl(s, emit_embeddings);
}

namespace detail {

template <typename T>
T required(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key))
    throw FormatError("hierarchy line " + std::to_string(line) + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("hierarchy line " + std::to_string(line) + ": bad \"" + key + "\"");
  }
}

}  // namespace detail

/// Rebuilds a hierarchy from JSONL records (any emission order within a
/// level is preserved; levels are ordered by their "level" field). Token
/// ordinals are reassigned by position.
inline EventHierarchy read_hierarchy_jsonl(std::istream& in) {
  std::vector<std::vector<EventSegment>> levels;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw FormatError("hierarchy line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (!j.is_object()) throw FormatError("hierarchy line " + std::to_string(line_no) + ": not an object");
    EventSegment s;
    s.level = detail::required<int>(j, "level", line_no);
    if (s.level < 1) throw FormatError("hierarchy line " + std::to_string(line_no) + ": bad level");
    s.start_frame = detail::required<std::uint64_t>(j, "start_frame", line_no);
    s.end_frame = detail::required<std::uint64_t>(j, "end_frame", line_no);
    s.essential_frame = detail::required<std::uint64_t>(j, "essential_frame", line_no);
    s.error_peak = detail::required<double>(j, "error_peak", line_no);
    s.provisional = j.value("provisional", false);
    s.finalized = true;
    if (s.end_frame < s.start_frame)
      throw FormatError("hierarchy line " + std::to_string(line_no) + ": end_frame < start_frame");
    if (!j.contains("embedding") || !j.contains("tokens") || !j.contains("token_errors"))
      throw MissingEmbeddingsError("hierarchy records carry no embeddings");
    s.latent = vector_from_json(j["embedding"], dim);
    if (dim < 0) dim = s.latent.size();
    const auto& tokens = j["tokens"];
    const auto& errors = j["token_errors"];
    if (!tokens.is_array() || !errors.is_array() || tokens.size() != errors.size() || tokens.empty())
      throw FormatError("hierarchy line " + std::to_string(line_no) + ": bad tokens");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      LatentToken t;
      t.level = s.level;
      t.vector = vector_from_json(tokens[i], dim);
      if (!errors[i].is_number())
        throw FormatError("hierarchy line " + std::to_string(line_no) + ": bad token error");
      t.error = errors[i].get<double>();
      if (!(t.error >= 0.0 && t.error <= 2.0))
        throw FormatError("hierarchy line " + std::to_string(line_no) + ": error outside [0, 2]");
      s.tokens.push_back(std::move(t));
    }
    if (levels.size() < static_cast<std::size_t>(s.level)) levels.resize(static_cast<std::size_t>(s.level));
    levels[static_cast<std::size_t>(s.level) - 1].push_back(std::move(s));
  }

  EventHierarchy h;
  h.levels = std::move(levels);
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    auto& level = h.levels[l];
    std::uint64_t next = 0;
    for (std::size_t k = 0; k < level.size(); ++k) {
      auto& s = level[k];
      s.ordinal = k;
      s.start = next;
      s.end = next + s.tokens.size() - 1;
      next = s.end + 1;
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.tokens.size(); ++i)
        if (s.tokens[i].error > s.tokens[best].error) best = i;
      s.essential_index = s.start + best;
      if (l == 0) {
        if (s.tokens.size() != s.frame_length())
          throw FormatError("level-1 segment token count does not match its frame span");
        for (std::size_t i = 0; i < s.tokens.size(); ++i) s.tokens[i].time = s.start_frame + i;
      }
    }
    if (l > 0) {
      const auto& below = h.levels[l - 1];
      if (next > below.size())
        throw FormatError("level-" + std::to_string(l + 1) + " has more tokens than level-" +
                          std::to_string(l) + " segments");
      for (auto& s : level)
        for (std::uint64_t k = s.start; k <= s.end; ++k) s.tokens[k - s.start].time = below[k].end_frame;
    }
  }
  return h;
}

inline ordered_json stats_json(const HierarchyStats& s) {
  ordered_json j;
  j["frames"] = s.frames;
  j["counts"] = s.counts;
  ordered_json lengths = ordered_json::array();
  for (const auto& m : s.mean_length) lengths.push_back(m ? ordered_json(*m) : ordered_json(nullptr));
  j["mean_length"] = std::move(lengths);
  j["compression"] = s.compression ? ordered_json(*s.compression) : ordered_json(nullptr);
  return j;
}

}  // namespace ees
