#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ees {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed EMBS/EESP/JSONL input.
struct FormatError : Error {
  using Error::Error;
};

// Invalid configuration or unsatisfiable generator spec.
struct ConfigError : Error {
  using Error::Error;
};

// Zero-norm vector where a direction is required.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Caller broke an operation's precondition (dimension, ordering, emptiness).
struct InvalidArgument : Error {
  using Error::Error;
};

/// One frame of the stream: v_t.
struct FrameEmbedding {
  std::uint64_t index = 0;
  Vector vector;
};

struct Fps {
  std::uint32_t num = 0;
  std::uint32_t den = 0;
  friend bool operator==(const Fps&, const Fps&) = default;
};

struct StreamHeader {
  static constexpr std::uint64_t kUnbounded = 0;

  std::uint32_t dim = 0;
  std::uint64_t frame_count = kUnbounded;
  std::optional<Fps> fps;

  bool bounded() const { return frame_count != kUnbounded; }
  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

/// A level-l token z^(l) together with the prediction error it produced
/// when it arrived at its level.
struct LatentToken {
  int level = 1;
  std::uint64_t time = 0;  // last source frame covered
  Vector vector;
  double error = 0.0;
};

/// A contiguous run of level-l tokens. `start`/`end`/`essential_index` are
/// token ordinals at the segment's own level; `ordinal` is the segment's
/// position among level-l segments, which is also the ordinal of the token it
/// becomes at level l + 1. Frame fields are source-frame ordinals. `tokens`
/// may be empty when the engine runs without token retention; every other
/// field is always populated.
struct EventSegment {
  int level = 1;
  std::uint64_t ordinal = 0;  // position among the level's segments
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  std::uint64_t start_frame = 0;
  std::uint64_t end_frame = 0;
  std::uint64_t essential_index = 0;
  std::uint64_t essential_frame = 0;
  double error_peak = 0.0;
  std::vector<LatentToken> tokens;
  Vector latent;  // Φ over the closing context; promoted to level + 1
  bool finalized = false;
  bool provisional = false;

  std::uint64_t size() const { return end - start + 1; }
  std::uint64_t frame_length() const { return end_frame - start_frame + 1; }
};

/// levels[l - 1] holds the level-l segments in temporal order. A level-(l+1)
/// token with ordinal k corresponds to levels[l - 1][k].
struct EventHierarchy {
  std::vector<std::vector<EventSegment>> levels;

  EventHierarchy() = default;
  explicit EventHierarchy(std::size_t depth) : levels(depth) {}

  std::size_t depth() const { return levels.size(); }
  std::size_t segment_count() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.size();
    return n;
  }
};

struct FrameSpan {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

/// Downstream token group for one top-level event.
struct EventSummary {
  Vector abstract;
  Vector coarse;
  Vector fine;
  FrameSpan event_span;
};

// ---- small vector helpers ----

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_dim(const Vector& v, Eigen::Index dim, const char* what) {
  if (v.size() != dim) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (expected " +
                          std::to_string(dim) + ", got " + std::to_string(v.size()) + ")");
  }
}

inline double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) throw DegenerateInputError("cosine of a zero vector");
  return a.dot(b) / (na * nb);
}

}  // namespace ees
