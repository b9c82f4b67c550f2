#pragma once

// Causal elastic-scale event segmentation.
//
// Each level keeps an open context: the raw inputs received since its last
// boundary (frames at level 1, promoted latents above), capped at the most
// recent window_cap items. When an item arrives at level l it is mapped to
// an observed latent Φ^(l)({item}) and compared with the stored prediction
// ẑ^(l). An error above ε^(l) closes the open segment, promotes its latent
// Φ^(l)(context) to level l + 1 and opens a new segment with the item.
// Cascades run bottom-up inside a single ingest() call.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ees/predictors.hpp"
#include "ees/stream.hpp"
#include "ees/types.hpp"

namespace ees {

struct EesConfig {
  std::uint32_t levels = 3;
  std::vector<double> thresholds = {0.4, 0.4, 0.4};
  std::uint32_t window_cap = 32;
  PredictorConfig predictor;
  bool online_learning = false;
  // Keep per-token vectors inside segments (needed for consolidation).
  bool retain_tokens = true;
  // Keep every finalized segment in memory. With this off, finalized
  // segments are only handed out through ingest()'s return value.
  bool retain_hierarchy = true;

  void validate() const {
    if (levels < 1) throw ConfigError("levels must be >= 1");
    if (thresholds.size() != levels)
      throw ConfigError("thresholds: expected " + std::to_string(levels) + " values, got " +
                        std::to_string(thresholds.size()));
    for (double eps : thresholds)
      if (!(eps > 0.0 && eps <= 2.0))
        throw ConfigError("thresholds: each value must lie in (0, 2]");
    if (window_cap < 1) throw ConfigError("window_cap must be >= 1");
    if (predictor.levels != levels) throw ConfigError("predictor levels differ from engine levels");
    if (predictor.window_cap != window_cap)
      throw ConfigError("predictor window_cap differs from engine window_cap");
    predictor.validate();
  }

  /// Copies levels/window_cap/dim into the predictor block.
  EesConfig& sync_predictor(std::uint32_t dim) {
    predictor.dim = dim;
    predictor.levels = levels;
    predictor.window_cap = window_cap;
    return *this;
  }
};

/// Error used by the engine. A zero vector has no direction, so it is
/// scored as orthogonal (E = 1) instead of failing.
inline double engine_error(const Vector& predicted, const Vector& observed) {
  if (predicted.norm() < 1e-12 || observed.norm() < 1e-12) return 1.0;
  return prediction_error(predicted, observed);
}

/// Boundary rule: strictly greater than the threshold.
constexpr bool detect_boundary(double error, double threshold) { return error > threshold; }

class Engine {
 public:
  explicit Engine(EesConfig config)
      : Engine(config, PredictorState::initialize(config.predictor)) {}

  Engine(EesConfig config, PredictorState predictor)
      : config_(std::move(config)), predictor_(std::move(predictor)) {
    config_.validate();
    if (!(predictor_.config == config_.predictor))
      throw ConfigError("predictor state was built for a different configuration");
    levels_.resize(config_.levels);
    for (auto& lv : levels_) lv.context.reserve(config_.window_cap + 1);
    finalized_ = EventHierarchy(config_.levels);
  }

  const EesConfig& config() const { return config_; }
  const PredictorState& predictor() const { return predictor_; }
  std::uint64_t frames_seen() const { return clock_; }
  std::uint32_t dim() const { return config_.predictor.dim; }

  /// Finalized (non-provisional) segments so far; empty without retain_hierarchy.
  const EventHierarchy& finalized() const { return finalized_; }

  /// Finalized segment count per level, maintained even without retention.
  std::vector<std::uint64_t> finalized_counts() const {
    std::vector<std::uint64_t> out;
    for (const auto& lv : levels_) out.push_back(lv.segments_closed);
    return out;
  }

  /// Tokens received per level (level-1 tokens are frames).
  std::vector<std::uint64_t> token_counts() const {
    std::vector<std::uint64_t> out;
    for (const auto& lv : levels_) out.push_back(lv.tokens_seen);
    return out;
  }

  /// Sum and count of the L2 losses observed at prediction points while
  /// online learning is enabled.
  double loss_sum() const { return loss_sum_; }
  std::uint64_t loss_count() const { return loss_count_; }

  /// Processes frame t; returns the segments finalized by it, bottom-up.
  std::vector<EventSegment> ingest(const FrameEmbedding& frame) {
    if (frame.index != clock_)
      throw InvalidArgument("ingest: out-of-order frame index " + std::to_string(frame.index) +
                            " (expected " + std::to_string(clock_) + ")");
    require_dim(frame.vector, dim(), "ingest");
    Item item{normalize_frame(frame.vector), clock_, clock_, clock_};
    std::vector<EventSegment> emitted;
    push(0, std::move(item), emitted, true);
    ++clock_;
    return emitted;
  }

  /// Segments produced by closing every open context, in emission order.
  /// Works on a copy: the engine itself is not modified.
  std::vector<EventSegment> flush_segments() const {
    Engine copy = *this;
    return copy.close_all();
  }

  /// Finalized segments plus the provisional ones a flush would produce.
  EventHierarchy flush() const {
    Engine copy = *this;
    copy.config_.retain_hierarchy = true;
    copy.close_all();
    if (config_.retain_hierarchy) return std::move(copy.finalized_);
    // Only the provisional tail is known without retention.
    EventHierarchy h(config_.levels);
    for (std::size_t l = 0; l < copy.finalized_.levels.size(); ++l)
      for (auto& s : copy.finalized_.levels[l])
        if (s.provisional) h.levels[l].push_back(std::move(s));
    return h;
  }

 private:
  struct Item {
    Vector vector;
    std::uint64_t first_frame;
    std::uint64_t last_frame;
    std::uint64_t essential_frame;
  };

  struct Level {
    std::vector<Vector> context;
    Vector latent;
    std::optional<Vector> prediction;
    std::vector<Vector> prediction_inputs;
    // open segment
    bool open = false;
    std::uint64_t start = 0;
    std::uint64_t start_frame = 0;
    std::uint64_t end_frame = 0;
    std::uint64_t size = 0;
    double peak = -1.0;
    std::uint64_t peak_index = 0;
    std::uint64_t peak_frame = 0;
    std::vector<LatentToken> tokens;
    // counters
    std::uint64_t tokens_seen = 0;
    std::uint64_t segments_closed = 0;
  };

  // With detect off the item only joins the open context (used by flush).
  void push(std::size_t l, Item item, std::vector<EventSegment>& emitted, bool detect) {
    Level& lv = levels_[l];
    const int level = static_cast<int>(l) + 1;
    const Vector observed = abstract(level, std::span<const Vector>(&item.vector, 1), predictor_);

    double error = 0.0;
    bool boundary = false;
    if (lv.prediction) {
      error = engine_error(*lv.prediction, observed);
      if (config_.online_learning && predictor_.config.trainable()) {
        loss_sum_ += online_update(level, lv.prediction_inputs, observed, predictor_);
        ++loss_count_;
      }
      boundary = detect && detect_boundary(error, config_.thresholds[l]);
    }

    std::optional<EventSegment> closed;
    if (boundary) closed = close(l, false);

    // Append the item to the (possibly fresh) open segment.
    if (!lv.open) {
      lv.open = true;
      lv.start = lv.tokens_seen;
      lv.start_frame = item.first_frame;
      lv.size = 0;
      lv.peak = -1.0;
    }
    if (error > lv.peak) {
      lv.peak = error;
      lv.peak_index = lv.tokens_seen;
      lv.peak_frame = item.essential_frame;
    }
    lv.end_frame = item.last_frame;
    ++lv.size;
    if (config_.retain_tokens) lv.tokens.push_back({level, item.last_frame, observed, error});
    ++lv.tokens_seen;

    lv.context.push_back(std::move(item.vector));
    if (lv.context.size() > config_.window_cap) lv.context.erase(lv.context.begin());
    lv.latent = abstract(level, lv.context, predictor_);

    lv.prediction_inputs.clear();
    for (std::size_t k = 0; k <= l; ++k) lv.prediction_inputs.push_back(levels_[k].latent);
    lv.prediction = predict_next(level, lv.prediction_inputs, predictor_);

    if (closed) {
      const bool promote = l + 1 < levels_.size();
      Item up{closed->latent, closed->start_frame, closed->end_frame, closed->essential_frame};
      emitted.push_back(std::move(*closed));
      if (promote) push(l + 1, std::move(up), emitted, detect);
    }
  }

  EventSegment close(std::size_t l, bool provisional) {
    Level& lv = levels_[l];
    EventSegment seg;
    seg.level = static_cast<int>(l) + 1;
    seg.ordinal = lv.segments_closed;
    seg.start = lv.start;
    seg.end = lv.start + lv.size - 1;
    seg.start_frame = lv.start_frame;
    seg.end_frame = lv.end_frame;
    seg.essential_index = lv.peak_index;
    seg.essential_frame = lv.peak_frame;
    seg.error_peak = lv.peak;
    seg.tokens = std::move(lv.tokens);
    seg.latent = lv.latent;
    seg.finalized = true;
    seg.provisional = provisional;

    lv.tokens = {};
    lv.context.clear();
    lv.open = false;
    ++lv.segments_closed;
    if (config_.retain_hierarchy) finalized_.levels[l].push_back(seg);
    return seg;
  }

  std::vector<EventSegment> close_all() {
    std::vector<EventSegment> emitted;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      if (!levels_[l].open) continue;
      EventSegment seg = close(l, true);
      Item up{seg.latent, seg.start_frame, seg.end_frame, seg.essential_frame};
      emitted.push_back(std::move(seg));
      if (l + 1 < levels_.size()) push(l + 1, std::move(up), emitted, false);
    }
    return emitted;
  }

  EesConfig config_;
  PredictorState predictor_;
  std::vector<Level> levels_;
  EventHierarchy finalized_;
  std::uint64_t clock_ = 0;
  double loss_sum_ = 0.0;
  std::uint64_t loss_count_ = 0;
};

/// Summary statistics of a hierarchy.
struct HierarchyStats {
  std::vector<std::uint64_t> counts;               // segments per level
  std::vector<std::optional<double>> mean_length;  // frames per segment, per level
  std::uint64_t frames = 0;
  std::optional<double> compression;  // frames / top-level segments
};

/// Builds HierarchyStats from segments as they stream past.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(std::size_t depth) : counts_(depth, 0), lengths_(depth, 0.0) {}

  void add(const EventSegment& s) {
    const auto l = static_cast<std::size_t>(s.level - 1);
    if (l >= counts_.size()) throw InvalidArgument("stats: segment level exceeds hierarchy depth");
    ++counts_[l];
    lengths_[l] += static_cast<double>(s.frame_length());
    if (l == 0) {
      first_ = std::min(first_, s.start_frame);
      last_ = std::max(last_, s.end_frame);
    }
  }

  HierarchyStats stats() const {
    HierarchyStats s;
    s.counts = counts_;
    for (std::size_t l = 0; l < counts_.size(); ++l) {
      if (counts_[l] == 0)
        s.mean_length.emplace_back();
      else
        s.mean_length.emplace_back(lengths_[l] / static_cast<double>(counts_[l]));
    }
    if (!counts_.empty() && counts_.front() > 0) s.frames = last_ - first_ + 1;
    if (!counts_.empty() && counts_.back() > 0)
      s.compression = static_cast<double>(s.frames) / static_cast<double>(counts_.back());
    return s;
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::vector<double> lengths_;
  std::uint64_t first_ = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t last_ = 0;
};

inline HierarchyStats hierarchy_stats(const EventHierarchy& h) {
  StatsAccumulator acc(h.depth());
  for (const auto& level : h.levels)
    for (const auto& s : level) acc.add(s);
  return acc.stats();
}

}  // namespace ees
