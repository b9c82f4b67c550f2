#pragma once

// Hierarchical event consolidation: essential-token selection, single-query
// cross-attention within and across levels, and the abstract / coarse / fine
// summary of each top-level event.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ees/rng.hpp"
#include "ees/types.hpp"

namespace ees {

enum class EssentialStrategy { max_error, random, middle };

inline std::string_view to_string(EssentialStrategy s) {
  switch (s) {
    case EssentialStrategy::max_error: return "max_error";
    case EssentialStrategy::random: return "random";
    case EssentialStrategy::middle: return "middle";
  }
  return "unknown";
}

inline EssentialStrategy parse_essential_strategy(std::string_view name) {
  if (name == "max_error") return EssentialStrategy::max_error;
  if (name == "random") return EssentialStrategy::random;
  if (name == "middle") return EssentialStrategy::middle;
  throw ConfigError("unknown essential strategy '" + std::string(name) + "'");
}

/// Learned d x d query/key/value maps.
struct AttentionProjections {
  Matrix query;
  Matrix key;
  Matrix value;
};

struct AttentionConfig {
  std::optional<double> scale;  // defaults to 1/sqrt(d)
  std::optional<AttentionProjections> projections;  // identity when absent

  double scale_for(Eigen::Index dim) const {
    return scale ? *scale : 1.0 / std::sqrt(static_cast<double>(dim));
  }

  void validate(Eigen::Index dim) const {
    if (scale && !(*scale > 0.0 && std::isfinite(*scale)))
      throw ConfigError("attention scale must be > 0");
    if (projections) {
      for (const Matrix* m : {&projections->query, &projections->key, &projections->value}) {
        if (m->rows() != dim || m->cols() != dim)
          throw ConfigError("attention projections must be d x d");
        if (!m->allFinite()) throw ConfigError("attention projections must be finite");
      }
    }
  }
};

namespace detail {

inline void check_attention_inputs(const Vector& query, std::span<const Vector> keys,
                                   std::span<const Vector> values) {
  if (keys.empty()) throw InvalidArgument("cross_attention: empty key set");
  if (keys.size() != values.size())
    throw InvalidArgument("cross_attention: keys and values differ in count");
  for (const auto& k : keys) require_dim(k, query.size(), "cross_attention");
  for (const auto& v : values) require_dim(v, query.size(), "cross_attention");
}

}  // namespace detail

/// softmax_i(scale * <q', k'_i>); non-negative and sums to one.
inline Vector attention_weights(const Vector& query, std::span<const Vector> keys,
                                const AttentionConfig& cfg = {}) {
  if (keys.empty()) throw InvalidArgument("cross_attention: empty key set");
  for (const auto& k : keys) require_dim(k, query.size(), "cross_attention");
  const double scale = cfg.scale_for(query.size());
  const Vector q = cfg.projections ? Vector(cfg.projections->query * query) : query;
  Vector logits(static_cast<Eigen::Index>(keys.size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double dot = cfg.projections ? q.dot(cfg.projections->key * keys[i]) : q.dot(keys[i]);
    logits[static_cast<Eigen::Index>(i)] = scale * dot;
  }
  const double top = logits.maxCoeff();
  Vector w = (logits.array() - top).exp().matrix();
  return w / w.sum();
}

inline Vector cross_attention(const Vector& query, std::span<const Vector> keys,
                              std::span<const Vector> values, const AttentionConfig& cfg = {}) {
  detail::check_attention_inputs(query, keys, values);
  const Vector w = attention_weights(query, keys, cfg);
  Vector out = Vector::Zero(query.size());
  for (std::size_t i = 0; i < values.size(); ++i) out += w[static_cast<Eigen::Index>(i)] * values[i];
  if (cfg.projections) out = cfg.projections->value * out;
  if (!out.allFinite()) throw DegenerateInputError("cross_attention: non-finite output");
  return out;
}

/// Position (within the segment) of the essential token. Max-error ties go
/// to the earliest token.
inline std::size_t select_essential(const EventSegment& segment,
                                    EssentialStrategy strategy = EssentialStrategy::max_error,
                                    std::uint64_t seed = 0) {
  const auto& t = segment.tokens;
  if (t.empty()) throw InvalidArgument("select_essential: segment has no tokens");
  switch (strategy) {
    case EssentialStrategy::max_error: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i].error > t[best].error) best = i;
      return best;
    }
    case EssentialStrategy::middle: return (t.size() - 1) / 2;
    case EssentialStrategy::random: {
      Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(segment.level)), segment.ordinal));
      return rng.index(t.size());
    }
  }
  return 0;
}

/// Query = essential token, keys = values = the remaining tokens. A
/// single-token segment summarizes to its own token.
inline Vector intra_layer_aggregate(const EventSegment& segment, const AttentionConfig& cfg = {},
                                    EssentialStrategy strategy = EssentialStrategy::max_error,
                                    std::uint64_t seed = 0) {
  const std::size_t ess = select_essential(segment, strategy, seed);
  const auto& t = segment.tokens;
  if (t.size() == 1) return t.front().vector;
  std::vector<Vector> rest;
  rest.reserve(t.size() - 1);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (i != ess) rest.push_back(t[i].vector);
  return cross_attention(t[ess].vector, rest, rest, cfg);
}

inline Vector cross_layer_aggregate(const Vector& essential_upper, std::span<const Vector> lower,
                                    const AttentionConfig& cfg = {}) {
  if (lower.empty()) throw InvalidArgument("cross_layer_aggregate: empty lower summary set");
  return cross_attention(essential_upper, lower, lower, cfg);
}

struct ConsolidationOptions {
  AttentionConfig attention;
  EssentialStrategy strategy = EssentialStrategy::max_error;
  std::uint64_t seed = 0;
};

/// Which tokens anchored the aggregation of one event.
struct Provenance {
  // essential_indices[l - 1]: level-l token ordinals chosen as queries,
  // one per subtree segment at that level, in temporal order.
  std::vector<std::vector<std::uint64_t>> essential_indices;
  // Source frame of each level-1 query.
  std::vector<std::uint64_t> essential_frames;
};

struct ConsolidationResult {
  std::vector<EventSummary> summaries;
  std::vector<Provenance> provenance;
};

namespace detail {

// Segment with the given segment ordinal; positional lookup first.
inline const EventSegment* find_by_ordinal(const std::vector<EventSegment>& level,
                                           std::uint64_t ordinal) {
  if (ordinal < level.size() && level[ordinal].ordinal == ordinal) return &level[ordinal];
  for (const auto& s : level)
    if (s.ordinal == ordinal) return &s;
  return nullptr;
}

struct SubtreeSummary {
  Vector summary;
  std::uint64_t essential_frame = 0;
};

inline SubtreeSummary summarize(const EventHierarchy& h, std::size_t level_index,
                                const EventSegment& seg, const ConsolidationOptions& opt,
                                Provenance& prov) {
  if (seg.tokens.empty() || seg.tokens.size() != seg.size())
    throw InvalidArgument("consolidate: segment at level " + std::to_string(seg.level) +
                          " has no retained tokens");
  const std::size_t ess = select_essential(seg, opt.strategy, opt.seed);
  prov.essential_indices[level_index].push_back(seg.start + ess);
  if (level_index == 0) {
    prov.essential_frames.push_back(seg.tokens[ess].time);
    return {intra_layer_aggregate(seg, opt.attention, opt.strategy, opt.seed), seg.tokens[ess].time};
  }
  const auto& children = h.levels[level_index - 1];
  std::vector<Vector> lower;
  lower.reserve(seg.size());
  std::uint64_t ess_frame = 0;
  for (std::uint64_t k = seg.start; k <= seg.end; ++k) {
    const EventSegment* child = find_by_ordinal(children, k);
    if (!child)
      throw InvalidArgument("consolidate: level-" + std::to_string(seg.level) +
                            " segment refers to a missing lower-level segment");
    SubtreeSummary s = summarize(h, level_index - 1, *child, opt, prov);
    if (k - seg.start == ess) ess_frame = s.essential_frame;
    lower.push_back(std::move(s.summary));
  }
  return {cross_layer_aggregate(lower[ess], lower, opt.attention), ess_frame};
}

}  // namespace detail

inline std::size_t find_top_event(const EventHierarchy& h, const EventSegment& top) {
  if (h.levels.empty()) throw InvalidArgument("consolidate_event: empty hierarchy");
  if (!top.finalized) throw InvalidArgument("consolidate_event: segment not finalized");
  const auto& level = h.levels.back();
  if (top.level != static_cast<int>(h.depth()))
    throw InvalidArgument("consolidate_event: segment not in hierarchy (wrong level)");
  for (std::size_t i = 0; i < level.size(); ++i) {
    const auto& s = level[i];
    if (s.ordinal == top.ordinal && s.start == top.start && s.end == top.end &&
        s.start_frame == top.start_frame &&
        s.end_frame == top.end_frame)
      return i;
  }
  throw InvalidArgument("consolidate_event: segment not in hierarchy");
}

inline EventSummary consolidate_event(const EventHierarchy& h, const EventSegment& top,
                                      const ConsolidationOptions& opt = {},
                                      Provenance* provenance = nullptr) {
  const std::size_t idx = find_top_event(h, top);
  const EventSegment& seg = h.levels.back()[idx];
  if (seg.tokens.empty()) throw InvalidArgument("consolidate_event: top segment has no tokens");
  opt.attention.validate(seg.tokens.front().vector.size());

  Provenance prov;
  prov.essential_indices.resize(h.depth());
  EventSummary out;
  out.abstract = detail::summarize(h, h.depth() - 1, seg, opt, prov).summary;

  Vector sum = Vector::Zero(seg.tokens.front().vector.size());
  for (const auto& t : seg.tokens) sum += t.vector;
  out.coarse = sum / static_cast<double>(seg.tokens.size());
  out.fine = seg.tokens[select_essential(seg, EssentialStrategy::max_error)].vector;
  out.event_span = {seg.start_frame, seg.end_frame};
  if (provenance) *provenance = std::move(prov);
  return out;
}

/// One summary per top-level segment, ordered by start frame.
inline ConsolidationResult consolidate_all(const EventHierarchy& h,
                                           const ConsolidationOptions& opt = {}) {
  ConsolidationResult result;
  if (h.levels.empty()) return result;
  std::vector<const EventSegment*> tops;
  for (const auto& s : h.levels.back()) tops.push_back(&s);
  std::stable_sort(tops.begin(), tops.end(), [](const EventSegment* a, const EventSegment* b) {
    return a->start_frame < b->start_frame;
  });
  for (const EventSegment* s : tops) {
    Provenance p;
    result.summaries.push_back(consolidate_event(h, *s, opt, &p));
    result.provenance.push_back(std::move(p));
  }
  return result;
}

}  // namespace ees
