#pragma once

// Synthetic streams with planted event structure, the two offline/causal
// baseline segmenters, and segmentation-quality metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ees/rng.hpp"
#include "ees/stream.hpp"
#include "ees/types.hpp"

namespace ees {

// ---------------------------------------------------------------- generator

struct SynthSegment {
  std::uint32_t length = 1;  // ignored when children are present
  std::optional<std::uint64_t> centroid_key;  // segments sharing a key share a centroid
  std::optional<Vector> centroid;              // explicit centroid (normalized on use)
  double noise_sigma = 0.0;
  double drift_rate = 0.0;
  // Nested scenes: each child centroid is normalize(parent + child_spread * u)
  // for a random unit u unless the child fixes its own centroid.
  std::vector<SynthSegment> children;
  double child_spread = 0.0;

  std::uint64_t frame_count() const {
    if (children.empty()) return length;
    std::uint64_t n = 0;
    for (const auto& c : children) n += c.frame_count();
    return n;
  }
};

struct SynthSpec {
  std::uint32_t dim = 64;
  std::vector<SynthSegment> segments;
  std::uint64_t seed = 0;
  // Maximum pairwise cosine between distinct drawn top-level centroids.
  double min_centroid_separation = 1.0;
};

struct GroundTruth {
  std::vector<std::uint64_t> boundary_frames;  // leaf segment starts, excluding frame 0
  std::vector<std::uint32_t> segment_ids;      // leaf segment id per frame
  std::vector<std::uint64_t> group_boundaries; // top-level segment starts (nested specs)
};

struct SynthStream {
  std::vector<FrameEmbedding> frames;
  GroundTruth truth;
};

namespace detail {

struct CentroidDraw {
  Rng& rng;
  std::uint32_t dim;
  double max_cos;
  std::vector<Vector> drawn;
  std::map<std::uint64_t, Vector> keyed;

  Vector fresh() {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Vector c = rng.unit_vector(dim);
      bool ok = true;
      for (const auto& o : drawn)
        if (c.dot(o) > max_cos) {
          ok = false;
          break;
        }
      if (ok) {
        drawn.push_back(c);
        return c;
      }
    }
    throw ConfigError("unsatisfiable centroid separation after 10000 rejections");
  }

  Vector resolve(const SynthSegment& s, const Vector* parent, double spread) {
    if (s.centroid) {
      require_dim(*s.centroid, dim, "synth centroid");
      return normalize_frame(*s.centroid);
    }
    if (s.centroid_key) {
      auto it = keyed.find(*s.centroid_key);
      if (it != keyed.end()) return it->second;
    }
    Vector c = parent ? normalize_frame(*parent + spread * rng.unit_vector(dim)) : fresh();
    if (s.centroid_key) keyed.emplace(*s.centroid_key, c);
    return c;
  }
};

struct Leaf {
  const SynthSegment* segment;
  Vector centroid;
  std::uint32_t group;
};

inline void collect_leaves(const SynthSegment& s, const Vector& centroid, std::uint32_t group,
                           CentroidDraw& draw, std::vector<Leaf>& out) {
  if (s.children.empty()) {
    if (s.length < 1) throw ConfigError("synth segment length must be >= 1");
    out.push_back({&s, centroid, group});
    return;
  }
  for (const auto& child : s.children) {
    const Vector c = draw.resolve(child, &centroid, s.child_spread);
    collect_leaves(child, c, group, draw, out);
  }
}

}  // namespace detail

inline SynthStream generate_stream(const SynthSpec& spec) {
  if (spec.dim < 1) throw ConfigError("synth dim must be >= 1");
  if (spec.segments.empty()) throw ConfigError("synth spec has no segments");
  Rng rng(spec.seed);
  detail::CentroidDraw draw{rng, spec.dim, spec.min_centroid_separation, {}, {}};

  std::vector<detail::Leaf> leaves;
  for (std::size_t g = 0; g < spec.segments.size(); ++g) {
    const auto& s = spec.segments[g];
    if (s.noise_sigma < 0.0 || s.drift_rate < 0.0) throw ConfigError("synth noise/drift must be >= 0");
    const Vector c = draw.resolve(s, nullptr, 0.0);
    detail::collect_leaves(s, c, static_cast<std::uint32_t>(g), draw, leaves);
  }

  SynthStream out;
  std::uint64_t t = 0;
  std::uint32_t last_group = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto& leaf = leaves[i];
    const SynthSegment& s = *leaf.segment;
    if (s.noise_sigma < 0.0 || s.drift_rate < 0.0) throw ConfigError("synth noise/drift must be >= 0");
    if (t > 0) {
      out.truth.boundary_frames.push_back(t);
      if (leaf.group != last_group) out.truth.group_boundaries.push_back(t);
    }
    last_group = leaf.group;
    const Vector direction = rng.unit_vector(spec.dim);
    for (std::uint32_t k = 0; k < s.length; ++k, ++t) {
      Vector v = leaf.centroid;
      if (s.drift_rate > 0.0) v += s.drift_rate * static_cast<double>(k) * direction;
      if (s.noise_sigma > 0.0) v += rng.normal_vector(spec.dim, s.noise_sigma);
      out.frames.push_back({t, normalize_frame(v)});
      out.truth.segment_ids.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------- corpora

enum class CorpusKind { clean, drift, nested };

inline std::string_view to_string(CorpusKind k) {
  switch (k) {
    case CorpusKind::clean: return "clean";
    case CorpusKind::drift: return "drift";
    case CorpusKind::nested: return "nested";
  }
  return "unknown";
}

inline CorpusKind parse_corpus_kind(std::string_view name) {
  if (name == "clean") return CorpusKind::clean;
  if (name == "drift") return CorpusKind::drift;
  if (name == "nested") return CorpusKind::nested;
  throw ConfigError("unknown corpus kind '" + std::string(name) + "'");
}

struct CorpusParams {
  CorpusKind kind = CorpusKind::clean;
  std::uint32_t streams = 100;
  std::uint32_t dim = 64;
  std::uint32_t frames = 120;
  double noise_sigma = 0.05;
  double drift_rate = 0.0;
  double max_centroid_cosine = 0.2;
  std::uint32_t min_length = 12;
  std::uint32_t max_length = 30;
  std::uint32_t revisit_pool = 3;  // drift corpus: distinct scene appearances
  double chapter_spread = 0.73;    // nested corpus: scene offset from its chapter
  std::uint64_t seed = 0;

  /// Defaults of each preset.
  static CorpusParams preset(CorpusKind kind) {
    CorpusParams p;
    p.kind = kind;
    if (kind == CorpusKind::drift) {
      p.noise_sigma = 0.085;
      p.drift_rate = 0.015;
    } else if (kind == CorpusKind::nested) {
      p.frames = 100;
      p.noise_sigma = 0.08;
      p.min_length = 6;
      p.max_length = 14;
    }
    return p;
  }
};

namespace detail {

// Random lengths in [lo, hi] summing to total; a short remainder is merged
// into the last piece.
inline std::vector<std::uint32_t> split_lengths(Rng& rng, std::uint32_t total, std::uint32_t lo,
                                                std::uint32_t hi) {
  std::vector<std::uint32_t> out;
  std::uint32_t used = 0;
  while (used < total) {
    std::uint32_t len = lo + static_cast<std::uint32_t>(rng.index(hi - lo + 1));
    len = std::min(len, total - used);
    if (total - used - len < lo) len = total - used;
    out.push_back(len);
    used += len;
  }
  return out;
}

}  // namespace detail

/// Spec of stream `index` of a corpus; every stream gets its own seed.
inline SynthSpec corpus_stream_spec(const CorpusParams& p, std::uint32_t index) {
  if (p.min_length < 1 || p.max_length < p.min_length)
    throw ConfigError("corpus: need 1 <= min_length <= max_length");
  if (p.frames < 1) throw ConfigError("corpus: frames must be >= 1");
  const std::uint64_t seed = mix_seed(p.seed, index);
  Rng layout(mix_seed(seed, 0xC0FFEE));
  SynthSpec spec;
  spec.dim = p.dim;
  spec.seed = seed;
  spec.min_centroid_separation = p.max_centroid_cosine;

  auto leaf = [&](std::uint32_t len) {
    SynthSegment s;
    s.length = len;
    s.noise_sigma = p.noise_sigma;
    s.drift_rate = p.drift_rate;
    return s;
  };

  switch (p.kind) {
    case CorpusKind::clean:
      for (auto len : detail::split_lengths(layout, p.frames, p.min_length, p.max_length))
        spec.segments.push_back(leaf(len));
      break;
    case CorpusKind::drift: {
      // Scenes cycle through a small pool of appearances; neighbours differ.
      std::uint64_t prev = ~0ULL;
      for (auto len : detail::split_lengths(layout, p.frames, p.min_length, p.max_length)) {
        SynthSegment s = leaf(len);
        std::uint64_t key = layout.index(std::max<std::uint32_t>(p.revisit_pool, 2));
        while (key == prev) key = layout.index(std::max<std::uint32_t>(p.revisit_pool, 2));
        s.centroid_key = key;
        prev = key;
        spec.segments.push_back(std::move(s));
      }
      break;
    }
    case CorpusKind::nested: {
      // Chapters of 2-4 scenes.
      const auto scenes = detail::split_lengths(layout, p.frames, p.min_length, p.max_length);
      std::size_t i = 0;
      while (i < scenes.size()) {
        SynthSegment chapter;
        chapter.child_spread = p.chapter_spread;
        const std::size_t n = std::min<std::size_t>(2 + layout.index(3), scenes.size() - i);
        for (std::size_t k = 0; k < n; ++k) chapter.children.push_back(leaf(scenes[i + k]));
        i += n;
        spec.segments.push_back(std::move(chapter));
      }
      break;
    }
  }
  return spec;
}

// ---------------------------------------------------------------- baselines

inline std::vector<Vector> vectors_of(std::span<const FrameEmbedding> frames) {
  std::vector<Vector> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.vector);
  return out;
}

/// Maximal runs of equal labels.
inline std::vector<FrameSpan> runs_to_segments(std::span<const std::uint32_t> labels) {
  std::vector<FrameSpan> out;
  if (labels.empty()) return out;
  std::uint64_t start = 0;
  for (std::uint64_t t = 1; t < labels.size(); ++t) {
    if (labels[t] != labels[t - 1]) {
      out.push_back({start, t - 1});
      start = t;
    }
  }
  out.push_back({start, labels.size() - 1});
  return out;
}

/// Start frame of every segment but the first.
inline std::vector<std::uint64_t> boundaries_of(std::span<const FrameSpan> segments) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 1; i < segments.size(); ++i) out.push_back(segments[i].first);
  return out;
}

struct KMeansResult {
  std::vector<std::uint32_t> labels;
  std::vector<Vector> centroids;
  double inertia = 0.0;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding (squared Euclidean distance).
inline KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::uint64_t seed,
                           int max_iterations = 100) {
  const std::size_t n = points.size();
  if (k < 1 || k > n) throw InvalidArgument("kmeans: k must lie in [1, frame count]");
  Rng rng(seed);
  KMeansResult r;
  r.centroids.push_back(points[rng.index(n)]);
  std::vector<double> d2(n);
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = (points[i] - r.centroids.front()).squaredNorm();
      for (std::size_t c = 1; c < r.centroids.size(); ++c)
        best = std::min(best, (points[i] - r.centroids[c]).squaredNorm());
      d2[i] = best;
      total += best;
    }
    std::size_t pick = n - 1;
    if (total <= 0.0) {
      pick = rng.index(n);
    } else {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    }
    r.centroids.push_back(points[pick]);
  }

  r.labels.assign(n, 0);
  bool first = true;
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    bool changed = first;
    first = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      double best_d = (points[i] - r.centroids[0]).squaredNorm();
      for (std::size_t c = 1; c < k; ++c) {
        const double d = (points[i] - r.centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      if (best != r.labels[i]) changed = true;
      r.labels[i] = best;
    }
    if (!changed) break;
    std::vector<Vector> sums(k, Vector::Zero(points[0].size()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[r.labels[i]] += points[i];
      ++counts[r.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) r.centroids[c] = sums[c] / static_cast<double>(counts[c]);
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.inertia += (points[i] - r.centroids[r.labels[i]]).squaredNorm();
  return r;
}

/// Offline clustering baseline: k-means over all frames, then label runs.
/// Not causal.
inline std::vector<FrameSpan> baseline_cluster_segment(std::span<const Vector> frames, std::size_t k,
                                                       std::uint64_t seed) {
  const KMeansResult r = kmeans(frames, k, seed);
  return runs_to_segments(r.labels);
}

/// Causal adjacent-similarity baseline: boundary between t and t+1 when
/// cos(v_t, v_{t+1}) < sim_threshold.
inline std::vector<FrameSpan> baseline_threshold_segment(std::span<const Vector> frames,
                                                         double sim_threshold) {
  if (!(sim_threshold >= -1.0 && sim_threshold <= 1.0))
    throw InvalidArgument("baseline_threshold_segment: threshold outside [-1, 1]");
  std::vector<FrameSpan> out;
  if (frames.empty()) return out;
  std::uint64_t start = 0;
  for (std::uint64_t t = 0; t + 1 < frames.size(); ++t) {
    if (cosine(frames[t], frames[t + 1]) < sim_threshold) {
      out.push_back({start, t});
      start = t + 1;
    }
  }
  out.push_back({start, frames.size() - 1});
  return out;
}

// ---------------------------------------------------------------- metrics

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
};

/// Greedy nearest matching: candidate (predicted, true) pairs within
/// ±tolerance are taken in order of distance, each boundary used once.
inline BoundaryScore boundary_f1(std::span<const std::uint64_t> predicted,
                                 std::span<const std::uint64_t> truth, std::uint64_t tolerance) {
  BoundaryScore s;
  if (predicted.empty() && truth.empty()) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  struct Pair {
    std::uint64_t dist;
    std::size_t p;
    std::size_t t;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const std::uint64_t d = predicted[i] > truth[j] ? predicted[i] - truth[j] : truth[j] - predicted[i];
      if (d <= tolerance) pairs.push_back({d, i, j});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.p != b.p) return a.p < b.p;
    return a.t < b.t;
  });
  std::vector<bool> used_p(predicted.size(), false), used_t(truth.size(), false);
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_t[pr.t]) continue;
    used_p[pr.p] = used_t[pr.t] = true;
    ++s.matched;
  }
  const double m = static_cast<double>(s.matched);
  s.precision = predicted.empty() ? 0.0 : m / static_cast<double>(predicted.size());
  s.recall = truth.empty() ? 1.0 : m / static_cast<double>(truth.size());
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

struct CohesionMetrics {
  std::optional<double> mean_intra_similarity;
  std::optional<double> mean_inter_similarity;
  std::optional<double> gap;
};

/// Pairwise-mean cosine statistics. Intra averages over segments with at
/// least two frames; inter averages over adjacent segment pairs.
inline CohesionMetrics cohesion_metrics(std::span<const Vector> frames, std::span<const FrameSpan> segments) {
  std::vector<Vector> unit;
  unit.reserve(frames.size());
  for (const auto& f : frames) unit.push_back(normalize_frame(f));
  for (const auto& s : segments)
    if (s.last < s.first || s.last >= unit.size())
      throw InvalidArgument("cohesion_metrics: segment outside the stream");

  CohesionMetrics m;
  double intra_sum = 0.0;
  std::size_t intra_n = 0;
  for (const auto& s : segments) {
    if (s.last == s.first) continue;
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::uint64_t i = s.first; i <= s.last; ++i)
      for (std::uint64_t j = i + 1; j <= s.last; ++j, ++pairs) acc += unit[i].dot(unit[j]);
    intra_sum += acc / static_cast<double>(pairs);
    ++intra_n;
  }
  if (intra_n) m.mean_intra_similarity = intra_sum / static_cast<double>(intra_n);

  if (segments.size() >= 2) {
    double inter_sum = 0.0;
    for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
      const auto& a = segments[k];
      const auto& b = segments[k + 1];
      double acc = 0.0;
      for (std::uint64_t i = a.first; i <= a.last; ++i)
        for (std::uint64_t j = b.first; j <= b.last; ++j) acc += unit[i].dot(unit[j]);
      inter_sum += acc / static_cast<double>(a.last - a.first + 1) / static_cast<double>(b.last - b.first + 1);
    }
    m.mean_inter_similarity = inter_sum / static_cast<double>(segments.size() - 1);
  }
  if (m.mean_intra_similarity && m.mean_inter_similarity)
    m.gap = *m.mean_intra_similarity - *m.mean_inter_similarity;
  return m;
}

}  // namespace ees
