#pragma once

// Benchmark harness: EES versus the threshold and clustering baselines on
// synthetic corpora.

#include <chrono>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ees/engine.hpp"
#include "ees/hierarchy_io.hpp"
#include "ees/synth.hpp"

namespace ees {

struct BenchOptions {
  EesConfig ees;
  std::optional<double> sim_threshold;  // defaults to 1 - thresholds[0]
  std::optional<std::size_t> clusters;  // defaults to the planted segment count
  std::uint64_t tolerance = 1;
  std::uint64_t seed = 0;

  double resolved_sim_threshold() const {
    return sim_threshold ? *sim_threshold : 1.0 - ees.thresholds.front();
  }
};

struct MethodMetrics {
  BoundaryScore boundaries;
  CohesionMetrics cohesion;
  std::size_t segments = 0;
  std::optional<double> compression;  // EES only
};

struct StreamReport {
  std::string id;
  std::size_t frames = 0;
  std::size_t planted_segments = 0;
  MethodMetrics ees;
  MethodMetrics threshold;
  MethodMetrics cluster;
  std::vector<std::uint64_t> ees_level_counts;
  double seconds = 0.0;  // wall clock; reported separately
};

/// Level-1 segments of the flushed hierarchy as frame spans.
inline std::vector<FrameSpan> level1_spans(const EventHierarchy& h) {
  std::vector<FrameSpan> out;
  if (h.levels.empty()) return out;
  for (const auto& s : h.levels.front()) out.push_back({s.start_frame, s.end_frame});
  return out;
}

inline EventHierarchy segment_stream(const EesConfig& cfg, std::span<const FrameEmbedding> frames,
                                     const PredictorState* predictor = nullptr) {
  EesConfig c = cfg;
  c.retain_tokens = false;
  c.retain_hierarchy = true;
  Engine engine = predictor ? Engine(c, *predictor) : Engine(c);
  for (const auto& f : frames) engine.ingest(f);
  return engine.flush();
}

inline StreamReport evaluate_stream(const std::string& id, std::span<const FrameEmbedding> frames,
                                    const GroundTruth& truth, const BenchOptions& opt,
                                    const PredictorState* predictor = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  StreamReport r;
  r.id = id;
  r.frames = frames.size();
  r.planted_segments = truth.boundary_frames.size() + 1;
  const std::vector<Vector> vecs = vectors_of(frames);

  EesConfig cfg = opt.ees;
  cfg.sync_predictor(static_cast<std::uint32_t>(vecs.front().size()));
  const EventHierarchy h = segment_stream(cfg, frames, predictor);
  const auto ees_spans = level1_spans(h);
  const HierarchyStats stats = hierarchy_stats(h);
  r.ees.segments = ees_spans.size();
  r.ees.boundaries = boundary_f1(boundaries_of(ees_spans), truth.boundary_frames, opt.tolerance);
  r.ees.cohesion = cohesion_metrics(vecs, ees_spans);
  r.ees.compression = stats.compression;
  r.ees_level_counts = stats.counts;

  const auto thr = baseline_threshold_segment(vecs, opt.resolved_sim_threshold());
  r.threshold.segments = thr.size();
  r.threshold.boundaries = boundary_f1(boundaries_of(thr), truth.boundary_frames, opt.tolerance);
  r.threshold.cohesion = cohesion_metrics(vecs, thr);

  const std::size_t k = std::min(opt.clusters ? *opt.clusters : r.planted_segments, vecs.size());
  const auto clu = baseline_cluster_segment(vecs, k, opt.seed);
  r.cluster.segments = clu.size();
  r.cluster.boundaries = boundary_f1(boundaries_of(clu), truth.boundary_frames, opt.tolerance);
  r.cluster.cohesion = cohesion_metrics(vecs, clu);

  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// True when a's gap is present and strictly exceeds b's (absent counts as
/// losing).
inline bool gap_exceeds(const MethodMetrics& a, const MethodMetrics& b) {
  if (!a.cohesion.gap) return false;
  if (!b.cohesion.gap) return true;
  return *a.cohesion.gap > *b.cohesion.gap;
}

struct BenchSummary {
  double ees_mean_f1 = 0.0;
  double threshold_mean_f1 = 0.0;
  double cluster_mean_f1 = 0.0;
  double ees_beats_threshold_gap = 0.0;  // fraction of streams
  double ees_beats_cluster_gap = 0.0;
};

inline BenchSummary summarize(const std::vector<StreamReport>& reports) {
  BenchSummary s;
  if (reports.empty()) return s;
  for (const auto& r : reports) {
    s.ees_mean_f1 += r.ees.boundaries.f1;
    s.threshold_mean_f1 += r.threshold.boundaries.f1;
    s.cluster_mean_f1 += r.cluster.boundaries.f1;
    s.ees_beats_threshold_gap += gap_exceeds(r.ees, r.threshold) ? 1.0 : 0.0;
    s.ees_beats_cluster_gap += gap_exceeds(r.ees, r.cluster) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(reports.size());
  s.ees_mean_f1 /= n;
  s.threshold_mean_f1 /= n;
  s.cluster_mean_f1 /= n;
  s.ees_beats_threshold_gap /= n;
  s.ees_beats_cluster_gap /= n;
  return s;
}

namespace detail {

inline ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

inline ordered_json method_json(const MethodMetrics& m) {
  ordered_json j;
  j["precision"] = m.boundaries.precision;
  j["recall"] = m.boundaries.recall;
  j["f1"] = m.boundaries.f1;
  j["segments"] = m.segments;
  j["intra"] = optional_json(m.cohesion.mean_intra_similarity);
  j["inter"] = optional_json(m.cohesion.mean_inter_similarity);
  j["gap"] = optional_json(m.cohesion.gap);
  return j;
}

}  // namespace detail

/// Deterministic metrics report; timing lives in timing_json().
inline ordered_json report_json(const std::vector<StreamReport>& reports, const ordered_json& metadata) {
  ordered_json j;
  j["metadata"] = metadata;
  const BenchSummary s = summarize(reports);
  ordered_json sum;
  sum["streams"] = reports.size();
  sum["ees_mean_f1"] = s.ees_mean_f1;
  sum["threshold_mean_f1"] = s.threshold_mean_f1;
  sum["cluster_mean_f1"] = s.cluster_mean_f1;
  sum["ees_gap_beats_threshold_fraction"] = s.ees_beats_threshold_gap;
  sum["ees_gap_beats_cluster_fraction"] = s.ees_beats_cluster_gap;
  j["summary"] = std::move(sum);
  ordered_json streams = ordered_json::array();
  for (const auto& r : reports) {
    ordered_json e;
    e["id"] = r.id;
    e["frames"] = r.frames;
    e["planted_segments"] = r.planted_segments;
    ordered_json ees = detail::method_json(r.ees);
    ees["compression"] = detail::optional_json(r.ees.compression);
    ees["level_counts"] = r.ees_level_counts;
    e["ees"] = std::move(ees);
    e["threshold"] = detail::method_json(r.threshold);
    e["cluster"] = detail::method_json(r.cluster);
    streams.push_back(std::move(e));
  }
  j["streams"] = std::move(streams);
  return j;
}

inline ordered_json timing_json(const std::vector<StreamReport>& reports) {
  ordered_json j = ordered_json::array();
  for (const auto& r : reports) j.push_back({{"id", r.id}, {"seconds", r.seconds}});
  return ordered_json{{"wall_clock_per_stream", std::move(j)}};
}

inline std::string report_csv(const std::vector<StreamReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "stream,method,precision,recall,f1,segments,intra,inter,gap,compression\n";
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    s.precision(17);
    if (v) s << *v;
    return s.str();
  };
  for (const auto& r : reports) {
    auto row = [&](const char* name, const MethodMetrics& m) {
      out << r.id << ',' << name << ',' << m.boundaries.precision << ',' << m.boundaries.recall << ','
          << m.boundaries.f1 << ',' << m.segments << ',' << opt(m.cohesion.mean_intra_similarity) << ','
          << opt(m.cohesion.mean_inter_similarity) << ',' << opt(m.cohesion.gap) << ','
          << opt(m.compression) << '\n';
    };
    row("ees", r.ees);
    row("threshold", r.threshold);
    row("cluster", r.cluster);
  }
  return out.str();
}

}  // namespace ees
