// Segments a small synthetic stream with two chapters and prints the
// hierarchy plus one summary per top-level event.

#include <cstdio>

#include "ees/ees.hpp"

int main() {
  using namespace ees;

  SynthSpec spec;
  spec.dim = 16;
  spec.seed = 7;
  spec.min_centroid_separation = 0.2;
  for (int chapter = 0; chapter < 2; ++chapter) {
    SynthSegment c;
    c.child_spread = 0.8;
    for (std::uint32_t len : {8u, 6u, 10u}) {
      SynthSegment scene;
      scene.length = len;
      scene.noise_sigma = 0.03;
      c.children.push_back(scene);
    }
    spec.segments.push_back(c);
  }
  const SynthStream stream = generate_stream(spec);

  // scenes of one chapter are close, so level 1 needs a finer threshold than
  // the levels that should merge them
  EesConfig cfg;
  cfg.thresholds = {0.25, 0.6, 0.6};
  cfg.sync_predictor(spec.dim);
  Engine engine(cfg);
  for (const auto& f : stream.frames) {
    for (const auto& seg : engine.ingest(f))
      std::printf("t=%3llu  closed level %d segment [%llu, %llu]  peak error %.3f\n",
                  static_cast<unsigned long long>(f.index), seg.level,
                  static_cast<unsigned long long>(seg.start_frame),
                  static_cast<unsigned long long>(seg.end_frame), seg.error_peak);
  }

  const EventHierarchy h = engine.flush();
  const HierarchyStats stats = hierarchy_stats(h);
  std::printf("\nsegments per level:");
  for (auto n : stats.counts) std::printf(" %llu", static_cast<unsigned long long>(n));
  std::printf("\ncompression: %.2f frames per top-level event\n", stats.compression.value_or(0.0));

  std::printf("planted boundaries:");
  for (auto b : stream.truth.boundary_frames) std::printf(" %llu", static_cast<unsigned long long>(b));
  std::printf("\nplanted chapters start at:");
  for (auto b : stream.truth.group_boundaries) std::printf(" %llu", static_cast<unsigned long long>(b));
  std::printf("\n\n");

  const ConsolidationResult result = consolidate_all(h);
  for (std::size_t i = 0; i < result.summaries.size(); ++i) {
    const auto& s = result.summaries[i];
    std::printf("event %zu frames [%llu, %llu]  |abstract|=%.3f  cos(coarse, fine)=%.3f\n", i,
                static_cast<unsigned long long>(s.event_span.first),
                static_cast<unsigned long long>(s.event_span.last), s.abstract.norm(),
                cosine(s.coarse, s.fine));
  }
}
