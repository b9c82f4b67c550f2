#pragma once

#include <cstdint>
#include <vector>

#include "ees/engine.hpp"

namespace ees {

struct TrainingResult {
  PredictorState state;
  std::vector<double> epoch_loss;  // mean L2 loss per epoch, at prediction points
};

/// Replays every stream through the segmentation loop with online learning,
/// `epochs` times. Deterministic given config.predictor.seed.
inline TrainingResult train_predictor(const std::vector<std::vector<FrameEmbedding>>& corpus,
                                      EesConfig config, std::uint32_t epochs) {
  if (corpus.empty()) throw InvalidArgument("train_predictor: empty corpus");
  Eigen::Index dim = -1;
  for (const auto& stream : corpus) {
    for (const auto& f : stream) {
      if (dim < 0) dim = f.vector.size();
      if (f.vector.size() != dim) throw InvalidArgument("train_predictor: dim mismatch across streams");
    }
  }
  if (dim <= 0) throw InvalidArgument("train_predictor: corpus has no frames");

  config.sync_predictor(static_cast<std::uint32_t>(dim));
  config.online_learning = true;
  config.retain_tokens = false;
  config.retain_hierarchy = false;

  TrainingResult result{PredictorState::initialize(config.predictor), {}};
  for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
    double sum = 0.0;
    std::uint64_t count = 0;
    for (const auto& stream : corpus) {
      Engine engine(config, std::move(result.state));
      for (const auto& f : stream) engine.ingest(f);
      sum += engine.loss_sum();
      count += engine.loss_count();
      result.state = engine.predictor();
    }
    result.epoch_loss.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  return result;
}

}  // namespace ees
