#pragma once

// Abstraction (Φ) and prediction (Ψ) modules, the cosine prediction error,
// and online L2 fitting of the prediction modules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ees/rng.hpp"
#include "ees/types.hpp"

namespace ees {

enum class PredictorKind : std::uint32_t { mean_pool_identity = 0, linear_ar = 1, mlp = 2 };

inline std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::mean_pool_identity: return "mean_pool_identity";
    case PredictorKind::linear_ar: return "linear_ar";
    case PredictorKind::mlp: return "mlp";
  }
  return "unknown";
}

inline PredictorKind parse_predictor_kind(std::string_view name) {
  if (name == "mean_pool_identity" || name == "identity" || name == "mean_pool")
    return PredictorKind::mean_pool_identity;
  if (name == "linear_ar" || name == "linear") return PredictorKind::linear_ar;
  if (name == "mlp") return PredictorKind::mlp;
  throw ConfigError("unknown predictor kind '" + std::string(name) + "'");
}

struct PredictorConfig {
  PredictorKind kind = PredictorKind::mean_pool_identity;
  std::uint32_t dim = 0;
  std::uint32_t levels = 3;
  std::uint32_t window_cap = 32;
  std::uint32_t hidden = 32;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;

  bool trainable() const { return kind != PredictorKind::mean_pool_identity; }

  void validate() const {
    if (dim < 1) throw ConfigError("predictor: dim must be >= 1");
    if (levels < 1) throw ConfigError("predictor: levels must be >= 1");
    if (window_cap < 1) throw ConfigError("predictor: window_cap must be >= 1");
    if (kind == PredictorKind::mlp && hidden < 1) throw ConfigError("predictor: hidden must be >= 1");
    if (trainable() && !(learning_rate > 0.0 && std::isfinite(learning_rate)))
      throw ConfigError("predictor: learning_rate must be > 0");
  }

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

/// One hidden layer with tanh: y = W2 tanh(W1 x + b1) + b2.
struct Mlp {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  Eigen::Index inputs() const { return w1.cols(); }
  Eigen::Index outputs() const { return w2.rows(); }

  Vector forward(const Vector& x) const {
    const Vector h = (w1 * x + b1).array().tanh().matrix();
    return w2 * h + b2;
  }

  static Mlp zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
    return {Matrix::Zero(hidden, in), Vector::Zero(hidden), Matrix::Zero(out, hidden),
            Vector::Zero(out)};
  }

  // Uniform in ±1/sqrt(fan_in) per layer.
  static Mlp random(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng) {
    const double b_in = 1.0 / std::sqrt(static_cast<double>(in));
    const double b_hid = 1.0 / std::sqrt(static_cast<double>(hidden));
    Mlp m;
    m.w1 = rng.uniform_matrix(hidden, in, b_in);
    m.b1 = rng.uniform_vector(hidden, b_in);
    m.w2 = rng.uniform_matrix(out, hidden, b_hid);
    m.b2 = rng.uniform_vector(out, b_hid);
    return m;
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }
};

struct MlpGradient {
  double loss = 0.0;
  Mlp grad;
};

/// Loss ||mlp(x) - target||^2 and its gradient with respect to every parameter.
inline MlpGradient mlp_loss_gradient(const Mlp& m, const Vector& x, const Vector& target) {
  const Vector h = (m.w1 * x + m.b1).array().tanh().matrix();
  const Vector y = m.w2 * h + m.b2;
  const Vector dy = 2.0 * (y - target);
  MlpGradient g;
  g.loss = (y - target).squaredNorm();
  g.grad.w2 = dy * h.transpose();
  g.grad.b2 = dy;
  const Vector dh = m.w2.transpose() * dy;
  const Vector da = dh.array() * (1.0 - h.array().square());
  g.grad.w1 = da * x.transpose();
  g.grad.b1 = da;
  return g;
}

/// Affine map on concatenated level-1..l latents.
struct Linear {
  Matrix w;
  Vector b;

  bool all_finite() const { return w.allFinite() && b.allFinite(); }
};

/// Parameters of one hierarchy level. Only the blocks used by the configured
/// kind are allocated.
struct LevelParams {
  Linear linear;    // linear_ar: Ψ
  Mlp abstraction;  // mlp: Φ
  Mlp prediction;   // mlp: Ψ
};

struct PredictorState {
  PredictorConfig config;
  std::vector<LevelParams> levels;
  std::uint64_t updates = 0;
  std::uint64_t skipped_updates = 0;
  bool last_update_skipped = false;

  /// Fresh parameters drawn from config.seed.
  static PredictorState initialize(const PredictorConfig& config) {
    config.validate();
    PredictorState s;
    s.config = config;
    s.levels.resize(config.levels);
    const Eigen::Index d = config.dim;
    const Eigen::Index h = config.hidden;
    Rng rng(config.seed);
    for (std::uint32_t l = 1; l <= config.levels; ++l) {
      auto& p = s.levels[l - 1];
      const Eigen::Index in = d * l;
      switch (config.kind) {
        case PredictorKind::mean_pool_identity: break;
        case PredictorKind::linear_ar: {
          const double bound = 1.0 / std::sqrt(static_cast<double>(in));
          p.linear.w = rng.uniform_matrix(d, in, bound);
          p.linear.b = rng.uniform_vector(d, bound);
          break;
        }
        case PredictorKind::mlp:
          p.abstraction = Mlp::random(d, h, d, rng);
          p.prediction = Mlp::random(in, h, d, rng);
          break;
      }
    }
    return s;
  }

  const LevelParams& at(int level) const { return levels.at(static_cast<std::size_t>(level - 1)); }
  LevelParams& at(int level) { return levels.at(static_cast<std::size_t>(level - 1)); }
};

namespace detail {

inline void check_level(const PredictorState& state, int level) {
  if (level < 1 || level > static_cast<int>(state.config.levels))
    throw InvalidArgument("predictor: level " + std::to_string(level) + " outside [1, " +
                          std::to_string(state.config.levels) + "]");
}

inline Vector mean_of(std::span<const Vector> window, Eigen::Index dim) {
  Vector acc = Vector::Zero(dim);
  for (const auto& v : window) {
    require_dim(v, dim, "abstract");
    acc += v;
  }
  return acc / static_cast<double>(window.size());
}

inline Vector concat(std::span<const Vector> parts, Eigen::Index dim) {
  Vector x(dim * static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_dim(parts[i], dim, "predict_next");
    x.segment(static_cast<Eigen::Index>(i) * dim, dim) = parts[i];
  }
  return x;
}

}  // namespace detail

/// Φ^(l): summarizes a window of level-(l-1) tokens (frames when l = 1).
inline Vector abstract(int level, std::span<const Vector> window, const PredictorState& state) {
  detail::check_level(state, level);
  if (window.empty()) throw InvalidArgument("abstract: empty window");
  if (window.size() > state.config.window_cap)
    throw InvalidArgument("abstract: window longer than window_cap");
  const Vector mean = detail::mean_of(window, state.config.dim);
  if (state.config.kind == PredictorKind::mlp) return state.at(level).abstraction.forward(mean);
  return mean;
}

/// Ψ^(l): predicts the next level-l token from z^(1..l).
inline Vector predict_next(int level, std::span<const Vector> latents, const PredictorState& state) {
  detail::check_level(state, level);
  if (latents.size() != static_cast<std::size_t>(level))
    throw InvalidArgument("predict_next: expected " + std::to_string(level) + " latents, got " +
                          std::to_string(latents.size()));
  const Eigen::Index d = state.config.dim;
  switch (state.config.kind) {
    case PredictorKind::mean_pool_identity:
      // Persistence: only z^(l) is used.
      for (const auto& z : latents) require_dim(z, d, "predict_next");
      return latents.back();
    case PredictorKind::linear_ar: {
      const auto& p = state.at(level).linear;
      return p.w * detail::concat(latents, d) + p.b;
    }
    case PredictorKind::mlp:
      return state.at(level).prediction.forward(detail::concat(latents, d));
  }
  throw InvalidArgument("predict_next: unknown predictor kind");
}

/// Cosine distance 1 - cos(predicted, actual), clamped to [0, 2].
inline double prediction_error(const Vector& predicted, const Vector& actual) {
  if (predicted.size() != actual.size())
    throw InvalidArgument("prediction_error: dimension mismatch");
  if (!predicted.allFinite() || !actual.allFinite())
    throw DegenerateInputError("prediction_error: non-finite input");
  const double np = predicted.norm();
  const double na = actual.norm();
  if (np < 1e-12 || na < 1e-12) throw DegenerateInputError("prediction_error: zero vector");
  const double e = 1.0 - predicted.dot(actual) / (np * na);
  return std::clamp(e, 0.0, 2.0);
}

/// One SGD step on ||Ψ^(l)(inputs) - observed||^2. Returns the pre-step loss.
/// Non-finite gradients leave the parameters untouched and set
/// state.last_update_skipped.
inline double online_update(int level, std::span<const Vector> inputs, const Vector& observed,
                            PredictorState& state) {
  detail::check_level(state, level);
  state.last_update_skipped = false;
  if (!state.config.trainable()) return 0.0;
  if (inputs.size() != static_cast<std::size_t>(level))
    throw InvalidArgument("online_update: expected " + std::to_string(level) + " latents");
  const Eigen::Index d = state.config.dim;
  require_dim(observed, d, "online_update");
  const Vector x = detail::concat(inputs, d);
  const double lr = state.config.learning_rate;
  auto skip = [&](double loss) {
    state.last_update_skipped = true;
    ++state.skipped_updates;
    return loss;
  };

  if (state.config.kind == PredictorKind::linear_ar) {
    auto& p = state.at(level).linear;
    const Vector residual = p.w * x + p.b - observed;
    const double loss = residual.squaredNorm();
    const Vector dy = 2.0 * residual;
    const Matrix gw = dy * x.transpose();
    if (!dy.allFinite() || !gw.allFinite()) return skip(loss);
    p.w -= lr * gw;
    p.b -= lr * dy;
    ++state.updates;
    return loss;
  }

  auto& m = state.at(level).prediction;
  const MlpGradient g = mlp_loss_gradient(m, x, observed);
  if (!std::isfinite(g.loss) || !g.grad.all_finite()) return skip(g.loss);
  m.w1 -= lr * g.grad.w1;
  m.b1 -= lr * g.grad.b1;
  m.w2 -= lr * g.grad.w2;
  m.b2 -= lr * g.grad.b2;
  ++state.updates;
  return g.loss;
}

}  // namespace ees
