#pragma once

// Independent reference implementations and fixtures shared by the test
// binaries. Oracles here use plain std::vector<double> arithmetic and frame
// spans instead of the library's Eigen code paths and ordinal lookups.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ees/ees.hpp"

extern char** environ;

namespace oracle {

using Vec = std::vector<double>;

inline Vec to_vec(const ees::Vector& v) { return Vec(v.data(), v.data() + v.size()); }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// softmax(scale * q.k_i) weighted sum of v_i, identity projections.
inline Vec attention(const Vec& q, const std::vector<Vec>& keys, const std::vector<Vec>& values, double scale) {
  std::vector<double> logits;
  for (const auto& k : keys) logits.push_back(scale * dot(q, k));
  double top = logits[0];
  for (double l : logits) top = std::max(top, l);
  double z = 0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  Vec out(q.size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += logits[i] / z * values[i][c];
  return out;
}

inline std::size_t argmax_error(const ees::EventSegment& s) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    if (s.tokens[i].error > s.tokens[best].error) best = i;
  return best;
}

// Summary of one segment: level 1 attends from the essential token to the
// rest; higher levels attend from the essential child's summary over all
// child summaries. Children are found by frame-span containment.
inline Vec summary(const ees::EventHierarchy& h, std::size_t li, const ees::EventSegment& seg, double scale) {
  const std::size_t ess = argmax_error(seg);
  if (li == 0) {
    if (seg.tokens.size() == 1) return to_vec(seg.tokens[0].vector);
    std::vector<Vec> rest;
    for (std::size_t i = 0; i < seg.tokens.size(); ++i)
      if (i != ess) rest.push_back(to_vec(seg.tokens[i].vector));
    return attention(to_vec(seg.tokens[ess].vector), rest, rest, scale);
  }
  std::vector<Vec> children;
  for (const auto& c : h.levels[li - 1])
    if (c.start_frame >= seg.start_frame && c.end_frame <= seg.end_frame)
      children.push_back(summary(h, li - 1, c, scale));
  return attention(children.at(ess), children, children, scale);
}

inline Vec mean(const ees::EventSegment& s) {
  Vec m(static_cast<std::size_t>(s.tokens.front().vector.size()), 0.0);
  for (const auto& t : s.tokens)
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += t.vector[static_cast<Eigen::Index>(c)];
  for (double& x : m) x /= static_cast<double>(s.tokens.size());
  return m;
}

}  // namespace oracle

namespace fixture {

// Random hierarchy with `leaves` level-1 tokens (one per frame) over
// `depth` levels. Each level-(l+1) token is one level-l segment.
inline ees::EventHierarchy random_hierarchy(ees::Rng& rng, std::size_t leaves, std::size_t depth,
                                            Eigen::Index dim) {
  ees::EventHierarchy h(depth);
  // (first_frame, last_frame) of each token at the current level
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (std::uint64_t t = 0; t < leaves; ++t) spans.push_back({t, t});
  for (std::size_t li = 0; li < depth; ++li) {
    const std::size_t n = spans.size();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> next;
    std::size_t i = 0;
    std::uint64_t ordinal = 0;
    while (i < n) {
      const bool last_level = li + 1 == depth;
      std::size_t len = last_level ? 1 + rng.index(std::min<std::size_t>(n - i, 6))
                                   : 1 + rng.index(std::min<std::size_t>(n - i, 4));
      ees::EventSegment s;
      s.level = static_cast<int>(li) + 1;
      s.ordinal = ordinal++;
      s.start = i;
      s.end = i + len - 1;
      s.start_frame = spans[i].first;
      s.end_frame = spans[i + len - 1].second;
      s.finalized = true;
      for (std::size_t k = i; k < i + len; ++k) {
        ees::LatentToken tok;
        tok.level = s.level;
        tok.time = spans[k].second;
        tok.vector = rng.normal_vector(dim);
        // coarse error grid so ties happen
        tok.error = static_cast<double>(rng.index(9)) / 4.0;
        s.tokens.push_back(std::move(tok));
      }
      std::size_t best = 0;
      for (std::size_t k = 1; k < len; ++k)
        if (s.tokens[k].error > s.tokens[best].error) best = k;
      s.essential_index = s.start + best;
      s.error_peak = s.tokens[best].error;
      s.latent = rng.normal_vector(dim);
      next.push_back({s.start_frame, s.end_frame});
      h.levels[li].push_back(std::move(s));
      i += len;
    }
    spans = std::move(next);
  }
  return h;
}

// Frames of `count` steps each at the given one-hot axis, dimension d.
inline std::vector<ees::FrameEmbedding> blocks(Eigen::Index d, const std::vector<std::pair<int, int>>& axis_runs) {
  std::vector<ees::FrameEmbedding> out;
  for (auto [axis, count] : axis_runs)
    for (int k = 0; k < count; ++k) {
      ees::Vector v = ees::Vector::Zero(d);
      v[axis] = 1.0;
      out.push_back({out.size(), v});
    }
  return out;
}

inline ees::EesConfig identity_config(std::uint32_t dim, std::uint32_t levels = 3, double eps = 0.4) {
  ees::EesConfig c;
  c.levels = levels;
  c.thresholds.assign(levels, eps);
  c.sync_predictor(dim);
  return c;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct ProcessResult {
  int exit_code = -1;
};

// Runs argv[0] with the given arguments and waits for it.
inline ProcessResult run(const std::vector<std::string>& args, const std::string& stdout_path = "",
                         const std::string& stderr_path = "/dev/null") {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  if (!stdout_path.empty())
    posix_spawn_file_actions_addopen(&actions, 1, stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, 2, stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = 0;
  ProcessResult r;
  if (posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ) != 0) {
    posix_spawn_file_actions_destroy(&actions);
    return r;
  }
  posix_spawn_file_actions_destroy(&actions);
  int status = 0;
  waitpid(pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace fixture

namespace oracle {

// Largest relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
// over the four parameter blocks of a random MLP, central differences with step h.
inline double mlp_gradient_check(ees::Rng& rng, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                                 double h = 1e-5) {
  ees::Mlp m = ees::Mlp::random(in, hidden, out, rng);
  m.w1 *= 2.0;
  m.w2 *= 2.0;
  const ees::Vector x = rng.normal_vector(in);
  const ees::Vector target = rng.normal_vector(out);
  const ees::MlpGradient g = ees::mlp_loss_gradient(m, x, target);
  auto loss = [&](const ees::Mlp& p) { return (p.forward(x) - target).squaredNorm(); };

  double worst = 0.0;
  auto check = [&](auto member, const auto& analytic) {
    ees::Mlp p = m;
    auto& block = p.*member;
    std::vector<double> a, n;
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      const double saved = block.data()[i];
      block.data()[i] = saved + h;
      const double up = loss(p);
      block.data()[i] = saved - h;
      const double down = loss(p);
      block.data()[i] = saved;
      n.push_back((up - down) / (2 * h));
      a.push_back(analytic.data()[i]);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      na += a[i] * a[i];
      nn += n[i] * n[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale > 1e-12) worst = std::max(worst, std::sqrt(diff) / scale);
  };
  check(&ees::Mlp::w1, g.grad.w1);
  check(&ees::Mlp::b1, g.grad.b1);
  check(&ees::Mlp::w2, g.grad.w2);
  check(&ees::Mlp::b2, g.grad.b2);
  return worst;
}

}  // namespace oracle

namespace fixture {

// Random stream of planted scenes with mixed lengths and noise.
inline std::vector<ees::FrameEmbedding> random_stream(ees::Rng& rng, std::uint32_t dim, std::size_t frames) {
  ees::SynthSpec spec;
  spec.dim = dim;
  spec.seed = rng.next_u64();
  std::size_t used = 0;
  while (used < frames) {
    ees::SynthSegment s;
    s.length = static_cast<std::uint32_t>(std::min<std::size_t>(1 + rng.index(12), frames - used));
    s.noise_sigma = rng.uniform(0.0, 0.4);
    s.drift_rate = rng.uniform() < 0.3 ? rng.uniform(0.0, 0.05) : 0.0;
    used += s.length;
    spec.segments.push_back(s);
  }
  return ees::generate_stream(spec).frames;
}

// JSONL records emitted while ingesting the first `t` frames.
inline std::string emitted_prefix(const ees::EesConfig& cfg, const std::vector<ees::FrameEmbedding>& frames,
                                  std::size_t t) {
  ees::Engine engine(cfg);
  std::string out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto segs = engine.ingest(frames[i]);
    if (i < t)
      for (const auto& s : segs) out += ees::segment_jsonl(s, true);
  }
  return out;
}

// One causality trial: a stream, a cut point, and a rewritten future.
// Returns true when the records emitted up to the cut agree in all runs.
inline bool causality_trial(ees::Rng& rng) {
  const std::uint32_t dim = 4 + static_cast<std::uint32_t>(rng.index(12));
  const std::size_t n = 30 + rng.index(120);
  std::vector<ees::FrameEmbedding> full = random_stream(rng, dim, n);
  const std::size_t t = 1 + rng.index(n);

  ees::EesConfig cfg = identity_config(dim, 1 + static_cast<std::uint32_t>(rng.index(3)), rng.uniform(0.05, 0.8));
  const auto kinds = {ees::PredictorKind::mean_pool_identity, ees::PredictorKind::linear_ar, ees::PredictorKind::mlp};
  cfg.predictor.kind = *(kinds.begin() + rng.index(3));
  cfg.predictor.hidden = 6;
  cfg.predictor.seed = rng.next_u64();
  cfg.online_learning = rng.uniform() < 0.5;
  cfg.window_cap = 1 + static_cast<std::uint32_t>(rng.index(40));
  cfg.sync_predictor(dim);

  std::vector<ees::FrameEmbedding> prefix(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(t));
  std::vector<ees::FrameEmbedding> mutated = prefix;
  const std::size_t extra = rng.index(60);
  for (std::size_t k = 0; k < extra; ++k) mutated.push_back({t + k, rng.normal_vector(dim)});

  const std::string a = emitted_prefix(cfg, full, t);
  return a == emitted_prefix(cfg, prefix, t) && a == emitted_prefix(cfg, mutated, t);
}

}  // namespace fixture

inline void write_hierarchy_jsonl_to(std::string& out, const ees::EventHierarchy& h) {
  std::ostringstream s;
  ees::write_hierarchy_jsonl(s, h, true);
  out += s.str();
}

namespace fixture {

struct OracleCheck {
  double abstract_diff = 0.0;  // max |library - oracle| per component
  double coarse_diff = 0.0;
  bool fine_is_token = true;
  std::size_t events = 0;
};

// Random hierarchy (<= 50 leaves, <= 3 levels) consolidated by the library and
// by the oracle.
inline OracleCheck consolidation_trial(ees::Rng& rng) {
  const std::size_t leaves = 1 + rng.index(50);
  const std::size_t depth = 1 + rng.index(3);
  const Eigen::Index dim = 2 + static_cast<Eigen::Index>(rng.index(8));
  const ees::EventHierarchy h = random_hierarchy(rng, leaves, depth, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  OracleCheck r;
  for (const auto& top : h.levels.back()) {
    const ees::EventSummary s = ees::consolidate_event(h, top);
    const oracle::Vec want = oracle::summary(h, depth - 1, top, scale);
    const oracle::Vec mean = oracle::mean(top);
    for (Eigen::Index c = 0; c < dim; ++c) {
      r.abstract_diff = std::max(r.abstract_diff, std::abs(s.abstract[c] - want[static_cast<std::size_t>(c)]));
      r.coarse_diff = std::max(r.coarse_diff, std::abs(s.coarse[c] - mean[static_cast<std::size_t>(c)]));
    }
    bool found = false;
    for (const auto& t : top.tokens)
      if (std::memcmp(t.vector.data(), s.fine.data(), sizeof(double) * static_cast<std::size_t>(dim)) == 0)
        found = true;
    const auto& best = top.tokens[oracle::argmax_error(top)].vector;
    r.fine_is_token = r.fine_is_token && found && best == s.fine;
    ++r.events;
  }
  return r;
}

}  // namespace fixture
