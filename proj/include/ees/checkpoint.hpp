#pragma once

// EESP predictor checkpoint.
//
//   offset  size  field
//   0       4     magic "EESP"
//   4       4     version (u32 LE, = 1)
//   8       4     kind (u32: 0 mean_pool_identity, 1 linear_ar, 2 mlp)
//   12      4     dim
//   16      4     levels
//   20      4     window_cap
//   24      4     hidden
//   28      4     flags (bit 0: attention projections present)
//   32      8     learning_rate (f64 LE)
//   40      8     seed (u64 LE)
//   48      -     parameter blocks, float32 LE, matrices row-major:
//                 for l = 1..levels
//                   linear_ar: W (d x l*d), b (d)
//                   mlp:       Φ: W1 (h x d), b1 (h), W2 (d x h), b2 (d)
//                              Ψ: W1 (h x l*d), b1 (h), W2 (d x h), b2 (d)
//                 then, if flag bit 0: Wq, Wk, Wv (d x d each)

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ees/hec.hpp"
#include "ees/predictors.hpp"
#include "ees/stream.hpp"

namespace ees {

inline constexpr std::size_t kEespHeaderSize = 48;

struct Checkpoint {
  PredictorState predictor;
  std::optional<AttentionProjections> projections;
};

namespace detail {

inline void put_matrix(std::string& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, static_cast<float>(m(r, c)));
}

inline void put_vector(std::string& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f32(out, static_cast<float>(v[i]));
}

inline void put_mlp(std::string& out, const Mlp& m) {
  put_matrix(out, m.w1);
  put_vector(out, m.b1);
  put_matrix(out, m.w2);
  put_vector(out, m.b2);
}

class BlockReader {
 public:
  explicit BlockReader(std::istream& in) : in_(in) {}

  float f32() {
    unsigned char b[4];
    if (read_some(in_, b, 4) != 4) throw FormatError("truncated checkpoint");
    const float f = get_f32(b);
    if (!std::isfinite(f)) throw FormatError("non-finite checkpoint parameter");
    return f;
  }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f32();
    return m;
  }

  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = f32();
    return v;
  }

  Mlp mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
    Mlp m;
    m.w1 = matrix(hidden, in);
    m.b1 = vector(hidden);
    m.w2 = matrix(out, hidden);
    m.b2 = vector(out);
    return m;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto& cfg = ckpt.predictor.config;
  std::string out;
  out.append("EESP", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.kind));
  detail::put_u32(out, cfg.dim);
  detail::put_u32(out, cfg.levels);
  detail::put_u32(out, cfg.window_cap);
  detail::put_u32(out, cfg.hidden);
  detail::put_u32(out, ckpt.projections ? 1u : 0u);
  detail::put_f64(out, cfg.learning_rate);
  detail::put_u64(out, cfg.seed);
  for (const auto& p : ckpt.predictor.levels) {
    switch (cfg.kind) {
      case PredictorKind::mean_pool_identity: break;
      case PredictorKind::linear_ar:
        detail::put_matrix(out, p.linear.w);
        detail::put_vector(out, p.linear.b);
        break;
      case PredictorKind::mlp:
        detail::put_mlp(out, p.abstraction);
        detail::put_mlp(out, p.prediction);
        break;
    }
  }
  if (ckpt.projections) {
    detail::put_matrix(out, ckpt.projections->query);
    detail::put_matrix(out, ckpt.projections->key);
    detail::put_matrix(out, ckpt.projections->value);
  }
  return out;
}

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint read_checkpoint(std::istream& in) {
  unsigned char h[kEespHeaderSize];
  const std::size_t got = detail::read_some(in, h, sizeof h);
  if (got < 4 || std::memcmp(h, "EESP", 4) != 0) throw FormatError("bad magic");
  if (got < sizeof h) throw FormatError("truncated checkpoint header");
  if (detail::get_u32(h + 4) != 1) throw FormatError("bad version");
  PredictorConfig cfg;
  const std::uint32_t kind = detail::get_u32(h + 8);
  if (kind > 2) throw FormatError("bad predictor kind");
  cfg.kind = static_cast<PredictorKind>(kind);
  cfg.dim = detail::get_u32(h + 12);
  cfg.levels = detail::get_u32(h + 16);
  cfg.window_cap = detail::get_u32(h + 20);
  cfg.hidden = detail::get_u32(h + 24);
  const std::uint32_t flags = detail::get_u32(h + 28);
  cfg.learning_rate = detail::get_f64(h + 32);
  cfg.seed = detail::get_u64(h + 40);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.predictor.config = cfg;
  ckpt.predictor.levels.resize(cfg.levels);
  const Eigen::Index d = cfg.dim;
  const Eigen::Index hid = cfg.hidden;
  detail::BlockReader r(in);
  for (std::uint32_t l = 1; l <= cfg.levels; ++l) {
    auto& p = ckpt.predictor.levels[l - 1];
    switch (cfg.kind) {
      case PredictorKind::mean_pool_identity: break;
      case PredictorKind::linear_ar:
        p.linear.w = r.matrix(d, d * l);
        p.linear.b = r.vector(d);
        break;
      case PredictorKind::mlp:
        p.abstraction = r.mlp(d, hid, d);
        p.prediction = r.mlp(d * l, hid, d);
        break;
    }
  }
  if (flags & 1u) ckpt.projections = AttentionProjections{r.matrix(d, d), r.matrix(d, d), r.matrix(d, d)};
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace ees
