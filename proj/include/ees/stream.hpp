#pragma once

// EMBS embedding-stream format.
//
//   offset  size  field
//   0       4     magic "EMBS"
//   4       4     version (u32 LE, = 1)
//   8       4     dim (u32 LE, >= 1)
//   12      8     frame_count (u64 LE, 0 = unbounded)
//   20      4     fps_num (u32 LE)
//   24      4     fps_den (u32 LE; 0/0 = absent)
//   28      -     rows of dim float32 LE values
//
// Unbounded streams end at EOF on a row boundary.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ees/types.hpp"

namespace ees {

inline constexpr std::array<char, 4> kEmbsMagic = {'E', 'M', 'B', 'S'};
inline constexpr std::uint32_t kEmbsVersion = 1;
inline constexpr std::size_t kEmbsHeaderSize = 28;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void put_f64(std::string& out, double f) { put_u64(out, std::bit_cast<std::uint64_t>(f)); }

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

// Reads up to n bytes; returns the count actually read.
inline std::size_t read_some(std::istream& in, unsigned char* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

}  // namespace detail

/// Scales v to unit L2 norm.
inline Vector normalize_frame(const Vector& v) {
  if (!v.allFinite()) throw InvalidArgument("normalize_frame: non-finite component");
  const double n = v.norm();
  if (n < 1e-12) throw DegenerateInputError("normalize_frame: zero vector");
  return v / n;
}

inline std::string encode_header(const StreamHeader& header) {
  std::string out;
  out.reserve(kEmbsHeaderSize);
  out.append(kEmbsMagic.data(), kEmbsMagic.size());
  detail::put_u32(out, kEmbsVersion);
  detail::put_u32(out, header.dim);
  detail::put_u64(out, header.frame_count);
  detail::put_u32(out, header.fps ? header.fps->num : 0);
  detail::put_u32(out, header.fps ? header.fps->den : 0);
  return out;
}

/// Incremental EMBS writer. Rows are validated and written one at a time.
class EmbsWriter {
 public:
  EmbsWriter(std::ostream& out, StreamHeader header) : out_(out), header_(std::move(header)) {
    if (header_.dim == 0) throw InvalidArgument("EMBS header: dim must be >= 1");
    if (header_.fps && (header_.fps->num == 0 || header_.fps->den == 0))
      throw InvalidArgument("EMBS header: fps must be a positive rational");
    const std::string h = encode_header(header_);
    out_.write(h.data(), static_cast<std::streamsize>(h.size()));
  }

  void write(const FrameEmbedding& frame) {
    if (frame.index != written_)
      throw InvalidArgument("EMBS write: non-contiguous frame index " +
                            std::to_string(frame.index) + " (expected " +
                            std::to_string(written_) + ")");
    write_row(frame.vector);
  }

  /// Appends the next row; its index is implied by position.
  void write_row(const Vector& v) {
    if (v.size() != static_cast<Eigen::Index>(header_.dim))
      throw InvalidArgument("EMBS write: dimension mismatch at frame " + std::to_string(written_));
    if (header_.bounded() && written_ >= header_.frame_count)
      throw InvalidArgument("EMBS write: more rows than the declared frame_count");
    row_.clear();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const auto f = static_cast<float>(v[i]);
      if (!std::isfinite(f))
        throw InvalidArgument("EMBS write: non-finite component at frame " +
                              std::to_string(written_));
      detail::put_f32(row_, f);
    }
    out_.write(row_.data(), static_cast<std::streamsize>(row_.size()));
    ++written_;
  }

  /// Checks that a bounded stream received exactly frame_count rows.
  void finish() {
    if (header_.bounded() && written_ != header_.frame_count)
      throw InvalidArgument("EMBS write: declared " + std::to_string(header_.frame_count) +
                            " frames but wrote " + std::to_string(written_));
    out_.flush();
  }

  std::uint64_t written() const { return written_; }

 private:
  std::ostream& out_;
  StreamHeader header_;
  std::uint64_t written_ = 0;
  std::string row_;
};

struct ReadOptions {
  bool allow_non_finite = false;
};

/// Incremental EMBS reader: holds one row in memory at a time.
class EmbsReader {
 public:
  explicit EmbsReader(std::istream& in, ReadOptions options = {}) : in_(in), options_(options) {
    std::array<unsigned char, kEmbsHeaderSize> buf{};
    const std::size_t got = detail::read_some(in_, buf.data(), buf.size());
    if (got < 4 || std::memcmp(buf.data(), kEmbsMagic.data(), 4) != 0)
      throw FormatError("bad magic");
    if (got < kEmbsHeaderSize) throw FormatError("truncated header");
    const std::uint32_t version = detail::get_u32(buf.data() + 4);
    if (version != kEmbsVersion) throw FormatError("bad version " + std::to_string(version));
    header_.dim = detail::get_u32(buf.data() + 8);
    if (header_.dim == 0) throw FormatError("bad header: dim must be >= 1");
    header_.frame_count = detail::get_u64(buf.data() + 12);
    const std::uint32_t num = detail::get_u32(buf.data() + 20);
    const std::uint32_t den = detail::get_u32(buf.data() + 24);
    if (num != 0 || den != 0) {
      if (num == 0 || den == 0) throw FormatError("bad header: fps must be 0/0 or positive");
      header_.fps = Fps{num, den};
    }
    row_.resize(static_cast<std::size_t>(header_.dim) * 4);
  }

  const StreamHeader& header() const { return header_; }
  std::uint64_t frames_read() const { return read_; }
  std::size_t row_bytes() const { return row_.size(); }

  std::optional<FrameEmbedding> next() {
    if (header_.bounded() && read_ == header_.frame_count) return std::nullopt;
    const std::size_t got = detail::read_some(in_, row_.data(), row_.size());
    if (got == 0) {
      if (header_.bounded())
        throw FormatError("truncated stream: declared " + std::to_string(header_.frame_count) +
                          " frames, found " + std::to_string(read_));
      return std::nullopt;
    }
    if (got < row_.size()) throw FormatError("truncated row at frame " + std::to_string(read_));
    FrameEmbedding frame;
    frame.index = read_;
    frame.vector.resize(header_.dim);
    for (std::uint32_t i = 0; i < header_.dim; ++i) {
      const float f = detail::get_f32(row_.data() + 4 * i);
      if (!options_.allow_non_finite && !std::isfinite(f))
        throw FormatError("non-finite value at frame " + std::to_string(read_) + ", component " +
                          std::to_string(i));
      frame.vector[i] = static_cast<double>(f);
    }
    ++read_;
    return frame;
  }

 private:
  std::istream& in_;
  ReadOptions options_;
  StreamHeader header_;
  std::uint64_t read_ = 0;
  std::vector<unsigned char> row_;
};

/// Serializes a whole stream to bytes.
inline std::string write_stream(const StreamHeader& header, std::span<const FrameEmbedding> frames) {
  std::ostringstream out(std::ios::binary);
  EmbsWriter writer(out, header);
  for (const auto& f : frames) writer.write(f);
  writer.finish();
  return std::move(out).str();
}

struct DecodedStream {
  StreamHeader header;
  std::vector<FrameEmbedding> frames;
};

inline DecodedStream read_stream(std::string_view bytes, ReadOptions options = {}) {
  std::istringstream in(std::string(bytes), std::ios::binary);
  EmbsReader reader(in, options);
  DecodedStream out{reader.header(), {}};
  while (auto f = reader.next()) out.frames.push_back(std::move(*f));
  return out;
}

}  // namespace ees
