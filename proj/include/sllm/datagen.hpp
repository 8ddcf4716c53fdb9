// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic motion videos and the SLVD corpus file.
//
// Every video shows one soft-edged shape on a dark, toroidal canvas that
// moves according to its class. Static frame statistics are the same for
// opposite motions (left/right, cw/ccw, expand/contract), so those pairs are
// only separable with temporal context.
//
// SLVD layout (little-endian):
//   "SLVD" | u8 version | u32 N | u32 T | u32 H | u32 W | u32 M
//   M x (u16 byte length, UTF-8 name)
//   N x (u16 label, T*H*W f32 pixels, frame-major then row-major)
//   u32 CRC-32 of every preceding byte

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "sllm/encoder.hpp"
#include "sllm/errors.hpp"
#include "sllm/numerics.hpp"

namespace sllm {

enum class Motion : std::uint8_t {
  translate_left,
  translate_right,
  translate_up,
  translate_down,
  rotate_cw,
  rotate_ccw,
  expand,
  contract,
};

inline constexpr std::size_t kMotionCount = 8;

inline std::string motion_name(Motion m) {
  static constexpr const char* names[] = {"translate-left", "translate-right", "translate-up", "translate-down",
                                          "rotate-cw",      "rotate-ccw",      "expand",       "contract"};
  return names[static_cast<std::size_t>(m)];
}

inline Motion parse_motion(const std::string& s) {
  for (std::size_t i = 0; i < kMotionCount; ++i)
    if (motion_name(static_cast<Motion>(i)) == s) return static_cast<Motion>(i);
  throw ConfigError("unknown motion class '" + s + "'");
}

inline std::vector<Motion> all_motions() {
  std::vector<Motion> v;
  for (std::size_t i = 0; i < kMotionCount; ++i) v.push_back(static_cast<Motion>(i));
  return v;
}

struct SynthSpec {
  std::vector<Motion> classes = all_motions();
  std::size_t videos_per_class = 250;
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  double noise_std = 0.02;
  std::uint64_t seed = 1;

  void validate() const {
    if (classes.size() < 2) throw ConfigError("synth spec: need at least 2 classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i] == classes[j]) throw ConfigError("synth spec: duplicate class");
    if (videos_per_class == 0) throw ConfigError("synth spec: videos_per_class must be >= 1");
    if (frames < 4) throw ConfigError("synth spec: need T >= 4");
    if (height < 8 || width < 8) throw ConfigError("synth spec: frames must be at least 8x8");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("synth spec: noise std must be >= 0");
  }
};

struct Video {
  std::uint16_t label = 0;
  std::vector<Frame> frames;
  bool operator==(const Video&) const = default;
};

struct Corpus {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::string> label_names;
  std::vector<Video> videos;

  std::size_t num_labels() const { return label_names.size(); }
  bool operator==(const Corpus&) const = default;
};

namespace detail {

struct Shape {
  bool rectangle = false;
  double cx = 0, cy = 0;
  double half_a = 3, half_b = 2;  // semi-axes (blob sigmas or rectangle half-sides)
  double angle = 0;
  double intensity = 1;
};

inline double wrapped(double d, double period) {
  d = std::fmod(d, period);
  if (d < -period / 2) d += period;
  if (d >= period / 2) d -= period;
  return d;
}

inline Frame render(const Shape& s, std::size_t h, std::size_t w) {
  Frame f(h, w);
  const double ca = std::cos(s.angle);
  const double sa = std::sin(s.angle);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = wrapped(static_cast<double>(x) + 0.5 - s.cx, static_cast<double>(w));
      const double dy = wrapped(static_cast<double>(y) + 0.5 - s.cy, static_cast<double>(h));
      const double u = ca * dx + sa * dy;
      const double v = -sa * dx + ca * dy;
      double val = 0.0;
      if (s.rectangle) {
        // logistic edges, ~1px soft
        const double eu = 1.0 / (1.0 + std::exp((std::abs(u) - s.half_a) * 2.5));
        const double ev = 1.0 / (1.0 + std::exp((std::abs(v) - s.half_b) * 2.5));
        val = eu * ev;
      } else {
        val = std::exp(-0.5 * (u * u / (s.half_a * s.half_a) + v * v / (s.half_b * s.half_b)));
      }
      f.at(y, x) = static_cast<float>(s.intensity * val);
    }
  }
  return f;
}

/// Integer toroidal shift: out(y, x) = in(y − dy, x − dx).
inline Frame shifted(const Frame& in, long dy, long dx) {
  Frame out(in.height, in.width, in.channels);
  const long h = static_cast<long>(in.height);
  const long w = static_cast<long>(in.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
          in.at(static_cast<std::size_t>(((y - dy) % h + h) % h), static_cast<std::size_t>(((x - dx) % w + w) % w));
  return out;
}

inline Video render_video(const SynthSpec& spec, std::size_t class_index, std::size_t video_index) {
  CounterRng rng(spec.seed, 0x5EED0000ULL + video_index);
  const Motion motion = spec.classes[class_index];
  const double h = static_cast<double>(spec.height);
  const double w = static_cast<double>(spec.width);
  const double scale = std::min(h, w) / 32.0;
  Shape base;
  base.rectangle = rng.uniform() < 0.5;
  base.cx = rng.uniform(0.0, w);
  base.cy = rng.uniform(0.0, h);
  base.half_a = rng.uniform(3.5, 5.5) * scale;
  base.half_b = base.half_a * rng.uniform(0.35, 0.6);
  base.angle = rng.uniform(0.0, std::numbers::pi);
  base.intensity = rng.uniform(0.6, 1.0);
  // velocities / rates, sign fixed by class
  // Slow on purpose: one frame apart should look nearly redundant.
  const long speed = 1;                            // px per frame
  const double omega = rng.uniform(0.06, 0.11);    // rad per frame
  const double growth = rng.uniform(0.03, 0.05);   // log-scale per frame
  const double phase = rng.uniform(0.0, static_cast<double>(spec.frames));

  Video v;
  v.label = static_cast<std::uint16_t>(class_index);
  v.frames.reserve(spec.frames);
  const Frame first = render(base, spec.height, spec.width);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double tt = static_cast<double>(t);
    const long st = speed * static_cast<long>(t);
    switch (motion) {
      case Motion::translate_left: v.frames.push_back(shifted(first, 0, -st)); break;
      case Motion::translate_right: v.frames.push_back(shifted(first, 0, st)); break;
      case Motion::translate_up: v.frames.push_back(shifted(first, -st, 0)); break;
      case Motion::translate_down: v.frames.push_back(shifted(first, st, 0)); break;
      case Motion::rotate_cw:
      case Motion::rotate_ccw: {
        Shape s = base;
        s.angle += (motion == Motion::rotate_cw ? 1.0 : -1.0) * omega * tt;
        v.frames.push_back(render(s, spec.height, spec.width));
        break;
      }
      case Motion::expand:
      case Motion::contract: {
        Shape s = base;
        const double k = (motion == Motion::expand ? 1.0 : -1.0) * growth;
        const double f = std::exp(k * (tt - phase));
        s.half_a = std::clamp(base.half_a * 0.6 * f, 1.0, 0.45 * std::min(h, w));
        s.half_b = std::clamp(base.half_b * 0.6 * f, 0.7, 0.45 * std::min(h, w));
        v.frames.push_back(render(s, spec.height, spec.width));
        break;
      }
    }
  }
  if (spec.noise_std > 0.0) {
    CounterRng noise(spec.seed, 0x401CE00000ULL + video_index);
    for (auto& f : v.frames)
      for (float& p : f.pixels)
        p = static_cast<float>(std::clamp(static_cast<double>(p) + spec.noise_std * noise.gaussian(), 0.0, 1.0));
  }
  return v;
}

}  // namespace detail

/// Videos ordered class-major: class 0's videos first, then class 1's, ...
inline Corpus generate(const SynthSpec& spec) {
  spec.validate();
  Corpus c;
  c.frames = spec.frames;
  c.height = spec.height;
  c.width = spec.width;
  for (Motion m : spec.classes) c.label_names.push_back(motion_name(m));
  c.videos.reserve(spec.classes.size() * spec.videos_per_class);
  for (std::size_t k = 0; k < spec.classes.size(); ++k)
    for (std::size_t i = 0; i < spec.videos_per_class; ++i)
      c.videos.push_back(detail::render_video(spec, k, k * spec.videos_per_class + i));
  return c;
}

// ---------------------------------------------------------------------------
// SLVD file

inline constexpr std::uint8_t kCorpusVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("corpus: truncated file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<char> serialize_corpus(const Corpus& c) {
  if (c.videos.empty()) throw ConfigError("corpus: refusing to write an empty corpus");
  if (c.label_names.size() > 0xFFFF) throw ConfigError("corpus: too many labels");
  detail::ByteWriter w;
  w.put_bytes("SLVD", 4);
  w.put<std::uint8_t>(kCorpusVersion);
  for (std::size_t v : {c.videos.size(), c.frames, c.height, c.width, c.label_names.size()}) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  }
  for (const auto& n : c.label_names) {
    if (n.size() > 0xFFFF) throw ConfigError("corpus: label name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(n.size()));
    w.put_bytes(n.data(), n.size());
  }
  const std::size_t frame_px = c.height * c.width;
  for (const auto& v : c.videos) {
    if (v.label >= c.label_names.size()) throw ConfigError("corpus: label index out of range");
    if (v.frames.size() != c.frames) throw ConfigError("corpus: video with wrong frame count");
    w.put<std::uint16_t>(v.label);
    for (const auto& f : v.frames) {
      if (f.pixels.size() != frame_px) throw ConfigError("corpus: frame with wrong size");
      w.put_bytes(f.pixels.data(), frame_px * sizeof(float));
    }
  }
  const std::uint32_t crc = detail::crc32_of(w.bytes());
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes());
}

inline Corpus deserialize_corpus(std::span<const char> bytes) {
  if (bytes.size() < 4 + 1 + 20 + 4) throw FormatError("corpus: truncated file");
  const std::span<const char> payload = bytes.first(bytes.size() - 4);
  detail::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, "SLVD", 4) != 0) throw FormatError("corpus: bad magic");
  if (r.get<std::uint8_t>() != kCorpusVersion) throw FormatError("corpus: unsupported version");
  Corpus c;
  const std::uint32_t n = r.get<std::uint32_t>();
  c.frames = r.get<std::uint32_t>();
  c.height = r.get<std::uint32_t>();
  c.width = r.get<std::uint32_t>();
  const std::uint32_t m = r.get<std::uint32_t>();
  if (n == 0) throw FormatError("corpus: file holds no videos");
  if (m == 0 || c.frames == 0 || c.height == 0 || c.width == 0) throw FormatError("corpus: zero-sized header field");
  const std::uint64_t video_bytes = 2 + static_cast<std::uint64_t>(c.frames) * c.height * c.width * sizeof(float);
  for (std::uint32_t i = 0; i < m; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.get_bytes(name.data(), len);
    c.label_names.push_back(std::move(name));
  }
  if (r.remaining() != static_cast<std::uint64_t>(n) * video_bytes + 4) {
    throw FormatError("corpus: payload size does not match header (truncated or padded file)");
  }
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (detail::crc32_of(payload) != stored_crc) throw ChecksumError("corpus: CRC-32 mismatch");
  c.videos.resize(n);
  for (auto& v : c.videos) {
    v.label = r.get<std::uint16_t>();
    if (v.label >= m) throw FormatError("corpus: label index out of range");
    v.frames.assign(c.frames, Frame(c.height, c.width));
    for (auto& f : v.frames) r.get_bytes(f.pixels.data(), f.pixels.size() * sizeof(float));
  }
  return c;
}

inline void write_corpus(const Corpus& c, const std::string& path) {
  const auto bytes = serialize_corpus(c);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed: " + path);
}

inline Corpus read_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open corpus " + path);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_corpus(bytes);
}

// ---------------------------------------------------------------------------

/// Stratified split: per class, round(fraction · count) videos go to train.
/// Relative order of videos is preserved in both halves.
inline std::pair<Corpus, Corpus> split(const Corpus& c, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("split: fraction outside [0,1]");
  std::vector<std::vector<std::size_t>> by_class(c.num_labels());
  for (std::size_t i = 0; i < c.videos.size(); ++i) by_class.at(c.videos[i].label).push_back(i);
  std::vector<bool> to_train(c.videos.size(), false);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    CounterRng rng(seed, 0x5B117000ULL + k);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = true;
  }
  Corpus train{c.frames, c.height, c.width, c.label_names, {}};
  Corpus test = train;
  for (std::size_t i = 0; i < c.videos.size(); ++i) (to_train[i] ? train : test).videos.push_back(c.videos[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace sllm
