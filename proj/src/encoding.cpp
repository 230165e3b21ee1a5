#include "spikebudget/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <fmt/format.h>

namespace spikebudget {

SpikeTensor::SpikeTensor(std::size_t timesteps, std::size_t batch, std::size_t units)
    : timesteps_(timesteps), batch_(batch), units_(units), data_(timesteps * batch * units, 0) {}

std::size_t SpikeTensor::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

bool SpikeTensor::is_binary() const {
  return std::all_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v <= 1; });
}

SpikeTensor SpikeTensor::stack(std::span<const SpikeTensor> samples) {
  if (samples.empty()) return {};
  const auto t_steps = samples.front().timesteps();
  const auto units = samples.front().units();
  SpikeTensor out(t_steps, samples.size(), units);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    if (s.batch() != 1 || s.timesteps() != t_steps || s.units() != units) {
      throw EncodingError(fmt::format(
          "stack: sample {} has shape ({}, {}, {}), expected ({}, 1, {})", b, s.timesteps(),
          s.batch(), s.units(), t_steps, units));
    }
    for (std::size_t t = 0; t < t_steps; ++t) {
      const auto src = s.row(t, 0);
      std::copy(src.begin(), src.end(), out.row(t, b).begin());
    }
  }
  return out;
}

SpikeTensor SpikeTensor::sample(std::size_t b) const {
  SpikeTensor out(timesteps_, 1, units_);
  for (std::size_t t = 0; t < timesteps_; ++t) {
    const auto src = row(t, b);
    std::copy(src.begin(), src.end(), out.row(t, 0).begin());
  }
  return out;
}

SpikeTensor poisson_encode(std::span<const float> pixels, std::size_t timesteps, Rng& rng) {
  if (timesteps == 0) throw EncodingError("poisson_encode: timesteps must be >= 1");
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const float p = pixels[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw EncodingError(fmt::format("poisson_encode: pixel {} = {} outside [0, 1]", i, p));
    }
  }
  SpikeTensor out(timesteps, 1, pixels.size());
  for (std::size_t t = 0; t < timesteps; ++t) {
    auto row = out.row(t, 0);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      row[i] = uniform01(rng) < static_cast<double>(pixels[i]) ? 1 : 0;
    }
  }
  return out;
}

SpikeTensor poisson_encode(const FrameImage& image, std::size_t timesteps, Rng& rng) {
  return poisson_encode(std::span<const float>(image.pixels), timesteps, rng);
}

SpikeTensor bin_events(std::span<const EventRecord> events, std::size_t timesteps,
                       std::uint16_t height, std::uint16_t width, std::uint32_t duration_us) {
  if (timesteps == 0) throw EncodingError("bin_events: timesteps must be >= 1");
  if (duration_us == 0) throw EncodingError("bin_events: duration_us must be > 0");
  const std::size_t plane = std::size_t{height} * width;
  SpikeTensor out(timesteps, 1, 2 * plane);
  std::uint32_t last_t = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.t_us >= duration_us) {
      throw FormatError(FormatErrorKind::kOutOfBounds,
                        fmt::format("bin_events: event {} at t={}us outside [0, {})", i, e.t_us,
                                    duration_us));
    }
    if (e.x >= width || e.y >= height || e.polarity > 1) {
      throw FormatError(FormatErrorKind::kOutOfBounds,
                        fmt::format("bin_events: event {} at ({}, {}, p={}) outside {}x{}", i,
                                    e.x, e.y, e.polarity, width, height));
    }
    if (e.t_us < last_t) {
      throw FormatError(FormatErrorKind::kUnsorted,
                        fmt::format("bin_events: event {} timestamp decreases", i));
    }
    last_t = e.t_us;
    const auto bin = static_cast<std::size_t>(
        (static_cast<std::uint64_t>(e.t_us) * timesteps) / duration_us);
    const std::size_t unit = e.polarity * plane + std::size_t{e.y} * width + e.x;
    out.set(bin, 0, unit, 1);
  }
  return out;
}

std::vector<EventRecord> synth_event_stream(Rng& rng, std::uint16_t width, std::uint16_t height,
                                            std::uint32_t duration_us, double rate_hz) {
  if (width == 0 || height == 0) throw EncodingError("synth_event_stream: empty sensor");
  if (!(rate_hz >= 0.0) || !std::isfinite(rate_hz)) {
    throw EncodingError("synth_event_stream: rate must be finite and non-negative");
  }
  std::vector<EventRecord> events;
  if (rate_hz == 0.0) return events;
  const double mean_gap_us = 1e6 / rate_hz;
  double now = 0.0;
  for (;;) {
    now += -std::log1p(-uniform01(rng)) * mean_gap_us;
    if (now >= static_cast<double>(duration_us)) break;
    EventRecord e;
    e.t_us = static_cast<std::uint32_t>(now);
    e.x = static_cast<std::uint16_t>(rng() % width);
    e.y = static_cast<std::uint16_t>(rng() % height);
    e.polarity = static_cast<std::uint8_t>(rng() & 1u);
    events.push_back(e);
  }
  return events;
}

// ---------------------------------------------------------------------------

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kDimensionOverflow: return "dimension overflow";
    case FormatErrorKind::kTrailingData: return "trailing data";
    case FormatErrorKind::kCountMismatch: return "count mismatch";
    case FormatErrorKind::kUnsorted: return "unsorted timestamps";
    case FormatErrorKind::kOutOfBounds: return "out of bounds";
    case FormatErrorKind::kMalformedRecord: return "malformed record";
  }
  return "unknown";
}

namespace {

std::uint32_t load_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void store_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint16_t load_le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

void store_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void store_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError(FormatErrorKind::kTruncated, "idx: missing magic");
  const std::uint32_t magic = load_be32(bytes.data());
  if (magic != kIdxImagesMagic && magic != kIdxLabelsMagic) {
    throw FormatError(FormatErrorKind::kBadMagic, fmt::format("idx: bad magic 0x{:08x}", magic));
  }
  const std::size_t ndims = magic & 0xffu;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw FormatError(FormatErrorKind::kTruncated, "idx: header shorter than dimension list");
  }
  IdxArray out;
  std::uint64_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::uint32_t dim = load_be32(bytes.data() + 4 + 4 * d);
    out.dims.push_back(dim);
    if (dim != 0 && total > std::numeric_limits<std::uint64_t>::max() / dim) {
      throw FormatError(FormatErrorKind::kDimensionOverflow, "idx: dimension product overflows");
    }
    total *= dim;
  }
  if (total > std::numeric_limits<std::size_t>::max() - header) {
    throw FormatError(FormatErrorKind::kDimensionOverflow, "idx: payload size unrepresentable");
  }
  const std::size_t payload = static_cast<std::size_t>(total);
  if (bytes.size() - header < payload) {
    throw FormatError(FormatErrorKind::kTruncated,
                      fmt::format("idx: payload has {} bytes, dimensions need {}",
                                  bytes.size() - header, payload));
  }
  if (bytes.size() - header > payload) {
    throw FormatError(FormatErrorKind::kTrailingData,
                      fmt::format("idx: {} bytes after payload", bytes.size() - header - payload));
  }
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

std::vector<std::uint8_t> write_idx(const IdxArray& array) {
  if (array.dims.size() != 1 && array.dims.size() != 3) {
    throw EncodingError("write_idx: only 1-D label and 3-D image arrays are supported");
  }
  std::uint64_t total = 1;
  for (auto d : array.dims) total *= d;
  if (total != array.data.size()) throw EncodingError("write_idx: payload does not match dims");
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * array.dims.size() + array.data.size());
  store_be32(out, array.dims.size() == 3 ? kIdxImagesMagic : kIdxLabelsMagic);
  for (auto d : array.dims) store_be32(out, d);
  out.insert(out.end(), array.data.begin(), array.data.end());
  return out;
}

std::vector<FrameImage> frames_from_idx(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() != 3 || labels.dims.size() != 1) {
    throw EncodingError("frames_from_idx: expected (N, H, W) images and (N) labels");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw EncodingError(fmt::format("frames_from_idx: {} images but {} labels", images.dims[0],
                                    labels.dims[0]));
  }
  const std::size_t h = images.dims[1];
  const std::size_t w = images.dims[2];
  std::vector<FrameImage> frames(images.dims[0]);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& f = frames[i];
    f.height = h;
    f.width = w;
    f.label = labels.data[i];
    f.pixels.resize(h * w);
    const auto* src = images.data.data() + i * h * w;
    for (std::size_t p = 0; p < h * w; ++p) f.pixels[p] = static_cast<float>(src[p]) / 255.0f;
  }
  return frames;
}

std::vector<std::uint8_t> write_event_file(const EventStream& stream) {
  if (stream.events.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw EncodingError("write_event_file: too many events");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kEventFileHeaderBytes + kEventFileRecordBytes * stream.events.size());
  out.assign(std::begin(kEventFileMagic), std::end(kEventFileMagic));
  store_le16(out, stream.width);
  store_le16(out, stream.height);
  store_le32(out, static_cast<std::uint32_t>(stream.events.size()));
  std::uint32_t last_t = 0;
  for (const auto& e : stream.events) {
    if (e.t_us < last_t) throw FormatError(FormatErrorKind::kUnsorted, "write_event_file: unsorted");
    if (e.x >= stream.width || e.y >= stream.height || e.polarity > 1) {
      throw FormatError(FormatErrorKind::kOutOfBounds, "write_event_file: event out of bounds");
    }
    last_t = e.t_us;
    store_le32(out, e.t_us);
    store_le16(out, e.x);
    store_le16(out, e.y);
    out.push_back(e.polarity);
    out.insert(out.end(), kEventFileRecordBytes - 9, std::uint8_t{0});
  }
  return out;
}

EventStream parse_event_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kEventFileMagic) ||
      std::memcmp(bytes.data(), kEventFileMagic, sizeof(kEventFileMagic)) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "evt: bad magic");
  }
  if (bytes.size() < kEventFileHeaderBytes) {
    throw FormatError(FormatErrorKind::kTruncated, "evt: truncated header");
  }
  EventStream stream;
  stream.width = load_le16(bytes.data() + 8);
  stream.height = load_le16(bytes.data() + 10);
  const std::uint32_t count = load_le32(bytes.data() + 12);
  const std::uint64_t expected =
      kEventFileHeaderBytes + std::uint64_t{kEventFileRecordBytes} * count;
  if (bytes.size() != expected) {
    throw FormatError(FormatErrorKind::kCountMismatch,
                      fmt::format("evt: header declares {} events ({} bytes), file has {} bytes",
                                  count, expected, bytes.size()));
  }
  stream.events.resize(count);
  std::uint32_t last_t = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto* p = bytes.data() + kEventFileHeaderBytes + std::size_t{kEventFileRecordBytes} * i;
    auto& e = stream.events[i];
    e.t_us = load_le32(p);
    e.x = load_le16(p + 4);
    e.y = load_le16(p + 6);
    e.polarity = p[8];
    if (e.polarity > 1 || p[9] != 0 || p[10] != 0 || p[11] != 0) {
      throw FormatError(FormatErrorKind::kMalformedRecord,
                        fmt::format("evt: record {} has invalid polarity/pad", i));
    }
    if (e.x >= stream.width || e.y >= stream.height) {
      throw FormatError(FormatErrorKind::kOutOfBounds,
                        fmt::format("evt: record {} at ({}, {}) outside {}x{}", i, e.x, e.y,
                                    stream.width, stream.height));
    }
    if (e.t_us < last_t) {
      throw FormatError(FormatErrorKind::kUnsorted, fmt::format("evt: record {} out of order", i));
    }
    last_t = e.t_us;
  }
  return stream;
}

std::vector<EventRecord> parse_nmnist(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kRecord = 5;
  if (bytes.size() % kRecord != 0) {
    throw FormatError(FormatErrorKind::kTruncated, "nmnist: size is not a multiple of 5 bytes");
  }
  std::vector<EventRecord> events(bytes.size() / kRecord);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto* p = bytes.data() + i * kRecord;
    auto& e = events[i];
    e.x = p[0];
    e.y = p[1];
    e.polarity = static_cast<std::uint8_t>(p[2] >> 7);
    e.t_us = (std::uint32_t{p[2] & 0x7fu} << 16) | (std::uint32_t{p[3]} << 8) | p[4];
  }
  return events;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace spikebudget
