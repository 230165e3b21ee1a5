#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikebudget {

/// Random stream used everywhere in the engine. mt19937_64 output is fixed by
/// the standard, so a seed pins every draw independently of the platform.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// A grayscale frame with intensities in [0, 1], stored row-major.
struct FrameImage {
  std::vector<float> pixels;
  std::size_t height = 0;
  std::size_t width = 0;
  int label = 0;
};

/// Binary spike activity indexed (timestep, batch, unit).
///
/// A single-sample tensor has batch() == 1; `stack` concatenates single
/// samples into a batch. Entries are stored as bytes holding 0 or 1.
class SpikeTensor {
 public:
  SpikeTensor() = default;
  SpikeTensor(std::size_t timesteps, std::size_t batch, std::size_t units);

  std::size_t timesteps() const { return timesteps_; }
  std::size_t batch() const { return batch_; }
  std::size_t units() const { return units_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::uint8_t at(std::size_t t, std::size_t b, std::size_t n) const {
    return data_[offset(t, b) + n];
  }
  void set(std::size_t t, std::size_t b, std::size_t n, std::uint8_t value) {
    data_[offset(t, b) + n] = value;
  }

  std::span<const std::uint8_t> row(std::size_t t, std::size_t b) const {
    return {data_.data() + offset(t, b), units_};
  }
  std::span<std::uint8_t> row(std::size_t t, std::size_t b) {
    return {data_.data() + offset(t, b), units_};
  }
  std::span<const std::uint8_t> data() const { return data_; }

  /// Number of ones.
  std::size_t count() const;
  /// True iff every entry is 0 or 1.
  bool is_binary() const;

  /// Concatenate single-sample tensors of identical (T, N) along the batch axis.
  static SpikeTensor stack(std::span<const SpikeTensor> samples);
  /// Extract sample `b` as a single-sample tensor.
  SpikeTensor sample(std::size_t b) const;

  bool operator==(const SpikeTensor&) const = default;

 private:
  std::size_t offset(std::size_t t, std::size_t b) const {
    return (t * batch_ + b) * units_;
  }

  std::size_t timesteps_ = 0;
  std::size_t batch_ = 0;
  std::size_t units_ = 0;
  std::vector<std::uint8_t> data_;
};

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-timestep Bernoulli draws with P(spike at (t, i)) = pixels[i].
/// Output shape is (timesteps, 1, pixels.size()).
SpikeTensor poisson_encode(std::span<const float> pixels, std::size_t timesteps, Rng& rng);
SpikeTensor poisson_encode(const FrameImage& image, std::size_t timesteps, Rng& rng);

// ---------------------------------------------------------------------------
// Event streams
// ---------------------------------------------------------------------------

struct EventRecord {
  std::uint32_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;

  bool operator==(const EventRecord&) const = default;
};

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<EventRecord> events;

  bool operator==(const EventStream&) const = default;
};

/// Rasterize events into `timesteps` equal bins over [0, duration_us).
/// Unit index is polarity*H*W + y*W + x; an entry is 1 iff at least one event
/// landed in that (bin, unit).
SpikeTensor bin_events(std::span<const EventRecord> events, std::size_t timesteps,
                       std::uint16_t height, std::uint16_t width, std::uint32_t duration_us);

/// Homogeneous Poisson event stream, `rate_hz` events per second over the
/// whole sensor, with uniform coordinates and polarity.
std::vector<EventRecord> synth_event_stream(Rng& rng, std::uint16_t width, std::uint16_t height,
                                            std::uint32_t duration_us, double rate_hz);

// ---------------------------------------------------------------------------
// Binary containers
// ---------------------------------------------------------------------------

enum class FormatErrorKind {
  kBadMagic,
  kTruncated,
  kDimensionOverflow,
  kTrailingData,
  kCountMismatch,
  kUnsorted,
  kOutOfBounds,
  kMalformedRecord,
};

const char* to_string(FormatErrorKind kind);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Decoded IDX array: dimension sizes and the row-major unsigned-byte payload.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_idx(const IdxArray& array);

/// Scale an image IDX array (N, H, W) and its label array (N) into frames.
std::vector<FrameImage> frames_from_idx(const IdxArray& images, const IdxArray& labels);

inline constexpr char kEventFileMagic[8] = {'S', 'P', 'K', 'E', 'V', 'T', '0', '1'};
inline constexpr std::size_t kEventFileHeaderBytes = 16;
/// EVT1 record: u32 t_us, u16 x, u16 y, u8 polarity, then three zero pad bytes.
inline constexpr std::size_t kEventFileRecordBytes = 12;

std::vector<std::uint8_t> write_event_file(const EventStream& stream);
EventStream parse_event_file(std::span<const std::uint8_t> bytes);

/// Decode the 5-byte-per-event ATIS records used by N-MNIST .bin files.
/// Events are returned in file order; timestamps are not re-sorted.
std::vector<EventRecord> parse_nmnist(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace spikebudget
