#pragma once

// Streaming frame format for 20-value magnetometer readouts.
//
//   offset  size  field
//   0       2     sync 0xAA 0x55
//   2       8     timestamp_us, u64 little-endian
//   10      80    5 chips x (temp, bx, by, bz), f32 little-endian
//   90      2     CRC-16/CCITT-FALSE over bytes 2..89, little-endian
//
// Total 92 bytes per frame.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reskin/common.hpp"

namespace reskin::protocol {

constexpr std::size_t kFrameSize = 92;
constexpr std::size_t kPayloadSize = 88;
constexpr std::uint8_t kSync0 = 0xAA;
constexpr std::uint8_t kSync1 = 0x55;
constexpr double kNominalRateHz = 400.0;

struct ChipSample {
  float temp = 0.0f;
  float bx = 0.0f;
  float by = 0.0f;
  float bz = 0.0f;
};

struct FluxFrame {
  std::uint64_t timestamp_us = 0;
  std::array<ChipSample, kNumMagnetometers> chips{};
};

// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const FluxFrame& a, const FluxFrame& b);

FluxFrame make_frame(std::uint64_t timestamp_us, const FluxVector& flux,
                     const TempVector& temperature);
FluxVector flux_of(const FluxFrame& frame);

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data);

using WireFrame = std::array<std::uint8_t, kFrameSize>;

WireFrame encode_frame(const FluxFrame& frame);
std::vector<std::uint8_t> encode_frames(std::span<const FluxFrame> frames);

// Returns false when the sync bytes or the CRC do not match.
bool decode_frame(std::span<const std::uint8_t, kFrameSize> bytes, FluxFrame& out);

struct DecodeStats {
  std::uint64_t frames = 0;
  std::uint64_t skipped_bytes = 0;
  std::uint64_t crc_failures = 0;
  std::uint64_t timestamp_regressions = 0;
};

// Incremental decoder. Feed chunks of any size; completed frames are
// appended to `out`. After a CRC failure the decoder advances one byte and
// scans for the next sync pair, so no later valid frame is skipped.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> chunk, std::vector<FluxFrame>& out);
  // Counts any buffered partial frame as skipped and resets the buffer.
  void finish();
  const DecodeStats& stats() const { return stats_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t head_ = 0;
  bool have_last_ts_ = false;
  std::uint64_t last_ts_ = 0;
  DecodeStats stats_;
};

struct DecodeResult {
  std::vector<FluxFrame> frames;
  DecodeStats stats;
};

DecodeResult decode_stream(std::span<const std::uint8_t> bytes);

enum class BaselineMode { once, every_k, before_each };

std::string to_string(BaselineMode mode);
BaselineMode parse_baseline_mode(std::string_view name);

// No-load baseline bookkeeping.
//   once        - the first no-load reading is kept forever
//   every_k     - refreshed from the next no-load reading after every k contacts
//   before_each - refreshed from every no-load reading
class BaselineTracker {
 public:
  explicit BaselineTracker(BaselineMode mode = BaselineMode::before_each, int k = 1);

  void observe_no_load(const FluxVector& flux);
  FluxVector contact_delta(const FluxVector& flux);

  BaselineMode mode() const { return mode_; }
  int k() const { return k_; }
  bool has_baseline() const { return has_baseline_; }
  const FluxVector& current_baseline() const { return baseline_; }

 private:
  BaselineMode mode_;
  int k_;
  bool has_baseline_ = false;
  int contacts_since_update_ = 0;
  FluxVector baseline_ = FluxVector::Zero();
};

// One delta per frame: each frame's flux minus the baseline in effect after
// that frame has been observed. Contact frames never update the baseline.
std::vector<FluxVector> apply_baseline(BaselineTracker tracker,
                                       std::span<const FluxFrame> frames,
                                       const std::vector<bool>& contact_markers);

// CSV log: header `t_us,chip0_temp,chip0_bx,...,chip4_bz`. Floats are written
// in shortest round-trip form, so parsing a line restores the frame exactly.
std::string csv_header();
std::string to_csv_line(const FluxFrame& frame);
FluxFrame parse_csv_line(std::string_view line);
std::string to_csv(std::span<const FluxFrame> frames);
std::vector<FluxFrame> parse_csv(std::string_view text);

// Wall-clock offsets (seconds from the first frame) at which a replay emits
// each frame: recorded pace, never faster than `max_rate_hz` when positive.
std::vector<double> replay_schedule(std::span<const FluxFrame> frames,
                                    double max_rate_hz);

}  // namespace reskin::protocol
