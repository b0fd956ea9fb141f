#include "reskin/protocol.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <stdexcept>

namespace reskin::protocol {

namespace {

void put_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

void put_f32(std::uint8_t* p, float f) {
  const auto v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

std::array<float, 4> chip_values(const ChipSample& c) { return {c.temp, c.bx, c.by, c.bz}; }

void append_float(std::string& out, float f) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  out.append(buf, res.ptr);
}

}  // namespace

bool bitwise_equal(const FluxFrame& a, const FluxFrame& b) {
  if (a.timestamp_us != b.timestamp_us) return false;
  for (int c = 0; c < kNumMagnetometers; ++c) {
    const auto va = chip_values(a.chips[c]);
    const auto vb = chip_values(b.chips[c]);
    for (int i = 0; i < 4; ++i)
      if (std::bit_cast<std::uint32_t>(va[i]) != std::bit_cast<std::uint32_t>(vb[i]))
        return false;
  }
  return true;
}

FluxFrame make_frame(std::uint64_t timestamp_us, const FluxVector& flux,
                     const TempVector& temperature) {
  FluxFrame f;
  f.timestamp_us = timestamp_us;
  for (int c = 0; c < kNumMagnetometers; ++c) {
    f.chips[c].temp = static_cast<float>(temperature[c]);
    f.chips[c].bx = static_cast<float>(flux[3 * c]);
    f.chips[c].by = static_cast<float>(flux[3 * c + 1]);
    f.chips[c].bz = static_cast<float>(flux[3 * c + 2]);
  }
  return f;
}

FluxVector flux_of(const FluxFrame& frame) {
  FluxVector v;
  for (int c = 0; c < kNumMagnetometers; ++c) {
    v[3 * c] = frame.chips[c].bx;
    v[3 * c + 1] = frame.chips[c].by;
    v[3 * c + 2] = frame.chips[c].bz;
  }
  return v;
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte) << 8;
    for (int bit = 0; bit < 8; ++bit)
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
  }
  return crc;
}

WireFrame encode_frame(const FluxFrame& frame) {
  WireFrame out{};
  out[0] = kSync0;
  out[1] = kSync1;
  put_u64(out.data() + 2, frame.timestamp_us);
  std::uint8_t* p = out.data() + 10;
  for (const auto& chip : frame.chips)
    for (float v : chip_values(chip)) {
      put_f32(p, v);
      p += 4;
    }
  const std::uint16_t crc = crc16_ccitt({out.data() + 2, kPayloadSize});
  out[90] = static_cast<std::uint8_t>(crc & 0xFF);
  out[91] = static_cast<std::uint8_t>(crc >> 8);
  return out;
}

std::vector<std::uint8_t> encode_frames(std::span<const FluxFrame> frames) {
  std::vector<std::uint8_t> out;
  out.reserve(frames.size() * kFrameSize);
  for (const auto& f : frames) {
    const auto w = encode_frame(f);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

bool decode_frame(std::span<const std::uint8_t, kFrameSize> bytes, FluxFrame& out) {
  if (bytes[0] != kSync0 || bytes[1] != kSync1) return false;
  const std::uint16_t expected = static_cast<std::uint16_t>(bytes[90] | (bytes[91] << 8));
  if (crc16_ccitt(bytes.subspan(2, kPayloadSize)) != expected) return false;
  out.timestamp_us = get_u64(bytes.data() + 2);
  const std::uint8_t* p = bytes.data() + 10;
  for (auto& chip : out.chips) {
    chip.temp = get_f32(p);
    chip.bx = get_f32(p + 4);
    chip.by = get_f32(p + 8);
    chip.bz = get_f32(p + 12);
    p += 16;
  }
  return true;
}

void StreamDecoder::feed(std::span<const std::uint8_t> chunk,
                         std::vector<FluxFrame>& out) {
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  for (;;) {
    // Seek the next sync pair.
    std::size_t pos = head_;
    while (pos + 1 < buffer_.size() &&
           !(buffer_[pos] == kSync0 && buffer_[pos + 1] == kSync1))
      ++pos;
    if (pos + 1 >= buffer_.size()) {
      // Keep a trailing 0xAA that may start a sync pair in the next chunk.
      const std::size_t keep =
          (!buffer_.empty() && pos < buffer_.size() && buffer_[pos] == kSync0) ? pos
                                                                                 : buffer_.size();
      stats_.skipped_bytes += keep - head_;
      head_ = keep;
      break;
    }
    stats_.skipped_bytes += pos - head_;
    head_ = pos;
    if (buffer_.size() - head_ < kFrameSize) break;

    FluxFrame frame;
    if (decode_frame(std::span<const std::uint8_t, kFrameSize>(buffer_.data() + head_, kFrameSize),
                     frame)) {
      if (have_last_ts_ && frame.timestamp_us < last_ts_) ++stats_.timestamp_regressions;
      have_last_ts_ = true;
      last_ts_ = frame.timestamp_us;
      out.push_back(frame);
      ++stats_.frames;
      head_ += kFrameSize;
    } else {
      ++stats_.crc_failures;
      ++stats_.skipped_bytes;
      ++head_;
    }
  }
  if (head_ > 4096 && head_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
}

void StreamDecoder::finish() {
  stats_.skipped_bytes += buffer_.size() - head_;
  buffer_.clear();
  head_ = 0;
}

DecodeResult decode_stream(std::span<const std::uint8_t> bytes) {
  DecodeResult result;
  StreamDecoder decoder;
  decoder.feed(bytes, result.frames);
  decoder.finish();
  result.stats = decoder.stats();
  return result;
}

std::string to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::once: return "once";
    case BaselineMode::every_k: return "every_k";
    case BaselineMode::before_each: return "before_each";
  }
  return "?";
}

BaselineMode parse_baseline_mode(std::string_view name) {
  if (name == "once") return BaselineMode::once;
  if (name == "every_k") return BaselineMode::every_k;
  if (name == "before_each") return BaselineMode::before_each;
  throw ConfigError("unknown baseline mode '" + std::string(name) + "'");
}

BaselineTracker::BaselineTracker(BaselineMode mode, int k) : mode_(mode), k_(k) {
  if (mode == BaselineMode::every_k && k < 1)
    throw std::invalid_argument("every_k baseline mode requires k >= 1");
}

void BaselineTracker::observe_no_load(const FluxVector& flux) {
  bool take = !has_baseline_;
  switch (mode_) {
    case BaselineMode::once: break;
    case BaselineMode::every_k: take = take || contacts_since_update_ >= k_; break;
    case BaselineMode::before_each: take = true; break;
  }
  if (take) {
    baseline_ = flux;
    has_baseline_ = true;
    contacts_since_update_ = 0;
  }
}

FluxVector BaselineTracker::contact_delta(const FluxVector& flux) {
  if (!has_baseline_)
    throw std::logic_error("contact reading before any no-load reading");
  ++contacts_since_update_;
  return flux - baseline_;
}

std::vector<FluxVector> apply_baseline(BaselineTracker tracker,
                                       std::span<const FluxFrame> frames,
                                       const std::vector<bool>& contact_markers) {
  if (contact_markers.size() != frames.size())
    throw std::invalid_argument("contact markers must align with frames");
  std::vector<FluxVector> deltas;
  deltas.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FluxVector flux = flux_of(frames[i]);
    if (contact_markers[i]) {
      deltas.push_back(tracker.contact_delta(flux));
    } else {
      tracker.observe_no_load(flux);
      deltas.push_back(flux - tracker.current_baseline());
    }
  }
  return deltas;
}

std::string csv_header() {
  std::string h = "t_us";
  for (int c = 0; c < kNumMagnetometers; ++c)
    for (const char* f : {"temp", "bx", "by", "bz"})
      h += ",chip" + std::to_string(c) + "_" + f;
  return h;
}

std::string to_csv_line(const FluxFrame& frame) {
  std::string line = std::to_string(frame.timestamp_us);
  for (const auto& chip : frame.chips)
    for (float v : chip_values(chip)) {
      line += ',';
      append_float(line, v);
    }
  return line;
}

FluxFrame parse_csv_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  FluxFrame f;
  const char* p = line.data();
  const char* end = line.data() + line.size();
  auto res = std::from_chars(p, end, f.timestamp_us);
  if (res.ec != std::errc{}) throw IoError("bad timestamp in CSV line");
  p = res.ptr;
  for (auto& chip : f.chips)
    for (float* v : {&chip.temp, &chip.bx, &chip.by, &chip.bz}) {
      if (p == end || *p != ',') throw IoError("CSV line has too few fields");
      ++p;
      res = std::from_chars(p, end, *v);
      if (res.ec != std::errc{}) throw IoError("bad float in CSV line");
      p = res.ptr;
    }
  if (p != end) throw IoError("CSV line has too many fields");
  return f;
}

std::string to_csv(std::span<const FluxFrame> frames) {
  std::string out = csv_header() + "\n";
  for (const auto& f : frames) out += to_csv_line(f) + "\n";
  return out;
}

std::vector<FluxFrame> parse_csv(std::string_view text) {
  std::vector<FluxFrame> frames;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line == "\r") continue;
    if (header) {
      if (line.substr(0, 4) != "t_us") throw IoError("missing CSV header");
      header = false;
      continue;
    }
    frames.push_back(parse_csv_line(line));
  }
  return frames;
}

std::vector<double> replay_schedule(std::span<const FluxFrame> frames,
                                    double max_rate_hz) {
  std::vector<double> t(frames.size());
  if (frames.empty()) return t;
  const double min_gap = max_rate_hz > 0.0 ? 1.0 / max_rate_hz : 0.0;
  const std::uint64_t t0 = frames.front().timestamp_us;
  double prev = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::uint64_t ts = std::max(frames[i].timestamp_us, t0);
    double at = double(ts - t0) * 1e-6;
    if (i > 0) at = std::max(at, prev + min_gap);
    t[i] = at;
    prev = at;
  }
  return t;
}

}  // namespace reskin::protocol
