#include <bit>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "reskin/protocol.hpp"

using namespace reskin;
using namespace reskin::protocol;

namespace {

FluxFrame random_frame(std::mt19937_64& rng, std::uint64_t ts) {
  std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
  FluxFrame f;
  f.timestamp_us = ts;
  for (auto& c : f.chips) c = {u(rng), u(rng), u(rng), u(rng)};
  return f;
}

std::vector<FluxFrame> random_frames(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<FluxFrame> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_frame(rng, 2500 * i));
  return out;
}

// Bitwise CRC-16/CCITT-FALSE, one bit at a time.
std::uint16_t crc_oracle(const std::vector<std::uint8_t>& data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : data)
    for (int bit = 7; bit >= 0; --bit) {
      const bool in = (byte >> bit) & 1;
      const bool top = crc & 0x8000;
      crc = static_cast<std::uint16_t>(crc << 1);
      if (in != top) crc ^= 0x1021;
    }
  return crc;
}

FluxVector flux_fill(double v) { return FluxVector::Constant(v); }

}  // namespace

TEST(Crc, CheckValue) {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> bytes(s.begin(), s.end());
  EXPECT_EQ(crc16_ccitt(bytes), 0x29B1);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint8_t> v(rng() % 100);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(crc16_ccitt(v), crc_oracle(v));
  }
}

TEST(Frame, ZeroFrameLayout) {
  const WireFrame w = encode_frame(FluxFrame{});
  ASSERT_EQ(w.size(), 92u);
  EXPECT_EQ(w[0], 0xAA);
  EXPECT_EQ(w[1], 0x55);
  for (std::size_t i = 2; i < 90; ++i) EXPECT_EQ(w[i], 0) << i;
  const std::vector<std::uint8_t> payload(88, 0);
  const std::uint16_t crc = crc_oracle(payload);
  EXPECT_EQ(w[90], crc & 0xFF);
  EXPECT_EQ(w[91], crc >> 8);
}

TEST(Frame, Bx0IsLittleEndianFloat) {
  FluxFrame f;
  f.chips[0].bx = 1.0f;
  const WireFrame w = encode_frame(f);
  // sync(2) + timestamp(8) + chip0 temp(4)
  EXPECT_EQ(w[14], 0x00);
  EXPECT_EQ(w[15], 0x00);
  EXPECT_EQ(w[16], 0x80);
  EXPECT_EQ(w[17], 0x3F);
}

TEST(Frame, TimestampLittleEndian) {
  FluxFrame f;
  f.timestamp_us = 0x0102030405060708ull;
  const WireFrame w = encode_frame(f);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(w[2 + i], 8 - i);
}

TEST(Frame, RoundTripIsBitExact) {
  const auto frames = random_frames(10000, 1);
  for (const auto& f : frames) {
    const WireFrame w = encode_frame(f);
    FluxFrame back;
    ASSERT_TRUE(decode_frame(w, back));
    ASSERT_TRUE(bitwise_equal(f, back));
  }
}

TEST(Frame, SpecialFloatsSurvive) {
  FluxFrame f;
  f.chips[1].by = -0.0f;
  f.chips[2].bz = std::numeric_limits<float>::infinity();
  f.chips[3].temp = std::numeric_limits<float>::denorm_min();
  FluxFrame back;
  ASSERT_TRUE(decode_frame(encode_frame(f), back));
  EXPECT_TRUE(bitwise_equal(f, back));
  EXPECT_TRUE(std::signbit(back.chips[1].by));
}

TEST(Frame, MakeFrameAndFluxOf) {
  FluxVector flux;
  for (int i = 0; i < kFluxDim; ++i) flux[i] = 0.25 * i;
  const auto f = make_frame(77, flux, TempVector::Constant(25.0));
  EXPECT_EQ(f.timestamp_us, 77u);
  EXPECT_EQ(flux_of(f), flux);
  EXPECT_EQ(f.chips[4].temp, 25.0f);
}

TEST(Decoder, CleanConcatenation) {
  const auto frames = random_frames(10, 2);
  const auto r = decode_stream(encode_frames(frames));
  ASSERT_EQ(r.frames.size(), 10u);
  EXPECT_EQ(r.stats.skipped_bytes, 0u);
  EXPECT_EQ(r.stats.crc_failures, 0u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(bitwise_equal(r.frames[i], frames[i]));
}

TEST(Decoder, FlippedPayloadBitLosesOnlyThatFrame) {
  const auto frames = random_frames(10, 3);
  auto bytes = encode_frames(frames);
  bytes[3 * kFrameSize + 40] ^= 0x10;
  const auto r = decode_stream(bytes);
  EXPECT_EQ(r.stats.crc_failures, 1u);
  ASSERT_EQ(r.frames.size(), 9u);
  EXPECT_TRUE(bitwise_equal(r.frames[3], frames[4]));
}

TEST(Decoder, MidFrameStart) {
  const auto frames = random_frames(6, 4);
  const auto bytes = encode_frames(frames);
  const std::vector<std::uint8_t> tail(bytes.begin() + 37, bytes.end());
  const auto r = decode_stream(tail);
  ASSERT_EQ(r.frames.size(), 5u);
  EXPECT_TRUE(bitwise_equal(r.frames[0], frames[1]));
  EXPECT_EQ(r.stats.skipped_bytes, kFrameSize - 37);
}

TEST(Decoder, ChunkingDoesNotMatter) {
  const auto frames = random_frames(200, 5);
  auto bytes = encode_frames(frames);
  bytes[50 * kFrameSize + 7] ^= 0x01;
  const auto whole = decode_stream(bytes);
  std::mt19937_64 rng(6);
  StreamDecoder dec;
  std::vector<FluxFrame> out;
  std::size_t at = 0;
  while (at < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(1 + rng() % 300, bytes.size() - at);
    dec.feed({bytes.data() + at, n}, out);
    at += n;
  }
  dec.finish();
  ASSERT_EQ(out.size(), whole.frames.size());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_TRUE(bitwise_equal(out[i], whole.frames[i]));
  EXPECT_EQ(dec.stats().crc_failures, whole.stats.crc_failures);
  EXPECT_EQ(dec.stats().skipped_bytes, whole.stats.skipped_bytes);
}

TEST(Decoder, SingleBitCorruptionProperty) {
  // Every frame the decoder yields is one that was sent, and at most the hit
  // frame plus one neighbour is lost.
  const auto frames = random_frames(400, 7);
  const auto clean = encode_frames(frames);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    auto bytes = clean;
    const std::size_t bit = rng() % (bytes.size() * 8);
    bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    const auto r = decode_stream(bytes);
    EXPECT_GE(r.frames.size() + 2, frames.size());
    std::size_t j = 0;
    for (const auto& f : r.frames) {
      while (j < frames.size() && !bitwise_equal(frames[j], f)) ++j;
      ASSERT_LT(j, frames.size()) << "decoded a frame that was never sent";
      ++j;
    }
  }
}

TEST(Decoder, GarbageNeverYieldsInvalidFrames) {
  std::mt19937_64 rng(9);
  std::vector<std::uint8_t> junk(200000);
  for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
  // Seed the junk with sync pairs to exercise the scanner.
  for (std::size_t i = 0; i + 1 < junk.size(); i += 97) junk[i] = 0xAA, junk[i + 1] = 0x55;
  const auto r = decode_stream(junk);
  for (const auto& f : r.frames) {
    const auto w = encode_frame(f);
    FluxFrame back;
    EXPECT_TRUE(decode_frame(w, back));
  }
  EXPECT_GT(r.stats.crc_failures, 1000u);
}

TEST(Decoder, TimestampRegressionsCounted) {
  auto frames = random_frames(5, 10);
  frames[3].timestamp_us = 1;
  const auto r = decode_stream(encode_frames(frames));
  EXPECT_EQ(r.frames.size(), 5u);
  EXPECT_EQ(r.stats.timestamp_regressions, 1u);
}

TEST(Baseline, BeforeEachSubtractsPrecedingNoLoad) {
  BaselineTracker t(BaselineMode::before_each);
  t.observe_no_load(flux_fill(1.0));
  EXPECT_EQ(t.contact_delta(flux_fill(3.0)), flux_fill(2.0));
  t.observe_no_load(flux_fill(1.5));
  EXPECT_EQ(t.contact_delta(flux_fill(3.0)), flux_fill(1.5));
}

TEST(Baseline, ContactBeforeAnyNoLoadThrows) {
  BaselineTracker t;
  EXPECT_THROW(t.contact_delta(flux_fill(1.0)), std::logic_error);
}

TEST(Baseline, EveryKRefreshesAfterKContacts) {
  BaselineTracker t(BaselineMode::every_k, 2);
  t.observe_no_load(flux_fill(1.0));
  t.contact_delta(flux_fill(0.0));
  t.observe_no_load(flux_fill(2.0));  // one contact so far: kept
  EXPECT_EQ(t.current_baseline(), flux_fill(1.0));
  t.contact_delta(flux_fill(0.0));
  t.observe_no_load(flux_fill(3.0));  // two contacts: refreshed
  EXPECT_EQ(t.current_baseline(), flux_fill(3.0));
}

TEST(Baseline, OnceAccumulatesDrift) {
  // Linear baseline drift; identical contact signal at every step.
  std::vector<FluxFrame> frames;
  std::vector<bool> contact;
  const FluxVector signal = flux_fill(0.5);
  for (int i = 0; i < 100; ++i) {
    const FluxVector base = flux_fill(0.01 * i);
    frames.push_back(make_frame(2 * i, base, TempVector::Zero()));
    contact.push_back(false);
    frames.push_back(make_frame(2 * i + 1, base + signal, TempVector::Zero()));
    contact.push_back(true);
  }
  const auto once = apply_baseline(BaselineTracker(BaselineMode::once), frames, contact);
  EXPECT_GT(once.back().norm(), once[1].norm() * 1.5);
  const auto each = apply_baseline(BaselineTracker(BaselineMode::before_each), frames, contact);
  for (std::size_t i = 1; i < each.size(); i += 2)
    EXPECT_LE((each[i] - flux_of(make_frame(0, signal, TempVector::Zero()))).norm(), 1e-6);
}

TEST(Baseline, ZeroContactStreamIsZeroInEveryMode) {
  std::vector<FluxFrame> frames;
  std::vector<bool> contact;
  for (int i = 0; i < 40; ++i) {
    frames.push_back(make_frame(i, flux_fill(3.0), TempVector::Zero()));
    contact.push_back(i % 2 == 1);
  }
  for (auto mode : {BaselineMode::once, BaselineMode::every_k, BaselineMode::before_each})
    for (const auto& d : apply_baseline(BaselineTracker(mode, 3), frames, contact))
      EXPECT_EQ(d, FluxVector::Zero());
}

TEST(Baseline, BeforeEachInvariantToAdditiveDrift) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<FluxFrame> plain, drifted;
  std::vector<bool> contact;
  FluxVector offset = FluxVector::Zero();
  for (int i = 0; i < 200; ++i) {
    FluxVector base, sig;
    for (int k = 0; k < kFluxDim; ++k) base[k] = 100.0, sig[k] = n(rng);
    // Offsets stay on a coarse grid so float storage is exact.
    for (int k = 0; k < kFluxDim; ++k) offset[k] += std::round(n(rng)) * 0.25;
    plain.push_back(make_frame(0, base, TempVector::Zero()));
    drifted.push_back(make_frame(0, base + offset, TempVector::Zero()));
    contact.push_back(false);
    FluxVector c = base;
    for (int k = 0; k < kFluxDim; ++k) c[k] += std::round(sig[k] * 16.0) / 16.0;
    plain.push_back(make_frame(0, c, TempVector::Zero()));
    drifted.push_back(make_frame(0, c + offset, TempVector::Zero()));
    contact.push_back(true);
  }
  const auto a = apply_baseline(BaselineTracker(BaselineMode::before_each), plain, contact);
  const auto b = apply_baseline(BaselineTracker(BaselineMode::before_each), drifted, contact);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(BaselineMode, Names) {
  for (auto m : {BaselineMode::once, BaselineMode::every_k, BaselineMode::before_each})
    EXPECT_EQ(parse_baseline_mode(to_string(m)), m);
  EXPECT_THROW(parse_baseline_mode("sometimes"), std::exception);
  EXPECT_THROW(BaselineTracker(BaselineMode::every_k, 0), std::exception);
}

TEST(Csv, HeaderAndRoundTrip) {
  const auto h = csv_header();
  EXPECT_EQ(h.rfind("t_us,chip0_temp,chip0_bx,chip0_by,chip0_bz,chip1_temp", 0), 0u);
  EXPECT_TRUE(h.ends_with("chip4_bz"));
  const auto frames = random_frames(500, 12);
  const auto back = parse_csv(to_csv(frames));
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_TRUE(bitwise_equal(back[i], frames[i]));
}

TEST(Csv, MalformedLineThrows) {
  EXPECT_THROW(parse_csv_line("1,2,3"), std::exception);
}

TEST(Replay, FourThousandFramesAt400HzTakeTenSeconds) {
  std::vector<FluxFrame> frames(4000);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].timestamp_us = 2500 * i;
  const auto t = replay_schedule(frames, 400.0);
  EXPECT_NEAR(t.back() + 1.0 / 400.0, 10.0, 0.05 * 10.0);
  // Faster recordings are slowed to the rate cap.
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].timestamp_us = 100 * i;
  const auto capped = replay_schedule(frames, 400.0);
  EXPECT_NEAR(capped.back(), 3999 / 400.0, 1e-9);
  const auto uncapped = replay_schedule(frames, 0.0);
  EXPECT_NEAR(uncapped.back(), 0.3999, 1e-9);
}
