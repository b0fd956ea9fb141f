#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace reskin {

constexpr int kNumMagnetometers = 5;
constexpr int kFluxDim = 3 * kNumMagnetometers;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using FluxVector = Eigen::Matrix<double, kFluxDim, 1>;
using TempVector = Eigen::Matrix<double, kNumMagnetometers, 1>;

// Error hierarchy. The CLI maps each family onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Mixes a base seed with a stream tag and an index so that every sensor,
// protocol and training job gets an independent, reproducible seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(tag)) + index);
}

// 64-bit FNV-1a, used for config and artifact hashes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value);

}  // namespace reskin
