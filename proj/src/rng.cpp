#include "levyfbsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace levyfbsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

CounterStream::CounterStream(std::uint64_t seed, StreamTag tag) : seed_(seed), tag_(tag) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag)));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<std::uint32_t, 4> CounterStream::block(std::uint64_t row, std::uint64_t col) const {
  return philox4x32({static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(col >> 32),
                     static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(row >> 32)},
                    key_);
}

double CounterStream::uniform(std::uint64_t row, std::uint64_t col, int k) const {
  const auto w = block(row, col);
  return k == 0 ? to_open_unit(w[0], w[1]) : to_open_unit(w[2], w[3]);
}

std::array<double, 2> CounterStream::normal_pair(std::uint64_t row, std::uint64_t col) const {
  const auto w = block(row, col);
  const double u1 = to_open_unit(w[0], w[1]);
  const double u2 = to_open_unit(w[2], w[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace levyfbsde
