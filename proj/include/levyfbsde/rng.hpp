#pragma once

#include <array>
#include <cstdint>

namespace levyfbsde {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

enum class StreamTag : std::uint64_t {
  Brownian = 1,
  Jumps = 2,
  Bridge = 3,
  Bootstrap = 4,
  Synthetic = 5,
};

// Stateless stream: every draw is addressed by (row, column), so results never
// depend on the order in which paths are visited.
class CounterStream {
 public:
  CounterStream() : CounterStream(0, StreamTag::Synthetic) {}
  CounterStream(std::uint64_t seed, StreamTag tag);

  std::array<std::uint32_t, 4> block(std::uint64_t row, std::uint64_t col) const;

  // Uniform on the open interval (0,1) built from words (2k, 2k+1) of a block.
  double uniform(std::uint64_t row, std::uint64_t col, int k = 0) const;
  // Two independent standard normals from one block (Box-Muller).
  std::array<double, 2> normal_pair(std::uint64_t row, std::uint64_t col) const;

  std::uint64_t seed() const { return seed_; }
  StreamTag tag() const { return tag_; }

 private:
  std::uint64_t seed_;
  StreamTag tag_;
  std::array<std::uint32_t, 2> key_;
};

double to_open_unit(std::uint32_t hi, std::uint32_t lo);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace levyfbsde
