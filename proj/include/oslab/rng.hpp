#pragma once

#include <array>
#include <cstdint>

namespace oslab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is a
// pure function of (key, counter), so results never depend on scheduling.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

// 53-bit uniform in the open interval (0, 1) built from two 32-bit words.
double uniform_open(std::uint32_t hi, std::uint32_t lo) noexcept;

// A reproducible stream addressed by (seed, stream id). Consumes Philox blocks
// sequentially; two streams with different ids never overlap.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  double uniform() noexcept;
  double normal() noexcept;

 private:
  void refill() noexcept;

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// Two standard normals addressed directly by a 4-word counter.
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept;

// Splits one master seed into independent sub-seeds (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) noexcept;

}  // namespace oslab
