#pragma once

#include <cstdint>

namespace fednewsrec {

// Counter-based splittable generator. Draw i of a stream is a pure function
// of (seed, stream_id, i): a SplitMix64 finalizer applied to a per-stream key
// advanced by the golden-ratio increment. split() derives a child stream id
// by hashing, independently of how many draws the parent has made, so
// per-client streams never depend on scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  Rng split(std::uint64_t k) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fednewsrec
