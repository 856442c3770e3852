#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace naflab {

// 64-bit FNV-1a, used to hash stream labels.
std::uint64_t fnv1a64(std::string_view s);

// splitmix64 finalizer; one invertible mixing round.
std::uint64_t splitmix64(std::uint64_t x);

// Derive a child seed from a parent seed and a label hash. Stable across
// platforms and documented in the README, so results never depend on
// scheduling or thread count.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label_hash);

// Deterministic random stream. All distributions are implemented on top of
// the raw mt19937_64 output so draws are bit-reproducible independent of the
// standard library version. Streams are single-owner; derive a child stream
// per task instead of sharing.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    // Child streams are derived from this stream's seed, never from its
    // current position, so derivation order does not matter.
    RandomStream child(std::string_view label) const;
    RandomStream child(std::string_view label, std::uint64_t index) const;

    std::uint64_t next_u64();

    // Uniform on [0, 1).
    double uniform();

    // Uniform on (0, 1]; never returns 0 (safe to take logs).
    double uniform_pos();

    // Standard normal via Box-Muller; second value is cached.
    double normal();

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n);

    bool bernoulli(double p);

    // Index drawn from an (unnormalized is not allowed) probability vector.
    std::size_t categorical(const std::vector<double>& probs);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace naflab
