#include "naflab/rng.hpp"

#include <cmath>

#include "naflab/errors.hpp"

namespace naflab {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label_hash) {
    return splitmix64(splitmix64(parent ^ label_hash) + 0x632be59bd9b4e019ull);
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

RandomStream RandomStream::child(std::string_view label) const {
    return RandomStream(derive_seed(seed_, fnv1a64(label)));
}

RandomStream RandomStream::child(std::string_view label, std::uint64_t index) const {
    return RandomStream(derive_seed(seed_, fnv1a64(label) ^ splitmix64(index)));
}

std::uint64_t RandomStream::next_u64() { return engine_(); }

double RandomStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_pos() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

std::size_t RandomStream::uniform_index(std::size_t n) {
    if (n == 0) throw DomainError("uniform_index: n must be positive");
    // Multiply-shift bounded draw; bias is < n / 2^64.
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
}

bool RandomStream::bernoulli(double p) { return uniform() < p; }

std::size_t RandomStream::categorical(const std::vector<double>& probs) {
    if (probs.empty()) throw DomainError("categorical: empty probability vector");
    double u = uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    // Guard against rounding when the row sums to slightly below 1.
    return probs.size() - 1;
}

}  // namespace naflab
