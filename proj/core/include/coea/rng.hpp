#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coea {

// Deterministic xoshiro256++ generator. All randomness in the project goes
// through this class so that a fixed seed reproduces runs bit-for-bit,
// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double next_double();

    // Uniform integer in [0, n). n must be > 0.
    uint64_t bounded(uint64_t n);

    // Standard normal via Box-Muller, with cached spare.
    double next_gaussian();

    // Derive an independent stream; `stream` distinguishes children of the
    // same parent seed.
    Rng fork(uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(bounded(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k);

private:
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// 64-bit FNV-1a over raw bytes; also used to derive per-call RNG seeds.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
std::string fnv1a64_hex(const std::string& s);

}  // namespace coea
