#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace awm {

// ---------------------------------------------------------------------------
// Errors. Every failure surfaced to callers derives from Error; the subtypes
// map to the CLI exit codes (config=2, data=3, stage=4).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& msg)
        : Error("stage '" + stage + "' failed: " + msg), stage_name(stage) {}
    std::string stage_name;
};

// ---------------------------------------------------------------------------
// Hashing and seeded randomness.
//
// All randomness in the workbench flows from one top-level seed. Consumers
// derive an independent stream per purpose via derive_seed(seed, "name"),
// so adding a stage never perturbs the draws of another.
// ---------------------------------------------------------------------------

constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t seed, std::string_view purpose) {
    return splitmix64(seed ^ fnv1a64(purpose));
}

// Small deterministic generator (xoshiro256** core seeded by splitmix64).
// Self-contained so results are identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& w : s_) w = (x = splitmix64(x));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, n). Rejection-free Lemire multiply-shift; bias is
    // negligible for the n used here and the result is platform-stable.
    uint32_t next_below(uint32_t n) {
        return static_cast<uint32_t>((static_cast<uint64_t>(static_cast<uint32_t>(next_u64())) * n) >> 32);
    }

    // Uniform float in [0, 1) with 24 bits of precision.
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
};

// ---------------------------------------------------------------------------
// Thread pool-less parallel_for. Used only for read-only model work (attack
// generation, evaluation). Work is split by index range; every item writes
// to its own output slot, so results do not depend on the thread count.
// ---------------------------------------------------------------------------

inline int max_threads() {
    if (const char* env = std::getenv("AWM_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// fn(thread_index, begin, end)
inline void parallel_chunks(int64_t n, const std::function<void(int, int64_t, int64_t)>& fn) {
    int nthreads = max_threads();
    if (n <= 0) return;
    if (nthreads > n) nthreads = static_cast<int>(n);
    if (nthreads <= 1) {
        fn(0, 0, n);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(nthreads);
    int64_t chunk = (n + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        int64_t b = t * chunk;
        int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back([&fn, t, b, e] { fn(t, b, e); });
    }
    for (auto& w : workers) w.join();
}

inline std::string to_hex16(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace awm
