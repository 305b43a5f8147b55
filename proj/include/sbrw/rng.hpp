#pragma once

#include <cstdint>
#include <limits>

namespace sbrw {

/// SplitMix64 output function. Used both as the stream generator and as the
/// key-derivation hash for splitting.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Combine two 64-bit values into a new key (order-sensitive).
constexpr std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(a ^ mix64(b + 0x9e3779b97f4a7c15ULL));
}

/// Counter-based random stream: the i-th draw is mix64(key + i * golden).
///
/// A stream is fully described by (key, counter), so any replica or particle
/// can own an independent stream derived by `split` without touching shared
/// state. Uniform draws are built from the top 53 bits so that results are
/// bit-identical across standard libraries.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return next_u64(); }

    constexpr std::uint64_t next_u64() noexcept
    {
        ++counter_;
        return mix64(key_ + counter_ * kGolden);
    }

    /// Uniform on the open interval (0, 1).
    constexpr double uniform() noexcept
    {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Child stream number `index`; independent of how far this stream has advanced.
    [[nodiscard]] constexpr Stream split(std::uint64_t index) const noexcept
    {
        return Stream(combine_keys(key_, index));
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] constexpr std::uint64_t draws() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Stream for replica `replica_index` of a run seeded with `master_seed`.
/// This is the splitting function every module uses for replicas.
constexpr Stream replica_stream(std::uint64_t master_seed, std::uint64_t replica_index) noexcept
{
    return Stream(master_seed).split(replica_index);
}

} // namespace sbrw
