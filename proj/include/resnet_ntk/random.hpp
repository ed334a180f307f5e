#pragma once

#include <array>
#include <cstdint>

namespace resnet_ntk {

// Named substreams. Every random quantity is keyed by (seed, stream, a, b)
// so draws do not depend on evaluation order or thread count.
enum class Stream : std::uint32_t {
    data = 1,
    labels = 2,
    init = 3,
    lambda_mc = 4,
    ball = 5,
    lipschitz = 6,
    power_restart = 7,
    test = 99,
};

// Philox4x32-10 counter-based generator. The key is derived from
// (seed, stream); the upper counter words carry the two sub-indices
// (typically layer and row) and the lower words a running block index.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream stream, std::uint32_t sub_a = 0,
               std::uint32_t sub_b = 0) noexcept;

    std::uint32_t next_u32() noexcept;
    // Uniform on (0, 1), 53-bit resolution, never exactly 0 or 1.
    double uniform() noexcept;
    // Standard normal via Box-Muller; both outputs of a pair are used.
    double normal() noexcept;

    static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                                std::array<std::uint32_t, 2> key) noexcept;

private:
    void refill() noexcept;

    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 4> block_{};
    unsigned next_word_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

} // namespace resnet_ntk
