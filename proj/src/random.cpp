#include "resnet_ntk/random.hpp"

#include <cmath>
#include <numbers>

namespace resnet_ntk {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

std::array<std::uint32_t, 4> CounterRng::philox(std::array<std::uint32_t, 4> ctr,
                                                 std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, Stream stream, std::uint32_t sub_a,
                       std::uint32_t sub_b) noexcept {
    const std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    counter_ = {0u, 0u, sub_a, sub_b};
}

void CounterRng::refill() noexcept {
    block_ = philox(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];
    next_word_ = 0;
}

std::uint32_t CounterRng::next_u32() noexcept {
    if (next_word_ >= 4) refill();
    return block_[next_word_++];
}

double CounterRng::uniform() noexcept {
    const std::uint64_t hi = next_u32() >> 5; // 27 bits
    const std::uint64_t lo = next_u32() >> 6; // 26 bits
    const std::uint64_t bits = (hi << 26) | lo;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

} // namespace resnet_ntk
