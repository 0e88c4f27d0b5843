#include "leveldot/rng.hpp"

namespace leveldot {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

PhiloxStream::Block PhiloxStream::philox4x32_10(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

PhiloxStream::PhiloxStream(SeedPath path, std::uint32_t stream_tag) : index_(path.index) {
    const std::uint64_t k = splitmix64(path.master ^ splitmix64(0x5EED0000ULL + stream_tag));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

void PhiloxStream::refill() {
    const Block ctr = {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                       static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32)};
    buffer_ = philox4x32_10(ctr, key_);
    ++block_;
    cursor_ = 0;
}

std::uint32_t PhiloxStream::next_u32() {
    if (cursor_ == 4) refill();
    return buffer_[cursor_++];
}

std::uint64_t PhiloxStream::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double PhiloxStream::uniform() {
    // (k + 0.5) / 2^53 never hits 0 or 1.
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double PhiloxStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

}  // namespace leveldot
