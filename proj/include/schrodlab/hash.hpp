#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

namespace schrodlab {

/// 64-bit FNV-1a, fed field by field. Doubles are hashed by bit pattern,
/// so two values hash equal only when they are bit-identical.
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& u64(std::uint64_t v) noexcept {
        for (int i = 0; i < 8; ++i) {
            const unsigned char b = static_cast<unsigned char>(v >> (8 * i));
            bytes(&b, 1);
        }
        return *this;
    }
    Fnv1a& f64(double v) noexcept { return u64(std::bit_cast<std::uint64_t>(v)); }
    Fnv1a& str(std::string_view s) noexcept {
        u64(s.size());
        return bytes(s.data(), s.size());
    }
    Fnv1a& f64s(std::span<const double> vs) noexcept {
        u64(vs.size());
        for (double v : vs) f64(v);
        return *this;
    }
    std::uint64_t value() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace schrodlab
