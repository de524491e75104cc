#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace rlq {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A block of
/// four 32-bit words is a pure function of (counter, key): no state, no
/// sequencing, so any (path, step) draw can be regenerated in isolation.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter counter, Key key) noexcept;
};

/// Standard normal draws keyed by (seed, path, step). Each Philox block feeds
/// one Box-Muller pair; `out.size()` normals are written, using as many
/// blocks as needed (block index is the third counter word).
void keyed_normals(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                   std::span<double> out) noexcept;

/// Uniform on the open interval (0, 1) keyed like keyed_normals.
double keyed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint32_t index) noexcept;

}  // namespace rlq
