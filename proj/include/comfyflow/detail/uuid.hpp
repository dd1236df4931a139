#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace comfyflow::detail {

/// Random (version 4) UUID in canonical 8-4-4-4-12 form.
inline std::string uuid4() {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uint64_t hi = rng(), lo = rng();
    hi = (hi & 0xffffffffffff0fffull) | 0x0000000000004000ull;
    lo = (lo & 0x3fffffffffffffffull) | 0x8000000000000000ull;
    static const char* hex = "0123456789abcdef";
    std::string out;
    auto put = [&](std::uint64_t v, int from, int to) {
        for (int i = from; i >= to; --i) out += hex[(v >> (i * 4)) & 0xf];
    };
    put(hi, 15, 8);
    out += '-';
    put(hi, 7, 4);
    out += '-';
    put(hi, 3, 0);
    out += '-';
    put(lo, 15, 12);
    out += '-';
    put(lo, 11, 0);
    return out;
}

}  // namespace comfyflow::detail
