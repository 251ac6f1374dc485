#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "phasemark/errors.hpp"

namespace phasemark {

/// Unknown value in a partially observed bit window (erasure).
constexpr int kUnknownBit = -1;

/// Fibonacci shift-register description. `taps` are the exponents of the
/// feedback polynomial (tap n, the register length, is always included;
/// the constant term is implicit). The register window holds the last n
/// emitted bits and the seed is loaded most-significant bit first, so the
/// first n output bits read the seed from its top bit down:
///
///   bits[m] = bits[m-n] ^ XOR_{t in taps, t != n} bits[m-n+t]
struct LfsrSpec {
    int n = 0;
    std::vector<int> taps;
    std::uint32_t seed = 1;

    void validate() const {
        if (n < 2 || n > 16) raise(ErrorCode::InvalidArgument, "register length must be in [2,16]");
        if (seed == 0 || seed >= (1u << n))
            raise(ErrorCode::InvalidArgument, "seed must be a nonzero n-bit value");
        bool has_n = false;
        for (int t : taps) {
            if (t < 1 || t > n) raise(ErrorCode::InvalidArgument, "tap out of range");
            has_n = has_n || t == n;
        }
        if (!has_n) raise(ErrorCode::InvalidArgument, "tap n must be present");
    }
};

struct BitSequence {
    std::vector<std::uint8_t> bits;
    int length() const { return static_cast<int>(bits.size()); }
};

/// Lookup from n-bit window value (first bit = most significant) to its
/// unique start position. Windows are read cyclically, so every position
/// 0 .. 2^n-2 is decodable. The sequence is retained for long-window and
/// erasure matching.
struct WindowIndex {
    int n = 0;
    BitSequence seq;
    std::unordered_map<std::uint32_t, int> table;
};

/// One verified primitive polynomial per register length (exponent sets).
/// Primitivity is not assumed: generate_msequence fails if the produced
/// period falls short of 2^n - 1.
inline const std::vector<int>& default_taps(int n) {
    static const std::vector<std::vector<int>> table = {
        {},           {},           {2, 1},       {3, 1},          {4, 1},       {5, 2},
        {6, 1},       {7, 1},       {8, 6, 5, 4}, {9, 4},          {10, 7},      {11, 2},
        {12, 11, 10, 4}, {13, 4, 3, 1}, {14, 5, 3, 1}, {15, 1},    {16, 5, 3, 2}};
    if (n < 2 || n > 16) raise(ErrorCode::InvalidArgument, "no default polynomial for this n");
    return table[size_t(n)];
}

inline LfsrSpec default_lfsr(int n, std::uint32_t seed = 1) {
    return LfsrSpec{n, default_taps(n), seed};
}

/// Run the register for 2^n - 1 steps. Throws NonPrimitiveTaps if the
/// state returns to the seed early (the taps are not primitive).
inline BitSequence generate_msequence(const LfsrSpec& spec) {
    spec.validate();
    const int n = spec.n;
    const int period = (1 << n) - 1;

    std::vector<std::uint8_t> bits;
    bits.reserve(size_t(period + n));
    for (int k = 0; k < n; ++k) bits.push_back(std::uint8_t((spec.seed >> (n - 1 - k)) & 1u));

    for (int m = n; m < period + n; ++m) {
        std::uint8_t v = bits[size_t(m - n)];
        for (int t : spec.taps)
            if (t != n) v ^= bits[size_t(m - n + t)];
        bits.push_back(v);
        // state recurrence is a permutation, so an early return to the
        // initial window means the period divides m - n + 1 < 2^n - 1
        if (m - n + 1 < period &&
            std::equal(bits.begin() + (m - n + 1), bits.begin() + (m + 1), bits.begin()))
            raise(ErrorCode::NonPrimitiveTaps, "sequence repeats with period " +
                                                   std::to_string(m - n + 1) + " instead of " +
                                                   std::to_string(period));
    }
    if (!std::equal(bits.begin() + period, bits.end(), bits.begin()))
        raise(ErrorCode::NonPrimitiveTaps, "sequence does not close after 2^n - 1 steps");
    bits.resize(size_t(period));
    return BitSequence{std::move(bits)};
}

inline std::uint32_t window_value(const BitSequence& seq, int pos, int n) {
    std::uint32_t v = 0;
    const int len = seq.length();
    for (int i = 0; i < n; ++i) v = (v << 1) | seq.bits[size_t((pos + i) % len)];
    return v;
}

/// Index every cyclic n-window of an m-sequence. A duplicate window means
/// the input was not an m-sequence for this n.
inline WindowIndex build_window_index(const BitSequence& seq, int n) {
    if (seq.length() != (1 << n) - 1)
        raise(ErrorCode::InvalidArgument, "sequence length does not match window size");
    WindowIndex idx;
    idx.n = n;
    idx.seq = seq;
    idx.table.reserve(size_t(seq.length()));
    for (int p = 0; p < seq.length(); ++p) {
        const std::uint32_t v = window_value(seq, p, n);
        if (!idx.table.emplace(v, p).second)
            raise(ErrorCode::DuplicateWindow, "window of " + std::to_string(v) + " repeats");
    }
    return idx;
}

/// All cyclic start positions whose window matches every known bit.
/// `window` may be longer than index.n and may contain kUnknownBit
/// erasures; an exact fully-known n-window resolves via the table.
inline std::vector<int> decode_window(const WindowIndex& index, std::span<const int> window) {
    const int len = index.seq.length();
    const int w = static_cast<int>(window.size());
    if (w < index.n) raise(ErrorCode::InvalidArgument, "window shorter than index order");

    bool fully_known = true;
    for (int b : window)
        if (b == kUnknownBit) fully_known = false;

    if (fully_known && w == index.n) {
        std::uint32_t v = 0;
        for (int b : window) v = (v << 1) | std::uint32_t(b);
        auto it = index.table.find(v);
        if (it == index.table.end()) return {};
        return {it->second};
    }

    std::vector<int> out;
    for (int p = 0; p < len; ++p) {
        bool ok = true;
        for (int i = 0; i < w && ok; ++i) {
            const int b = window[size_t(i)];
            if (b != kUnknownBit && b != int(index.seq.bits[size_t((p + i) % len)])) ok = false;
        }
        if (ok) out.push_back(p);
    }
    return out;
}

} // namespace phasemark
