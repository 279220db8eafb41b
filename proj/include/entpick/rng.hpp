#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace entpick {

/// Every stochastic operation takes one of these by reference; there is no
/// global generator.
using Rng = std::mt19937_64;

/// Derive an independent stream from a base seed plus a path of stream ids
/// (e.g. {cell, block}). Same inputs give the same stream on every run.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * stream.size());
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto s : stream) push(s);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace entpick
