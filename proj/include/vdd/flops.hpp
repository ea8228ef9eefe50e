#pragma once

#include <cstdint>

#include "vdd/errors.hpp"

namespace vdd {

enum class AttentionMode { Full, SparseCausal, Temporal };

inline const char* attention_mode_name(AttentionMode m) {
    switch (m) {
        case AttentionMode::Full: return "full";
        case AttentionMode::SparseCausal: return "sparse_causal";
        case AttentionMode::Temporal: return "temporal";
    }
    return "?";
}

// Exact multiply-accumulate counts for one attention block with square d x d
// projections (d == d_k, as in every config here), F frames and N spatial
// tokens per frame.
//
//   projections (all modes):  4 F N d^2      (Q, K, V projected for every
//                                             token once; output projection)
//   full core:                (F N)^2 * 2d   (QK^T and AV)
//   sparse-causal core:       sum_i N k_i 2d, k_1 = k_2 = N (frame 2's pair
//                             {first, previous} collapses to frame 1), else 2N
//                             => 4 N^2 d (F - 1) for F >= 2
//   temporal core:            N F^2 2d       (per-location F-token attention)
//
// These equal the MacCounter totals of the corresponding kernels exactly.
inline uint64_t attention_flops(int frames, int tokens, int dim, AttentionMode mode) {
    if (frames < 1 || tokens < 1 || dim < 1) throw ConfigError("attention_flops needs positive arguments");
    const uint64_t f = static_cast<uint64_t>(frames);
    const uint64_t n = static_cast<uint64_t>(tokens);
    const uint64_t d = static_cast<uint64_t>(dim);
    const uint64_t proj = 4 * f * n * d * d;
    uint64_t core = 0;
    switch (mode) {
        case AttentionMode::Full:
            core = (f * n) * (f * n) * 2 * d;
            break;
        case AttentionMode::SparseCausal: {
            uint64_t keys_total = 0;
            for (uint64_t i = 1; i <= f; ++i) keys_total += (i <= 2) ? n : 2 * n;
            core = n * keys_total * 2 * d;
            break;
        }
        case AttentionMode::Temporal:
            core = n * f * f * 2 * d;
            break;
    }
    return proj + core;
}

}  // namespace vdd
