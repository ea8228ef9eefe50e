#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vdd/ops.hpp"

namespace vdd {

enum class AttentionKind { SparseCausal, Temporal, Cross };

inline const char* attention_kind_name(AttentionKind k) {
    switch (k) {
        case AttentionKind::SparseCausal: return "sparse_causal";
        case AttentionKind::Temporal: return "temporal";
        case AttentionKind::Cross: return "cross";
    }
    return "?";
}

// One attention block's four projection matrices. A single instance serves
// every frame and spatial location (projections are shared); which matrices
// are trainable is decided per kind by the fine-tuning ledger.
template <typename S>
struct AttentionParamsT {
    AttentionKind kind;
    Ptr<S> w_q;  // [d, d_k]
    Ptr<S> w_k;  // [d_src, d_k]
    Ptr<S> w_v;  // [d_src, d_k]
    Ptr<S> w_o;  // [d_k, d]

    int key_dim() const { return w_q->extent(1); }
};

using AttentionParams = AttentionParamsT<float>;

namespace detail {

template <typename S>
void require_kind(const AttentionParamsT<S>& p, AttentionKind want, const char* op) {
    if (p.kind != want)
        throw ContractError(std::string(op) + " given params of kind " + attention_kind_name(p.kind));
}

template <typename S>
void require_video(const Ptr<S>& z, const char* op) {
    if (z->rank() != 4) throw ShapeError(std::string(op) + " expects [F,C,H,W]");
}

// Frame i of [F,C,H,W] as a token matrix [H*W, C].
template <typename S>
Ptr<S> frame_tokens(TapeT<S>& tape, const Ptr<S>& z, int frame) {
    const int c = z->extent(1), h = z->extent(2), w = z->extent(3);
    auto fr = slice(tape, z, 0, frame, frame + 1);        // [1,C,H,W]
    auto flat = reshape(tape, fr, {c, h * w});            // [C,N]
    return transpose(tape, flat);                         // [N,C]
}

// Token matrix [H*W, C] back to a [1, C, H, W] frame.
template <typename S>
Ptr<S> tokens_to_frame(TapeT<S>& tape, const Ptr<S>& tokens, int c, int h, int w) {
    return reshape(tape, transpose(tape, tokens), {1, c, h, w});
}

// softmax(Q K^T / sqrt(d_k)) V
template <typename S>
Ptr<S> scaled_dot_attention(TapeT<S>& tape, const Ptr<S>& q, const Ptr<S>& k, const Ptr<S>& v) {
    const int dk = q->extent(1);
    auto scores = scale(tape, matmul(tape, q, transpose(tape, k)), 1.0 / std::sqrt(static_cast<double>(dk)));
    auto attn = softmax(tape, scores, 1);
    return matmul(tape, attn, v);
}

}  // namespace detail

// Sparse causal spatio-temporal attention. Queries come from each frame's own
// spatial tokens; keys/values are gathered from the first and the immediately
// preceding frame (frame 0 attends to itself; frame 1's pair would duplicate
// frame 0, so it is deduplicated). Output is projected by w_o and added back
// residually. K/V projections are computed once per frame and gathered, so
// the projection cost is identical across attention variants.
template <typename S>
Ptr<S> sparse_causal_attention(TapeT<S>& tape, const Ptr<S>& z, const AttentionParamsT<S>& params) {
    detail::require_video(z, "sparse_causal_attention");
    detail::require_kind(params, AttentionKind::SparseCausal, "sparse_causal_attention");
    const int f = z->extent(0), c = z->extent(1), h = z->extent(2), w = z->extent(3);

    std::vector<Ptr<S>> toks(static_cast<size_t>(f)), ks(static_cast<size_t>(f)), vs(static_cast<size_t>(f));
    for (int i = 0; i < f; ++i) {
        toks[static_cast<size_t>(i)] = detail::frame_tokens(tape, z, i);
        ks[static_cast<size_t>(i)] = matmul(tape, toks[static_cast<size_t>(i)], params.w_k);
        vs[static_cast<size_t>(i)] = matmul(tape, toks[static_cast<size_t>(i)], params.w_v);
    }
    std::vector<Ptr<S>> frames(static_cast<size_t>(f));
    for (int i = 0; i < f; ++i) {
        auto q = matmul(tape, toks[static_cast<size_t>(i)], params.w_q);
        Ptr<S> key, val;
        if (i <= 1) {  // frame 0: itself; frame 1: first == previous, deduplicated
            key = ks[0];
            val = vs[0];
        } else {
            key = concat(tape, {ks[0], ks[static_cast<size_t>(i - 1)]}, 0);
            val = concat(tape, {vs[0], vs[static_cast<size_t>(i - 1)]}, 0);
        }
        auto out = matmul(tape, detail::scaled_dot_attention(tape, q, key, val), params.w_o);
        frames[static_cast<size_t>(i)] =
            detail::tokens_to_frame(tape, add(tape, toks[static_cast<size_t>(i)], out), c, h, w);
    }
    return concat(tape, frames, 0);
}

// Attention across the F frames independently at each spatial location
// (tokens are frames), with residual.
template <typename S>
Ptr<S> temporal_self_attention(TapeT<S>& tape, const Ptr<S>& z, const AttentionParamsT<S>& params) {
    detail::require_video(z, "temporal_self_attention");
    detail::require_kind(params, AttentionKind::Temporal, "temporal_self_attention");
    const int f = z->extent(0), c = z->extent(1), h = z->extent(2), w = z->extent(3);

    // [F,C,H,W] -> per-location token matrices [F,C] via two slices.
    std::vector<Ptr<S>> cols;
    cols.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        auto row = slice(tape, z, 2, y, y + 1);  // [F,C,1,W]
        for (int x = 0; x < w; ++x) {
            auto loc = reshape(tape, slice(tape, row, 3, x, x + 1), {f, c});
            auto q = matmul(tape, loc, params.w_q);
            auto k = matmul(tape, loc, params.w_k);
            auto v = matmul(tape, loc, params.w_v);
            auto out = matmul(tape, detail::scaled_dot_attention(tape, q, k, v), params.w_o);
            // [F,C] -> [F,C,1,1]
            cols.push_back(reshape(tape, add(tape, loc, out), {f, c, 1, 1}));
        }
    }
    // Reassemble: concat columns along W for each row, rows along H.
    std::vector<Ptr<S>> rows;
    rows.reserve(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows.push_back(concat(tape, std::vector<Ptr<S>>(cols.begin() + static_cast<int64_t>(y) * w,
                                                        cols.begin() + static_cast<int64_t>(y + 1) * w), 3));
    return concat(tape, rows, 2);
}

// Queries from each frame's latent tokens, keys/values from the prompt token
// matrix [L, d_text]; per frame, with residual.
template <typename S>
Ptr<S> cross_attention(TapeT<S>& tape, const Ptr<S>& z, const Ptr<S>& text,
                       const AttentionParamsT<S>& params) {
    detail::require_video(z, "cross_attention");
    detail::require_kind(params, AttentionKind::Cross, "cross_attention");
    if (text->rank() != 2) throw ShapeError("cross_attention text must be [L, d_text]");
    if (text->extent(1) != params.w_k->extent(0))
        throw ShapeError("text width " + std::to_string(text->extent(1)) + " does not match w_k rows " +
                         std::to_string(params.w_k->extent(0)));
    const int f = z->extent(0), c = z->extent(1), h = z->extent(2), w = z->extent(3);
    auto k = matmul(tape, text, params.w_k);
    auto v = matmul(tape, text, params.w_v);
    std::vector<Ptr<S>> frames(static_cast<size_t>(f));
    for (int i = 0; i < f; ++i) {
        auto toks = detail::frame_tokens(tape, z, i);
        auto q = matmul(tape, toks, params.w_q);
        auto out = matmul(tape, detail::scaled_dot_attention(tape, q, k, v), params.w_o);
        frames[static_cast<size_t>(i)] = detail::tokens_to_frame(tape, add(tape, toks, out), c, h, w);
    }
    return concat(tape, frames, 0);
}

// Unmasked attention over all F*N spatio-temporal tokens at once; the
// quadratic baseline the sparse pattern is measured against.
template <typename S>
Ptr<S> full_spatiotemporal_attention(TapeT<S>& tape, const Ptr<S>& z, const AttentionParamsT<S>& params) {
    detail::require_video(z, "full_spatiotemporal_attention");
    const int f = z->extent(0), c = z->extent(1), h = z->extent(2), w = z->extent(3);
    std::vector<Ptr<S>> per_frame(static_cast<size_t>(f));
    for (int i = 0; i < f; ++i) per_frame[static_cast<size_t>(i)] = detail::frame_tokens(tape, z, i);
    auto toks = concat(tape, per_frame, 0);  // [F*N, C]
    auto q = matmul(tape, toks, params.w_q);
    auto k = matmul(tape, toks, params.w_k);
    auto v = matmul(tape, toks, params.w_v);
    auto out = matmul(tape, detail::scaled_dot_attention(tape, q, k, v), params.w_o);
    auto res = add(tape, toks, out);  // [F*N, C]
    std::vector<Ptr<S>> frames(static_cast<size_t>(f));
    for (int i = 0; i < f; ++i)
        frames[static_cast<size_t>(i)] =
            detail::tokens_to_frame(tape, slice(tape, res, 0, i * h * w, (i + 1) * h * w), c, h, w);
    return concat(tape, frames, 0);
}

}  // namespace vdd
