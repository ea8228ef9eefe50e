#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vdd/attention.hpp"
#include "vdd/ops.hpp"
#include "vdd/rng.hpp"

namespace vdd {

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

template <typename S>
struct ParamInfo {
    std::string name;
    std::string kind;  // classification used by the fine-tuning ledger
    Ptr<S> tensor;
};

template <typename S>
class ParamStoreT {
public:
    Ptr<S> add(const std::string& name, const std::string& kind, Ptr<S> t) {
        for (const auto& p : params_)
            if (p.name == name) throw ContractError("duplicate parameter name " + name);
        params_.push_back(ParamInfo<S>{name, kind, t});
        return params_.back().tensor;
    }

    const std::vector<ParamInfo<S>>& all() const { return params_; }

    std::vector<const ParamInfo<S>*> sorted_by_name() const {
        std::vector<const ParamInfo<S>*> v;
        v.reserve(params_.size());
        for (const auto& p : params_) v.push_back(&p);
        std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->name < b->name; });
        return v;
    }

    const ParamInfo<S>* find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.tensor->numel();
        return n;
    }

private:
    std::vector<ParamInfo<S>> params_;
};

using ParamStore = ParamStoreT<float>;

namespace init {

// Scaled-normal weight init, std = gain / sqrt(fan_in).
template <typename S>
Ptr<S> normal(Rng& rng, std::vector<int> shape, double std_dev) {
    auto t = zeros<S>(shape);
    for (auto& v : t->data) v = static_cast<S>(rng.normal() * std_dev);
    return t;
}

}  // namespace init

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename S>
struct Conv2dLayerT {
    Ptr<S> w;  // [C_out, C_in, k, k]
    Ptr<S> b;  // [C_out]
    int stride = 1;

    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& z) const {
        return add_channel_bias(tape, pseudo3d_conv(tape, z, w, stride), b);
    }
};

template <typename S>
Conv2dLayerT<S> make_conv(ParamStoreT<S>& ps, Rng& rng, const std::string& name, const std::string& kind,
                          int c_in, int c_out, int k, int stride) {
    Conv2dLayerT<S> l;
    l.w = ps.add(name + ".weight", kind, init::normal<S>(rng, {c_out, c_in, k, k}, 1.0 / std::sqrt(double(c_in) * k * k)));
    l.b = ps.add(name + ".bias", kind + "_bias", zeros<S>({c_out}));
    l.stride = stride;
    return l;
}

template <typename S>
struct GroupNormLayerT {
    Ptr<S> gamma, beta;
    int groups = 8;

    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& z) const { return group_norm(tape, z, gamma, beta, groups); }
};

template <typename S>
GroupNormLayerT<S> make_norm(ParamStoreT<S>& ps, const std::string& name, const std::string& kind,
                             int channels, int groups) {
    GroupNormLayerT<S> l;
    l.gamma = ps.add(name + ".gamma", kind, full<S>({channels}, S(1)));
    l.beta = ps.add(name + ".beta", kind, zeros<S>({channels}));
    l.groups = groups;
    return l;
}

template <typename S>
struct LinearLayerT {
    Ptr<S> w;  // [D_in, D_out]
    Ptr<S> b;  // [D_out]

    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& x) const { return add_row_bias(tape, matmul(tape, x, w), b); }
};

template <typename S>
LinearLayerT<S> make_linear(ParamStoreT<S>& ps, Rng& rng, const std::string& name, const std::string& kind,
                            int d_in, int d_out) {
    LinearLayerT<S> l;
    l.w = ps.add(name + ".weight", kind, init::normal<S>(rng, {d_in, d_out}, 1.0 / std::sqrt(double(d_in))));
    l.b = ps.add(name + ".bias", kind + "_bias", zeros<S>({d_out}));
    return l;
}

template <typename S>
AttentionParamsT<S> make_attention(ParamStoreT<S>& ps, Rng& rng, const std::string& name,
                                   AttentionKind kind, int d, int d_src, int d_k) {
    const std::string kindstr = std::string("attn.") + attention_kind_name(kind);
    const double s = 1.0 / std::sqrt(double(d));
    AttentionParamsT<S> p;
    p.kind = kind;
    p.w_q = ps.add(name + ".w_q", kindstr + ".q", init::normal<S>(rng, {d, d_k}, s));
    p.w_k = ps.add(name + ".w_k", kindstr + ".k", init::normal<S>(rng, {d_src, d_k}, 1.0 / std::sqrt(double(d_src))));
    p.w_v = ps.add(name + ".w_v", kindstr + ".v", init::normal<S>(rng, {d_src, d_k}, 1.0 / std::sqrt(double(d_src))));
    // Temporal layers are the newly added ones: zero output projection so an
    // untuned video model reproduces the per-frame image model exactly.
    p.w_o = ps.add(name + ".w_o", kindstr + ".o",
                   kind == AttentionKind::Temporal ? zeros<S>({d_k, d})
                                                   : init::normal<S>(rng, {d_k, d}, 1.0 / std::sqrt(double(d_k))));
    return p;
}

// Residual block: GN -> SiLU -> conv, timestep bias, GN -> SiLU -> conv, skip.
template <typename S>
struct ResBlockT {
    GroupNormLayerT<S> gn1, gn2;
    Conv2dLayerT<S> conv1, conv2;
    LinearLayerT<S> temb1, temb2;
    std::optional<Conv2dLayerT<S>> skip;  // 1x1 when widths differ

    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& x, const Ptr<S>& temb) const {
        auto h = conv1.forward(tape, silu(tape, gn1.forward(tape, x)));
        auto tv = temb2.forward(tape, silu(tape, temb1.forward(tape, temb)));  // [1, C_out]
        h = add_channel_bias(tape, h, reshape(tape, tv, {tv->extent(1)}));
        h = conv2.forward(tape, silu(tape, gn2.forward(tape, h)));
        return add(tape, h, skip ? skip->forward(tape, x) : x);
    }
};

template <typename S>
ResBlockT<S> make_res_block(ParamStoreT<S>& ps, Rng& rng, const std::string& name, int c_in, int c_out,
                            int groups, int temb_dim) {
    ResBlockT<S> b;
    b.gn1 = make_norm<S>(ps, name + ".norm1", "norm", c_in, groups);
    b.conv1 = make_conv<S>(ps, rng, name + ".conv1", "conv", c_in, c_out, 3, 1);
    b.temb1 = make_linear<S>(ps, rng, name + ".temb1", "temb", temb_dim, c_out);
    b.temb2 = make_linear<S>(ps, rng, name + ".temb2", "temb", c_out, c_out);
    b.gn2 = make_norm<S>(ps, name + ".norm2", "norm", c_out, groups);
    b.conv2 = make_conv<S>(ps, rng, name + ".conv2", "conv", c_out, c_out, 3, 1);
    if (c_in != c_out) b.skip = make_conv<S>(ps, rng, name + ".skip", "conv", c_in, c_out, 1, 1);
    return b;
}

// Sparse-causal -> temporal -> cross attention, each with its own residual.
template <typename S>
struct TransformerBlockT {
    AttentionParamsT<S> sparse_causal;
    AttentionParamsT<S> temporal;
    AttentionParamsT<S> cross;

    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& z, const Ptr<S>& text) const {
        auto h = sparse_causal_attention(tape, z, sparse_causal);
        h = temporal_self_attention(tape, h, temporal);
        return cross_attention(tape, h, text, cross);
    }
};

template <typename S>
TransformerBlockT<S> make_transformer_block(ParamStoreT<S>& ps, Rng& rng, const std::string& name,
                                            int d, int d_text, int d_k) {
    TransformerBlockT<S> t;
    t.sparse_causal = make_attention<S>(ps, rng, name + ".sc", AttentionKind::SparseCausal, d, d, d_k);
    t.temporal = make_attention<S>(ps, rng, name + ".temporal", AttentionKind::Temporal, d, d, d_k);
    t.cross = make_attention<S>(ps, rng, name + ".cross", AttentionKind::Cross, d, d_text, d_k);
    return t;
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

template <typename S>
struct ConditioningT {
    Ptr<S> text;   // [L, d_text]; all-zero rows for the null embedding
    Ptr<S> depth;  // [F, 1, h, w] in [-1, 1]
    bool unconditional = false;
};

using Conditioning = ConditioningT<float>;

template <typename S>
ConditioningT<S> null_conditioning(const ConditioningT<S>& cond, int tokens, int d_text) {
    ConditioningT<S> c;
    c.text = zeros<S>({tokens, d_text});
    c.depth = cond.depth;
    c.unconditional = true;
    return c;
}

// 64-dim sinusoidal timestep features: [sin(t w_i) | cos(t w_i)],
// w_i = 10000^(-i/half).
template <typename S>
Ptr<S> time_embedding(int t, int dim) {
    if (dim % 2 != 0) throw ConfigError("time embedding dim must be even");
    const int half = dim / 2;
    auto e = zeros<S>({1, dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e->data[static_cast<size_t>(i)] = static_cast<S>(std::sin(t * freq));
        e->data[static_cast<size_t>(half + i)] = static_cast<S>(std::cos(t * freq));
    }
    return e;
}

// ---------------------------------------------------------------------------
// Autoencoder: two stride-2 stages each way, 4 latent channels, frozen after
// its one reconstruction pre-training run.
// ---------------------------------------------------------------------------

template <typename S>
struct AutoencoderT {
    int width = 16;
    int latent_channels = 4;
    Conv2dLayerT<S> e1, e2, e3, e4;
    GroupNormLayerT<S> en1, en2, en3;
    Conv2dLayerT<S> d1, d2, d3, d4;
    GroupNormLayerT<S> dn1, dn2, dn3;

    // [F,3,Hpx,Wpx] -> [F,4,Hpx/4,Wpx/4]
    Ptr<S> encode(TapeT<S>& tape, const Ptr<S>& frames) const {
        if (frames->rank() != 4 || frames->extent(1) != 3) throw ShapeError("encode expects [F,3,H,W]");
        if (frames->extent(2) % 4 != 0 || frames->extent(3) % 4 != 0)
            throw ShapeError("encode needs spatial extents divisible by 4");
        auto h = silu(tape, en1.forward(tape, e1.forward(tape, frames)));
        h = silu(tape, en2.forward(tape, e2.forward(tape, h)));
        h = silu(tape, en3.forward(tape, e3.forward(tape, h)));
        return e4.forward(tape, h);
    }

    // [F,4,h,w] -> [F,3,4h,4w], squashed into (-1,1)
    Ptr<S> decode(TapeT<S>& tape, const Ptr<S>& z) const {
        if (z->rank() != 4 || z->extent(1) != latent_channels) throw ShapeError("decode expects [F,4,h,w]");
        auto h = silu(tape, dn1.forward(tape, d1.forward(tape, z)));
        h = upsample_nearest2x(tape, h);
        h = silu(tape, dn2.forward(tape, d2.forward(tape, h)));
        h = upsample_nearest2x(tape, h);
        h = silu(tape, dn3.forward(tape, d3.forward(tape, h)));
        return tanh_act(tape, d4.forward(tape, h));
    }
};

template <typename S>
AutoencoderT<S> make_autoencoder(ParamStoreT<S>& ps, Rng& rng, int width, int latent_channels, int groups) {
    AutoencoderT<S> ae;
    ae.width = width;
    ae.latent_channels = latent_channels;
    ae.e1 = make_conv<S>(ps, rng, "ae.enc.conv1", "ae.conv", 3, width, 3, 1);
    ae.en1 = make_norm<S>(ps, "ae.enc.norm1", "ae.norm", width, groups);
    ae.e2 = make_conv<S>(ps, rng, "ae.enc.conv2", "ae.conv", width, width, 3, 2);
    ae.en2 = make_norm<S>(ps, "ae.enc.norm2", "ae.norm", width, groups);
    ae.e3 = make_conv<S>(ps, rng, "ae.enc.conv3", "ae.conv", width, 2 * width, 3, 2);
    ae.en3 = make_norm<S>(ps, "ae.enc.norm3", "ae.norm", 2 * width, groups);
    ae.e4 = make_conv<S>(ps, rng, "ae.enc.conv4", "ae.conv", 2 * width, latent_channels, 3, 1);
    ae.d1 = make_conv<S>(ps, rng, "ae.dec.conv1", "ae.conv", latent_channels, 2 * width, 3, 1);
    ae.dn1 = make_norm<S>(ps, "ae.dec.norm1", "ae.norm", 2 * width, groups);
    ae.d2 = make_conv<S>(ps, rng, "ae.dec.conv2", "ae.conv", 2 * width, width, 3, 1);
    ae.dn2 = make_norm<S>(ps, "ae.dec.norm2", "ae.norm", width, groups);
    ae.d3 = make_conv<S>(ps, rng, "ae.dec.conv3", "ae.conv", width, width, 3, 1);
    ae.dn3 = make_norm<S>(ps, "ae.dec.norm3", "ae.norm", width, groups);
    ae.d4 = make_conv<S>(ps, rng, "ae.dec.conv4", "ae.conv", width, 3, 3, 1);
    return ae;
}

// ---------------------------------------------------------------------------
// Denoising U-Net
// ---------------------------------------------------------------------------

struct UNetConfig {
    int base_width = 32;
    std::vector<int> channel_mult = {1, 2};
    int res_blocks = 1;                        // residual blocks per level
    std::vector<int> attention_resolutions = {8};
    int d_k = 32;
    int latent_channels = 4;
    int latent_size = 8;                       // latent spatial extent the net is built for
    int norm_groups = 8;
    int time_embed_dim = 64;
    int text_tokens = 8;
    int text_dim = 32;
    int ae_width = 16;

    int levels() const { return static_cast<int>(channel_mult.size()); }
    int width(int level) const { return base_width * channel_mult[static_cast<size_t>(level)]; }
    int resolution(int level) const { return latent_size >> level; }
    bool attention_at(int level) const {
        for (int r : attention_resolutions)
            if (r == resolution(level)) return true;
        return false;
    }

    void validate() const {
        if (base_width < 1 || channel_mult.empty() || res_blocks < 1) throw ConfigError("bad U-Net dims");
        for (int l = 0; l < levels(); ++l) {
            if (width(l) % norm_groups != 0)
                throw ConfigError("width " + std::to_string(width(l)) + " not divisible by norm groups");
            if (resolution(l) < 1) throw ConfigError("too many levels for latent size");
        }
    }
};

template <typename S>
struct VideoUNetT {
    UNetConfig cfg;
    Conv2dLayerT<S> conv_in;

    struct DownLevel {
        std::vector<ResBlockT<S>> res;
        std::optional<TransformerBlockT<S>> attn;
        std::optional<Conv2dLayerT<S>> down;
    };
    struct UpLevel {
        std::vector<ResBlockT<S>> res;
        std::optional<TransformerBlockT<S>> attn;
    };
    std::vector<DownLevel> down;
    ResBlockT<S> mid;
    std::vector<UpLevel> up;  // index by level; processed deepest-first
    GroupNormLayerT<S> out_norm;
    Conv2dLayerT<S> out_conv;

    // eps prediction: [F,4,h,w] latent + [F,1,h,w] depth -> [F,4,h,w]
    Ptr<S> forward(TapeT<S>& tape, const Ptr<S>& z_t, int t, const ConditioningT<S>& cond) const {
        if (z_t->rank() != 4 || z_t->extent(1) != cfg.latent_channels) throw ShapeError("unet expects [F,C,h,w] latent");
        if (z_t->extent(2) != cfg.latent_size || z_t->extent(3) != cfg.latent_size)
            throw ShapeError("latent spatial size does not match the built network");
        if (cond.depth->rank() != 4 || cond.depth->extent(0) != z_t->extent(0) || cond.depth->extent(1) != 1 ||
            cond.depth->extent(2) != z_t->extent(2) || cond.depth->extent(3) != z_t->extent(3))
            throw ShapeError("depth latent must be [F,1,h,w] matching the latent grid");
        if (cond.text->rank() != 2 || cond.text->extent(0) != cfg.text_tokens || cond.text->extent(1) != cfg.text_dim)
            throw ShapeError("text embedding must be [L, d_text]");

        auto temb = time_embedding<S>(t, cfg.time_embed_dim);
        auto h = conv_in.forward(tape, concat(tape, {z_t, cond.depth}, 1));
        std::vector<Ptr<S>> skips;
        for (size_t l = 0; l < down.size(); ++l) {
            for (const auto& rb : down[l].res) h = rb.forward(tape, h, temb);
            if (down[l].attn) h = down[l].attn->forward(tape, h, cond.text);
            skips.push_back(h);
            if (down[l].down) h = down[l].down->forward(tape, h);
        }
        h = mid.forward(tape, h, temb);
        for (int l = cfg.levels() - 1; l >= 0; --l) {
            h = concat(tape, {h, skips[static_cast<size_t>(l)]}, 1);
            for (const auto& rb : up[static_cast<size_t>(l)].res) h = rb.forward(tape, h, temb);
            if (up[static_cast<size_t>(l)].attn) h = up[static_cast<size_t>(l)].attn->forward(tape, h, cond.text);
            if (l > 0) h = upsample_nearest2x(tape, h);
        }
        return out_conv.forward(tape, silu(tape, out_norm.forward(tape, h)));
    }
};

template <typename S>
VideoUNetT<S> make_unet(ParamStoreT<S>& ps, Rng& rng, const UNetConfig& cfg) {
    cfg.validate();
    VideoUNetT<S> net;
    net.cfg = cfg;
    net.conv_in = make_conv<S>(ps, rng, "unet.conv_in", "conv", cfg.latent_channels + 1, cfg.width(0), 3, 1);
    int ch = cfg.width(0);
    for (int l = 0; l < cfg.levels(); ++l) {
        typename VideoUNetT<S>::DownLevel dl;
        const std::string base = "unet.down." + std::to_string(l);
        for (int r = 0; r < cfg.res_blocks; ++r) {
            dl.res.push_back(make_res_block<S>(ps, rng, base + ".res." + std::to_string(r), ch, cfg.width(l),
                                               cfg.norm_groups, cfg.time_embed_dim));
            ch = cfg.width(l);
        }
        if (cfg.attention_at(l))
            dl.attn = make_transformer_block<S>(ps, rng, base + ".attn", ch, cfg.text_dim, cfg.d_k);
        if (l + 1 < cfg.levels())
            dl.down = make_conv<S>(ps, rng, base + ".downsample", "conv", ch, ch, 3, 2);
        net.down.push_back(std::move(dl));
    }
    net.mid = make_res_block<S>(ps, rng, "unet.mid.res", ch, ch, cfg.norm_groups, cfg.time_embed_dim);
    net.up.resize(static_cast<size_t>(cfg.levels()));
    for (int l = cfg.levels() - 1; l >= 0; --l) {
        typename VideoUNetT<S>::UpLevel ul;
        const std::string base = "unet.up." + std::to_string(l);
        for (int r = 0; r < cfg.res_blocks; ++r) {
            const int c_in = r == 0 ? ch + cfg.width(l) : cfg.width(l);
            ul.res.push_back(make_res_block<S>(ps, rng, base + ".res." + std::to_string(r), c_in, cfg.width(l),
                                               cfg.norm_groups, cfg.time_embed_dim));
        }
        ch = cfg.width(l);
        if (cfg.attention_at(l))
            ul.attn = make_transformer_block<S>(ps, rng, base + ".attn", ch, cfg.text_dim, cfg.d_k);
        net.up[static_cast<size_t>(l)] = std::move(ul);
    }
    net.out_norm = make_norm<S>(ps, "unet.out.norm", "norm", ch, cfg.norm_groups);
    net.out_conv = make_conv<S>(ps, rng, "unet.out.conv", "conv", ch, cfg.latent_channels, 3, 1);
    return net;
}

// ---------------------------------------------------------------------------
// Full model: frozen-after-pretraining autoencoder + video U-Net
// ---------------------------------------------------------------------------

struct ScheduleSpec {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

template <typename S>
struct VideoModelT {
    UNetConfig cfg;
    ScheduleSpec schedule;
    ParamStoreT<S> params;
    AutoencoderT<S> ae;
    VideoUNetT<S> unet;

    VideoModelT(const UNetConfig& config, uint64_t seed) : cfg(config) {
        cfg.validate();
        Rng rng(seed);
        ae = make_autoencoder<S>(params, rng, cfg.ae_width, cfg.latent_channels, cfg.norm_groups);
        unet = make_unet<S>(params, rng, cfg);
    }

    uint64_t checksum() const {
        uint64_t h = 0xCBF29CE484222325ull;
        for (const auto* p : params.sorted_by_name()) {
            h = fnv1a64(p->name.data(), p->name.size(), h);
            h = fnv1a64(p->tensor->data.data(), p->tensor->data.size() * sizeof(S), h);
        }
        return h;
    }

    // Convenience no-grad wrappers.
    Ptr<S> encode(const Ptr<S>& frames) const {
        TapeT<S> t;
        return ae.encode(t, frames);
    }
    Ptr<S> decode(const Ptr<S>& z) const {
        TapeT<S> t;
        return ae.decode(t, z);
    }
    Ptr<S> eps(const Ptr<S>& z_t, int t, const ConditioningT<S>& cond) const {
        TapeT<S> tape;
        return unet.forward(tape, z_t, t, cond);
    }
};

using VideoModel = VideoModelT<float>;

}  // namespace vdd
