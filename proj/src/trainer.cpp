#include "vdd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "vdd/prompt.hpp"

namespace vdd {

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train steps must be >= 1");
    if (temporal_weight < 0) throw ConfigError("temporal weight must be >= 0");
    if (cond_dropout < 0 || cond_dropout >= 1) throw ConfigError("condition dropout must be in [0,1)");
    if (batch_size != 1) throw ConfigError("one-shot training uses batch size 1");
}

namespace {

const std::set<std::string>& known_kinds() {
    static const std::set<std::string> kinds = {
        "conv", "conv_bias", "norm", "temb", "temb_bias",
        "ae.conv", "ae.conv_bias", "ae.norm",
        "attn.sparse_causal.q", "attn.sparse_causal.k", "attn.sparse_causal.v", "attn.sparse_causal.o",
        "attn.temporal.q", "attn.temporal.k", "attn.temporal.v", "attn.temporal.o",
        "attn.cross.q", "attn.cross.k", "attn.cross.v", "attn.cross.o",
    };
    return kinds;
}

}  // namespace

bool kind_is_trainable(const std::string& kind) {
    if (!known_kinds().count(kind)) throw ContractError("parameter kind not in the ledger: " + kind);
    return kind == "attn.sparse_causal.q" || kind == "attn.cross.q" || kind.rfind("attn.temporal.", 0) == 0;
}

TrainableSet select_trainable(const VideoModel& model) {
    TrainableSet set;
    for (const auto& p : model.params.all())
        set.entries.emplace_back(p.name, kind_is_trainable(p.kind));
    return set;
}

int64_t TrainableSet::trainable_tensors() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries) n += t ? 1 : 0;
    return n;
}

void apply_trainable(VideoModel& model, const TrainableSet& set) {
    if (set.entries.size() != model.params.all().size())
        throw ContractError("trainable set does not cover the model");
    for (const auto& [name, trainable] : set.entries) {
        const auto* p = model.params.find(name);
        if (!p) throw ContractError("trainable set names unknown parameter " + name);
        p->tensor->requires_grad = trainable;
        p->tensor->clear_grad();
    }
}

int64_t trainable_elements(const VideoModel& model) {
    int64_t n = 0;
    for (const auto& p : model.params.all())
        if (p.tensor->requires_grad) n += p.tensor->numel();
    return n;
}

AdamState make_adam(const VideoModel& model) {
    AdamState st;
    for (const auto& p : model.params.all())
        if (p.tensor->requires_grad)
            st.slots.push_back(AdamState::Slot{p.tensor, std::vector<float>(p.tensor->data.size(), 0.0f),
                                               std::vector<float>(p.tensor->data.size(), 0.0f)});
    return st;
}

void adam_step(AdamState& state, double lr) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& slot : state.slots) {
        if (!slot.param->has_grad()) continue;  // no gradient reached it this step
        auto& p = slot.param->data;
        const auto& g = slot.param->grad;
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            slot.m[i] = static_cast<float>(state.beta1 * slot.m[i] + (1.0 - state.beta1) * gi);
            slot.v[i] = static_cast<float>(state.beta2 * slot.v[i] + (1.0 - state.beta2) * gi * gi);
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
        slot.param->clear_grad();
    }
}

TensorPtr diffusion_loss(Tape& tape, const TensorPtr& eps, const TensorPtr& eps_pred) {
    require_same_shape(*eps, *eps_pred, "diffusion_loss");
    return mse(tape, eps_pred, eps);
}

TensorPtr temporal_consistency_loss(Tape& tape, const TensorPtr& z0_pred) {
    if (z0_pred->rank() != 4) throw ShapeError("temporal loss expects [F,C,H,W]");
    const int f = z0_pred->extent(0);
    if (f < 2) return scalar<float>(0.0f);
    TensorPtr total;
    for (int i = 0; i + 1 < f; ++i) {
        auto a = slice(tape, z0_pred, 0, i, i + 1);
        auto b = slice(tape, z0_pred, 0, i + 1, i + 2);
        auto pair = mse(tape, a, b);
        total = total ? add(tape, total, pair) : pair;
    }
    return total;
}

TensorPtr predict_z0_graph(Tape& tape, const TensorPtr& z_t, const TensorPtr& eps_pred, int t,
                           const NoiseSchedule& sched) {
    const double ab = sched.alpha_bar(t);
    if (ab < 1e-12) throw NumericError("alpha_bar underflow at t=" + std::to_string(t));
    const double inv = 1.0 / std::sqrt(ab);
    return add(tape, scale(tape, z_t, inv), scale(tape, eps_pred, -std::sqrt(1.0 - ab) * inv));
}

StepStats train_step(VideoModel& model, const TensorPtr& video_latent, const Conditioning& cond,
                     const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng, AdamState& adam) {
    cfg.validate();
    StepStats stats;
    // Fixed stream consumption per step: t, noise, dropout coin.
    stats.t = rng.uniform_int(1, sched.steps);
    auto eps = randn_from<float>(rng, video_latent->shape);
    const double coin = rng.uniform();
    const double dropout = cfg.train_guidance ? cfg.cond_dropout : 0.0;
    stats.dropped_cond = coin < dropout;

    auto z_t = q_sample(video_latent, stats.t, eps, sched);
    Tape tape;
    const auto& used =
        stats.dropped_cond ? null_conditioning(cond, model.cfg.text_tokens, model.cfg.text_dim) : cond;
    auto eps_pred = model.unet.forward(tape, z_t, stats.t, used);
    auto loss_d = diffusion_loss(tape, eps, eps_pred);
    TensorPtr loss = loss_d;
    if (cfg.temporal_weight > 0) {
        auto z0_hat = predict_z0_graph(tape, z_t, eps_pred, stats.t, sched);
        auto loss_t = temporal_consistency_loss(tape, z0_hat);
        stats.temporal = cfg.temporal_weight * static_cast<double>(loss_t->data[0]);
        loss = add(tape, loss_d, scale(tape, loss_t, cfg.temporal_weight));
    }
    stats.diffusion = loss_d->data[0];
    stats.total = loss->data[0];
    if (!std::isfinite(stats.total)) throw NumericError("training loss is not finite at t=" + std::to_string(stats.t));

    backward(loss, tape);
    adam_step(adam, cfg.lr);
    return stats;
}

std::vector<TraceRow> finetune(VideoModel& model, const RenderedVideo& video, const std::string& prompt,
                               const TrainConfig& cfg) {
    cfg.validate();
    apply_trainable(model, select_trainable(model));

    // Encode once; the latent and conditioning are fixed for the whole run.
    auto latent = model.encode(video.rgb);
    Conditioning cond;
    cond.text = embed_prompt(prompt);
    cond.depth = depth_to_latent(video.depth, latent->extent(2), latent->extent(3));
    auto sched = linear_schedule<float>(model.schedule.steps, model.schedule.beta_start, model.schedule.beta_end);

    Rng rng(cfg.seed);
    auto adam = make_adam(model);
    std::vector<TraceRow> trace;
    trace.reserve(static_cast<size_t>(cfg.steps));
    for (int s = 0; s < cfg.steps; ++s) {
        const auto stats = train_step(model, latent, cond, sched, cfg, rng, adam);
        trace.push_back(TraceRow{s, stats.total, stats.diffusion, stats.temporal});
    }
    return trace;
}

std::string format_trace(const std::vector<TraceRow>& rows) {
    std::string out = "step,loss_total,loss_diffusion,loss_temporal\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.step, r.total, r.diffusion, r.temporal);
        out += buf;
    }
    return out;
}

void write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << format_trace(rows);
}

}  // namespace vdd
