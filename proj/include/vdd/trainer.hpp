#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vdd/model.hpp"
#include "vdd/scene.hpp"
#include "vdd/scheduler.hpp"

namespace vdd {

struct TrainConfig {
    int steps = 500;
    double lr = 1e-5;
    double temporal_weight = 0.1;  // lambda on the consistency regularizer
    double cond_dropout = 0.1;     // null-text substitution probability
    uint64_t seed = 0;
    bool train_guidance = true;  // false forces cond_dropout to 0
    int batch_size = 1;          // the one-shot regime

    void validate() const;
};

// Exhaustive parameter ledger: every named parameter appears exactly once.
struct TrainableSet {
    std::vector<std::pair<std::string, bool>> entries;

    int64_t trainable_tensors() const;
};

// The selective-unfreezing rule: sparse-causal and cross attention train only
// their query projection; temporal attention trains all four matrices;
// convolutions, norms, embeddings and the autoencoder stay frozen.
TrainableSet select_trainable(const VideoModel& model);
bool kind_is_trainable(const std::string& kind);

// Writes the selection into the parameters' requires_grad flags.
void apply_trainable(VideoModel& model, const TrainableSet& set);
int64_t trainable_elements(const VideoModel& model);

// Adam with the standard constants; state exists only for trainable
// parameters, in deterministic (name-registration) order.
struct AdamState {
    struct Slot {
        TensorPtr param;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots;
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState make_adam(const VideoModel& model);
void adam_step(AdamState& state, double lr);

// Eq.-style losses, mean-reduced so the temporal weight is resolution
// independent. Both run on the tape so gradients flow.
TensorPtr diffusion_loss(Tape& tape, const TensorPtr& eps, const TensorPtr& eps_pred);
TensorPtr temporal_consistency_loss(Tape& tape, const TensorPtr& z0_pred);

// predict_z0 expressed in tape ops so the regularizer can differentiate
// through the eps prediction.
TensorPtr predict_z0_graph(Tape& tape, const TensorPtr& z_t, const TensorPtr& eps_pred, int t,
                           const NoiseSchedule& sched);

struct StepStats {
    double total = 0, diffusion = 0, temporal = 0;
    int t = 0;
    bool dropped_cond = false;
};

// One optimization step: shared t for all frames, fresh noise, q_sample,
// eps prediction (null text with probability cond_dropout), loss, backward,
// Adam on the trainable set only.
StepStats train_step(VideoModel& model, const TensorPtr& video_latent, const Conditioning& cond,
                     const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng, AdamState& adam);

struct TraceRow {
    int step;
    double total, diffusion, temporal;
};

// The one-shot loop: encode the video once, then cfg.steps train_steps with a
// seeded stream. The model is updated in place.
std::vector<TraceRow> finetune(VideoModel& model, const RenderedVideo& video, const std::string& prompt,
                               const TrainConfig& cfg);

std::string format_trace(const std::vector<TraceRow>& rows);
void write_trace(const std::string& path, const std::vector<TraceRow>& rows);

}  // namespace vdd
