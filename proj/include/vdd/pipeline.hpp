#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vdd/flops.hpp"
#include "vdd/model.hpp"
#include "vdd/scheduler.hpp"

namespace vdd {

// Noise predictor abstraction so the DDIM plumbing can be exercised with
// stub models (constant or zero eps) in tests.
using EpsFn = std::function<TensorPtr(const TensorPtr& z, int t, const Conditioning& cond)>;

EpsFn model_eps_fn(const VideoModel& model);

struct InversionResult {
    TensorPtr latent;        // inverted noise [F,4,h,w]
    TensorPtr depth_latent;  // the source video's depth conditioning [F,1,h,w]
    std::vector<int> timesteps;
    uint64_t prompt_hash = 0;
    uint64_t model_checksum = 0;
};

struct GenerationRequest {
    std::string prompt;
    double guidance = 7.5;
    int ddim_steps = 50;
    uint64_t seed = 0;  // only used when starting from fresh noise

    void validate() const;
};

// Ascending DDIM traversal with unguided (null-text) predictions; depth stays
// as structural conditioning. The eps model is evaluated at each move's
// target timestep.
InversionResult invert_video(const EpsFn& eps, const TensorPtr& z0, const NoiseSchedule& sched,
                             int ddim_steps, const TensorPtr& depth_latent);

// eps_uncond + s * (eps_cond - eps_uncond)
TensorPtr cfg_combine(const TensorPtr& eps_uncond, const TensorPtr& eps_cond, double s);

// Descending DDIM traversal with classifier-free guidance; returns the final
// clean latents (decode separately).
TensorPtr generate_latents(const EpsFn& eps, const TensorPtr& init_noise, const NoiseSchedule& sched,
                           const GenerationRequest& request, const TensorPtr& depth_latent);

void save_inversion(const std::string& dir, const InversionResult& inv);
InversionResult load_inversion(const std::string& dir);

// ---------------------------------------------------------------------------
// Surrogate evaluation metrics (pooled frozen-autoencoder embeddings standing
// in for CLIP; orderings are meaningful, absolute values are not).
// ---------------------------------------------------------------------------

struct EvalReport {
    double consistency = 0;                    // mean upper-triangle cosine
    std::vector<std::vector<double>> cosine;   // full FxF similarity matrix
};

// Per-frame embedding: channel-pooled encoder latent, unit-normalized.
std::vector<std::vector<double>> frame_embeddings(const VideoModel& model, const TensorPtr& rgb_video);

EvalReport frame_consistency(const VideoModel& model, const TensorPtr& rgb_video);

// Least-squares map from pooled prompt features to the frame embedding space,
// fit once on the canonical fixture set.
struct PromptProjection {
    int rows = 0, cols = 0;
    std::vector<double> w;  // rows x cols
};

PromptProjection fit_prompt_projection(const VideoModel& model);
double textual_alignment(const VideoModel& model, const PromptProjection& proj, const TensorPtr& rgb_video,
                         const std::string& prompt);

std::string format_eval_csv(const EvalReport& report, const double* alignment);

// Mean over consecutive frame pairs of the RMS latent difference.
double consecutive_frame_distance(const TensorPtr& latents);

// ---------------------------------------------------------------------------
// Attention benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
    AttentionMode mode;
    int frames, tokens, dim;
    uint64_t flops;        // closed form
    uint64_t counted_macs; // instrumented kernel count
    uint64_t wall_ns;
};

std::vector<BenchRow> bench_attention(int frames_lo, int frames_hi, int tokens, int dim, uint64_t seed);
std::string format_bench_csv(const std::vector<BenchRow>& rows);

}  // namespace vdd
