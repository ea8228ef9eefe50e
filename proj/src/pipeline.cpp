#include "vdd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vdd/attention.hpp"
#include "vdd/checkpoint.hpp"
#include "vdd/prompt.hpp"
#include "vdd/scene.hpp"

namespace fs = std::filesystem;

namespace vdd {

void GenerationRequest::validate() const {
    if (guidance < 0) throw ConfigError("guidance scale must be >= 0");
    if (ddim_steps < 1) throw ConfigError("ddim step count must be >= 1");
}

EpsFn model_eps_fn(const VideoModel& model) {
    return [&model](const TensorPtr& z, int t, const Conditioning& cond) { return model.eps(z, t, cond); };
}

InversionResult invert_video(const EpsFn& eps, const TensorPtr& z0, const NoiseSchedule& sched,
                             int ddim_steps, const TensorPtr& depth_latent) {
    InversionResult inv;
    inv.timesteps = ddim_subsequence(sched.steps, ddim_steps);
    inv.depth_latent = depth_latent;
    Conditioning cond;
    cond.text = null_text_embedding();
    cond.depth = depth_latent;
    cond.unconditional = true;

    auto z = clone(*z0);
    int t_from = 0;
    for (int t_to : inv.timesteps) {
        auto e = eps(z, t_to, cond);
        z = ddim_invert_step(z, e, t_from, t_to, sched);
        t_from = t_to;
    }
    inv.latent = z;
    return inv;
}

TensorPtr cfg_combine(const TensorPtr& eps_uncond, const TensorPtr& eps_cond, double s) {
    require_same_shape(*eps_uncond, *eps_cond, "cfg_combine");
    auto out = zeros<float>(eps_uncond->shape);
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = static_cast<float>(eps_uncond->data[i] +
                                          s * (static_cast<double>(eps_cond->data[i]) - eps_uncond->data[i]));
    check_finite(*out, "cfg_combine");
    return out;
}

TensorPtr generate_latents(const EpsFn& eps, const TensorPtr& init_noise, const NoiseSchedule& sched,
                           const GenerationRequest& request, const TensorPtr& depth_latent) {
    request.validate();
    const auto ts = ddim_subsequence(sched.steps, request.ddim_steps);

    Conditioning cond;
    cond.text = embed_prompt(request.prompt);
    cond.depth = depth_latent;
    Conditioning uncond;
    uncond.text = null_text_embedding();
    uncond.depth = depth_latent;
    uncond.unconditional = true;

    auto z = clone(*init_noise);
    for (int k = static_cast<int>(ts.size()) - 1; k >= 0; --k) {
        const int t = ts[static_cast<size_t>(k)];
        const int t_prev = k > 0 ? ts[static_cast<size_t>(k - 1)] : 0;
        TensorPtr e;
        if (request.guidance == 0.0) {
            e = eps(z, t, uncond);
        } else if (request.guidance == 1.0) {
            e = eps(z, t, cond);
        } else {
            e = cfg_combine(eps(z, t, uncond), eps(z, t, cond), request.guidance);
        }
        z = ddim_step(z, e, t, t_prev, sched);
    }
    return z;
}

void save_inversion(const std::string& dir, const InversionResult& inv) {
    fs::create_directories(dir);
    save_tensor((fs::path(dir) / "latent.vdt").string(), *inv.latent);
    save_tensor((fs::path(dir) / "depth.vdt").string(), *inv.depth_latent);
    std::ofstream f((fs::path(dir) / "meta.txt").string());
    f << "timesteps";
    for (int t : inv.timesteps) f << " " << t;
    char buf[96];
    std::snprintf(buf, sizeof buf, "\nprompt_hash %016llx\nmodel_checksum %016llx\n",
                  static_cast<unsigned long long>(inv.prompt_hash),
                  static_cast<unsigned long long>(inv.model_checksum));
    f << buf;
}

InversionResult load_inversion(const std::string& dir) {
    InversionResult inv;
    inv.latent = load_tensor((fs::path(dir) / "latent.vdt").string());
    inv.depth_latent = load_tensor((fs::path(dir) / "depth.vdt").string());
    std::ifstream f((fs::path(dir) / "meta.txt").string());
    if (!f) throw IoError("missing meta.txt under " + dir);
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "timesteps") {
            int t;
            while (ss >> t) inv.timesteps.push_back(t);
        } else if (key == "prompt_hash") {
            ss >> std::hex >> inv.prompt_hash;
        } else if (key == "model_checksum") {
            ss >> std::hex >> inv.model_checksum;
        }
    }
    if (inv.timesteps.empty()) throw IoError("inversion meta has no timesteps");
    return inv;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> frame_embeddings(const VideoModel& model, const TensorPtr& rgb_video) {
    if (rgb_video->rank() != 4 || rgb_video->extent(1) != 3) throw ShapeError("expected [F,3,H,W] video");
    auto z = model.encode(rgb_video);  // [F,C,h,w]
    const int f_n = z->extent(0), c = z->extent(1);
    const int64_t hw = static_cast<int64_t>(z->extent(2)) * z->extent(3);
    std::vector<std::vector<double>> emb(static_cast<size_t>(f_n), std::vector<double>(static_cast<size_t>(c), 0.0));
    for (int f = 0; f < f_n; ++f) {
        double norm_sq = 0;
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0;
            const float* base = z->data.data() + (static_cast<int64_t>(f) * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) acc += base[i];
            const double v = acc / static_cast<double>(hw);
            emb[static_cast<size_t>(f)][static_cast<size_t>(ch)] = v;
            norm_sq += v * v;
        }
        if (norm_sq > 1e-24) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& v : emb[static_cast<size_t>(f)]) v *= inv;
        }
    }
    return emb;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-24 || nb < 1e-24) return 0.0;
    return dot / std::sqrt(na * nb);
}

// Pooled prompt feature: mean of the real (non-null) token rows.
std::vector<double> prompt_feature(const std::string& prompt) {
    const auto tokens = tokenize_prompt(prompt);
    if (tokens.empty()) throw ConfigError("textual alignment needs a non-empty prompt");
    auto emb = embed_prompt(prompt);
    const int n = std::min<int>(kPromptTokens, static_cast<int>(tokens.size()));
    std::vector<double> p(kPromptDim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < kPromptDim; ++j)
            p[static_cast<size_t>(j)] += emb->data[static_cast<size_t>(i) * kPromptDim + static_cast<size_t>(j)];
    for (auto& v : p) v /= n;
    return p;
}

// Ridge-regularized normal equations, solved by Gaussian elimination with
// partial pivoting (the system is tiny: kPromptDim square).
std::vector<double> ridge_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const size_t n = a.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        const double d = a[col][col];
        if (std::abs(d) < 1e-18) throw NumericError("singular system in prompt projection fit");
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double factor = a[r][col] / d;
            for (size_t c2 = col; c2 < n; ++c2) a[r][c2] -= factor * a[col][c2];
            b[r] -= factor * b[col];
        }
    }
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return x;
}

}  // namespace

EvalReport frame_consistency(const VideoModel& model, const TensorPtr& rgb_video) {
    if (rgb_video->extent(0) < 2) throw ContractError("frame consistency needs at least 2 frames");
    const auto emb = frame_embeddings(model, rgb_video);
    const size_t f_n = emb.size();
    EvalReport rep;
    rep.cosine.assign(f_n, std::vector<double>(f_n, 1.0));
    double acc = 0;
    size_t pairs = 0;
    for (size_t i = 0; i < f_n; ++i)
        for (size_t j = 0; j < f_n; ++j) {
            if (i == j) continue;
            const double c = cosine(emb[i], emb[j]);
            rep.cosine[i][j] = c;
            if (j > i) {
                acc += c;
                ++pairs;
            }
        }
    rep.consistency = acc / static_cast<double>(pairs);
    return rep;
}

PromptProjection fit_prompt_projection(const VideoModel& model) {
    // Design matrix over the canonical fixtures: prompt feature -> mean frame
    // embedding, one ridge solve per embedding dimension.
    std::vector<std::vector<double>> feats;
    std::vector<std::vector<double>> targets;
    for (const auto& name : fixture_names()) {
        const auto video = render(fixture_scene(name));
        const auto emb = frame_embeddings(model, video.rgb);
        std::vector<double> mean(emb[0].size(), 0.0);
        for (const auto& e : emb)
            for (size_t i = 0; i < e.size(); ++i) mean[i] += e[i];
        for (auto& v : mean) v /= static_cast<double>(emb.size());
        feats.push_back(prompt_feature(video.prompt));
        targets.push_back(mean);
    }
    const size_t dim_in = feats[0].size(), dim_out = targets[0].size();
    std::vector<std::vector<double>> gram(dim_in, std::vector<double>(dim_in, 0.0));
    for (const auto& p : feats)
        for (size_t i = 0; i < dim_in; ++i)
            for (size_t j = 0; j < dim_in; ++j) gram[i][j] += p[i] * p[j];
    for (size_t i = 0; i < dim_in; ++i) gram[i][i] += 1e-3;  // ridge

    PromptProjection proj;
    proj.rows = static_cast<int>(dim_out);
    proj.cols = static_cast<int>(dim_in);
    proj.w.assign(dim_out * dim_in, 0.0);
    for (size_t d = 0; d < dim_out; ++d) {
        std::vector<double> rhs(dim_in, 0.0);
        for (size_t s = 0; s < feats.size(); ++s)
            for (size_t i = 0; i < dim_in; ++i) rhs[i] += feats[s][i] * targets[s][d];
        const auto w = ridge_solve(gram, rhs);
        for (size_t i = 0; i < dim_in; ++i) proj.w[d * dim_in + i] = w[i];
    }
    return proj;
}

double textual_alignment(const VideoModel& model, const PromptProjection& proj, const TensorPtr& rgb_video,
                         const std::string& prompt) {
    const auto p = prompt_feature(prompt);
    std::vector<double> target(static_cast<size_t>(proj.rows), 0.0);
    for (int r = 0; r < proj.rows; ++r)
        for (int c = 0; c < proj.cols; ++c)
            target[static_cast<size_t>(r)] += proj.w[static_cast<size_t>(r * proj.cols + c)] * p[static_cast<size_t>(c)];
    const auto emb = frame_embeddings(model, rgb_video);
    double acc = 0;
    for (const auto& e : emb) acc += cosine(e, target);
    return acc / static_cast<double>(emb.size());
}

std::string format_eval_csv(const EvalReport& report, const double* alignment) {
    std::string out = "metric,value\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "frame_consistency,%.9g\n", report.consistency);
    out += buf;
    if (alignment) {
        std::snprintf(buf, sizeof buf, "textual_alignment,%.9g\n", *alignment);
        out += buf;
    }
    out += "pair_i,pair_j,cosine\n";
    for (size_t i = 0; i < report.cosine.size(); ++i)
        for (size_t j = i + 1; j < report.cosine.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", i, j, report.cosine[i][j]);
            out += buf;
        }
    return out;
}

double consecutive_frame_distance(const TensorPtr& latents) {
    if (latents->rank() != 4) throw ShapeError("expected [F,C,H,W] latents");
    const int f_n = latents->extent(0);
    if (f_n < 2) return 0.0;
    const int64_t fs = latents->numel() / f_n;
    double acc = 0;
    for (int f = 0; f + 1 < f_n; ++f) {
        double sq = 0;
        const float* a = latents->data.data() + static_cast<int64_t>(f) * fs;
        const float* b = a + fs;
        for (int64_t i = 0; i < fs; ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            sq += d * d;
        }
        acc += std::sqrt(sq / static_cast<double>(fs));
    }
    return acc / static_cast<double>(f_n - 1);
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

std::vector<BenchRow> bench_attention(int frames_lo, int frames_hi, int tokens, int dim, uint64_t seed) {
    if (frames_lo < 1 || frames_hi < frames_lo) throw ConfigError("bad frame range");
    std::vector<BenchRow> rows;
    for (int f = frames_lo; f <= frames_hi; ++f) {
        // Token count factors as a 1 x tokens grid; attention only sees tokens.
        auto z = randn<float>({f, dim, 1, tokens}, seed + static_cast<uint64_t>(f));
        Rng rng(seed ^ 0x5bd1e995u);
        AttentionParams sparse{AttentionKind::SparseCausal, randn_from<float>(rng, {dim, dim}),
                               randn_from<float>(rng, {dim, dim}), randn_from<float>(rng, {dim, dim}),
                               randn_from<float>(rng, {dim, dim})};
        for (auto* t : {&sparse.w_q, &sparse.w_k, &sparse.w_v, &sparse.w_o})
            for (auto& v : (*t)->data) v *= 1.0f / std::sqrt(static_cast<float>(dim));
        AttentionParams temporal = sparse;
        temporal.kind = AttentionKind::Temporal;

        for (AttentionMode mode : {AttentionMode::Full, AttentionMode::SparseCausal, AttentionMode::Temporal}) {
            Tape tape;
            const auto t0 = std::chrono::steady_clock::now();
            uint64_t counted = 0;
            {
                MacCounter::Scope scope;
                switch (mode) {
                    case AttentionMode::Full: full_spatiotemporal_attention(tape, z, sparse); break;
                    case AttentionMode::SparseCausal: sparse_causal_attention(tape, z, sparse); break;
                    case AttentionMode::Temporal: temporal_self_attention(tape, z, temporal); break;
                }
                counted = MacCounter::macs;
            }
            const auto t1 = std::chrono::steady_clock::now();
            rows.push_back(BenchRow{mode, f, tokens, dim, attention_flops(f, tokens, dim, mode), counted,
                                    static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count())});
        }
    }
    return rows;
}

std::string format_bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "mode,frames,tokens,dim,flops,wall_ns\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%llu,%llu\n", attention_mode_name(r.mode), r.frames,
                      r.tokens, r.dim, static_cast<unsigned long long>(r.flops),
                      static_cast<unsigned long long>(r.wall_ns));
        out += buf;
    }
    return out;
}

}  // namespace vdd
