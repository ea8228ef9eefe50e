// Command-line surface for the one-shot depth-conditioned video diffusion
// pipeline: scene synthesis, autoencoder pre-training, one-shot fine-tuning,
// DDIM inversion, guided generation, evaluation and the attention benchmark.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "vdd/checkpoint.hpp"
#include "vdd/image_io.hpp"
#include "vdd/pipeline.hpp"
#include "vdd/prompt.hpp"
#include "vdd/scene.hpp"
#include "vdd/trainer.hpp"

namespace fs = std::filesystem;
using namespace vdd;

namespace {

TensorPtr frame_slice(const TensorPtr& video, int f) {
    const int c = video->extent(1), h = video->extent(2), w = video->extent(3);
    auto out = zeros<float>({c, h, w});
    std::copy_n(video->data.data() + static_cast<int64_t>(f) * c * h * w, static_cast<int64_t>(c) * h * w,
                out->data.data());
    return out;
}

int run_synth(const std::string& spec_path, const std::string& outdir) {
    const auto spec = load_scene(spec_path);
    const auto video = render(spec);
    write_video_dir(outdir, video);
    write_contact_sheet((fs::path(outdir) / "contact_sheet.ppm").string(), video.rgb);
    std::printf("wrote %d frames to %s\n", video.frames(), outdir.c_str());
    return 0;
}

// Reconstruction pre-training of the autoencoder on every video found under
// the data directory. The U-Net is initialized fresh from the seed and saved
// untouched; fine-tuning starts from the frozen result.
int run_pretrain_ae(const std::string& datadir, const std::string& ckpt, int steps, double lr,
                    uint64_t seed, int width) {
    std::vector<std::string> video_dirs;
    if (fs::exists(fs::path(datadir) / "frame_0000.ppm")) video_dirs.push_back(datadir);
    for (const auto& e : fs::directory_iterator(datadir))
        if (e.is_directory() && fs::exists(e.path() / "frame_0000.ppm")) video_dirs.push_back(e.path().string());
    std::sort(video_dirs.begin(), video_dirs.end());
    if (video_dirs.empty()) throw ConfigError("no rendered videos under " + datadir);

    std::vector<TensorPtr> frames;
    for (const auto& dir : video_dirs) {
        const auto rgb = read_video_frames(dir);
        for (int f = 0; f < rgb->extent(0); ++f) frames.push_back(frame_slice(rgb, f));
    }
    std::printf("pretraining autoencoder on %zu frames from %zu videos\n", frames.size(), video_dirs.size());

    UNetConfig cfg;
    cfg.base_width = width;
    VideoModel model(cfg, seed);
    // Only autoencoder parameters move here.
    for (const auto& p : model.params.all()) {
        p.tensor->requires_grad = p.kind.rfind("ae.", 0) == 0;
        p.tensor->clear_grad();
    }
    auto adam = make_adam(model);
    Rng rng(seed ^ 0x9E3779B97F4A7C15ull);
    double running = 0;
    for (int s = 0; s < steps; ++s) {
        const auto& x = frames[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(frames.size()) - 1))];
        Tape tape;
        auto batch = reshape(tape, x, {1, x->extent(0), x->extent(1), x->extent(2)});
        auto recon = model.ae.decode(tape, model.ae.encode(tape, batch));
        auto loss = mse(tape, recon, batch);
        backward(loss, tape);
        adam_step(adam, lr);
        running += loss->data[0];
        if ((s + 1) % 500 == 0) {
            std::printf("  step %d  recon mse %.6f\n", s + 1, running / 500.0);
            running = 0;
        }
    }
    // Freeze everything; finetune re-selects its own trainable set.
    for (const auto& p : model.params.all()) {
        p.tensor->requires_grad = false;
        p.tensor->clear_grad();
    }
    save_checkpoint(model, ckpt);
    std::printf("saved checkpoint to %s\n", ckpt.c_str());
    return 0;
}

int run_finetune(const std::string& video_dir, const std::string& prompt, const std::string& ckpt_in,
                 const std::string& ckpt_out, const TrainConfig& cfg, int frames,
                 const std::string& trace_path) {
    auto model = load_checkpoint(ckpt_in);
    auto video = read_video_dir(video_dir);
    if (frames > 0 && frames != video.frames()) video = sample_frames(video, frames);
    const auto trace = finetune(model, video, prompt, cfg);
    save_checkpoint(model, ckpt_out);
    write_trace(trace_path.empty() ? (fs::path(ckpt_out) / "loss_trace.csv").string() : trace_path, trace);
    std::printf("finetuned %d steps; final loss %.6f\n", cfg.steps, trace.back().total);
    return 0;
}

int run_invert(const std::string& ckpt, const std::string& video_dir, const std::string& out, int ddim_steps) {
    const auto model = load_checkpoint(ckpt);
    const auto video = read_video_dir(video_dir);
    const auto latent = model.encode(video.rgb);
    const auto depth = depth_to_latent(video.depth, latent->extent(2), latent->extent(3));
    const auto sched =
        linear_schedule<float>(model.schedule.steps, model.schedule.beta_start, model.schedule.beta_end);
    auto inv = invert_video(model_eps_fn(model), latent, sched, ddim_steps, depth);
    inv.prompt_hash = video.prompt.empty() ? 0 : fnv1a64(video.prompt.data(), video.prompt.size());
    inv.model_checksum = model.checksum();
    save_inversion(out, inv);
    std::printf("inverted %d frames over %zu timesteps\n", latent->extent(0), inv.timesteps.size());
    return 0;
}

int run_generate(const std::string& ckpt, const std::string& inv_dir, const std::string& outdir,
                 const GenerationRequest& request, bool fresh_noise) {
    const auto model = load_checkpoint(ckpt);
    const auto inv = load_inversion(inv_dir);
    const auto sched =
        linear_schedule<float>(model.schedule.steps, model.schedule.beta_start, model.schedule.beta_end);
    TensorPtr init = inv.latent;
    if (fresh_noise) init = randn<float>(inv.latent->shape, request.seed);
    const auto latents = generate_latents(model_eps_fn(model), init, sched, request, inv.depth_latent);
    const auto rgb = model.decode(latents);

    fs::create_directories(outdir);
    for (int f = 0; f < rgb->extent(0); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04d.ppm", f);
        write_ppm((fs::path(outdir) / name).string(), frame_slice(rgb, f));
    }
    write_contact_sheet((fs::path(outdir) / "contact_sheet.ppm").string(), rgb);
    save_tensor((fs::path(outdir) / "latents.vdt").string(), *latents);
    std::printf("generated %d frames to %s\n", rgb->extent(0), outdir.c_str());
    return 0;
}

int run_eval(const std::string& video_dir, const std::string& prompt, const std::string& ckpt,
             const std::string& out_path) {
    const auto model = load_checkpoint(ckpt);
    const auto rgb = read_video_frames(video_dir);
    const auto report = frame_consistency(model, rgb);
    double alignment = 0;
    const bool with_prompt = !prompt.empty();
    if (with_prompt) {
        const auto proj = fit_prompt_projection(model);
        alignment = textual_alignment(model, proj, rgb, prompt);
    }
    const auto csv = format_eval_csv(report, with_prompt ? &alignment : nullptr);
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream f(out_path);
        f << csv;
    }
    return 0;
}

int run_bench(const std::string& range, int tokens, int dim, uint64_t seed, const std::string& out_path) {
    const auto dots = range.find("..");
    if (dots == std::string::npos) throw ConfigError("--frames wants a range like 2..16");
    const int lo = std::stoi(range.substr(0, dots));
    const int hi = std::stoi(range.substr(dots + 2));
    const auto rows = bench_attention(lo, hi, tokens, dim, seed);
    const auto csv = format_bench_csv(rows);
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream f(out_path);
        f << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-shot depth-conditioned text-to-video diffusion"};
    app.require_subcommand(1);

    std::string spec_path, outdir, datadir, ckpt, ckpt_in, ckpt_out, video_dir, prompt, inv_dir, out_path,
        trace_path, frames_range = "2..16";
    int steps = 3000, frames = 0, ddim_steps = 50, tokens = 64, dim = 64, ae_width = 32;
    double lr = 1e-3, guidance_unused = 0;
    (void)guidance_unused;
    uint64_t seed = 0;
    bool fresh_noise = false;

    auto* synth = app.add_subcommand("synth", "render a scene spec to frames + depth maps");
    synth->add_option("spec", spec_path, "scene spec file")->required();
    synth->add_option("outdir", outdir, "output directory")->required();

    auto* pre = app.add_subcommand("pretrain-ae", "reconstruction-train the autoencoder");
    pre->add_option("datadir", datadir, "directory of rendered videos")->required();
    pre->add_option("ckpt", ckpt, "output checkpoint directory")->required();
    pre->add_option("--steps", steps, "training steps");
    pre->add_option("--lr", lr, "learning rate");
    pre->add_option("--seed", seed, "rng seed");
    pre->add_option("--width", ae_width, "U-Net base width for the bundled model");

    auto* fin = app.add_subcommand("finetune", "one-shot fine-tune on a single video");
    TrainConfig tcfg;
    fin->add_option("video", video_dir, "rendered video directory")->required();
    fin->add_option("prompt", prompt, "training prompt")->required();
    fin->add_option("ckpt-in", ckpt_in, "input checkpoint")->required();
    fin->add_option("ckpt-out", ckpt_out, "output checkpoint")->required();
    fin->add_option("--steps", tcfg.steps, "fine-tuning steps");
    fin->add_option("--lr", tcfg.lr, "learning rate");
    fin->add_option("--lambda", tcfg.temporal_weight, "temporal consistency weight");
    fin->add_option("--dropout", tcfg.cond_dropout, "condition dropout probability");
    fin->add_option("--seed", tcfg.seed, "rng seed");
    fin->add_option("--frames", frames, "evenly subsample the video to this many frames");
    fin->add_option("--trace", trace_path, "loss trace CSV path");

    auto* inv = app.add_subcommand("invert", "DDIM-invert a video under the tuned model");
    inv->add_option("ckpt", ckpt, "checkpoint directory")->required();
    inv->add_option("video", video_dir, "rendered video directory")->required();
    inv->add_option("out", outdir, "inversion output directory")->required();
    inv->add_option("--ddim-steps", ddim_steps, "DDIM step count");

    auto* gen = app.add_subcommand("generate", "sample a video from inverted noise");
    GenerationRequest req;
    gen->add_option("ckpt", ckpt, "checkpoint directory")->required();
    gen->add_option("inv", inv_dir, "inversion directory")->required();
    gen->add_option("outdir", outdir, "output directory")->required();
    gen->add_option("--prompt", req.prompt, "edited prompt")->required();
    gen->add_option("--guidance", req.guidance, "classifier-free guidance scale");
    gen->add_option("--ddim-steps", req.ddim_steps, "DDIM step count");
    gen->add_option("--seed", req.seed, "seed for --fresh-noise");
    gen->add_flag("--fresh-noise", fresh_noise, "start from fresh Gaussian noise (ablation)");

    auto* ev = app.add_subcommand("eval", "frame consistency / textual alignment report");
    ev->add_option("video", video_dir, "video directory (PPM frames)")->required();
    ev->add_option("--prompt", prompt, "prompt for the alignment score");
    ev->add_option("--ckpt", ckpt, "checkpoint directory (embedding model)")->required();
    ev->add_option("--out", out_path, "write the CSV here instead of stdout");

    auto* bench = app.add_subcommand("bench-attn", "attention FLOP/wall-time benchmark");
    bench->add_option("--frames", frames_range, "frame range, e.g. 2..16");
    bench->add_option("--tokens", tokens, "tokens per frame");
    bench->add_option("--dim", dim, "model width");
    bench->add_option("--seed", seed, "rng seed");
    bench->add_option("--out", out_path, "write the CSV here instead of stdout");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return run_synth(spec_path, outdir);
        if (pre->parsed()) return run_pretrain_ae(datadir, ckpt, steps, lr, seed, ae_width);
        if (fin->parsed()) return run_finetune(video_dir, prompt, ckpt_in, ckpt_out, tcfg, frames, trace_path);
        if (inv->parsed()) return run_invert(ckpt, video_dir, outdir, ddim_steps);
        if (gen->parsed()) return run_generate(ckpt, inv_dir, outdir, req, fresh_noise);
        if (ev->parsed()) return run_eval(video_dir, prompt, ckpt, out_path);
        if (bench->parsed()) return run_bench(frames_range, tokens, dim, seed, out_path);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version exit 0, usage errors exit 1
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
