#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vdd/tensor.hpp"

namespace vdd {

// beta/alpha/alpha-bar tables over T timesteps. Timesteps are 1-based
// (beta_1..beta_T); alpha_bar(0) == 1 by convention so a DDIM step to t=0
// lands exactly on the predicted clean latent.
template <typename S>
struct NoiseScheduleT {
    int steps = 0;  // T
    std::vector<S> betas;       // beta_t, index t-1
    std::vector<S> alphas;      // 1 - beta_t
    std::vector<S> alpha_bars;  // prod_{s<=t} alpha_s

    S beta(int t) const {
        check_t(t);
        return betas[static_cast<size_t>(t - 1)];
    }
    S alpha(int t) const {
        check_t(t);
        return alphas[static_cast<size_t>(t - 1)];
    }
    S alpha_bar(int t) const {
        if (t == 0) return S(1);
        check_t(t);
        return alpha_bars[static_cast<size_t>(t - 1)];
    }

    void check_t(int t) const {
        if (t < 1 || t > steps) throw ContractError("timestep " + std::to_string(t) + " outside [1," + std::to_string(steps) + "]");
    }
};

using NoiseSchedule = NoiseScheduleT<float>;

// Linear beta ramp inclusive of both endpoints (T=1 gives [beta_start]).
// Defaults T=1000, beta in [1e-4, 2e-2].
template <typename S>
NoiseScheduleT<S> linear_schedule(int steps, double beta_start = 1e-4, double beta_end = 2e-2) {
    if (steps < 1) throw ConfigError("schedule needs T >= 1");
    if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
        throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
    NoiseScheduleT<S> s;
    s.steps = steps;
    s.betas.resize(static_cast<size_t>(steps));
    s.alphas.resize(static_cast<size_t>(steps));
    s.alpha_bars.resize(static_cast<size_t>(steps));
    double bar = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        bar *= 1.0 - beta;
        s.betas[static_cast<size_t>(t)] = static_cast<S>(beta);
        s.alphas[static_cast<size_t>(t)] = static_cast<S>(1.0 - beta);
        s.alpha_bars[static_cast<size_t>(t)] = static_cast<S>(bar);
    }
    return s;
}

// Degenerate all-zero-beta schedule; only for tests that need alpha_bar == 1.
template <typename S>
NoiseScheduleT<S> identity_schedule(int steps) {
    NoiseScheduleT<S> s;
    s.steps = steps;
    s.betas.assign(static_cast<size_t>(steps), S(0));
    s.alphas.assign(static_cast<size_t>(steps), S(1));
    s.alpha_bars.assign(static_cast<size_t>(steps), S(1));
    return s;
}

// Closed-form forward marginal: z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps.
template <typename S>
Ptr<S> q_sample(const Ptr<S>& z0, int t, const Ptr<S>& eps, const NoiseScheduleT<S>& sched) {
    sched.check_t(t);
    require_same_shape(*z0, *eps, "q_sample");
    const double ab = sched.alpha_bar(t);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    auto out = zeros<S>(z0->shape);
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = static_cast<S>(c0 * z0->data[i] + c1 * eps->data[i]);
    return out;
}

// Algebraic inverse of the marginal: z0_hat = (z_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
template <typename S>
Ptr<S> predict_z0(const Ptr<S>& z_t, const Ptr<S>& eps_pred, int t, const NoiseScheduleT<S>& sched) {
    require_same_shape(*z_t, *eps_pred, "predict_z0");
    const double ab = sched.alpha_bar(t);
    if (ab < 1e-12) throw NumericError("alpha_bar underflow at t=" + std::to_string(t));
    const double inv = 1.0 / std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    auto out = zeros<S>(z_t->shape);
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = static_cast<S>((z_t->data[i] - c1 * eps_pred->data[i]) * inv);
    return out;
}

// One DDPM ancestral step. Posterior mean from (z0_hat, z_t) with the fixed
// posterior variance beta_tilde = (1-abar_{t-1})/(1-abar_t) * beta_t. Noise is
// caller-supplied; it is ignored at t=1 where the mean is returned exactly.
template <typename S>
Ptr<S> ddpm_step(const Ptr<S>& z_t, const Ptr<S>& eps_pred, int t, const NoiseScheduleT<S>& sched,
                 const Ptr<S>& noise) {
    sched.check_t(t);
    require_same_shape(*z_t, *eps_pred, "ddpm_step");
    require_same_shape(*z_t, *noise, "ddpm_step noise");
    auto z0_hat = predict_z0(z_t, eps_pred, t, sched);
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double beta_t = sched.beta(t);
    const double alpha_t = sched.alpha(t);
    const double denom = 1.0 - ab_t;
    const double coef_z0 = std::sqrt(ab_prev) * beta_t / denom;
    const double coef_zt = std::sqrt(alpha_t) * (1.0 - ab_prev) / denom;
    const double var = (1.0 - ab_prev) / denom * beta_t;
    const double sigma = t > 1 ? std::sqrt(var) : 0.0;
    auto out = zeros<S>(z_t->shape);
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = static_cast<S>(coef_z0 * z0_hat->data[i] + coef_zt * z_t->data[i] + sigma * noise->data[i]);
    check_finite(*out, "ddpm_step");
    return out;
}

namespace detail {
// Deterministic (eta = 0) DDIM move between any two timesteps that share one
// eps estimate; the same formula serves sampling (down) and inversion (up).
template <typename S>
Ptr<S> ddim_move(const Ptr<S>& z_t, const Ptr<S>& eps_pred, int t_from, int t_to,
                 const NoiseScheduleT<S>& sched) {
    auto z0_hat = t_from == 0 ? clone(*z_t) : predict_z0(z_t, eps_pred, t_from, sched);
    const double ab = sched.alpha_bar(t_to);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    auto out = zeros<S>(z_t->shape);
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = static_cast<S>(c0 * z0_hat->data[i] + c1 * eps_pred->data[i]);
    check_finite(*out, "ddim_move");
    return out;
}
}  // namespace detail

template <typename S>
Ptr<S> ddim_step(const Ptr<S>& z_t, const Ptr<S>& eps_pred, int t, int t_prev,
                 const NoiseScheduleT<S>& sched) {
    sched.check_t(t);
    if (t_prev < 0 || t_prev >= t) throw ContractError("ddim_step needs 0 <= t_prev < t");
    require_same_shape(*z_t, *eps_pred, "ddim_step");
    return detail::ddim_move(z_t, eps_pred, t, t_prev, sched);
}

template <typename S>
Ptr<S> ddim_invert_step(const Ptr<S>& z_t, const Ptr<S>& eps_pred, int t, int t_next,
                        const NoiseScheduleT<S>& sched) {
    if (t < 0) throw ContractError("ddim_invert_step needs t >= 0");
    if (t_next <= t) throw ContractError("ddim_invert_step needs t_next > t");
    sched.check_t(t_next);
    require_same_shape(*z_t, *eps_pred, "ddim_invert_step");
    return detail::ddim_move(z_t, eps_pred, t, t_next, sched);
}

// Strictly increasing subsequence of {1..T} used by DDIM: round(k*T/n) for
// k = 1..n. Sampling walks it descending, inversion ascending.
inline std::vector<int> ddim_subsequence(int schedule_steps, int n) {
    if (n < 1 || n > schedule_steps) throw ConfigError("DDIM step count must be in [1,T]");
    std::vector<int> ts(static_cast<size_t>(n));
    for (int k = 1; k <= n; ++k)
        ts[static_cast<size_t>(k - 1)] = static_cast<int>(std::lround(static_cast<double>(k) * schedule_steps / n));
    for (size_t i = 1; i < ts.size(); ++i)
        if (ts[i] <= ts[i - 1]) throw ConfigError("DDIM subsequence not strictly increasing; reduce step count");
    if (ts.front() < 1 || ts.back() > schedule_steps) throw ConfigError("DDIM subsequence out of range");
    return ts;
}

// Debug dump: one "t beta_t alphabar_t" row per line, 9 significant digits.
template <typename S>
std::string format_schedule(const NoiseScheduleT<S>& sched) {
    std::string out;
    char buf[96];
    for (int t = 1; t <= sched.steps; ++t) {
        std::snprintf(buf, sizeof buf, "%d %.9g %.9g\n", t, static_cast<double>(sched.beta(t)),
                      static_cast<double>(sched.alpha_bar(t)));
        out += buf;
    }
    return out;
}

}  // namespace vdd
