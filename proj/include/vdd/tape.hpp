#pragma once

#include <functional>
#include <vector>

#include "vdd/tensor.hpp"

namespace vdd {

// Records primitive ops in execution order so backward() can replay them in
// reverse exactly once. Entries are only recorded when the output actually
// requires a gradient, so inference-only graphs cost nothing.
template <typename S>
class TapeT {
public:
    struct Entry {
        Ptr<S> out;
        std::function<void()> backward;  // accumulates into the inputs' grads
    };

    void record(Ptr<S> out, std::function<void()> backward) {
        entries_.push_back(Entry{std::move(out), std::move(backward)});
    }

    size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    void clear() { entries_.clear(); }

private:
    std::vector<Entry> entries_;
};

using Tape = TapeT<float>;

// Reverse-mode sweep. Seeds d(loss)/d(loss) = 1 and visits the tape once in
// reverse. Gradients accumulate (+=) into every tensor that requires one;
// leaves with requires_grad == false are never touched.
template <typename S>
void backward(const Ptr<S>& loss, TapeT<S>& tape) {
    if (loss->numel() != 1) throw ContractError("backward() needs a scalar loss");
    loss->ensure_grad();
    loss->grad[0] += S(1);
    const auto& entries = tape.entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        // Outputs never seeded (dead branches) contribute nothing.
        if (it->out->has_grad()) it->backward();
    }
}

// Central-difference gradient check for a scalar-valued function of one
// tensor. Analytic gradients come from backward(); the finite differences are
// an independent route through plain forward evaluations. Relative error uses
// denominator max(|analytic|, |numeric|, 1e-8). The probe step is scaled per
// element by max(1, |x_i|).
template <typename S>
double grad_check(const std::function<Ptr<S>(TapeT<S>&, const Ptr<S>&)>& fn,
                  const Ptr<S>& x, double epsilon) {
    // Analytic pass.
    x->requires_grad = true;
    x->clear_grad();
    TapeT<S> tape;
    auto loss = fn(tape, x);
    if (loss->numel() != 1) throw ContractError("grad_check: function must return a scalar");
    backward(loss, tape);
    std::vector<S> analytic = x->grad;
    if (analytic.empty()) analytic.assign(x->data.size(), S(0));
    x->clear_grad();
    x->requires_grad = false;

    auto eval = [&](void) -> double {
        TapeT<S> t;
        return static_cast<double>(fn(t, x)->data[0]);
    };

    double max_rel = 0;
    for (size_t i = 0; i < x->data.size(); ++i) {
        const S orig = x->data[i];
        const double h = epsilon * std::max(1.0, std::abs(static_cast<double>(orig)));
        x->data[i] = static_cast<S>(orig + h);
        const double fp = eval();
        x->data[i] = static_cast<S>(orig - h);
        const double fm = eval();
        x->data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

}  // namespace vdd
