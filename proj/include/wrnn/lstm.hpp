#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "wrnn/error.hpp"
#include "wrnn/matrix.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

/// Gate weights act on the concatenation [h_prev ; x_t]. Weight matrices are
/// hidden x (hidden + input); biases are hidden x 1.
struct LstmParams {
    Matrix w_forget, w_input, w_candidate, w_output;
    Matrix b_forget, b_input, b_candidate, b_output;

    LstmParams() = default;
    LstmParams(std::size_t input, std::size_t hidden)
        : w_forget(hidden, hidden + input), w_input(hidden, hidden + input),
          w_candidate(hidden, hidden + input), w_output(hidden, hidden + input),
          b_forget(hidden, 1), b_input(hidden, 1), b_candidate(hidden, 1), b_output(hidden, 1) {}

    std::size_t hidden() const noexcept { return w_forget.rows(); }
    std::size_t input() const noexcept { return w_forget.cols() - w_forget.rows(); }

    /// Visits (name, tensor, is_weight_matrix) in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        f("w_forget", w_forget, true);
        f("w_input", w_input, true);
        f("w_candidate", w_candidate, true);
        f("w_output", w_output, true);
        f("b_forget", b_forget, false);
        f("b_input", b_input, false);
        f("b_candidate", b_candidate, false);
        f("b_output", b_output, false);
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<LstmParams*>(this)->for_each([&](const char* n, const Matrix& m, bool w) { f(n, m, w); });
    }

    void validate() const {
        const Matrix* ws[] = {&w_forget, &w_input, &w_candidate, &w_output};
        const Matrix* bs[] = {&b_forget, &b_input, &b_candidate, &b_output};
        for (const Matrix* w : ws) {
            if (!w->same_shape(w_forget)) throw DataError("lstm: gate weights differ in shape");
        }
        for (const Matrix* b : bs) {
            if (b->rows() != hidden() || b->cols() != 1) throw DataError("lstm: bias shape " + b->shape_str());
        }
        if (w_forget.cols() <= w_forget.rows()) throw DataError("lstm: weight shape " + w_forget.shape_str());
    }

    friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// Xavier weights, zero biases.
inline LstmParams init_lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p(input, hidden);
    for (Matrix* w : {&p.w_forget, &p.w_input, &p.w_candidate, &p.w_output}) xavier_fill(*w, rng);
    return p;
}

/// Forward intermediates of one timestep.
struct LstmStepCache {
    std::vector<double> z;  // [h_prev ; x_t]
    std::vector<double> s_prev;
    std::vector<double> forget, input, candidate, output;
    std::vector<double> state, tanh_state;
};

struct LstmStep {
    std::vector<double> h;
    std::vector<double> s;
    LstmStepCache cache;
};

inline LstmStep cell_forward(std::span<const double> x, std::span<const double> h_prev,
                             std::span<const double> s_prev, const LstmParams& p,
                             Activation candidate_act = Activation::tanh) {
    const std::size_t hidden = p.hidden();
    if (h_prev.size() != hidden || s_prev.size() != hidden || x.size() + hidden != p.w_forget.cols()) {
        throw DataError("lstm cell: input " + std::to_string(x.size()) + " / state " + std::to_string(h_prev.size()) +
                        " do not fit weights " + p.w_forget.shape_str());
    }
    LstmStep step;
    LstmStepCache& c = step.cache;
    c.z.resize(hidden + x.size());
    std::copy(h_prev.begin(), h_prev.end(), c.z.begin());
    std::copy(x.begin(), x.end(), c.z.begin() + static_cast<std::ptrdiff_t>(hidden));
    c.s_prev.assign(s_prev.begin(), s_prev.end());
    c.forget.resize(hidden);
    c.input.resize(hidden);
    c.candidate.resize(hidden);
    c.output.resize(hidden);
    affine(p.w_forget, c.z, p.b_forget.values(), c.forget);
    affine(p.w_input, c.z, p.b_input.values(), c.input);
    affine(p.w_candidate, c.z, p.b_candidate.values(), c.candidate);
    affine(p.w_output, c.z, p.b_output.values(), c.output);
    activate_inplace(Activation::sigmoid, c.forget);
    activate_inplace(Activation::sigmoid, c.input);
    activate_inplace(candidate_act, c.candidate);
    activate_inplace(Activation::sigmoid, c.output);

    c.state.resize(hidden);
    c.tanh_state.resize(hidden);
    step.h.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        c.state[i] = c.forget[i] * s_prev[i] + c.input[i] * c.candidate[i];
        c.tanh_state[i] = std::tanh(c.state[i]);
        step.h[i] = c.output[i] * c.tanh_state[i];
    }
    step.s = c.state;
    return step;
}

struct LstmStepGrads {
    std::vector<double> dx;
    std::vector<double> dh_prev;
    std::vector<double> ds_prev;
};

/// Backward through one cell. Parameter gradients are accumulated into
/// `grads` (same layout as the parameters).
inline LstmStepGrads cell_backward(std::span<const double> dh, std::span<const double> ds, const LstmStepCache& c,
                                   const LstmParams& p, LstmParams& grads,
                                   Activation candidate_act = Activation::tanh) {
    const std::size_t hidden = p.hidden();
    if (c.forget.size() != hidden || c.z.size() != p.w_forget.cols() || dh.size() != hidden || ds.size() != hidden) {
        throw DataError("lstm cell backward: cache does not match parameters " + p.w_forget.shape_str());
    }
    std::vector<double> da_f(hidden), da_g(hidden), da_c(hidden), da_o(hidden);
    LstmStepGrads out;
    out.ds_prev.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
        const double o = c.output[i];
        const double ts = c.tanh_state[i];
        const double ds_total = ds[i] + dh[i] * o * (1.0 - ts * ts);
        da_o[i] = dh[i] * ts * o * (1.0 - o);
        da_f[i] = ds_total * c.s_prev[i] * c.forget[i] * (1.0 - c.forget[i]);
        da_g[i] = ds_total * c.candidate[i] * c.input[i] * (1.0 - c.input[i]);
        da_c[i] = ds_total * c.input[i] * derivative_from_output(candidate_act, c.candidate[i]);
        out.ds_prev[i] = ds_total * c.forget[i];
    }
    accumulate_outer(grads.w_forget, da_f, c.z);
    accumulate_outer(grads.w_input, da_g, c.z);
    accumulate_outer(grads.w_candidate, da_c, c.z);
    accumulate_outer(grads.w_output, da_o, c.z);
    add_into(grads.b_forget.values(), da_f);
    add_into(grads.b_input.values(), da_g);
    add_into(grads.b_candidate.values(), da_c);
    add_into(grads.b_output.values(), da_o);

    std::vector<double> dz(c.z.size(), 0.0);
    accumulate_transposed(p.w_forget, da_f, dz);
    accumulate_transposed(p.w_input, da_g, dz);
    accumulate_transposed(p.w_candidate, da_c, dz);
    accumulate_transposed(p.w_output, da_o, dz);
    out.dh_prev.assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(hidden));
    out.dx.assign(dz.begin() + static_cast<std::ptrdiff_t>(hidden), dz.end());
    return out;
}

enum class Direction { forward, reverse };

/// Hidden states of a whole sequence. Row t of `hidden_states` always belongs
/// to input position t; `caches` are stored in processing order.
struct LstmSequence {
    Matrix hidden_states;
    std::vector<LstmStepCache> caches;
    Direction direction = Direction::forward;
    Activation candidate_act = Activation::tanh;

    /// Position consumed at processing step k.
    std::size_t position(std::size_t k) const {
        return direction == Direction::forward ? k : caches.size() - 1 - k;
    }
    /// Hidden state after the final processing step.
    std::span<const double> final_hidden() const { return hidden_states.row(position(caches.size() - 1)); }
};

inline LstmSequence unroll_forward(const Matrix& x, const LstmParams& p, Direction direction = Direction::forward,
                                   Activation candidate_act = Activation::tanh, std::span<const double> h0 = {},
                                   std::span<const double> s0 = {}) {
    const std::size_t hidden = p.hidden();
    if (x.rows() == 0) throw DataError("lstm unroll: empty sequence");
    if (x.cols() != p.input()) {
        throw DataError("lstm unroll: input width " + std::to_string(x.cols()) + " vs weights " +
                        p.w_forget.shape_str());
    }
    if ((!h0.empty() && h0.size() != hidden) || (!s0.empty() && s0.size() != hidden)) {
        throw DataError("lstm unroll: initial state size mismatch");
    }
    LstmSequence seq;
    seq.direction = direction;
    seq.candidate_act = candidate_act;
    seq.hidden_states = Matrix(x.rows(), hidden);
    seq.caches.reserve(x.rows());
    std::vector<double> h = h0.empty() ? std::vector<double>(hidden, 0.0) : std::vector<double>(h0.begin(), h0.end());
    std::vector<double> s = s0.empty() ? std::vector<double>(hidden, 0.0) : std::vector<double>(s0.begin(), s0.end());
    for (std::size_t k = 0; k < x.rows(); ++k) {
        const std::size_t t = direction == Direction::forward ? k : x.rows() - 1 - k;
        LstmStep step = cell_forward(x.row(t), h, s, p, candidate_act);
        std::copy(step.h.begin(), step.h.end(), seq.hidden_states.row(t).begin());
        h = std::move(step.h);
        s = std::move(step.s);
        seq.caches.push_back(std::move(step.cache));
    }
    return seq;
}

/// Backpropagation through time. `dh` holds dLoss/dh_t per input position
/// (same layout as `hidden_states`). Parameter gradients accumulate into
/// `grads`; returns dLoss/dx with one row per input position.
inline Matrix unroll_backward(const Matrix& dh, const LstmSequence& seq, const LstmParams& p, LstmParams& grads) {
    if (!dh.same_shape(seq.hidden_states)) {
        throw DataError("lstm unroll backward: gradient " + dh.shape_str() + " vs states " +
                        seq.hidden_states.shape_str());
    }
    const std::size_t hidden = p.hidden();
    Matrix dx(dh.rows(), p.input());
    std::vector<double> dh_next(hidden, 0.0), ds_next(hidden, 0.0), dh_total(hidden);
    for (std::size_t k = seq.caches.size(); k-- > 0;) {
        const std::size_t t = seq.position(k);
        const auto dh_t = dh.row(t);
        for (std::size_t i = 0; i < hidden; ++i) dh_total[i] = dh_t[i] + dh_next[i];
        LstmStepGrads g = cell_backward(dh_total, ds_next, seq.caches[k], p, grads, seq.candidate_act);
        std::copy(g.dx.begin(), g.dx.end(), dx.row(t).begin());
        dh_next = std::move(g.dh_prev);
        ds_next = std::move(g.ds_prev);
    }
    return dx;
}

}  // namespace wrnn
