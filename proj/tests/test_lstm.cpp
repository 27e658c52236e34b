#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "wrnn/finite_diff.hpp"
#include "wrnn/lstm.hpp"

using namespace wrnn;
using wrnn::testing::random_matrix;

namespace {

LstmParams random_lstm(std::size_t input, std::size_t hidden, Rng& rng, double scale = 0.7) {
    LstmParams p(input, hidden);
    p.for_each([&](const char*, Matrix& m, bool) {
        for (double& v : m.values()) v = rng.uniform(-scale, scale);
    });
    return p;
}

double weighted(const Matrix& a, const Matrix& w) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w[i];
    return s;
}

}  // namespace

TEST(LstmCell, ZeroParameters) {
    const LstmParams p(2, 3);
    const std::vector<double> x = {0.3, -0.7}, zero(3, 0.0);
    const LstmStep tanh_step = cell_forward(x, zero, zero, p);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(tanh_step.cache.forget[i], 0.5);
        EXPECT_EQ(tanh_step.cache.input[i], 0.5);
        EXPECT_EQ(tanh_step.cache.output[i], 0.5);
        EXPECT_EQ(tanh_step.h[i], 0.0);
        EXPECT_EQ(tanh_step.s[i], 0.0);
    }
    // candidate squashed by sigmoid: s = 0.5 * 0.5, h = 0.5 * tanh(0.25)
    const LstmStep sig_step = cell_forward(x, zero, zero, p, Activation::sigmoid);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(sig_step.s[i], 0.25);
        EXPECT_NEAR(sig_step.h[i], 0.12245933120185457, 1e-15);
    }
}

TEST(LstmCell, SaturatedForgetKeepsState) {
    LstmParams p(1, 1);
    p.b_forget[0] = 100.0;
    const std::vector<double> x = {0.0}, h = {0.0}, s = {2.0};
    const LstmStep step = cell_forward(x, h, s, p);
    EXPECT_NEAR(step.s[0], 2.0, 1e-12);
    EXPECT_NEAR(step.h[0], 0.48201379003790845, 1e-12);
}

TEST(LstmCell, MatchesScalarLoop) {
    Rng rng(31);
    const std::size_t input = 5, hidden = 4;
    const LstmParams p = random_lstm(input, hidden, rng);
    std::vector<double> x(input), h(hidden), s(hidden);
    for (double& v : x) v = rng.uniform(-1, 1);
    for (double& v : h) v = rng.uniform(-1, 1);
    for (double& v : s) v = rng.uniform(-1, 1);
    const LstmStep step = cell_forward(x, h, s, p);
    const auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
    for (std::size_t i = 0; i < hidden; ++i) {
        // input part first, then the recurrent part: a different summation order
        double af = 0, ag = 0, ac = 0, ao = 0;
        for (std::size_t k = 0; k < input; ++k) {
            af += p.w_forget(i, hidden + k) * x[k];
            ag += p.w_input(i, hidden + k) * x[k];
            ac += p.w_candidate(i, hidden + k) * x[k];
            ao += p.w_output(i, hidden + k) * x[k];
        }
        for (std::size_t k = 0; k < hidden; ++k) {
            af += p.w_forget(i, k) * h[k];
            ag += p.w_input(i, k) * h[k];
            ac += p.w_candidate(i, k) * h[k];
            ao += p.w_output(i, k) * h[k];
        }
        const double f = sig(af + p.b_forget[i]), g = sig(ag + p.b_input[i]);
        const double c = std::tanh(ac + p.b_candidate[i]), o = sig(ao + p.b_output[i]);
        const double s_new = f * s[i] + g * c;
        EXPECT_NEAR(step.s[i], s_new, 1e-12);
        EXPECT_NEAR(step.h[i], o * std::tanh(s_new), 1e-12);
    }
}

TEST(LstmCell, ZeroUpstreamGivesZeroGradient) {
    Rng rng(2);
    const LstmParams p = random_lstm(3, 2, rng);
    const std::vector<double> x = {0.1, 0.2, 0.3}, h = {0.4, -0.4}, s = {0.2, 0.9}, zero(2, 0.0);
    const LstmStep step = cell_forward(x, h, s, p);
    LstmParams grads(3, 2);
    const LstmStepGrads g = cell_backward(zero, zero, step.cache, p, grads);
    EXPECT_EQ(grads, LstmParams(3, 2));
    for (double v : g.dx) EXPECT_EQ(v, 0.0);
    for (double v : g.dh_prev) EXPECT_EQ(v, 0.0);
    for (double v : g.ds_prev) EXPECT_EQ(v, 0.0);
}

TEST(LstmCell, ClosedForgetGateBlocksStateGradient) {
    Rng rng(4);
    LstmParams p = random_lstm(2, 2, rng);
    for (double& b : p.b_forget.values()) b = -50.0;
    const std::vector<double> x = {0.5, -0.5}, h = {0.1, 0.2}, s = {1.0, -1.0}, dh = {1.0, -2.0}, ds = {0.3, 0.7};
    const LstmStep step = cell_forward(x, h, s, p);
    LstmParams grads(2, 2);
    const LstmStepGrads g = cell_backward(dh, ds, step.cache, p, grads);
    for (double v : g.ds_prev) EXPECT_LT(std::abs(v), 1e-20);
}

TEST(LstmCell, BackwardMatchesFiniteDifferences) {
    Rng rng(9);
    for (Activation cand : {Activation::tanh, Activation::sigmoid}) {
        LstmParams p = random_lstm(3, 4, rng);
        Matrix x = random_matrix(1, 3, rng), h = random_matrix(1, 4, rng), s = random_matrix(1, 4, rng);
        const Matrix wh = random_matrix(1, 4, rng), ws = random_matrix(1, 4, rng);
        const auto loss = [&] {
            const LstmStep st = cell_forward(x.values(), h.values(), s.values(), p, cand);
            double out = 0;
            for (std::size_t i = 0; i < 4; ++i) out += wh[i] * st.h[i] + ws[i] * st.s[i];
            return out;
        };
        const LstmStep step = cell_forward(x.values(), h.values(), s.values(), p, cand);
        LstmParams grads(3, 4);
        const LstmStepGrads g = cell_backward(wh.values(), ws.values(), step.cache, p, grads, cand);
        const auto check = [&](std::span<const double> analytic, Matrix& wrt) {
            const Matrix numeric = finite_diff_grad(loss, wrt);
            EXPECT_LT(worst_relative_error(analytic, numeric.values()), 1e-6);
        };
        check(g.dx, x);
        check(g.dh_prev, h);
        check(g.ds_prev, s);
        grads.for_each([&](const char* name, Matrix& gm, bool) {
            Matrix* target = nullptr;
            p.for_each([&](const char* n, Matrix& m, bool) {
                if (std::string(n) == name) target = &m;
            });
            SCOPED_TRACE(name);
            check(gm.values(), *target);
        });
    }
}

TEST(LstmUnroll, BpttMatchesFiniteDifferences) {
    Rng rng(13);
    for (Direction dir : {Direction::forward, Direction::reverse}) {
        for (Activation cand : {Activation::tanh, Activation::sigmoid}) {
            LstmParams p = random_lstm(2, 3, rng);
            Matrix x = random_matrix(5, 2, rng);
            const Matrix up = random_matrix(5, 3, rng);
            const auto loss = [&] { return weighted(unroll_forward(x, p, dir, cand).hidden_states, up); };
            const LstmSequence seq = unroll_forward(x, p, dir, cand);
            LstmParams grads(2, 3);
            const Matrix dx = unroll_backward(up, seq, p, grads);
            EXPECT_LT(worst_relative_error(dx.values(), finite_diff_grad(loss, x).values()), 1e-6);
            p.for_each([&](const char* name, Matrix& m, bool) {
                Matrix* g = nullptr;
                grads.for_each([&](const char* n, Matrix& gm, bool) {
                    if (std::string(n) == name) g = &gm;
                });
                SCOPED_TRACE(name);
                EXPECT_LT(worst_relative_error(g->values(), finite_diff_grad(loss, m).values()), 1e-6);
            });
        }
    }
}

TEST(LstmUnroll, SingleStepEqualsCell) {
    Rng rng(5);
    const LstmParams p = random_lstm(3, 2, rng);
    const Matrix x = random_matrix(1, 3, rng);
    const std::vector<double> zero(2, 0.0);
    const LstmStep step = cell_forward(x.row(0), zero, zero, p);
    for (Direction dir : {Direction::forward, Direction::reverse}) {
        const LstmSequence seq = unroll_forward(x, p, dir);
        EXPECT_EQ(seq.hidden_states(0, 0), step.h[0]);
        EXPECT_EQ(seq.hidden_states(0, 1), step.h[1]);
    }
}

TEST(LstmUnroll, PalindromeSymmetry) {
    Rng rng(6);
    const LstmParams p = random_lstm(2, 3, rng);
    Matrix x(5, 2);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < 2; ++c) x(t, c) = x(4 - t, c) = rng.uniform(-1, 1);
    const LstmSequence fwd = unroll_forward(x, p, Direction::forward);
    const LstmSequence rev = unroll_forward(x, p, Direction::reverse);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(fwd.hidden_states(t, i), rev.hidden_states(4 - t, i));
    EXPECT_EQ(fwd.final_hidden()[0], rev.final_hidden()[0]);
}

TEST(LstmUnroll, BoundsHoldOnRandomSequences) {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t input = 1 + rng.below(4), hidden = 1 + rng.below(5), len = 1 + rng.below(12);
        const LstmParams p = random_lstm(input, hidden, rng, 3.0);
        const Matrix x = random_matrix(len, input, rng, -5, 5);
        const Activation cand = rng.below(2) ? Activation::tanh : Activation::sigmoid;
        const LstmSequence seq = unroll_forward(x, p, Direction::forward, cand);
        for (const auto& c : seq.caches) {
            for (std::size_t i = 0; i < hidden; ++i) {
                for (double gate : {c.forget[i], c.input[i], c.output[i]}) {
                    ASSERT_GE(gate, 0.0);
                    ASSERT_LE(gate, 1.0);
                }
                ASSERT_LE(std::abs(c.state[i]), std::abs(c.s_prev[i]) + 1.0);
            }
        }
        for (double h : seq.hidden_states.values()) ASSERT_LE(std::abs(h), 1.0);
    }
}

TEST(LstmUnroll, DeterministicAndShapeChecked) {
    Rng rng(1);
    const LstmParams p = random_lstm(2, 2, rng);
    const Matrix x = random_matrix(4, 2, rng);
    EXPECT_EQ(unroll_forward(x, p).hidden_states, unroll_forward(x, p).hidden_states);
    EXPECT_THROW(unroll_forward(Matrix(3, 5), p), DataError);
    EXPECT_THROW(unroll_forward(Matrix(0, 2), p), DataError);
}
