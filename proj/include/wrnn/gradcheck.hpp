#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "wrnn/finite_diff.hpp"
#include "wrnn/lstm.hpp"
#include "wrnn/models.hpp"
#include "wrnn/training.hpp"

namespace wrnn {

struct GradcheckEntry {
    std::string component;
    double worst_relative_error = 0.0;
    std::size_t coordinates = 0;  // entries with |analytic| above the floor
    bool passed = true;
};

struct GradcheckOptions {
    std::uint64_t seed = 20190101;
    double eps = 1e-5;
    double tolerance = 1e-5;
    double floor = 1e-8;
    /// Negative control: scales this component's analytic gradient by 1.001.
    std::string corrupt_component;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;

    bool passed() const {
        return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
    }

    std::string to_text() const {
        std::string out;
        char buf[160];
        for (const auto& e : entries) {
            std::snprintf(buf, sizeof buf, "%-28s worst_rel_err=%.3e coords=%-5zu %s\n", e.component.c_str(),
                          e.worst_relative_error, e.coordinates, e.passed ? "PASS" : "FAIL");
            out += buf;
        }
        return out;
    }
};

namespace detail {

class GradcheckRun {
public:
    explicit GradcheckRun(const GradcheckOptions& opts) : opts_(opts) {}

    /// Compares one analytic gradient against central differences of `f`
    /// with respect to `param`, folding the result into `component`. The
    /// first `frozen_rows` rows are never trained (the padding embedding)
    /// and are left out.
    void compare(const std::string& component, Matrix analytic, Matrix& param, const std::function<double()>& f,
                 std::size_t frozen_rows = 0) {
        if (component == opts_.corrupt_component)
            for (double& v : analytic.values()) v *= 1.001;
        const Matrix numeric = finite_diff_grad(f, param, opts_.eps);
        GradcheckEntry& e = entry(component);
        for (std::size_t i = frozen_rows * analytic.cols(); i < analytic.size(); ++i) {
            if (std::abs(analytic[i]) <= opts_.floor) {
                // a vanished analytic gradient where the loss clearly moves is a bug, not noise
                if (std::abs(numeric[i]) > 1e-6) e.worst_relative_error = std::max(e.worst_relative_error, 1.0);
                continue;
            }
            ++e.coordinates;
            e.worst_relative_error = std::max(e.worst_relative_error, relative_error(analytic[i], numeric[i]));
        }
        e.passed = e.worst_relative_error < opts_.tolerance;
    }

    GradcheckReport report() const {
        if (!opts_.corrupt_component.empty() &&
            std::none_of(entries_.begin(), entries_.end(),
                         [&](const auto& e) { return e.component == opts_.corrupt_component; }))
            throw ConfigError("unknown gradcheck component '" + opts_.corrupt_component + "'");
        return {entries_};
    }

private:
    GradcheckEntry& entry(const std::string& component) {
        for (auto& e : entries_)
            if (e.component == component) return e;
        entries_.push_back({component});
        return entries_.back();
    }

    GradcheckOptions opts_;
    std::vector<GradcheckEntry> entries_;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

inline LstmParams random_lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p(input, hidden);
    p.for_each([&](const char*, Matrix& m, bool) {
        for (double& v : m.values()) v = rng.uniform(-0.8, 0.8);
    });
    return p;
}

inline void check_cell(GradcheckRun& run, Rng& rng, Activation cand, const std::string& name) {
    const std::size_t input = 2, hidden = 3;
    LstmParams p = random_lstm(input, hidden, rng);
    Matrix x = random_matrix(input, 1, rng), h0 = random_matrix(hidden, 1, rng), s0 = random_matrix(hidden, 1, rng);
    const Matrix rh = random_matrix(hidden, 1, rng), rs = random_matrix(hidden, 1, rng);
    // loss = <rh, h> + <rs, s>
    const auto loss = [&] {
        const LstmStep st = cell_forward(x.values(), h0.values(), s0.values(), p, cand);
        return dot(rh.values(), st.h) + dot(rs.values(), st.s);
    };
    const LstmStep st = cell_forward(x.values(), h0.values(), s0.values(), p, cand);
    LstmParams grads(input, hidden);
    const LstmStepGrads g = cell_backward(rh.values(), rs.values(), st.cache, p, grads, cand);
    run.compare(name, Matrix::column(g.dx), x, loss);
    run.compare(name, Matrix::column(g.dh_prev), h0, loss);
    run.compare(name, Matrix::column(g.ds_prev), s0, loss);
    std::vector<Matrix*> analytic;
    grads.for_each([&](const char*, Matrix& m, bool) { analytic.push_back(&m); });
    std::size_t k = 0;
    p.for_each([&](const char*, Matrix& m, bool) { run.compare(name, *analytic[k++], m, loss); });
}

inline void check_unroll(GradcheckRun& run, Rng& rng, Direction dir, const std::string& name) {
    const std::size_t sl = 4, input = 2, hidden = 3;
    LstmParams p = random_lstm(input, hidden, rng);
    Matrix x = random_matrix(sl, input, rng);
    // loss = sum(H^2) / 2
    const auto loss = [&] { return 0.5 * sum_squares(unroll_forward(x, p, dir).hidden_states.values()); };
    const LstmSequence seq = unroll_forward(x, p, dir);
    LstmParams grads(input, hidden);
    const Matrix dx = unroll_backward(seq.hidden_states, seq, p, grads);
    run.compare(name, dx, x, loss);
    std::vector<Matrix*> analytic;
    grads.for_each([&](const char*, Matrix& m, bool) { analytic.push_back(&m); });
    std::size_t k = 0;
    p.for_each([&](const char*, Matrix& m, bool) { run.compare(name, *analytic[k++], m, loss); });
}

inline std::vector<Document> tiny_documents(std::size_t vocab, std::size_t sl, Rng& rng) {
    std::vector<Document> docs;
    for (std::size_t i = 0; i < 3; ++i) {
        Document d;
        d.label = i % 2;
        for (std::size_t t = 0; t < sl; ++t) d.ids.push_back(static_cast<TokenId>(1 + rng.below(vocab - 1)));
        docs.push_back(std::move(d));
    }
    docs[2].ids.back() = pad_id;
    return docs;
}

/// Full-objective check of one model; per-tensor results are routed to
/// components by role.
inline void check_model(GradcheckRun& run, const ModelSpec& spec, Rng& rng, double lambda, const std::string& prefix) {
    const std::size_t vocab = 6;
    ModelParams params = init_model(spec, vocab, rng.next_u64());
    params.for_each([&](const std::string&, Matrix& m, ParamRole role) {
        if (role == ParamRole::position) {
            for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
        } else {
            for (double& v : m.values()) v = rng.uniform(-0.8, 0.8);
        }
    });
    std::fill(params.embedding.row(pad_id).begin(), params.embedding.row(pad_id).end(), 0.0);
    const std::vector<Document> docs = tiny_documents(vocab, spec.seq_len, rng);

    ModelParams analytic = objective_gradient(spec, params, docs, lambda);
    const auto f = [&] { return objective(spec, params, docs, lambda); };
    std::vector<std::pair<std::string, Matrix*>> grads;
    analytic.for_each([&](const std::string& n, Matrix& m, ParamRole) { grads.emplace_back(n, &m); });
    std::size_t k = 0;
    params.for_each([&](const std::string& n, Matrix& m, ParamRole role) {
        if (k >= grads.size() || grads[k].first != n) return;  // frozen
        Matrix& g = *grads[k++].second;
        std::string component = prefix;
        if (!prefix.empty()) {
            // whole-model runs report as one component
        } else if (role == ParamRole::embedding) {
            component = "embedding_lookup";
        } else if (role == ParamRole::position) {
            component = "pooling_weights";
        } else if (n.rfind("lstm", 0) == 0) {
            component = "wrnn_lstm_params";
        } else {
            component = "classifier_head";
        }
        run.compare(component, g, m, f, role == ParamRole::embedding ? pad_id + 1 : 0);
    });
}

inline void check_l2(GradcheckRun& run, Rng& rng) {
    ModelSpec spec;
    spec.kind = ModelKind::wrnn;
    spec.seq_len = 3;
    spec.embed_dim = 2;
    spec.lstm_hidden = 3;
    spec.classifier_hidden = 3;
    spec.classes = 2;
    ModelParams params = init_model(spec, 5, rng.next_u64());
    const double lambda = 0.37;
    ModelParams analytic = zeros_like(params, spec);
    add_l2_gradient(params, lambda, analytic);
    const auto f = [&] { return l2_penalty(params, lambda); };
    std::vector<Matrix*> grads = analytic.tensors();
    std::size_t k = 0;
    params.for_each([&](const std::string&, Matrix& m, ParamRole) { run.compare("l2_penalty", *grads[k++], m, f); });
}

}  // namespace detail

/// Finite-difference checks of every hand-derived gradient on fixed-seed tiny
/// instances (SL <= 5, hidden <= 4, two classes).
inline GradcheckReport run_gradcheck(const GradcheckOptions& opts = {}) {
    detail::GradcheckRun run(opts);
    Rng rng(opts.seed);
    detail::check_cell(run, rng, Activation::tanh, "lstm_cell");
    detail::check_cell(run, rng, Activation::sigmoid, "lstm_cell_sigmoid_candidate");
    detail::check_unroll(run, rng, Direction::forward, "lstm_bptt");
    detail::check_unroll(run, rng, Direction::reverse, "lstm_bptt_reverse");

    ModelSpec spec;
    spec.kind = ModelKind::wrnn;
    spec.seq_len = 4;
    spec.embed_dim = 2;
    spec.lstm_hidden = 3;
    spec.classifier_hidden = 4;
    spec.classes = 2;
    const double lambda = 0.01;
    // per-part breakdown of the W-RNN objective
    detail::check_model(run, spec, rng, lambda, "");
    detail::check_l2(run, rng);
    detail::check_model(run, spec, rng, lambda, "wrnn_objective");

    ModelSpec variant = spec;
    variant.candidate = Activation::sigmoid;
    detail::check_model(run, variant, rng, lambda, "wrnn_sigmoid_candidate");
    variant = spec;
    variant.normalize_weights = true;
    detail::check_model(run, variant, rng, lambda, "wrnn_normalized_weights");
    variant = spec;
    variant.lstm_layers = 2;
    detail::check_model(run, variant, rng, lambda, "wrnn_two_layers");
    variant = spec;
    variant.kind = ModelKind::rnn_last;
    detail::check_model(run, variant, rng, lambda, "rnn_last_objective");
    variant.kind = ModelKind::birnn;
    detail::check_model(run, variant, rng, lambda, "birnn_objective");
    variant.kind = ModelKind::dnn;
    detail::check_model(run, variant, rng, lambda, "dnn_objective");
    return run.report();
}

}  // namespace wrnn
