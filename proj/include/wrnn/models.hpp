#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wrnn/corpus.hpp"
#include "wrnn/embeddings.hpp"
#include "wrnn/error.hpp"
#include "wrnn/lstm.hpp"
#include "wrnn/matrix.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

enum class ModelKind { wrnn, rnn_last, birnn, dnn };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::wrnn: return "wrnn";
        case ModelKind::rnn_last: return "rnn_last";
        case ModelKind::birnn: return "birnn";
        case ModelKind::dnn: return "dnn";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    if (s == "wrnn") return ModelKind::wrnn;
    if (s == "rnn_last" || s == "rnn") return ModelKind::rnn_last;
    if (s == "birnn") return ModelKind::birnn;
    if (s == "dnn") return ModelKind::dnn;
    throw ConfigError("unknown model kind '" + std::string(s) + "' (expected wrnn, rnn_last, birnn or dnn)");
}

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline Activation parse_candidate_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid" || s == "paper-literal") return Activation::sigmoid;
    throw ConfigError("candidate activation must be tanh or sigmoid, got '" + std::string(s) + "'");
}

struct ModelSpec {
    ModelKind kind = ModelKind::wrnn;
    std::size_t seq_len = 300;
    std::size_t embed_dim = 200;
    std::size_t lstm_hidden = 128;
    std::size_t lstm_layers = 1;
    std::size_t classifier_hidden = 128;
    std::size_t classes = 20;
    Activation candidate = Activation::tanh;
    bool freeze_embeddings = false;
    bool normalize_weights = false;  // softmax over position weights

    bool recurrent() const noexcept { return kind != ModelKind::dnn; }

    /// Width of the vector fed to the classifier head.
    std::size_t pooled_dim() const noexcept {
        switch (kind) {
            case ModelKind::dnn: return embed_dim;
            case ModelKind::birnn: return 2 * lstm_hidden;
            default: return lstm_hidden;
        }
    }
    std::size_t head_layers() const noexcept { return kind == ModelKind::dnn ? 2 : 1; }

    void validate() const {
        if (seq_len == 0 || embed_dim == 0 || classifier_hidden == 0) throw ConfigError("model dimensions must be positive");
        if (classes < 2) throw ConfigError("need at least two classes");
        if (recurrent() && (lstm_hidden == 0 || lstm_layers == 0)) throw ConfigError("lstm size must be positive");
        if (candidate != Activation::tanh && candidate != Activation::sigmoid) {
            throw ConfigError("candidate activation must be tanh or sigmoid");
        }
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct DenseLayer {
    Matrix weight;  // out x in
    Matrix bias;    // out x 1
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

enum class ParamRole { weight, bias, embedding, position };

/// Every trainable tensor of one classifier. Gradients use the same type;
/// a tensor left empty is absent (e.g. a frozen embedding gradient).
struct ModelParams {
    Matrix embedding;                  // |V| x dim
    std::vector<LstmParams> lstm_fwd;  // one per layer
    std::vector<LstmParams> lstm_bwd;  // Bi-RNN only
    Matrix position_weights;           // SL x 1, W-RNN only
    std::vector<DenseLayer> hidden;
    DenseLayer output;

    /// Visits non-empty tensors as (name, matrix, role) in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        if (!embedding.empty()) f(std::string("embedding"), embedding, ParamRole::embedding);
        const auto visit_lstm = [&](std::vector<LstmParams>& stack, const char* prefix) {
            for (std::size_t l = 0; l < stack.size(); ++l) {
                stack[l].for_each([&](const char* n, Matrix& m, bool is_weight) {
                    f(std::string(prefix) + "." + std::to_string(l) + "." + n, m,
                      is_weight ? ParamRole::weight : ParamRole::bias);
                });
            }
        };
        visit_lstm(lstm_fwd, "lstm_fwd");
        visit_lstm(lstm_bwd, "lstm_bwd");
        if (!position_weights.empty()) f(std::string("position_weights"), position_weights, ParamRole::position);
        for (std::size_t l = 0; l < hidden.size(); ++l) {
            f("hidden." + std::to_string(l) + ".weight", hidden[l].weight, ParamRole::weight);
            f("hidden." + std::to_string(l) + ".bias", hidden[l].bias, ParamRole::bias);
        }
        f(std::string("output.weight"), output.weight, ParamRole::weight);
        f(std::string("output.bias"), output.bias, ParamRole::bias);
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](const std::string& n, const Matrix& m, ParamRole r) { f(n, m, r); });
    }

    std::vector<Matrix*> tensors() {
        std::vector<Matrix*> out;
        for_each([&](const std::string&, Matrix& m, ParamRole) { out.push_back(&m); });
        return out;
    }

    void set_zero() {
        for_each([](const std::string&, Matrix& m, ParamRole) { m.set_zero(); });
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Same layout as `params`, zero-filled. The embedding gradient is left out
/// when embeddings are frozen.
inline ModelParams zeros_like(const ModelParams& params, const ModelSpec& spec) {
    ModelParams g = params;
    g.set_zero();
    if (spec.freeze_embeddings) g.embedding = Matrix();
    return g;
}

/// Checks that every tensor has the shape `spec` implies.
inline void validate_params(const ModelSpec& spec, const ModelParams& p) {
    spec.validate();
    const auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const std::string& what) {
        if (m.rows() != r || m.cols() != c) {
            throw DataError(what + ": expected (" + std::to_string(r) + "x" + std::to_string(c) + "), got " +
                            m.shape_str());
        }
    };
    if (p.embedding.cols() != spec.embed_dim || p.embedding.rows() < 2) {
        throw DataError("embedding: expected |V| x " + std::to_string(spec.embed_dim) + ", got " +
                        p.embedding.shape_str());
    }
    const auto check_stack = [&](const std::vector<LstmParams>& stack, std::size_t layers, const char* name) {
        if (stack.size() != layers) throw DataError(std::string(name) + ": wrong layer count");
        for (std::size_t l = 0; l < stack.size(); ++l) {
            stack[l].validate();
            const std::size_t in = l == 0 ? spec.embed_dim : spec.lstm_hidden;
            expect(stack[l].w_forget, spec.lstm_hidden, spec.lstm_hidden + in, name);
        }
    };
    check_stack(p.lstm_fwd, spec.recurrent() ? spec.lstm_layers : 0, "lstm_fwd");
    check_stack(p.lstm_bwd, spec.kind == ModelKind::birnn ? spec.lstm_layers : 0, "lstm_bwd");
    if (spec.kind == ModelKind::wrnn) {
        expect(p.position_weights, spec.seq_len, 1, "position_weights");
    } else if (!p.position_weights.empty()) {
        throw DataError("position_weights present for a non-W-RNN model");
    }
    if (p.hidden.size() != spec.head_layers()) throw DataError("classifier: wrong hidden layer count");
    std::size_t in = spec.pooled_dim();
    for (std::size_t l = 0; l < p.hidden.size(); ++l) {
        expect(p.hidden[l].weight, spec.classifier_hidden, in, "hidden weight");
        expect(p.hidden[l].bias, spec.classifier_hidden, 1, "hidden bias");
        in = spec.classifier_hidden;
    }
    expect(p.output.weight, spec.classes, in, "output weight");
    expect(p.output.bias, spec.classes, 1, "output bias");
}

/// Fresh parameters: xavier weights, zero biases, position weights 1/SL.
/// `embedding` replaces the seeded random table when given.
inline ModelParams init_model(const ModelSpec& spec, std::size_t vocab_size, std::uint64_t seed,
                              std::optional<Matrix> embedding = std::nullopt) {
    spec.validate();
    ModelParams p;
    if (embedding) {
        if (embedding->rows() != vocab_size || embedding->cols() != spec.embed_dim) {
            throw DataError("init_model: embedding table " + embedding->shape_str() + " does not match vocabulary " +
                            std::to_string(vocab_size) + " x dim " + std::to_string(spec.embed_dim));
        }
        p.embedding = std::move(*embedding);
    } else {
        p.embedding = random_embeddings(vocab_size, spec.embed_dim, seed).table;
    }
    Rng rng(derive_seed(seed, "model-init"));
    if (spec.recurrent()) {
        for (std::size_t l = 0; l < spec.lstm_layers; ++l)
            p.lstm_fwd.push_back(init_lstm(l == 0 ? spec.embed_dim : spec.lstm_hidden, spec.lstm_hidden, rng));
    }
    if (spec.kind == ModelKind::birnn) {
        for (std::size_t l = 0; l < spec.lstm_layers; ++l)
            p.lstm_bwd.push_back(init_lstm(l == 0 ? spec.embed_dim : spec.lstm_hidden, spec.lstm_hidden, rng));
    }
    if (spec.kind == ModelKind::wrnn) {
        p.position_weights = Matrix(spec.seq_len, 1, 1.0 / static_cast<double>(spec.seq_len));
    }
    std::size_t in = spec.pooled_dim();
    for (std::size_t l = 0; l < spec.head_layers(); ++l) {
        p.hidden.push_back({init_matrix(spec.classifier_hidden, in, InitScheme::xavier_uniform, rng),
                            Matrix(spec.classifier_hidden, 1)});
        in = spec.classifier_hidden;
    }
    p.output = {init_matrix(spec.classes, in, InitScheme::xavier_uniform, rng), Matrix(spec.classes, 1)};
    return p;
}

// Weighted pooling of hidden states

/// sum_i w_i * H[i], accumulated in ascending position order.
inline std::vector<double> weighted_sum(const Matrix& states, std::span<const double> weights) {
    if (weights.size() != states.rows()) {
        throw DataError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(states.rows()) + " positions");
    }
    std::vector<double> out(states.cols(), 0.0);
    for (std::size_t i = 0; i < states.rows(); ++i) {
        const auto row = states.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += weights[i] * row[j];
    }
    return out;
}

/// Gradients of weighted_sum: dH[i] = w_i * d, dw_i = <d, H[i]>.
inline void weighted_sum_backward(const Matrix& states, std::span<const double> weights, std::span<const double> d,
                                  Matrix& d_states, std::span<double> d_weights) {
    for (std::size_t i = 0; i < states.rows(); ++i) {
        auto dst = d_states.row(i);
        for (std::size_t j = 0; j < d.size(); ++j) dst[j] += weights[i] * d[j];
        d_weights[i] += dot(d, states.row(i));
    }
}

// Forward / backward

/// Everything a backward pass needs from one forward evaluation.
struct ForwardCache {
    ModelKind kind = ModelKind::wrnn;
    std::vector<TokenId> ids;
    Matrix inputs;                    // SL x dim, looked-up embeddings
    std::vector<LstmSequence> fwd;    // per layer
    std::vector<LstmSequence> bwd;    // per layer (Bi-RNN)
    std::vector<double> pool_weights; // effective position weights (W-RNN)
    std::size_t tokens_pooled = 0;    // non-pad count (DNN)
    std::vector<double> pooled;
    std::vector<std::vector<double>> activations;  // ReLU outputs of head layers
    std::vector<double> logits;
    std::vector<double> probs;
};

namespace detail {

inline std::vector<LstmSequence> run_stack(const Matrix& x, const std::vector<LstmParams>& stack, Direction dir,
                                           Activation cand) {
    std::vector<LstmSequence> layers;
    const Matrix* in = &x;
    for (const auto& p : stack) {
        layers.push_back(unroll_forward(*in, p, dir, cand));
        in = &layers.back().hidden_states;
    }
    return layers;
}

/// Returns dLoss/dx of the stack input.
inline Matrix backprop_stack(Matrix d_top, const std::vector<LstmSequence>& layers,
                             const std::vector<LstmParams>& stack, std::vector<LstmParams>& grads) {
    for (std::size_t l = layers.size(); l-- > 0;) d_top = unroll_backward(d_top, layers[l], stack[l], grads[l]);
    return d_top;
}

}  // namespace detail

/// Effective pooling weights: raw, or softmax-normalized.
inline std::vector<double> pooling_weights(const ModelSpec& spec, const Matrix& position_weights) {
    std::vector<double> w(position_weights.values().begin(), position_weights.values().end());
    if (spec.normalize_weights) softmax(std::vector<double>(w), w);
    return w;
}

/// Runs the classifier of `spec.kind` on one encoded document.
inline ForwardCache forward(const ModelSpec& spec, const ModelParams& p, std::span<const TokenId> ids) {
    if (ids.size() != spec.seq_len) {
        throw DataError("forward: sequence of " + std::to_string(ids.size()) + " ids, model expects " +
                        std::to_string(spec.seq_len));
    }
    ForwardCache c;
    c.kind = spec.kind;
    c.ids.assign(ids.begin(), ids.end());
    c.inputs = lookup(ids, p.embedding);

    switch (spec.kind) {
        case ModelKind::wrnn: {
            c.fwd = detail::run_stack(c.inputs, p.lstm_fwd, Direction::forward, spec.candidate);
            c.pool_weights = pooling_weights(spec, p.position_weights);
            c.pooled = weighted_sum(c.fwd.back().hidden_states, c.pool_weights);
            break;
        }
        case ModelKind::rnn_last: {
            c.fwd = detail::run_stack(c.inputs, p.lstm_fwd, Direction::forward, spec.candidate);
            const auto last = c.fwd.back().final_hidden();
            c.pooled.assign(last.begin(), last.end());
            break;
        }
        case ModelKind::birnn: {
            c.fwd = detail::run_stack(c.inputs, p.lstm_fwd, Direction::forward, spec.candidate);
            c.bwd = detail::run_stack(c.inputs, p.lstm_bwd, Direction::reverse, spec.candidate);
            const auto f = c.fwd.back().final_hidden();
            const auto b = c.bwd.back().final_hidden();
            c.pooled.assign(f.begin(), f.end());
            c.pooled.insert(c.pooled.end(), b.begin(), b.end());
            break;
        }
        case ModelKind::dnn: {
            c.pooled.assign(spec.embed_dim, 0.0);
            for (std::size_t t = 0; t < ids.size(); ++t) {
                if (ids[t] == pad_id) continue;
                add_into(c.pooled, c.inputs.row(t));
                ++c.tokens_pooled;
            }
            if (c.tokens_pooled > 0) {
                for (double& v : c.pooled) v /= static_cast<double>(c.tokens_pooled);
            }
            break;
        }
    }

    const std::vector<double>* in = &c.pooled;
    for (const auto& layer : p.hidden) {
        std::vector<double> a(layer.weight.rows());
        affine(layer.weight, *in, layer.bias.values(), a);
        activate_inplace(Activation::relu, a);
        c.activations.push_back(std::move(a));
        in = &c.activations.back();
    }
    c.logits.resize(p.output.weight.rows());
    affine(p.output.weight, *in, p.output.bias.values(), c.logits);
    c.probs.resize(c.logits.size());
    softmax(c.logits, c.probs);
    return c;
}

inline ForwardCache wrnn_forward(const ModelSpec& spec, const ModelParams& p, std::span<const TokenId> ids) {
    if (spec.kind != ModelKind::wrnn) throw ConfigError("wrnn_forward on a " + std::string(to_string(spec.kind)));
    return forward(spec, p, ids);
}
inline ForwardCache rnn_last_forward(const ModelSpec& spec, const ModelParams& p, std::span<const TokenId> ids) {
    if (spec.kind != ModelKind::rnn_last) throw ConfigError("rnn_last_forward on a " + std::string(to_string(spec.kind)));
    return forward(spec, p, ids);
}
inline ForwardCache birnn_forward(const ModelSpec& spec, const ModelParams& p, std::span<const TokenId> ids) {
    if (spec.kind != ModelKind::birnn) throw ConfigError("birnn_forward on a " + std::string(to_string(spec.kind)));
    return forward(spec, p, ids);
}
inline ForwardCache dnn_forward(const ModelSpec& spec, const ModelParams& p, std::span<const TokenId> ids) {
    if (spec.kind != ModelKind::dnn) throw ConfigError("dnn_forward on a " + std::string(to_string(spec.kind)));
    return forward(spec, p, ids);
}

/// Backward pass from dLoss/dlogits. Gradients are accumulated into `grads`
/// (created by zeros_like), so a minibatch can share one buffer.
inline void backward_from_logits(const ModelSpec& spec, const ModelParams& p, const ForwardCache& c,
                                 std::span<const double> d_logits, ModelParams& grads) {
    if (c.kind != spec.kind || d_logits.size() != c.logits.size() || c.activations.size() != p.hidden.size()) {
        throw DataError("model backward: cache does not belong to this model");
    }
    // classifier head
    const std::vector<double>& top = c.activations.empty() ? c.pooled : c.activations.back();
    accumulate_outer(grads.output.weight, d_logits, top);
    add_into(grads.output.bias.values(), d_logits);
    std::vector<double> d_act(top.size(), 0.0);
    accumulate_transposed(p.output.weight, d_logits, d_act);
    for (std::size_t l = p.hidden.size(); l-- > 0;) {
        const auto& a = c.activations[l];
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!(a[i] > 0.0)) d_act[i] = 0.0;
        const std::vector<double>& in = l == 0 ? c.pooled : c.activations[l - 1];
        accumulate_outer(grads.hidden[l].weight, d_act, in);
        add_into(grads.hidden[l].bias.values(), d_act);
        std::vector<double> d_in(in.size(), 0.0);
        accumulate_transposed(p.hidden[l].weight, d_act, d_in);
        d_act = std::move(d_in);
    }
    const std::vector<double>& d_pooled = d_act;

    Matrix d_inputs(c.inputs.rows(), c.inputs.cols());
    switch (spec.kind) {
        case ModelKind::wrnn: {
            const Matrix& states = c.fwd.back().hidden_states;
            Matrix d_states(states.rows(), states.cols());
            std::vector<double> d_eff(states.rows(), 0.0);
            weighted_sum_backward(states, c.pool_weights, d_pooled, d_states, d_eff);
            auto dw = grads.position_weights.values();
            if (spec.normalize_weights) {
                const double mean = dot(c.pool_weights, d_eff);
                for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += c.pool_weights[i] * (d_eff[i] - mean);
            } else {
                add_into(dw, d_eff);
            }
            d_inputs = detail::backprop_stack(std::move(d_states), c.fwd, p.lstm_fwd, grads.lstm_fwd);
            break;
        }
        case ModelKind::rnn_last: {
            const Matrix& states = c.fwd.back().hidden_states;
            Matrix d_states(states.rows(), states.cols());
            std::copy(d_pooled.begin(), d_pooled.end(), d_states.row(states.rows() - 1).begin());
            d_inputs = detail::backprop_stack(std::move(d_states), c.fwd, p.lstm_fwd, grads.lstm_fwd);
            break;
        }
        case ModelKind::birnn: {
            const std::size_t h = spec.lstm_hidden;
            const Matrix& fs = c.fwd.back().hidden_states;
            Matrix d_fwd(fs.rows(), fs.cols()), d_bwd(fs.rows(), fs.cols());
            std::copy(d_pooled.begin(), d_pooled.begin() + static_cast<std::ptrdiff_t>(h),
                      d_fwd.row(fs.rows() - 1).begin());
            std::copy(d_pooled.begin() + static_cast<std::ptrdiff_t>(h), d_pooled.end(), d_bwd.row(0).begin());
            d_inputs = detail::backprop_stack(std::move(d_fwd), c.fwd, p.lstm_fwd, grads.lstm_fwd);
            add_into(d_inputs, detail::backprop_stack(std::move(d_bwd), c.bwd, p.lstm_bwd, grads.lstm_bwd));
            break;
        }
        case ModelKind::dnn: {
            if (c.tokens_pooled > 0) {
                const double scale = 1.0 / static_cast<double>(c.tokens_pooled);
                for (std::size_t t = 0; t < c.ids.size(); ++t) {
                    if (c.ids[t] == pad_id) continue;
                    auto row = d_inputs.row(t);
                    for (std::size_t j = 0; j < row.size(); ++j) row[j] = d_pooled[j] * scale;
                }
            }
            break;
        }
    }
    if (!spec.freeze_embeddings) {
        if (!grads.embedding.same_shape(p.embedding)) throw DataError("model backward: embedding gradient missing");
        lookup_backward(c.ids, d_inputs, grads.embedding);
    }
}

/// Cross-entropy gradient for a class label: dlogits = probs - onehot(label).
inline void model_backward(const ModelSpec& spec, const ModelParams& p, const ForwardCache& c, std::size_t label,
                           ModelParams& grads) {
    if (label >= c.probs.size()) throw DataError("model backward: label " + std::to_string(label) + " out of range");
    std::vector<double> d = c.probs;
    d[label] -= 1.0;
    backward_from_logits(spec, p, c, d, grads);
}

/// Backward from an arbitrary dLoss/dprobs through the softmax.
inline void model_backward_from_probs(const ModelSpec& spec, const ModelParams& p, const ForwardCache& c,
                                      std::span<const double> d_probs, ModelParams& grads) {
    const double mean = dot(c.probs, d_probs);
    std::vector<double> d(c.probs.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = c.probs[i] * (d_probs[i] - mean);
    backward_from_logits(spec, p, c, d, grads);
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace wrnn
