#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wrnn/corpus.hpp"
#include "wrnn/error.hpp"
#include "wrnn/evaluation.hpp"
#include "wrnn/models.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t minibatch = 128;
    std::size_t epochs = 5;
    double l2 = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 5.0;  // 0 disables
    std::uint64_t seed = 1;
    bool deterministic = false;
    std::size_t threads = 0;  // 0 = hardware concurrency
    bool full_train_eval = false;  // re-evaluate the train set after each epoch

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
        if (!(l2 >= 0.0)) throw ConfigError("l2 must be non-negative");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in (0, 1)");
        if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
        if (!(clip_norm >= 0.0)) throw ConfigError("clip norm must be non-negative");
    }

    std::size_t worker_count() const {
        if (deterministic) return 1;
        if (threads > 0) return threads;
        return std::max(1u, std::thread::hardware_concurrency());
    }
};

// Loss terms

inline double cross_entropy(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) {
        throw DataError("cross_entropy: label " + std::to_string(label) + " with " + std::to_string(probs.size()) +
                        " classes");
    }
    return -std::log(std::max(probs[label], 1e-12));
}

/// (lambda/2) * sum of squared entries over weight matrices. Biases,
/// embeddings and position weights are not penalized.
inline double l2_penalty(const ModelParams& params, double lambda) {
    if (lambda == 0.0) return 0.0;
    double sum = 0.0;
    params.for_each([&](const std::string&, const Matrix& m, ParamRole role) {
        if (role == ParamRole::weight) sum += sum_squares(m.values());
    });
    return 0.5 * lambda * sum;
}

/// grads += lambda * w for every weight matrix.
inline void add_l2_gradient(const ModelParams& params, double lambda, ModelParams& grads) {
    if (lambda == 0.0) return;
    std::vector<const Matrix*> weights;
    params.for_each([&](const std::string&, const Matrix& m, ParamRole role) {
        if (role == ParamRole::weight) weights.push_back(&m);
    });
    std::size_t k = 0;
    grads.for_each([&](const std::string&, Matrix& g, ParamRole role) {
        if (role != ParamRole::weight) return;
        const Matrix& w = *weights.at(k++);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda * w[i];
    });
}

/// Parameter tensors paired with their gradient tensors by name. Parameters
/// without a gradient (frozen embeddings) are skipped.
struct TensorPair {
    std::string name;
    Matrix* param;
    Matrix* grad;
};

inline std::vector<TensorPair> pair_tensors(ModelParams& params, ModelParams& grads) {
    std::vector<std::pair<std::string, Matrix*>> gs;
    grads.for_each([&](const std::string& n, Matrix& m, ParamRole) { gs.emplace_back(n, &m); });
    std::vector<TensorPair> out;
    std::size_t k = 0;
    params.for_each([&](const std::string& n, Matrix& m, ParamRole) {
        if (k < gs.size() && gs[k].first == n) {
            require_same_shape(m, *gs[k].second, n.c_str());
            out.push_back({n, &m, gs[k].second});
            ++k;
        }
    });
    if (k != gs.size()) throw DataError("gradient set does not match parameters");
    return out;
}

// Adam

/// First/second moment buffers, one per trained tensor.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step = 0;
};

/// One bias-corrected Adam update over aligned tensor lists.
inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state,
                      const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw DataError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const Matrix* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.m.size() != params.size()) throw DataError("adam_step: state does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(cfg.beta1, t);
    const double correct2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k];
        const Matrix& g = *grads[k];
        require_same_shape(p, g, "adam_step");
        require_same_shape(p, state.m[k], "adam_step state");
        Matrix& m = state.m[k];
        Matrix& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correct1;
            const double v_hat = v[i] / correct2;
            p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
        }
    }
}

/// Global L2 norm over all tensors.
inline double global_norm(std::span<const Matrix* const> tensors) {
    double sq = 0.0;
    for (const Matrix* t : tensors) sq += sum_squares(t->values());
    return std::sqrt(sq);
}

/// Rescales so the global norm is at most `clip_norm` (0 disables). Returns
/// the norm before clipping.
inline double clip_gradients(std::span<Matrix* const> grads, double clip_norm) {
    std::vector<const Matrix*> view(grads.begin(), grads.end());
    const double norm = global_norm(view);
    if (clip_norm > 0.0 && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (Matrix* g : grads)
            for (double& x : g->values()) x *= scale;
    }
    return norm;
}

// Batched gradients

namespace detail {

/// Runs fn(worker, begin, end) over contiguous chunks of [0, n).
template <typename F>
void parallel_chunks(std::size_t n, std::size_t workers, F&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        fn(std::size_t{0}, std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(w, begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct BatchStats {
    double loss_sum = 0.0;  // summed cross-entropy
    std::size_t correct = 0;
};

/// Gradient scratch space reused across minibatches.
class GradientWorkspace {
public:
    GradientWorkspace(const ModelSpec& spec, const ModelParams& params, std::size_t workers) {
        for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1); ++w) buffers_.push_back(zeros_like(params, spec));
    }

    /// Mean cross-entropy gradient over `batch` (indices into `docs`), plus
    /// the L2 gradient, written to the first buffer which is returned.
    /// Per-worker sums are reduced in worker order, so the result depends only
    /// on the inputs and the worker count.
    ModelParams& compute(const ModelSpec& spec, const ModelParams& params, const std::vector<Document>& docs,
                         std::span<const std::size_t> batch, double lambda, BatchStats& stats) {
        std::vector<BatchStats> partial(buffers_.size());
        detail::parallel_chunks(batch.size(), buffers_.size(), [&](std::size_t w, std::size_t begin, std::size_t end) {
            ModelParams& g = buffers_[w];
            g.set_zero();
            for (std::size_t k = begin; k < end; ++k) {
                const Document& d = docs[batch[k]];
                ForwardCache cache = forward(spec, params, d.ids);
                partial[w].loss_sum += cross_entropy(cache.probs, d.label);
                partial[w].correct += argmax(cache.probs) == d.label ? 1 : 0;
                model_backward(spec, params, cache, d.label, g);
            }
        });
        const std::size_t used = std::max<std::size_t>(1, std::min(buffers_.size(), batch.size()));
        ModelParams& total = buffers_[0];
        for (std::size_t w = 1; w < used; ++w) {
            auto dst = total.tensors();
            auto src = buffers_[w].tensors();
            for (std::size_t k = 0; k < dst.size(); ++k) add_into(*dst[k], *src[k]);
        }
        for (const auto& p : partial) {
            stats.loss_sum += p.loss_sum;
            stats.correct += p.correct;
        }
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (Matrix* m : total.tensors())
            for (double& x : m->values()) x *= scale;
        add_l2_gradient(params, lambda, total);
        return total;
    }

private:
    std::vector<ModelParams> buffers_;
};

/// Mean cross-entropy over `docs` plus the L2 penalty.
inline double objective(const ModelSpec& spec, const ModelParams& params, const std::vector<Document>& docs,
                        double lambda) {
    double sum = 0.0;
    for (const auto& d : docs) sum += cross_entropy(forward(spec, params, d.ids).probs, d.label);
    return sum / static_cast<double>(docs.size()) + l2_penalty(params, lambda);
}

/// Analytic gradient of `objective` (single worker, ascending order).
inline ModelParams objective_gradient(const ModelSpec& spec, const ModelParams& params,
                                      const std::vector<Document>& docs, double lambda) {
    GradientWorkspace ws(spec, params, 1);
    std::vector<std::size_t> all(docs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    BatchStats stats;
    return ws.compute(spec, params, docs, all, lambda, stats);
}

// Evaluation

struct Evaluation {
    std::vector<std::size_t> predictions;
    std::vector<std::size_t> labels;
    std::vector<double> losses;
    MetricsReport report;
};

inline Evaluation evaluate(const ModelSpec& spec, const ModelParams& params, const std::vector<Document>& docs,
                           std::size_t workers = 1) {
    if (docs.empty()) throw DataError("evaluate: empty split");
    Evaluation ev;
    ev.predictions.resize(docs.size());
    ev.labels.resize(docs.size());
    ev.losses.resize(docs.size());
    detail::parallel_chunks(docs.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto probs = forward(spec, params, docs[i].ids).probs;
            ev.predictions[i] = argmax(probs);
            ev.labels[i] = docs[i].label;
            ev.losses[i] = cross_entropy(probs, docs[i].label);
        }
    });
    ev.report = metrics(confusion(ev.predictions, ev.labels, spec.classes), ev.losses);
    return ev;
}

// Training loop

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0, train_accuracy = 0;
    double test_loss = 0, test_accuracy = 0;
    double seconds = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    /// `epoch,split,loss,accuracy`, 17 significant digits.
    std::string to_csv() const {
        std::ostringstream s;
        s << "epoch,split,loss,accuracy\n";
        char buf[128];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%zu,train,%.17g,%.17g\n%zu,test,%.17g,%.17g\n", e.epoch, e.train_loss,
                          e.train_accuracy, e.epoch, e.test_loss, e.test_accuracy);
            s << buf;
        }
        return s.str();
    }
};

struct TrainResult {
    ModelParams final_params;
    ModelParams best_params;
    std::size_t best_epoch = 0;  // 0 = initialization
    TrainHistory history;
};

/// Minibatch Adam training. Each epoch: seeded shuffle, batches of
/// cfg.minibatch (last partial batch kept), mean gradient + L2 gradient,
/// clipping, one Adam step per batch. The parameters with the best test
/// accuracy (train accuracy if there is no test set) are kept.
inline TrainResult train(const ModelSpec& spec, ModelParams params, const std::vector<Document>& train_set,
                         const std::vector<Document>& test_set, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    validate_params(spec, params);
    if (train_set.empty()) throw DataError("train: empty training set");

    TrainResult result;
    result.best_params = params;
    double best_score = -1.0;

    const std::size_t workers = cfg.worker_count();
    GradientWorkspace workspace(spec, params, workers);
    AdamState adam;
    Rng shuffle_rng(derive_seed(cfg.seed, "train-shuffle"));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double objective_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.minibatch, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + cfg.minibatch);
            const std::span<const std::size_t> batch(order.data() + begin, end - begin);
            BatchStats stats;
            ModelParams& grads = workspace.compute(spec, params, train_set, batch, cfg.l2, stats);
            const double batch_objective = stats.loss_sum / static_cast<double>(batch.size()) + l2_penalty(params, cfg.l2);
            auto pairs = pair_tensors(params, grads);
            std::vector<Matrix*> ps, gs;
            for (auto& p : pairs) {
                ps.push_back(p.param);
                gs.push_back(p.grad);
            }
            const double norm = clip_gradients(gs, cfg.clip_norm);
            if (!std::isfinite(batch_objective) || !std::isfinite(norm)) {
                std::ostringstream msg;
                msg << "non-finite loss in epoch " << epoch << ", batch " << batch_index << " (objective "
                    << batch_objective << ", gradient norm " << norm << "); parameter norms:";
                for (auto& p : pairs) msg << ' ' << p.name << '=' << std::sqrt(sum_squares(p.param->values()));
                throw NumericError(msg.str());
            }
            std::vector<const Matrix*> cgs(gs.begin(), gs.end());
            adam_step(ps, cgs, adam, cfg);
            objective_sum += batch_objective * static_cast<double>(batch.size());
            correct += stats.correct;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = objective_sum / static_cast<double>(order.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        if (cfg.full_train_eval) {
            const Evaluation ev = evaluate(spec, params, train_set, workers);
            rec.train_loss = ev.report.loss + l2_penalty(params, cfg.l2);
            rec.train_accuracy = ev.report.accuracy;
        }
        double score = rec.train_accuracy;
        if (!test_set.empty()) {
            const Evaluation ev = evaluate(spec, params, test_set, workers);
            rec.test_loss = ev.report.loss;
            rec.test_accuracy = ev.report.accuracy;
            score = rec.test_accuracy;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (score > best_score) {
            best_score = score;
            result.best_params = params;
            result.best_epoch = epoch;
        }
        result.history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    result.final_params = std::move(params);
    return result;
}

}  // namespace wrnn
