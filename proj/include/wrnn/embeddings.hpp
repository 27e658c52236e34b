#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wrnn/corpus.hpp"
#include "wrnn/error.hpp"
#include "wrnn/matrix.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

/// |V| x dim lookup table. Row 0 (padding) is zero and stays zero.
struct EmbeddingMatrix {
    Matrix table;
    bool trainable = true;

    std::size_t vocab_size() const noexcept { return table.rows(); }
    std::size_t dim() const noexcept { return table.cols(); }
};

/// Seeded xavier table with a zero padding row.
inline EmbeddingMatrix random_embeddings(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "embedding-init"));
    EmbeddingMatrix e{init_matrix(vocab_size, dim, InitScheme::xavier_uniform, rng), true};
    std::fill(e.table.row(pad_id).begin(), e.table.row(pad_id).end(), 0.0);
    return e;
}

/// Gathers table rows for `ids` into an (ids.size() x dim) matrix.
inline Matrix lookup(std::span<const TokenId> ids, const Matrix& table) {
    Matrix out(ids.size(), table.cols());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] >= table.rows()) {
            throw DataError("lookup: id " + std::to_string(ids[t]) + " outside vocabulary of size " +
                            std::to_string(table.rows()));
        }
        const auto src = table.row(ids[t]);
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return out;
}

/// Scatter-adds row gradients back into `grad_table`. The padding row never
/// receives gradient.
inline void lookup_backward(std::span<const TokenId> ids, const Matrix& grad_rows, Matrix& grad_table) {
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] == pad_id) continue;
        add_into(grad_table.row(ids[t]), grad_rows.row(t));
    }
}

struct SkipGramConfig {
    std::size_t dim = 200;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
    std::uint64_t seed = 1;
};

struct SkipGramResult {
    EmbeddingMatrix embeddings;
    std::vector<double> epoch_losses;  // mean negative-sampling loss per pair
};

namespace detail {

/// Cumulative unigram^0.75 weights for drawing negative samples.
class NoiseSampler {
public:
    explicit NoiseSampler(const std::vector<double>& counts) {
        double total = 0.0;
        for (std::size_t id = 0; id < counts.size(); ++id) {
            if (counts[id] <= 0.0) continue;
            total += std::pow(counts[id], 0.75);
            ids_.push_back(static_cast<TokenId>(id));
            cumulative_.push_back(total);
        }
        for (double& c : cumulative_) c /= total;
    }

    TokenId draw(Rng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return ids_[static_cast<std::size_t>(it - cumulative_.begin())];
    }

private:
    std::vector<TokenId> ids_;
    std::vector<double> cumulative_;
};

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace detail

/// Skip-gram with negative sampling over encoded documents. Padding and
/// unknown ids are dropped before windowing, so they never act as centers,
/// contexts or noise words. Pairs are processed in corpus order on one
/// thread; the learning rate decays linearly to 1e-4 of its start value.
/// The returned table is input + output vectors.
inline SkipGramResult train_skipgram(const std::vector<std::vector<TokenId>>& docs, std::size_t vocab_size,
                                     const SkipGramConfig& cfg) {
    if (cfg.dim < 2) throw ConfigError("skip-gram dim must be at least 2");
    if (cfg.window < 1) throw ConfigError("skip-gram window must be at least 1");
    if (cfg.negatives < 1) throw ConfigError("skip-gram negatives must be at least 1");

    std::vector<std::vector<TokenId>> sentences;
    std::vector<double> counts(vocab_size, 0.0);
    std::size_t pairs_per_epoch = 0;
    for (const auto& doc : docs) {
        std::vector<TokenId> s;
        for (TokenId id : doc) {
            if (id >= vocab_size) throw DataError("skip-gram: id outside vocabulary");
            if (id == pad_id || id == unknown_id) continue;
            s.push_back(id);
            counts[id] += 1.0;
        }
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
            const std::size_t hi = std::min(s.size() - 1, i + cfg.window);
            pairs_per_epoch += hi - lo;
        }
        if (s.size() > 1) sentences.push_back(std::move(s));
    }
    if (pairs_per_epoch == 0) throw DataError("skip-gram: corpus has no trainable (center, context) pair");

    Rng rng(derive_seed(cfg.seed, "skipgram"));
    Matrix input(vocab_size, cfg.dim);
    for (std::size_t r = 1; r < vocab_size; ++r)
        for (double& v : input.row(r)) v = (rng.uniform() - 0.5) / static_cast<double>(cfg.dim);
    Matrix output(vocab_size, cfg.dim);
    const detail::NoiseSampler noise(counts);

    const double total_pairs = static_cast<double>(pairs_per_epoch * cfg.epochs);
    double processed = 0.0;
    std::vector<double> hidden_grad(cfg.dim);
    SkipGramResult result;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& s : sentences) {
            for (std::size_t i = 0; i < s.size(); ++i) {
                const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
                const std::size_t hi = std::min(s.size() - 1, i + cfg.window);
                auto center = input.row(s[i]);
                for (std::size_t j = lo; j <= hi; ++j) {
                    if (j == i) continue;
                    const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - processed / total_pairs);
                    processed += 1.0;
                    std::fill(hidden_grad.begin(), hidden_grad.end(), 0.0);
                    for (std::size_t k = 0; k <= cfg.negatives; ++k) {
                        TokenId target = s[j];
                        double label = 1.0;
                        if (k > 0) {
                            target = noise.draw(rng);
                            if (target == s[j]) continue;
                            label = 0.0;
                        }
                        auto out = output.row(target);
                        const double score = dot(center, out);
                        epoch_loss -= label > 0 ? detail::log_sigmoid(score) : detail::log_sigmoid(-score);
                        const double g = (label - sigmoid(score)) * lr;
                        for (std::size_t d = 0; d < cfg.dim; ++d) {
                            hidden_grad[d] += g * out[d];
                            out[d] += g * center[d];
                        }
                    }
                    add_into(center, hidden_grad);
                }
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(pairs_per_epoch));
    }
    // Input-only vectors of words that co-occur but never share a context end
    // up anti-aligned; the sum of both tables keeps first-order similarity.
    add_into(input.values(), output.values());
    std::fill(input.row(pad_id).begin(), input.row(pad_id).end(), 0.0);
    result.embeddings = EmbeddingMatrix{std::move(input), true};
    return result;
}

/// word2vec text format: "<count> <dim>" then "<token> <v1> ... <vdim>" lines.
/// Values are written with 17 significant digits, so a reload is exact.
inline void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    if (emb.vocab_size() != vocab.size()) throw DataError("save_embeddings: table rows differ from vocabulary size");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << emb.vocab_size() << ' ' << emb.dim() << '\n';
    char buf[40];
    for (std::size_t r = 0; r < emb.vocab_size(); ++r) {
        out << vocab.token_of(static_cast<TokenId>(r));
        for (double v : emb.table.row(r)) {
            std::snprintf(buf, sizeof buf, " %.17g", v);
            out << buf;
        }
        out << '\n';
    }
}

/// Copies rows for vocabulary tokens present in the file. Other tokens get
/// seeded xavier rows; the padding row is zero. `expected_dim` of 0 accepts
/// whatever the header declares.
inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                       std::size_t expected_dim = 0, std::uint64_t seed = 1) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read embeddings " + path.string());
    const auto where = [&](std::size_t line) { return path.string() + ":" + std::to_string(line) + ": "; };

    std::string line;
    if (!std::getline(in, line)) throw DataError(where(1) + "missing header");
    std::istringstream header(line);
    long long count = -1, dim = -1;
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim <= 0) {
        throw DataError(where(1) + "malformed header, expected \"<count> <dim>\"");
    }
    if (expected_dim != 0 && static_cast<std::size_t>(dim) != expected_dim) {
        throw DataError(where(1) + "dimension " + std::to_string(dim) + " differs from configured " +
                        std::to_string(expected_dim));
    }

    Rng rng(derive_seed(seed, "embedding-fallback"));
    EmbeddingMatrix emb{init_matrix(vocab.size(), static_cast<std::size_t>(dim), InitScheme::xavier_uniform, rng),
                        true};
    std::size_t lineno = 1;
    std::vector<double> values(static_cast<std::size_t>(dim));
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string token;
        fields >> token;
        for (auto& v : values) {
            std::string literal;
            if (!(fields >> literal)) throw DataError(where(lineno) + "expected " + std::to_string(dim) + " values");
            char* end = nullptr;
            v = std::strtod(literal.c_str(), &end);
            if (end != literal.c_str() + literal.size() || !std::isfinite(v)) {
                throw DataError(where(lineno) + "bad value \"" + literal + "\"");
            }
        }
        if (fields >> extra) throw DataError(where(lineno) + "more than " + std::to_string(dim) + " values");
        if (!vocab.contains(token)) continue;
        std::copy(values.begin(), values.end(), emb.table.row(vocab.id_of(token)).begin());
    }
    std::fill(emb.table.row(pad_id).begin(), emb.table.row(pad_id).end(), 0.0);
    return emb;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(sum_squares(a));
    const double nb = std::sqrt(sum_squares(b));
    return na == 0.0 || nb == 0.0 ? 0.0 : dot(a, b) / (na * nb);
}

}  // namespace wrnn
