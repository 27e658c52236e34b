#pragma once

// Test-only helpers: independent oracles and synthetic corpora. Nothing here
// calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wrnn/corpus.hpp"
#include "wrnn/matrix.hpp"
#include "wrnn/models.hpp"
#include "wrnn/rng.hpp"

namespace wrnn::testing {

/// Scans every distinct length in ascending order and returns the first one
/// whose "<=" fraction reaches theta; max length otherwise.
inline std::size_t exhaustive_sequence_length(const std::vector<std::size_t>& lengths, double theta) {
    std::vector<std::size_t> candidates = lengths;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (std::size_t cand : candidates) {
        if (cand == 0) continue;
        std::size_t fit = 0;
        for (std::size_t len : lengths) fit += len <= cand ? 1 : 0;
        if (static_cast<double>(fit) / static_cast<double>(lengths.size()) >= theta) return cand;
    }
    return candidates.back();
}

/// Textbook triple loop with k outermost.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t k = 0; k < a.cols(); ++k)
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
    return out;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(lo, hi);
    return m;
}

/// Randomizes every tensor of a model (padding row stays zero).
inline void randomize(ModelParams& p, Rng& rng, double scale = 0.8) {
    p.for_each([&](const std::string&, Matrix& m, ParamRole) {
        for (double& v : m.values()) v = rng.uniform(-scale, scale);
    });
    std::fill(p.embedding.row(pad_id).begin(), p.embedding.row(pad_id).end(), 0.0);
}

// The 3-word toy W-RNN. Parameters mirror tests/oracles/toy_wrnn.py.
struct ToyModel {
    static constexpr std::size_t sl = 3, dim = 2, hidden = 2, classes = 2, head = 2;
    double emb[4][2] = {{0.0, 0.0}, {0.5, -0.25}, {-0.75, 1.0}, {0.25, 0.5}};
    std::vector<TokenId> ids = {2, 3, 1};
    double wf[2][4] = {{0.1, -0.2, 0.3, 0.4}, {-0.3, 0.2, 0.1, -0.5}};
    double wg[2][4] = {{0.2, 0.1, -0.4, 0.3}, {0.05, -0.15, 0.25, 0.35}};
    double wc[2][4] = {{-0.1, 0.3, 0.6, -0.2}, {0.4, -0.4, 0.2, 0.1}};
    double wo[2][4] = {{0.3, 0.3, -0.1, 0.2}, {-0.2, 0.1, 0.5, -0.3}};
    double bf[2] = {0.5, -0.1}, bg[2] = {0.0, 0.2}, bc[2] = {0.1, -0.2}, bo[2] = {-0.3, 0.4};
    double pos[3] = {0.2, -0.5, 1.1};
    double hw[2][2] = {{0.7, -0.3}, {-0.4, 0.9}};
    double hb[2] = {0.05, -0.1};
    double ow[2][2] = {{1.2, -0.8}, {-0.6, 0.5}};
    double ob[2] = {0.1, -0.05};

    ModelSpec spec(Activation candidate) const {
        ModelSpec s;
        s.kind = ModelKind::wrnn;
        s.seq_len = sl;
        s.embed_dim = dim;
        s.lstm_hidden = hidden;
        s.classifier_hidden = head;
        s.classes = classes;
        s.candidate = candidate;
        return s;
    }

    ModelParams params() const {
        ModelParams p;
        p.embedding = Matrix(4, 2);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 2; ++c) p.embedding(r, c) = emb[r][c];
        LstmParams l(dim, hidden);
        const auto fill_w = [](Matrix& m, const double (&src)[2][4]) {
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 4; ++c) m(r, c) = src[r][c];
        };
        fill_w(l.w_forget, wf);
        fill_w(l.w_input, wg);
        fill_w(l.w_candidate, wc);
        fill_w(l.w_output, wo);
        for (int i = 0; i < 2; ++i) {
            l.b_forget[i] = bf[i];
            l.b_input[i] = bg[i];
            l.b_candidate[i] = bc[i];
            l.b_output[i] = bo[i];
        }
        p.lstm_fwd.push_back(l);
        p.position_weights = Matrix(3, 1);
        for (int i = 0; i < 3; ++i) p.position_weights[i] = pos[i];
        DenseLayer hl{Matrix(2, 2), Matrix(2, 1)}, out{Matrix(2, 2), Matrix(2, 1)};
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
                hl.weight(r, c) = hw[r][c];
                out.weight(r, c) = ow[r][c];
            }
            hl.bias[r] = hb[r];
            out.bias[r] = ob[r];
        }
        p.hidden.push_back(hl);
        p.output = out;
        return p;
    }

    struct Trace {
        double h[3][2];
        double wd[2];
        double probs[2];
    };

    /// Scalar evaluation of the gate equations, pooling and head.
    Trace hand_trace(bool sigmoid_candidate) const {
        const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
        Trace tr{};
        double h[2] = {0.0, 0.0}, s[2] = {0.0, 0.0};
        for (std::size_t t = 0; t < sl; ++t) {
            const double z[4] = {h[0], h[1], emb[ids[t]][0], emb[ids[t]][1]};
            double nh[2], ns[2];
            for (int i = 0; i < 2; ++i) {
                double af = bf[i], ag = bg[i], ac = bc[i], ao = bo[i];
                for (int k = 0; k < 4; ++k) {
                    af += wf[i][k] * z[k];
                    ag += wg[i][k] * z[k];
                    ac += wc[i][k] * z[k];
                    ao += wo[i][k] * z[k];
                }
                const double f = sig(af), g = sig(ag), o = sig(ao);
                const double c = sigmoid_candidate ? sig(ac) : std::tanh(ac);
                ns[i] = f * s[i] + g * c;
                nh[i] = o * std::tanh(ns[i]);
            }
            for (int i = 0; i < 2; ++i) {
                h[i] = nh[i];
                s[i] = ns[i];
                tr.h[t][i] = nh[i];
            }
        }
        for (int j = 0; j < 2; ++j) {
            tr.wd[j] = 0.0;
            for (std::size_t t = 0; t < sl; ++t) tr.wd[j] += pos[t] * tr.h[t][j];
        }
        double a[2], logits[2];
        for (int i = 0; i < 2; ++i) a[i] = std::max(0.0, hw[i][0] * tr.wd[0] + hw[i][1] * tr.wd[1] + hb[i]);
        for (int i = 0; i < 2; ++i) logits[i] = ow[i][0] * a[0] + ow[i][1] * a[1] + ob[i];
        const double m = std::max(logits[0], logits[1]);
        const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
        tr.probs[0] = e0 / (e0 + e1);
        tr.probs[1] = e1 / (e0 + e1);
        return tr;
    }
};

// Values printed by tests/oracles/toy_wrnn.py.
inline constexpr double toy_probs_tanh[2] = {0.579930449853861, 0.4200695501461391};
inline constexpr double toy_probs_sigmoid[2] = {0.5684460969316171, 0.4315539030683828};
inline constexpr double toy_h2_tanh[2] = {0.030814252953906524, -0.09364330306547};
inline constexpr double toy_wd_sigmoid[2] = {0.16678923360694778, 0.22887179318993023};

/// Two-class corpus separable by construction: class 1 documents contain
/// the token "marker" once, class 0 documents never do. Lengths vary in
/// [seq_len/2, seq_len] so some positions are padding.
inline std::vector<Document> marker_corpus(std::size_t n_docs, std::size_t seq_len, std::uint64_t seed,
                                           std::size_t fillers = 30) {
    Rng rng(seed);
    std::vector<Document> docs;
    for (std::size_t i = 0; i < n_docs; ++i) {
        Document d;
        d.label = i % 2;
        const std::size_t len = seq_len / 2 + rng.below(seq_len - seq_len / 2 + 1);
        for (std::size_t t = 0; t < len; ++t) d.tokens.push_back("w" + std::to_string(rng.below(fillers)));
        if (d.label == 1) d.tokens[rng.below(len)] = "marker";
        docs.push_back(std::move(d));
    }
    return docs;
}

/// Writes documents as <root>/<class>/<index>.txt.
inline void write_dataset_tree(const std::vector<Document>& docs, const std::filesystem::path& root,
                               const std::vector<std::string>& class_names) {
    std::filesystem::remove_all(root);
    for (const auto& c : class_names) std::filesystem::create_directories(root / c);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.txt", i);
        std::ofstream out(root / class_names[docs[i].label] / name, std::ios::binary);
        for (std::size_t t = 0; t < docs[i].tokens.size(); ++t) out << (t ? " " : "") << docs[i].tokens[t];
        out << '\n';
    }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace wrnn::testing
