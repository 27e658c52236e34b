#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wrnn/error.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

using TokenId = std::uint32_t;

inline constexpr TokenId pad_id = 0;
inline constexpr TokenId unknown_id = 1;

struct Document {
    std::size_t label = 0;
    std::vector<std::string> tokens;
    std::vector<TokenId> ids;  // empty until encoded
};

/// Lowercases and splits on every byte that is not an ASCII letter or digit.
/// Bytes outside ASCII act as separators, so invalid UTF-8 never fails.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (c < 0x80 && std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Bidirectional token/id map. Ids 0 and 1 are reserved for padding and
/// unknown tokens; the rest follow descending corpus frequency.
class Vocabulary {
public:
    static constexpr std::string_view pad_token = "<pad>";
    static constexpr std::string_view unknown_token = "<unk>";

    Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

    /// Tokens for ids 2, 3, ... in order.
    explicit Vocabulary(const std::vector<std::string>& corpus_tokens) {
        tokens_.emplace_back(pad_token);
        tokens_.emplace_back(unknown_token);
        for (const auto& t : corpus_tokens) {
            if (t == pad_token || t == unknown_token) throw DataError("vocabulary: reserved token in corpus: " + t);
            tokens_.push_back(t);
        }
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
                throw DataError("vocabulary: duplicate token " + tokens_[i]);
            }
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }

    TokenId id_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? unknown_id : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    const std::string& token_of(TokenId id) const {
        if (id >= tokens_.size()) throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
        return tokens_[id];
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// FNV-1a over the newline-terminated tokens in id order.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : tokens_) {
            h = fnv1a64(t, h);
            h = fnv1a64("\n", h);
        }
        return h;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write vocabulary " + path.string());
        for (const auto& t : tokens_) out << t << '\n';
    }

    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot read vocabulary " + path.string());
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        if (lines.size() < 2 || lines[0] != pad_token || lines[1] != unknown_token) {
            throw DataError("vocabulary file " + path.string() + " lacks the reserved header tokens");
        }
        return Vocabulary(std::vector<std::string>(lines.begin() + 2, lines.end()));
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

inline Vocabulary build_vocabulary(const std::vector<Document>& docs, std::size_t min_count = 5) {
    if (min_count == 0) throw ConfigError("min_count must be positive");
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& d : docs) {
        for (const auto& t : d.tokens) ++counts[t];
        total += d.tokens.size();
    }
    if (total == 0) throw DataError("empty corpus");
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [token, n] : counts)
        if (n >= min_count) kept.emplace_back(token, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> ordered;
    ordered.reserve(kept.size());
    for (auto& kv : kept) ordered.push_back(std::move(kv.first));
    return Vocabulary(ordered);
}

/// Smallest observed length SL such that the fraction of lengths <= SL is at
/// least theta. Falls back to the maximum length.
inline std::size_t select_sequence_length(std::vector<std::size_t> lengths, double theta) {
    if (lengths.empty()) throw DataError("select_sequence_length: no documents");
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must lie in (0, 1)");
    std::sort(lengths.begin(), lengths.end());
    const double n = static_cast<double>(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        // skip to the last occurrence of this length so the count covers "<="
        if (i + 1 < lengths.size() && lengths[i + 1] == lengths[i]) continue;
        const double fraction = static_cast<double>(i + 1) / n;
        if (lengths[i] > 0 && fraction >= theta) return lengths[i];
    }
    return std::max<std::size_t>(lengths.back(), 1);
}

struct LengthStats {
    std::vector<std::size_t> lengths;
    std::size_t bucket_width = 10;
    std::vector<std::size_t> histogram;  // histogram[k] counts lengths in [k*w, (k+1)*w)
    std::size_t sequence_length = 0;
    double theta = 0.85;

    void write_histogram_csv(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << "bucket_start,bucket_end,count\n";
        for (std::size_t k = 0; k < histogram.size(); ++k) {
            out << k * bucket_width << ',' << (k + 1) * bucket_width << ',' << histogram[k] << '\n';
        }
    }
};

inline LengthStats compute_length_stats(const std::vector<Document>& docs, double theta,
                                        std::size_t bucket_width = 10) {
    LengthStats stats;
    stats.theta = theta;
    stats.bucket_width = bucket_width;
    for (const auto& d : docs) stats.lengths.push_back(d.tokens.size());
    stats.sequence_length = select_sequence_length(stats.lengths, theta);
    for (std::size_t len : stats.lengths) {
        const std::size_t k = len / bucket_width;
        if (stats.histogram.size() <= k) stats.histogram.resize(k + 1, 0);
        ++stats.histogram[k];
    }
    return stats;
}

/// Truncates from the end or pads with id 0 to exactly `seq_len` ids.
inline std::vector<TokenId> encode_document(const Document& doc, const Vocabulary& vocab, std::size_t seq_len) {
    if (seq_len == 0) throw ConfigError("sequence length must be positive");
    std::vector<TokenId> ids(seq_len, pad_id);
    const std::size_t n = std::min(seq_len, doc.tokens.size());
    for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id_of(doc.tokens[i]);
    return ids;
}

inline void encode_all(std::vector<Document>& docs, const Vocabulary& vocab, std::size_t seq_len) {
    for (auto& d : docs) d.ids = encode_document(d, vocab, seq_len);
}

inline std::size_t count_classes(const std::vector<Document>& docs) {
    std::size_t c = 0;
    for (const auto& d : docs) c = std::max(c, d.label + 1);
    return c;
}

struct DatasetSplit {
    std::vector<Document> train;
    std::vector<Document> test;
};

/// Stratified split: each class is shuffled with its own draw from a seeded
/// stream and round(fraction * n_class) documents go to test (at least one,
/// at most n_class - 1). Both halves keep the original document order.
inline DatasetSplit split_dataset(const std::vector<Document>& docs, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
    const std::size_t classes = count_classes(docs);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < docs.size(); ++i) by_class[docs[i].label].push_back(i);

    Rng rng(derive_seed(seed, "split"));
    std::vector<bool> is_test(docs.size(), false);
    for (std::size_t c = 0; c < classes; ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < 2) throw DataError("class too small to stratify (class " + std::to_string(c) + ")");
        rng.shuffle(std::span<std::size_t>(members));
        auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
        for (std::size_t k = 0; k < n_test; ++k) is_test[members[k]] = true;
    }
    DatasetSplit split;
    for (std::size_t i = 0; i < docs.size(); ++i) (is_test[i] ? split.test : split.train).push_back(docs[i]);
    return split;
}

/// Labeled documents read from a category-per-directory tree.
struct RawDataset {
    std::vector<std::string> class_names;
    std::vector<Document> documents;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Class ids follow lexicographic order of category names; files inside a
/// category are read in lexicographic order. `categories` restricts the set.
inline RawDataset load_dataset_dir(const std::filesystem::path& root,
                                   const std::vector<std::string>& categories = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (categories.empty() || std::find(categories.begin(), categories.end(), name) != categories.end()) {
            names.push_back(name);
        }
    }
    std::sort(names.begin(), names.end());
    for (const auto& want : categories) {
        if (std::find(names.begin(), names.end(), want) == names.end()) {
            throw DataError("category " + want + " not found under " + root.string());
        }
    }
    RawDataset ds;
    ds.class_names = names;
    for (std::size_t label = 0; label < names.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / names[label])) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Document d;
            d.label = label;
            d.tokens = tokenize(read_file_bytes(f));
            ds.documents.push_back(std::move(d));
        }
    }
    if (ds.documents.empty()) throw DataError("no documents found under " + root.string());
    return ds;
}

/// One encoded document per line: "<label>\t<id> <id> ...".
inline void save_encoded(const std::vector<Document>& docs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& d : docs) {
        out << d.label << '\t';
        for (std::size_t i = 0; i < d.ids.size(); ++i) out << (i ? " " : "") << d.ids[i];
        out << '\n';
    }
}

inline std::vector<Document> load_encoded(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError(path.string() + ":" + std::to_string(lineno) + ": missing label");
        Document d;
        try {
            d.label = std::stoul(line.substr(0, tab));
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label");
        }
        std::istringstream ids(line.substr(tab + 1));
        unsigned long id = 0;
        while (ids >> id) d.ids.push_back(static_cast<TokenId>(id));
        if (!ids.eof()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad token id");
        docs.push_back(std::move(d));
    }
    return docs;
}

}  // namespace wrnn
