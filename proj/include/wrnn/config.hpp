#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wrnn/error.hpp"
#include "wrnn/models.hpp"
#include "wrnn/training.hpp"

namespace wrnn {

using KeyValues = std::map<std::string, std::string>;

/// Every knob of an experiment. Defaults follow the published setup where it
/// gives one (dim 200, hidden 128, batch 128, lr 0.01, L2 0.01, Adam, 90/10
/// split, theta 0.85).
struct ExperimentConfig {
    // data
    std::string dataset;     // category-per-directory root
    std::string categories;  // comma-separated subset; empty = all
    std::string prepared = "prepared";
    std::string output = "run";
    double theta = 0.85;
    std::size_t seq_len = 0;  // 0 = select from theta
    std::size_t min_count = 5;
    double test_fraction = 0.1;
    // embeddings
    std::string embedding_source = "train";  // train | load | random
    std::string embedding_path;
    std::size_t embed_dim = 200;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t embed_epochs = 5;
    double embed_lr = 0.025;
    // model
    std::string model = "wrnn";
    std::string name;  // label in reports; defaults to the model kind
    std::size_t lstm_hidden = 128;
    std::size_t lstm_layers = 1;
    std::size_t classifier_hidden = 128;
    std::string candidate = "tanh";
    bool freeze_embeddings = false;
    bool normalize_weights = false;
    // training
    double learning_rate = 0.01;
    std::size_t minibatch = 128;
    std::size_t epochs = 5;
    double l2 = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 5.0;
    bool full_train_eval = false;
    // run
    std::uint64_t seed = 1;
    std::size_t threads = 0;
    bool deterministic = false;
    std::string preset;
    std::string checkpoint;  // eval input; defaults to <output>/model.ckpt
    std::string split = "test";

    std::string display_name() const { return name.empty() ? std::string(to_string(parse_model_kind(model))) : name; }

    std::vector<std::string> category_list() const {
        std::vector<std::string> out;
        std::stringstream ss(categories);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = learning_rate;
        t.minibatch = minibatch;
        t.epochs = epochs;
        t.l2 = l2;
        t.beta1 = beta1;
        t.beta2 = beta2;
        t.adam_epsilon = adam_epsilon;
        t.clip_norm = clip_norm;
        t.seed = seed;
        t.deterministic = deterministic;
        t.threads = threads;
        t.full_train_eval = full_train_eval;
        return t;
    }

    ModelSpec model_spec(std::size_t sequence_length, std::size_t classes) const {
        ModelSpec s;
        s.kind = parse_model_kind(model);
        s.seq_len = sequence_length;
        s.embed_dim = embed_dim;
        s.lstm_hidden = lstm_hidden;
        s.lstm_layers = lstm_layers;
        s.classifier_hidden = classifier_hidden;
        s.classes = classes;
        s.candidate = parse_candidate_activation(candidate);
        s.freeze_embeddings = freeze_embeddings;
        s.normalize_weights = normalize_weights;
        return s;
    }
};

struct ConfigField {
    std::string key;
    std::string help;
    bool is_flag;  // boolean switch on the command line
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const auto n = std::stoull(v, &used);
            if (used == v.size()) return n;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

inline std::string format_double(double d) {
    std::ostringstream s;
    s.precision(17);
    s << d;
    return s.str();
}

}  // namespace detail

inline const std::vector<ConfigField>& config_fields() {
    using C = ExperimentConfig;
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f;
        const auto str = [&](const char* key, std::string C::*m, const char* help) {
            f.push_back({key, help, false, [m](C& c, const std::string& v) { c.*m = v; },
                         [m](const C& c) { return c.*m; }});
        };
        const auto real = [&](const char* key, double C::*m, const char* help) {
            f.push_back({key, help, false,
                         [m, key](C& c, const std::string& v) { c.*m = detail::parse_double(key, v); },
                         [m](const C& c) { return detail::format_double(c.*m); }});
        };
        const auto count = [&](const char* key, std::size_t C::*m, const char* help) {
            f.push_back({key, help, false,
                         [m, key](C& c, const std::string& v) {
                             c.*m = static_cast<std::size_t>(detail::parse_unsigned(key, v));
                         },
                         [m](const C& c) { return std::to_string(c.*m); }});
        };
        const auto flag = [&](const char* key, bool C::*m, const char* help) {
            f.push_back({key, help, true, [m, key](C& c, const std::string& v) { c.*m = detail::parse_bool(key, v); },
                         [m](const C& c) { return std::string(c.*m ? "true" : "false"); }});
        };
        str("dataset", &C::dataset, "dataset root: one sub-directory per category");
        str("categories", &C::categories, "comma-separated category subset (empty = all)");
        str("prepared", &C::prepared, "directory for the prepared (encoded) dataset");
        str("output", &C::output, "directory for checkpoints, histories and reports");
        real("theta", &C::theta, "fraction of documents that must fit in the sequence length");
        count("seq_len", &C::seq_len, "fixed sequence length (0 = choose from theta)");
        count("min_count", &C::min_count, "minimum token frequency for the vocabulary");
        real("test_fraction", &C::test_fraction, "held-out fraction per class");
        str("embedding_source", &C::embedding_source, "train | load | random");
        str("embedding_path", &C::embedding_path, "word2vec text file for embedding_source=load");
        count("embed_dim", &C::embed_dim, "word vector dimension");
        count("window", &C::window, "skip-gram window");
        count("negatives", &C::negatives, "skip-gram negative samples");
        count("embed_epochs", &C::embed_epochs, "skip-gram epochs");
        real("embed_lr", &C::embed_lr, "skip-gram initial learning rate");
        str("model", &C::model, "wrnn | rnn_last | birnn | dnn");
        str("name", &C::name, "model label in reports");
        count("lstm_hidden", &C::lstm_hidden, "LSTM width");
        count("lstm_layers", &C::lstm_layers, "stacked LSTM layers");
        count("classifier_hidden", &C::classifier_hidden, "dense ReLU layer width");
        str("candidate", &C::candidate, "candidate activation: tanh | sigmoid");
        flag("freeze_embeddings", &C::freeze_embeddings, "do not fine-tune word vectors");
        flag("normalize_weights", &C::normalize_weights, "softmax-normalize position weights");
        real("learning_rate", &C::learning_rate, "Adam learning rate");
        count("minibatch", &C::minibatch, "minibatch size");
        count("epochs", &C::epochs, "training epochs");
        real("l2", &C::l2, "L2 regularization strength on weight matrices");
        real("beta1", &C::beta1, "Adam beta1");
        real("beta2", &C::beta2, "Adam beta2");
        real("adam_epsilon", &C::adam_epsilon, "Adam epsilon");
        real("clip_norm", &C::clip_norm, "global gradient norm clip (0 disables)");
        flag("full_train_eval", &C::full_train_eval, "re-evaluate the train split after every epoch");
        f.push_back({"seed", "master random seed", false,
                     [](C& c, const std::string& v) { c.seed = detail::parse_unsigned("seed", v); },
                     [](const C& c) { return std::to_string(c.seed); }});
        count("threads", &C::threads, "worker threads (0 = all cores)");
        flag("deterministic", &C::deterministic, "single-threaded fixed-order execution");
        str("preset", &C::preset, "paper | small");
        str("checkpoint", &C::checkpoint, "checkpoint to evaluate");
        str("split", &C::split, "split to evaluate: train | test");
        return f;
    }();
    return fields;
}

inline const ConfigField& find_field(const std::string& key) {
    for (const auto& f : config_fields())
        if (f.key == key) return f;
    throw ConfigError("unknown configuration key '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment.
inline KeyValues parse_config_text(const std::string& text, const std::string& origin = "config") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        try {
            find_field(key);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
        kv[key] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

inline KeyValues parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

/// Named presets. `small` is the desk-scale setup: four newsgroups, SL 150,
/// dim 50, hidden 64, 5 epochs.
inline KeyValues preset_values(const std::string& preset) {
    if (preset.empty() || preset == "paper") return {};
    if (preset == "small") {
        return {{"categories", "comp.graphics,rec.sport.hockey,sci.med,talk.politics.guns"},
                {"seq_len", "150"},
                {"embed_dim", "50"},
                {"lstm_hidden", "64"},
                {"classifier_hidden", "64"},
                {"epochs", "5"}};
    }
    throw ConfigError("unknown preset '" + preset + "' (expected paper or small)");
}

inline void apply_values(ExperimentConfig& cfg, const KeyValues& kv) {
    for (const auto& [k, v] : kv) find_field(k).set(cfg, v);
}

/// Precedence: built-in defaults < preset < config file < command-line flags.
inline ExperimentConfig resolve_config(const KeyValues& file, const KeyValues& flags) {
    ExperimentConfig cfg;
    std::string preset;
    if (auto it = file.find("preset"); it != file.end()) preset = it->second;
    if (auto it = flags.find("preset"); it != flags.end()) preset = it->second;
    apply_values(cfg, preset_values(preset));
    apply_values(cfg, file);
    apply_values(cfg, flags);
    return cfg;
}

inline std::string to_config_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : config_fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

}  // namespace wrnn
