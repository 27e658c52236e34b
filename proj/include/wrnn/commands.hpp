#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wrnn/checkpoint.hpp"
#include "wrnn/config.hpp"
#include "wrnn/corpus.hpp"
#include "wrnn/embeddings.hpp"
#include "wrnn/evaluation.hpp"
#include "wrnn/gradcheck.hpp"
#include "wrnn/models.hpp"
#include "wrnn/training.hpp"

namespace wrnn {

// Files inside the prepared-dataset directory.
inline constexpr const char* meta_file = "dataset.meta";
inline constexpr const char* vocab_file = "vocab.txt";
inline constexpr const char* train_file = "train.txt";
inline constexpr const char* test_file = "test.txt";
inline constexpr const char* histogram_file = "length_histogram.csv";
inline constexpr const char* embeddings_file = "embeddings.txt";

/// Summary of a prepared dataset (`dataset.meta`, `key = value` lines).
struct DatasetMeta {
    std::size_t sequence_length = 0;
    std::string sequence_length_source;  // theta | override
    double theta = 0.0;
    std::vector<std::string> class_names;
    std::size_t vocab_size = 0;
    std::uint64_t vocab_hash = 0;
    std::size_t documents = 0, train_documents = 0, test_documents = 0;
    std::size_t min_count = 0;
    std::uint64_t seed = 0;

    std::size_t classes() const { return class_names.size(); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        std::string names;
        for (std::size_t i = 0; i < class_names.size(); ++i) names += (i ? "," : "") + class_names[i];
        out << "sequence_length = " << sequence_length << '\n'
            << "sequence_length_source = " << sequence_length_source << '\n'
            << "theta = " << detail::format_double(theta) << '\n'
            << "classes = " << names << '\n'
            << "vocab_size = " << vocab_size << '\n'
            << "vocab_hash = " << hex64(vocab_hash) << '\n'
            << "documents = " << documents << '\n'
            << "train_documents = " << train_documents << '\n'
            << "test_documents = " << test_documents << '\n'
            << "min_count = " << min_count << '\n'
            << "seed = " << seed << '\n';
    }

    static DatasetMeta load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot read " + path.string() + " (run 'prepare' first)");
        std::map<std::string, std::string> kv;
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
        }
        const auto need = [&](const char* k) -> const std::string& {
            auto it = kv.find(k);
            if (it == kv.end()) throw DataError(path.string() + ": missing " + k);
            return it->second;
        };
        DatasetMeta m;
        try {
            m.sequence_length = std::stoull(need("sequence_length"));
            m.sequence_length_source = need("sequence_length_source");
            m.theta = std::stod(need("theta"));
            std::stringstream names(need("classes"));
            std::string n;
            while (std::getline(names, n, ',')) m.class_names.push_back(n);
            m.vocab_size = std::stoull(need("vocab_size"));
            m.vocab_hash = std::stoull(need("vocab_hash"), nullptr, 16);
            m.documents = std::stoull(need("documents"));
            m.train_documents = std::stoull(need("train_documents"));
            m.test_documents = std::stoull(need("test_documents"));
            m.min_count = std::stoull(need("min_count"));
            m.seed = std::stoull(need("seed"));
        } catch (const std::logic_error&) {
            throw DataError(path.string() + ": malformed value");
        }
        return m;
    }
};

struct PreparedData {
    DatasetMeta meta;
    Vocabulary vocab;
    std::vector<Document> train;
    std::vector<Document> test;
};

inline PreparedData load_prepared(const std::filesystem::path& dir) {
    PreparedData p;
    p.meta = DatasetMeta::load(dir / meta_file);
    p.vocab = Vocabulary::load(dir / vocab_file);
    if (p.vocab.hash() != p.meta.vocab_hash) throw DataError(dir.string() + ": vocabulary does not match dataset.meta");
    p.train = load_encoded(dir / train_file);
    p.test = load_encoded(dir / test_file);
    for (const auto* split : {&p.train, &p.test}) {
        for (const auto& d : *split) {
            if (d.ids.size() != p.meta.sequence_length || d.label >= p.meta.classes()) {
                throw DataError(dir.string() + ": encoded document inconsistent with dataset.meta");
            }
            for (TokenId id : d.ids)
                if (id >= p.vocab.size()) throw DataError(dir.string() + ": token id outside vocabulary");
        }
    }
    return p;
}

// prepare

struct PrepareResult {
    DatasetMeta meta;
    LengthStats lengths;
};

/// Reads the category tree, splits it, builds the vocabulary on the training
/// split, picks the sequence length over all documents, and writes the
/// encoded splits.
inline PrepareResult run_prepare(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    if (cfg.dataset.empty()) throw ConfigError("prepare: --dataset is required");
    RawDataset raw = load_dataset_dir(cfg.dataset, cfg.category_list());
    if (raw.class_names.size() < 2) throw DataError("dataset " + cfg.dataset + " has fewer than two categories");

    PrepareResult r;
    r.lengths = compute_length_stats(raw.documents, cfg.theta);
    const std::size_t seq_len = cfg.seq_len > 0 ? cfg.seq_len : r.lengths.sequence_length;

    DatasetSplit split = split_dataset(raw.documents, cfg.test_fraction, cfg.seed);
    const Vocabulary vocab = build_vocabulary(split.train, cfg.min_count);
    encode_all(split.train, vocab, seq_len);
    encode_all(split.test, vocab, seq_len);

    const std::filesystem::path dir(cfg.prepared);
    std::filesystem::create_directories(dir);
    vocab.save(dir / vocab_file);
    save_encoded(split.train, dir / train_file);
    save_encoded(split.test, dir / test_file);
    r.lengths.write_histogram_csv(dir / histogram_file);

    DatasetMeta& m = r.meta;
    m.sequence_length = seq_len;
    m.sequence_length_source = cfg.seq_len > 0 ? "override" : "theta";
    m.theta = cfg.theta;
    m.class_names = raw.class_names;
    m.vocab_size = vocab.size();
    m.vocab_hash = vocab.hash();
    m.documents = raw.documents.size();
    m.train_documents = split.train.size();
    m.test_documents = split.test.size();
    m.min_count = cfg.min_count;
    m.seed = cfg.seed;
    m.save(dir / meta_file);

    log << "prepared " << m.documents << " documents in " << m.classes() << " classes (" << m.train_documents
        << " train / " << m.test_documents << " test)\n"
        << "vocabulary size " << m.vocab_size << ", sequence length " << seq_len << " (theta-selected "
        << r.lengths.sequence_length << " at theta " << cfg.theta << ")\n";
    return r;
}

// embed

inline SkipGramResult run_embed(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    const PreparedData data = load_prepared(cfg.prepared);
    std::vector<std::vector<TokenId>> corpus;
    corpus.reserve(data.train.size());
    for (const auto& d : data.train) corpus.push_back(d.ids);
    SkipGramConfig sg;
    sg.dim = cfg.embed_dim;
    sg.window = cfg.window;
    sg.negatives = cfg.negatives;
    sg.epochs = cfg.embed_epochs;
    sg.learning_rate = cfg.embed_lr;
    sg.seed = cfg.seed;
    SkipGramResult result = train_skipgram(corpus, data.vocab.size(), sg);
    const std::filesystem::path out = std::filesystem::path(cfg.prepared) / embeddings_file;
    save_embeddings(out, result.embeddings, data.vocab);
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        log << "skip-gram epoch " << e + 1 << " loss " << result.epoch_losses[e] << '\n';
    }
    log << "wrote " << out.string() << " (" << data.vocab.size() << " x " << sg.dim << ")\n";
    return result;
}

// train

inline std::filesystem::path default_checkpoint(const ExperimentConfig& cfg) {
    return cfg.checkpoint.empty() ? std::filesystem::path(cfg.output) / "model.ckpt"
                                  : std::filesystem::path(cfg.checkpoint);
}

inline Matrix initial_embeddings(const ExperimentConfig& cfg, const PreparedData& data) {
    if (cfg.embedding_source == "random") return random_embeddings(data.vocab.size(), cfg.embed_dim, cfg.seed).table;
    std::filesystem::path path;
    if (cfg.embedding_source == "train") {
        path = std::filesystem::path(cfg.prepared) / embeddings_file;
        if (!std::filesystem::exists(path)) {
            throw DataError("no trained embeddings at " + path.string() +
                            " (run 'embed' first or set embedding_source = random)");
        }
    } else if (cfg.embedding_source == "load") {
        if (cfg.embedding_path.empty()) throw ConfigError("embedding_source = load needs embedding_path");
        path = cfg.embedding_path;
    } else {
        throw ConfigError("embedding_source must be train, load or random");
    }
    return load_embeddings(path, data.vocab, cfg.embed_dim, cfg.seed).table;
}

struct TrainRunResult {
    ModelSpec spec;
    TrainResult result;
};

/// Trains the configured model and writes `model.ckpt` (best epoch),
/// `last.ckpt`, `history.csv` and `config.txt` into the output directory.
inline TrainRunResult run_train(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    const PreparedData data = load_prepared(cfg.prepared);
    TrainRunResult run;
    run.spec = cfg.model_spec(data.meta.sequence_length, data.meta.classes());
    const TrainConfig tc = cfg.train_config();
    tc.validate();
    ModelParams init = init_model(run.spec, data.vocab.size(), cfg.seed, initial_embeddings(cfg, data));

    log << "training " << to_string(run.spec.kind) << ": " << data.train.size() << " train / " << data.test.size()
        << " test documents, SL " << run.spec.seq_len << ", " << tc.epochs << " epochs\n";
    run.result = train(run.spec, std::move(init), data.train, data.test, tc, [&](const EpochRecord& e) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "epoch %3zu  train loss %.4f acc %.4f  test loss %.4f acc %.4f  (%.1fs)\n",
                      e.epoch, e.train_loss, e.train_accuracy, e.test_loss, e.test_accuracy, e.seconds);
        log << buf << std::flush;
    });

    const std::filesystem::path dir(cfg.output);
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "model.ckpt", run.spec, run.result.best_params, data.vocab.hash());
    save_checkpoint(dir / "last.ckpt", run.spec, run.result.final_params, data.vocab.hash());
    {
        std::ofstream h(dir / "history.csv", std::ios::binary);
        h << run.result.history.to_csv();
    }
    {
        std::ofstream c(dir / "config.txt", std::ios::binary);
        c << to_config_text(cfg);
    }
    log << "best epoch " << run.result.best_epoch << "; wrote " << (dir / "model.ckpt").string() << '\n';
    return run;
}

// eval

struct EvalRunResult {
    std::string model;
    Evaluation evaluation;
};

/// Scores a checkpoint on one split and writes `metrics.csv` and
/// `per_class.csv` into the output directory.
inline EvalRunResult run_eval(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    const PreparedData data = load_prepared(cfg.prepared);
    const Checkpoint ck = load_checkpoint(default_checkpoint(cfg), data.meta.vocab_hash);
    if (ck.spec.seq_len != data.meta.sequence_length || ck.spec.classes != data.meta.classes()) {
        throw DataError("checkpoint sequence length/classes do not match the prepared dataset");
    }
    const std::vector<Document>* docs = nullptr;
    if (cfg.split == "test") {
        docs = &data.test;
    } else if (cfg.split == "train") {
        docs = &data.train;
    } else {
        throw ConfigError("split must be train or test");
    }
    EvalRunResult r;
    r.model = cfg.name.empty() ? std::string(to_string(ck.spec.kind)) : cfg.name;
    r.evaluation = evaluate(ck.spec, ck.params, *docs, cfg.train_config().worker_count());

    const std::filesystem::path dir(cfg.output);
    std::filesystem::create_directories(dir);
    write_report_csv(dir / "metrics.csv", r.model, r.evaluation.report);
    write_per_class_csv(dir / "per_class.csv", r.model, r.evaluation.report, data.meta.class_names);
    const auto& m = r.evaluation.report;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s on %s (%zu docs): accuracy %.4f  macro P %.4f R %.4f F1 %.4f  loss %.4f\n",
                  r.model.c_str(), cfg.split.c_str(), m.examples, m.accuracy, m.precision_macro, m.recall_macro,
                  m.f1_macro, m.loss);
    log << buf;
    if (!m.undefined_classes.empty()) {
        log << "note: precision or recall undefined (0/0, reported as 0) for:";
        for (std::size_t c : m.undefined_classes) log << ' ' << data.meta.class_names.at(c);
        log << '\n';
    }
    return r;
}

// report

inline ComparisonTable run_report(const std::vector<std::string>& files, const ExperimentConfig& cfg,
                                  std::ostream& log = std::cout) {
    if (files.empty()) throw ConfigError("report: at least one metrics file is required");
    std::vector<NamedReport> reports;
    for (const auto& f : files) {
        auto rows = read_report_csv(f);
        reports.insert(reports.end(), rows.begin(), rows.end());
    }
    const ComparisonTable table = compare_models(reports);
    const std::filesystem::path dir(cfg.output);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "report.csv", std::ios::binary) << table.to_csv();
    std::ofstream(dir / "report.txt", std::ios::binary) << table.to_text();
    log << table.to_text();
    return table;
}

// gradcheck

inline GradcheckReport run_gradcheck_command(const GradcheckOptions& opts, std::ostream& log = std::cout) {
    const GradcheckReport report = run_gradcheck(opts);
    log << report.to_text() << (report.passed() ? "gradcheck: all components passed\n" : "gradcheck: FAILED\n");
    return report;
}

}  // namespace wrnn
