#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "wrnn/error.hpp"
#include "wrnn/models.hpp"

namespace wrnn {

// Checkpoint layout:
//
//   wrnn-checkpoint 1
//   <key> <value>            one line per ModelSpec field, vocab_size, vocab_hash
//   tensors <count>
//   end_header
//   tensor <name> <rows> <cols>\n<rows*cols little-endian IEEE-754 doubles>\n
//   ...
//   end\n

inline constexpr int checkpoint_version = 1;

struct Checkpoint {
    ModelSpec spec;
    ModelParams params;
    std::size_t vocab_size = 0;
    std::uint64_t vocab_hash = 0;
};

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ModelParams& params,
                            std::uint64_t vocab_hash) {
    validate_params(spec, params);
    std::size_t count = 0;
    params.for_each([&](const std::string&, const Matrix&, ParamRole) { ++count; });

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << "wrnn-checkpoint " << checkpoint_version << '\n'
        << "kind " << to_string(spec.kind) << '\n'
        << "seq_len " << spec.seq_len << '\n'
        << "embed_dim " << spec.embed_dim << '\n'
        << "lstm_hidden " << spec.lstm_hidden << '\n'
        << "lstm_layers " << spec.lstm_layers << '\n'
        << "classifier_hidden " << spec.classifier_hidden << '\n'
        << "classes " << spec.classes << '\n'
        << "candidate " << to_string(spec.candidate) << '\n'
        << "freeze_embeddings " << spec.freeze_embeddings << '\n'
        << "normalize_weights " << spec.normalize_weights << '\n'
        << "vocab_size " << params.embedding.rows() << '\n'
        << "vocab_hash " << hex64(vocab_hash) << '\n'
        << "tensors " << count << '\n'
        << "end_header\n";
    std::string bytes;
    params.for_each([&](const std::string& name, const Matrix& m, ParamRole) {
        out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        bytes.resize(m.size() * 8);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto u = std::bit_cast<std::uint64_t>(m[i]);
            for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out << '\n';
    });
    out << "end\n";
    if (!out) throw DataError("write failed for checkpoint " + path.string());
}

/// Reads and validates a checkpoint. Nothing is returned unless the whole
/// file parses. When `expected_vocab_hash` is given it must match.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_vocab_hash = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    const auto fail = [&](const std::string& why) -> DataError {
        return DataError("corrupt checkpoint " + path.string() + ": " + why);
    };

    std::string line;
    if (!std::getline(in, line) || line != "wrnn-checkpoint " + std::to_string(checkpoint_version)) {
        throw fail("bad magic/version line");
    }
    std::map<std::string, std::string> header;
    while (true) {
        if (!std::getline(in, line)) throw fail("truncated header");
        if (line == "end_header") break;
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw fail("bad header line '" + line + "'");
        header[line.substr(0, sp)] = line.substr(sp + 1);
    }
    const auto get = [&](const char* key) -> const std::string& {
        auto it = header.find(key);
        if (it == header.end()) throw fail(std::string("missing header field ") + key);
        return it->second;
    };
    const auto get_size = [&](const char* key) -> std::size_t {
        try {
            return static_cast<std::size_t>(std::stoull(get(key)));
        } catch (const std::invalid_argument&) {
            throw fail(std::string("bad value for ") + key);
        } catch (const std::out_of_range&) {
            throw fail(std::string("bad value for ") + key);
        }
    };

    Checkpoint ck;
    try {
        ck.spec.kind = parse_model_kind(get("kind"));
        ck.spec.candidate = parse_candidate_activation(get("candidate"));
    } catch (const ConfigError& e) {
        throw fail(e.what());
    }
    ck.spec.seq_len = get_size("seq_len");
    ck.spec.embed_dim = get_size("embed_dim");
    ck.spec.lstm_hidden = get_size("lstm_hidden");
    ck.spec.lstm_layers = get_size("lstm_layers");
    ck.spec.classifier_hidden = get_size("classifier_hidden");
    ck.spec.classes = get_size("classes");
    ck.spec.freeze_embeddings = get_size("freeze_embeddings") != 0;
    ck.spec.normalize_weights = get_size("normalize_weights") != 0;
    ck.vocab_size = get_size("vocab_size");
    try {
        ck.vocab_hash = std::stoull(get("vocab_hash"), nullptr, 16);
    } catch (const std::exception&) {
        throw fail("bad vocab_hash");
    }
    if (expected_vocab_hash && *expected_vocab_hash != ck.vocab_hash) {
        throw DataError("checkpoint " + path.string() + " was trained with a different vocabulary (hash " +
                        hex64(ck.vocab_hash) + ", dataset has " + hex64(*expected_vocab_hash) + "); refusing to load");
    }
    try {
        ck.spec.validate();
    } catch (const ConfigError& e) {
        throw fail(e.what());
    }
    if (ck.vocab_size < 2) throw fail("vocab_size too small");

    ModelParams params = init_model(ck.spec, ck.vocab_size, 0);
    const std::size_t expected_tensors = get_size("tensors");
    std::size_t seen = 0;
    std::string bytes;
    params.for_each([&](const std::string& name, Matrix& m, ParamRole) {
        ++seen;
        if (!std::getline(in, line)) throw fail("truncated before tensor " + name);
        std::istringstream fields(line);
        std::string tag, got_name;
        std::size_t rows = 0, cols = 0;
        if (!(fields >> tag >> got_name >> rows >> cols) || tag != "tensor") throw fail("bad tensor line '" + line + "'");
        if (got_name != name) throw fail("expected tensor " + name + ", found " + got_name);
        if (rows != m.rows() || cols != m.cols()) {
            throw fail("tensor " + name + " has shape (" + std::to_string(rows) + "x" + std::to_string(cols) +
                       "), model expects " + m.shape_str());
        }
        bytes.resize(m.size() * 8);
        if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw fail("truncated tensor " + name);
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
            m[i] = std::bit_cast<double>(u);
        }
        if (in.get() != '\n') throw fail("missing terminator after tensor " + name);
    });
    if (seen != expected_tensors) throw fail("tensor count differs from header");
    if (!std::getline(in, line) || line != "end") throw fail("missing end marker");
    ck.params = std::move(params);
    return ck;
}

}  // namespace wrnn
