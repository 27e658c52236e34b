#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "support.hpp"
#include "wrnn/corpus.hpp"

using namespace wrnn;

namespace {

Document doc(std::size_t label, std::vector<std::string> tokens) {
    Document d;
    d.label = label;
    d.tokens = std::move(tokens);
    return d;
}

}  // namespace

TEST(Tokenize, Rules) {
    EXPECT_EQ(tokenize("Hello, World!"), (std::vector<std::string>{"hello", "world"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("GPU-1080Ti x2"), (std::vector<std::string>{"gpu", "1080ti", "x2"}));
    EXPECT_EQ(tokenize("caf\xc3\xa9 \xff\xfe ok"), (std::vector<std::string>{"caf", "ok"}));
}

TEST(Vocabulary, FrequencyOrderAndFilter) {
    const std::vector<Document> docs = {doc(0, {"b", "a"}), doc(1, {"a"})};
    const Vocabulary v1 = build_vocabulary(docs, 1);
    EXPECT_EQ(v1.size(), 4u);
    EXPECT_EQ(v1.id_of("a"), 2u);
    EXPECT_EQ(v1.id_of("b"), 3u);
    EXPECT_EQ(v1.token_of(pad_id), "<pad>");
    EXPECT_EQ(v1.token_of(unknown_id), "<unk>");
    const Vocabulary v2 = build_vocabulary(docs, 2);
    EXPECT_EQ(v2.size(), 3u);
    EXPECT_EQ(v2.id_of("b"), unknown_id);
}

TEST(Vocabulary, TiesLexicographic) {
    const Vocabulary v = build_vocabulary({doc(0, {"zeta", "alpha", "mid"})}, 1);
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "alpha", "mid", "zeta"}));
}

TEST(Vocabulary, EmptyCorpus) {
    EXPECT_THROW(build_vocabulary({}, 1), DataError);
    EXPECT_THROW(build_vocabulary({doc(0, {})}, 1), DataError);
}

TEST(Vocabulary, RoundTripAndFile) {
    Rng rng(2);
    std::vector<Document> docs;
    for (int i = 0; i < 20; ++i) {
        Document d;
        for (int t = 0; t < 30; ++t) d.tokens.push_back("t" + std::to_string(rng.below(40)));
        docs.push_back(d);
    }
    const Vocabulary v = build_vocabulary(docs, 1);
    for (const auto& t : v.tokens()) EXPECT_EQ(v.token_of(v.id_of(t)), t);
    for (TokenId id = 0; id < v.size(); ++id) EXPECT_EQ(v.id_of(v.token_of(id)), id);

    const auto path = std::filesystem::temp_directory_path() / "wrnn_vocab_test.txt";
    v.save(path);
    const Vocabulary back = Vocabulary::load(path);
    EXPECT_EQ(back.tokens(), v.tokens());
    EXPECT_EQ(back.hash(), v.hash());
    std::filesystem::remove(path);
}

TEST(SequenceLength, Examples) {
    EXPECT_EQ(select_sequence_length({2, 3, 5, 7, 9}, 0.6), 5u);
    EXPECT_EQ(select_sequence_length({4, 4, 4}, 0.1), 4u);
    EXPECT_EQ(select_sequence_length({4, 4, 4}, 0.99), 4u);
    // boundary documents count as fitting ("<="): 2 of 4 lengths are <= 3
    EXPECT_EQ(select_sequence_length({1, 3, 8, 9}, 0.5), 3u);
    EXPECT_EQ(select_sequence_length({1, 2, 3, 100}, 0.99), 100u);
    EXPECT_THROW(select_sequence_length({}, 0.5), DataError);
    EXPECT_THROW(select_sequence_length({3}, 1.0), ConfigError);
}

TEST(SequenceLength, MatchesExhaustiveScan) {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::size_t> lengths(1 + rng.below(200));
        for (auto& l : lengths) l = 1 + rng.below(2000);
        const double theta = 0.001 + 0.998 * rng.uniform();
        ASSERT_EQ(select_sequence_length(lengths, theta), wrnn::testing::exhaustive_sequence_length(lengths, theta))
            << "trial " << trial;
    }
}

TEST(LengthStats, HistogramBuckets) {
    const std::vector<Document> docs = {doc(0, std::vector<std::string>(3, "a")),
                                        doc(0, std::vector<std::string>(12, "a")),
                                        doc(1, std::vector<std::string>(19, "a"))};
    const LengthStats s = compute_length_stats(docs, 0.5);
    EXPECT_EQ(s.histogram, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(s.sequence_length, 12u);
    const auto path = std::filesystem::temp_directory_path() / "wrnn_hist_test.csv";
    s.write_histogram_csv(path);
    EXPECT_EQ(wrnn::testing::read_bytes(path), "bucket_start,bucket_end,count\n0,10,1\n10,20,2\n");
    std::filesystem::remove(path);
}

TEST(Encode, PadTruncateUnknown) {
    const Vocabulary v(std::vector<std::string>{"a", "b"});
    ASSERT_EQ(v.id_of("a"), 2u);
    ASSERT_EQ(v.id_of("b"), 3u);
    EXPECT_EQ(encode_document(doc(0, {"a", "b"}), v, 4), (std::vector<TokenId>{2, 3, 0, 0}));
    EXPECT_EQ(encode_document(doc(0, {"a", "b", "a", "b", "a"}), v, 3), (std::vector<TokenId>{2, 3, 2}));
    EXPECT_EQ(encode_document(doc(0, {"z"}), v, 2), (std::vector<TokenId>{1, 0}));
    EXPECT_THROW(encode_document(doc(0, {"a"}), v, 0), ConfigError);
}

TEST(Encode, AlwaysExactLength) {
    const auto docs = wrnn::testing::marker_corpus(50, 20, 3);
    const Vocabulary v = build_vocabulary(docs, 1);
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t sl = 1 + rng.below(40);
        for (const auto& d : docs) {
            const auto ids = encode_document(d, v, sl);
            ASSERT_EQ(ids.size(), sl);
            for (TokenId id : ids) ASSERT_LT(id, v.size());
        }
    }
}

namespace {

std::vector<Document> balanced(std::size_t per_class, std::size_t classes) {
    std::vector<Document> docs;
    for (std::size_t i = 0; i < per_class * classes; ++i) docs.push_back(doc(i % classes, {"d" + std::to_string(i)}));
    return docs;
}

}  // namespace

TEST(Split, NinetyTenStratified) {
    const auto docs = balanced(50, 2);
    const DatasetSplit s = split_dataset(docs, 0.1, 42);
    EXPECT_EQ(s.train.size(), 90u);
    EXPECT_EQ(s.test.size(), 10u);
    std::size_t per_class[2] = {0, 0};
    for (const auto& d : s.test) ++per_class[d.label];
    EXPECT_EQ(per_class[0], 5u);
    EXPECT_EQ(per_class[1], 5u);
}

TEST(Split, HalfOfTwo) {
    const DatasetSplit s = split_dataset(balanced(2, 3), 0.5, 1);
    EXPECT_EQ(s.train.size(), 3u);
    EXPECT_EQ(s.test.size(), 3u);
}

TEST(Split, PartitionAndDeterminism) {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t classes = 2 + rng.below(5);
        std::vector<Document> docs;
        for (std::size_t i = 0; i < 200; ++i) docs.push_back(doc(rng.below(classes), {"x" + std::to_string(i)}));
        for (std::size_t c = 0; c < classes; ++c) {
            docs.push_back(doc(c, {"extra" + std::to_string(c)}));
            docs.push_back(doc(c, {"extra2_" + std::to_string(c)}));
        }
        const double fraction = 0.05 + 0.9 * rng.uniform();
        const std::uint64_t seed = rng.next_u64();
        const DatasetSplit a = split_dataset(docs, fraction, seed);
        const DatasetSplit b = split_dataset(docs, fraction, seed);
        std::multiset<std::string> seen;
        for (const auto* part : {&a.train, &a.test})
            for (const auto& d : *part) seen.insert(d.tokens[0]);
        ASSERT_EQ(seen.size(), docs.size());
        ASSERT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), docs.size());
        ASSERT_EQ(a.test.size(), b.test.size());
        for (std::size_t i = 0; i < a.test.size(); ++i) ASSERT_EQ(a.test[i].tokens, b.test[i].tokens);
        const double expected = fraction * static_cast<double>(docs.size());
        EXPECT_LE(std::abs(static_cast<double>(a.test.size()) - expected), static_cast<double>(classes));
    }
}

TEST(Split, Errors) {
    EXPECT_THROW(split_dataset({doc(0, {"a"}), doc(0, {"b"}), doc(1, {"c"})}, 0.5, 1), DataError);
    EXPECT_THROW(split_dataset(balanced(4, 2), 0.0, 1), ConfigError);
}

TEST(DatasetDir, LayoutAndEncodedFiles) {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "wrnn_corpus_tree";
    auto docs = wrnn::testing::marker_corpus(6, 8, 9);
    wrnn::testing::write_dataset_tree(docs, root, {"zebra", "alpha"});
    const RawDataset ds = load_dataset_dir(root);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"alpha", "zebra"}));
    EXPECT_EQ(ds.documents.size(), 6u);
    // docs labelled 1 were written under "alpha", which sorts first
    EXPECT_EQ(ds.documents[0].label, 0u);
    EXPECT_EQ(ds.documents[0].tokens, docs[1].tokens);
    EXPECT_THROW(load_dataset_dir(root, {"missing"}), DataError);
    EXPECT_THROW(load_dataset_dir(root / "nope"), DataError);

    auto encoded = ds.documents;
    encode_all(encoded, build_vocabulary(encoded, 1), 8);
    save_encoded(encoded, root / "enc.txt");
    const auto back = load_encoded(root / "enc.txt");
    ASSERT_EQ(back.size(), encoded.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].label, encoded[i].label);
        EXPECT_EQ(back[i].ids, encoded[i].ids);
    }
    fs::remove_all(root);
}
