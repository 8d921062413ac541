#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "educe/planted.hpp"
#include "educe/rng.hpp"
#include "educe/text.hpp"

using namespace educe;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("educe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                   .string();
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("build_vocab") {
    SUBCASE("direct counts") {
        Vocab v = build_vocab({"a b a"}, 1);
        CHECK(v.size() == 4);  // pad, unk, a, b
        CHECK(v.lookup("a") == 2);
        CHECK(v.lookup("b") == 3);
    }
    SUBCASE("min_count threshold maps rare tokens to unk") {
        Vocab v = build_vocab({"a b a"}, 2);
        CHECK(v.lookup("a") != Vocab::unk_id);
        CHECK(v.lookup("b") == Vocab::unk_id);
    }
    SUBCASE("unseen token maps to unk") {
        Vocab v = build_vocab({"a b a"}, 1);
        CHECK(v.lookup("zebra") == Vocab::unk_id);
    }
    SUBCASE("empty corpus rejected") {
        CHECK_THROWS_AS(build_vocab({}, 1), DataError);
    }
    SUBCASE("pad and unk ids differ and ids are dense") {
        Vocab v = build_vocab({"x y z"}, 1);
        CHECK(Vocab::pad_id != Vocab::unk_id);
        std::set<std::size_t> ids;
        for (const auto& [tok, id] : v.token_to_id) {
            CHECK(v.id_to_token[id] == tok);
            ids.insert(id);
        }
        CHECK(ids.size() == v.size());
        CHECK(*ids.rbegin() == v.size() - 1);
    }
}

TEST_CASE("load_embeddings") {
    Vocab v = build_vocab({"hello world"}, 1);
    SUBCASE("direct parse") {
        TempFile f("hello 0.1 0.2\n");
        EmbeddingTable t = load_embeddings(f.path, v, 2, 42);
        CHECK(t.weights.at(v.lookup("hello"), 0) == 0.1);
        CHECK(t.weights.at(v.lookup("hello"), 1) == 0.2);
    }
    SUBCASE("absent token gets a reproducible seeded row, pad zeroed") {
        TempFile f("hello 0.1 0.2\n");
        EmbeddingTable a = load_embeddings(f.path, v, 2, 42);
        EmbeddingTable b = load_embeddings(f.path, v, 2, 42);
        const std::size_t wid = v.lookup("world");
        CHECK(a.weights.at(wid, 0) == b.weights.at(wid, 0));
        CHECK(a.weights.at(wid, 0) != 0.0);
        CHECK(a.weights.at(wid, 0) >= -0.1);
        CHECK(a.weights.at(wid, 0) < 0.1);
        CHECK(a.weights.at(Vocab::pad_id, 0) == 0.0);
        CHECK(a.weights.at(Vocab::pad_id, 1) == 0.0);
    }
    SUBCASE("wrong value count reports the line") {
        TempFile f("hello 0.1 0.2\nx 0.1\n");
        CHECK_THROWS_WITH_AS(load_embeddings(f.path, v, 2, 42), doctest::Contains("line 2"),
                             DataError);
    }
}

TEST_CASE("load_dataset") {
    Vocab v = build_vocab({"the cat sat on mat good beer here pal a b"}, 1);
    SUBCASE("classification line") {
        TempFile f("2\tThe cat sat on the mat\n");
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        REQUIRE(ds.docs.size() == 1);
        CHECK(ds.docs[0].label == 2);
        CHECK(ds.docs[0].length == 6);
        CHECK(ds.docs[0].tokens.size() == 6);
        CHECK(ds.n_classes == 3);
    }
    SUBCASE("regression targets") {
        TempFile f("0.5,0.25\tgood beer here pal\n");
        Dataset ds = load_dataset(f.path, TaskKind::Regression, v);
        CHECK(ds.docs[0].targets == std::vector<double>{0.5, 0.25});
        CHECK(ds.n_targets == 2);
    }
    SUBCASE("short document padded to 4") {
        TempFile f("1\ta b\n");
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        CHECK(ds.docs[0].length == 2);
        REQUIRE(ds.docs[0].tokens.size() == 4);
        CHECK(ds.docs[0].tokens[2] == Vocab::pad_id);
        CHECK(ds.docs[0].tokens[3] == Vocab::pad_id);
    }
    SUBCASE("comments ignored, gold spans parsed") {
        TempFile f("# comment line\n0\tgood beer here pal a\t1:0-2;0:3-5\n");
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        REQUIRE(ds.docs.size() == 1);
        REQUIRE(ds.docs[0].gold_spans.size() == 2);
        CHECK(ds.docs[0].gold_spans[0].aspect == 1);
        CHECK(ds.docs[0].gold_spans[0].start == 0);
        CHECK(ds.docs[0].gold_spans[0].stop == 2);
    }
    SUBCASE("word labels parsed and validated") {
        TempFile f("0\ta b cat\t\t1 2 0\n");
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        CHECK(ds.docs[0].word_labels == std::vector<std::size_t>{1, 2, 0});
        TempFile bad("0\ta b cat\t\t1 2\n");
        CHECK_THROWS_AS(load_dataset(bad.path, TaskKind::Classification, v), DataError);
    }
    SUBCASE("label outside declared range") {
        TempFile f("7\ta b cat\n");
        CHECK_THROWS_AS(load_dataset(f.path, TaskKind::Classification, v, 4), DataError);
    }
    SUBCASE("unparsable target") {
        TempFile f("0.5,oops\tgood beer\n");
        CHECK_THROWS_AS(load_dataset(f.path, TaskKind::Regression, v), DataError);
    }
    SUBCASE("target outside [0,1]") {
        TempFile f("1.5\tgood beer\n");
        CHECK_THROWS_AS(load_dataset(f.path, TaskKind::Regression, v), DataError);
    }
    SUBCASE("round-trip: detokenize reproduces lowercased tokens modulo unk") {
        TempFile f("0\tThe CAT flies\n");
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        auto toks = detokenize(ds.docs[0], v);
        CHECK(toks == std::vector<std::string>{"the", "cat", "<unk>"});
    }
}

TEST_CASE("stratified_split") {
    auto make_balanced = [](std::size_t per_class, std::size_t classes) {
        Dataset ds;
        ds.task = TaskKind::Classification;
        ds.n_classes = classes;
        for (std::size_t c = 0; c < classes; ++c)
            for (std::size_t i = 0; i < per_class; ++i) {
                Document d;
                d.label = c;
                d.tokens = {2, 3, 4, 5};
                d.length = 4;
                ds.docs.push_back(d);
            }
        return ds;
    };
    SUBCASE("exact divisibility") {
        Dataset ds = make_balanced(25, 4);
        auto parts = stratified_split(ds, {0.8, 0.2}, 7);
        REQUIRE(parts.size() == 2);
        CHECK(parts[0].size() == 80);
        CHECK(parts[1].size() == 20);
        std::vector<std::size_t> a(4, 0), b(4, 0);
        for (const auto& d : parts[0].docs) ++a[d.label];
        for (const auto& d : parts[1].docs) ++b[d.label];
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(a[c] == 20);
            CHECK(b[c] == 5);
        }
    }
    SUBCASE("per-class deviation at most one") {
        Dataset ds = make_balanced(17, 3);
        auto parts = stratified_split(ds, {0.5, 0.3, 0.2}, 11);
        for (std::size_t p = 0; p < 3; ++p) {
            std::vector<std::size_t> counts(3, 0);
            for (const auto& d : parts[p].docs) ++counts[d.label];
            const double share = 17.0 * std::vector<double>{0.5, 0.3, 0.2}[p];
            for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - share) <= 1.0);
        }
    }
    SUBCASE("deterministic per seed") {
        Dataset ds = make_balanced(10, 4);
        auto a = stratified_split(ds, {0.8, 0.2}, 5);
        auto b = stratified_split(ds, {0.8, 0.2}, 5);
        REQUIRE(a[1].size() == b[1].size());
        for (std::size_t i = 0; i < a[1].docs.size(); ++i)
            CHECK(a[1].docs[i].label == b[1].docs[i].label);
    }
    SUBCASE("fractions must sum to one") {
        Dataset ds = make_balanced(10, 2);
        CHECK_THROWS_AS(stratified_split(ds, {0.5, 0.4}, 1), StratifyError);
    }
    SUBCASE("class smaller than part count") {
        Dataset ds = make_balanced(1, 2);
        CHECK_THROWS_AS(stratified_split(ds, {0.5, 0.5}, 1), StratifyError);
    }
    SUBCASE("parts are disjoint and cover the input") {
        Dataset ds = make_balanced(13, 3);
        for (std::size_t i = 0; i < ds.docs.size(); ++i) ds.docs[i].tokens[0] = 100 + i;
        auto parts = stratified_split(ds, {0.6, 0.4}, 3);
        std::set<std::size_t> seen;
        for (const auto& part : parts.at(0).docs) seen.insert(part.tokens[0]);
        for (const auto& part : parts.at(1).docs) {
            CHECK(!seen.count(part.tokens[0]));
            seen.insert(part.tokens[0]);
        }
        CHECK(seen.size() == ds.docs.size());
    }
}

TEST_CASE("gen_planted") {
    PlantedSpec spec;
    spec.families = 4;
    spec.docs_per_class = 20;
    spec.doc_len = 20;
    spec.seed = 7;
    SUBCASE("every doc contains exactly its class's families") {
        PlantedCorpus corpus = gen_planted(spec);
        CHECK(corpus.classes.size() == 6);  // all 2-subsets of 4
        CHECK(corpus.docs.size() == 120);
        for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
            auto found = scan_families(corpus.docs[i], 4);
            auto expected = corpus.classes[corpus.labels[i]];
            std::sort(expected.begin(), expected.end());
            CHECK(found == expected);
        }
    }
    SUBCASE("deterministic per seed") {
        PlantedCorpus a = gen_planted(spec);
        PlantedCorpus b = gen_planted(spec);
        CHECK(a.docs == b.docs);
        CHECK(a.labels == b.labels);
    }
    SUBCASE("bag-of-trigram oracle achieves 100%") {
        PlantedCorpus corpus = gen_planted(spec);
        for (std::size_t i = 0; i < corpus.docs.size(); ++i)
            CHECK(oracle_classify(corpus.docs[i], corpus.classes, 4) == corpus.labels[i]);
    }
    SUBCASE("capacity error when trigrams cannot fit") {
        PlantedSpec tiny = spec;
        tiny.doc_len = 7;  // needs 3*2+2 = 8
        CHECK_THROWS_AS(gen_planted(tiny), CapacityError);
    }
    SUBCASE("filler vocabulary disjoint from signal") {
        PlantedCorpus corpus = gen_planted(spec);
        for (const auto& doc : corpus.docs)
            for (const auto& tok : doc)
                CHECK((tok.rfind("sig", 0) == 0 || tok.rfind("fill", 0) == 0));
    }
    SUBCASE("tsv round trip") {
        PlantedCorpus corpus = gen_planted(spec);
        TempFile f("");
        write_planted_tsv(corpus, f.path);
        std::vector<std::string> lines;
        {
            std::ifstream in(f.path);
            std::string line;
            while (std::getline(in, line)) lines.push_back(line);
        }
        Vocab v = build_vocab(lines, 1);
        Dataset ds = load_dataset(f.path, TaskKind::Classification, v);
        CHECK(ds.docs.size() == corpus.docs.size());
        CHECK(ds.n_classes == 6);
        for (std::size_t i = 0; i < ds.docs.size(); ++i) {
            CHECK(ds.docs[i].label == corpus.labels[i]);
            CHECK(detokenize(ds.docs[i], v) == corpus.docs[i]);
        }
    }
}
