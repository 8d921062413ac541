#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "educe/tensor.hpp"

namespace educe {

// Token vocabulary with dense ids. pad=0 and unk=1 are always present.
struct Vocab {
    std::unordered_map<std::string, std::size_t> token_to_id;
    std::vector<std::string> id_to_token;

    static constexpr std::size_t pad_id = 0;
    static constexpr std::size_t unk_id = 1;

    std::size_t size() const { return id_to_token.size(); }
    std::size_t lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }
    const std::string& token(std::size_t id) const { return id_to_token[id]; }
};

// Tokens below min_count map to unk. Ids are assigned in order of first
// appearance so the result is deterministic.
Vocab build_vocab(const std::vector<std::string>& lines, std::size_t min_count);

std::vector<std::string> tokenize(const std::string& text);
std::string lowercase(std::string s);

// Frozen word-embedding matrix (vocab x d); never receives gradients.
struct EmbeddingTable {
    Tensor weights;
    bool frozen = true;

    std::size_t dim() const { return weights.cols(); }
    std::size_t vocab_size() const { return weights.rows(); }
    // Mean of the embedding rows for tokens[start..stop], both inclusive.
    Tensor mean_of(const std::vector<std::size_t>& tokens, std::size_t start,
                   std::size_t stop) const;
};

// Text format: one line per token, "token v1 ... vd". Tokens absent from the
// file (including pad/unk) are filled from seeded uniform(-0.1, 0.1); the pad
// row is zeroed afterwards.
EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                               std::uint64_t seed);

// All rows seeded uniform(-scale, scale), pad row zeroed. Used when no
// pretrained vector file is configured (synthetic corpora).
EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t d, std::uint64_t seed,
                                 double scale);

struct GoldSpan {
    std::size_t aspect = 0;
    std::size_t start = 0;  // 0-based
    std::size_t stop = 0;   // exclusive
};

struct Document {
    std::vector<std::size_t> tokens;  // padded to at least 4
    std::size_t length = 0;           // token count before padding
    std::size_t label = 0;            // classification
    std::vector<double> targets;      // regression, each in [0,1]
    std::vector<GoldSpan> gold_spans;
    std::vector<std::size_t> word_labels;  // optional, one per real token
};

enum class TaskKind { Classification, Regression };

struct Dataset {
    std::vector<Document> docs;
    TaskKind task = TaskKind::Classification;
    std::size_t n_classes = 0;  // classification
    std::size_t n_targets = 0;  // regression

    std::size_t size() const { return docs.size(); }
};

// TSV corpus: "label<TAB>text" or "t1,t2,...<TAB>text", optional third column
// "aspect:start-stop;..." with gold spans, optional fourth column with one
// integer word label per token. Lines starting with '#' ignored. n_classes 0
// means infer from the labels seen.
Dataset load_dataset(const std::string& path, TaskKind task, const Vocab& vocab,
                     std::size_t n_classes = 0);

// Shared largest-remainder apportionment: splits items into parts per class
// so every part deviates from its exact share by at most one.
std::vector<std::vector<std::size_t>> stratified_index_split(
    const std::vector<std::size_t>& labels, std::size_t n_classes,
    const std::vector<double>& fractions, std::uint64_t seed);

// Per-class counts in every part deviate from exact proportionality by at
// most one; deterministic per seed.
std::vector<Dataset> stratified_split(const Dataset& ds, const std::vector<double>& fractions,
                                      std::uint64_t seed);

std::vector<std::string> detokenize(const Document& doc, const Vocab& vocab);

}  // namespace educe
