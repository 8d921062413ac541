#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "educe/losses.hpp"
#include "educe/model.hpp"

namespace educe {

struct EvalConfig {
    SpanWindow window;
    std::uint64_t eval_seed = 9001;
    bool argmax = false;  // qualitative dumps only; metrics use sampled traces
};

// Classification: accuracy of the argmax prediction under one sampled forward
// per document. Regression: mean squared error.
double evaluate_output(const EduceParams& params, const Dataset& ds, const EmbeddingTable& emb,
                       const EvalConfig& ec);

struct PosterioriResult {
    double accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t concepts_used = 0;      // distinct concepts entering the protocol
    std::size_t excerpts_collected = 0;
    std::size_t dropped_singletons = 0;  // concepts with one excerpt cannot be split
};

// Gathers (s_c, c) pairs with z_c = 1, splits them 80/20 stratified by
// concept, trains a fresh bias-free linear softmax classifier (Adam, 200
// epochs, lr 1e-2) on the large side and reports accuracy on the held-out
// side. Fewer than two distinct concepts present raises
// DegenerateProtocolError rather than reporting a vacuous score.
PosterioriResult posteriori_concept_accuracy(const EduceParams& params, const Dataset& ds,
                                             const EmbeddingTable& emb, const EvalConfig& ec,
                                             std::uint64_t split_seed);

// Mean number of present bits per document.
double sparsity(const EduceParams& params, const Dataset& ds, const EmbeddingTable& emb,
                const EvalConfig& ec);

struct RationaleReport {
    std::size_t concepts = 0;
    std::size_t aspects = 0;
    Tensor precision;                          // C x A, fractions in [0,1]
    std::vector<std::size_t> selected_tokens;  // per concept, denominator
    std::vector<std::size_t> presence_count;   // per concept
    double extraction_fraction = 0.0;          // |union of selected| / corpus tokens
    bool any_present = false;
};

// precision(c,a): fraction of tokens selected by concept c (over documents
// where z_c = 1, padding excluded) lying inside aspect a's gold spans.
RationaleReport rationale_precision(const EduceParams& params, const Dataset& ds,
                                    const EmbeddingTable& emb, const EvalConfig& ec,
                                    std::size_t n_aspects);

// histogram[c][label]: counts of word labels over tokens of concept c's
// present excerpts; the neutral class column is zeroed out of the report.
std::vector<std::vector<std::size_t>> label_repartition(const EduceParams& params,
                                                        const Dataset& ds,
                                                        const EmbeddingTable& emb,
                                                        const EvalConfig& ec,
                                                        std::size_t n_word_labels,
                                                        std::size_t neutral_label);

struct ExactExpectation {
    double expected_loss = 0.0;
    std::vector<Tensor> grads;  // parameters' visit order
    double prob_sum = 0.0;      // sum of configuration probabilities
    std::size_t configurations = 0;
};

// Enumerates every joint configuration (one span per concept, one bit per
// concept), weights each configuration's loss by its exact probability and
// differentiates the weighted sum pathwise. Feasible only at desk scale;
// throws BudgetError beyond `budget` configurations.
ExactExpectation exact_expectation(const Document& doc, const EduceParams& params,
                                   const EmbeddingTable& emb, const SpanWindow& win,
                                   const LossConfig& lc, std::size_t budget = 1000000);

struct ConceptRecord {
    std::size_t concept_id = 0;
    bool present = false;
    std::size_t start = 0;
    std::size_t stop = 0;
    std::vector<std::string> tokens;
    double p = 0.0;
    std::size_t argmax_concept = 0;
};

struct Explanation {
    std::size_t doc_id = 0;
    std::size_t pred = 0;             // classification argmax
    std::vector<double> pred_values;  // regression predictions
    std::size_t label = 0;
    std::vector<double> label_values;
    std::vector<ConceptRecord> concepts;
    TaskKind task = TaskKind::Classification;
};

Explanation explain(const EduceParams& params, const Document& doc, std::size_t doc_id,
                    const Vocab& vocab, const EmbeddingTable& emb, const EvalConfig& ec);

// One JSON object per line; key order fixed so identical seeds give identical
// bytes.
std::string explanation_json(const Explanation& ex);
Explanation explanation_from_json(const std::string& line);

struct BlockCheck {
    std::string name;
    double max_abs_z = 0.0;
    std::size_t coordinates = 0;
    bool ok = false;
};

struct UnbiasednessReport {
    double exact_loss = 0.0;
    double mc_loss_mean = 0.0;
    double mc_loss_se = 0.0;
    bool loss_ok = false;
    std::vector<BlockCheck> blocks;
    bool all_ok = false;
    std::size_t samples = 0;
};

// Monte-Carlo means of the stochastic estimators against exact enumeration:
// score-function gradients (reward = joint loss, b = 0) for gamma blocks (and
// optionally the encoder), pathwise gradients for delta and theta. Every
// coordinate must lie within 3 standard errors of the exact gradient.
UnbiasednessReport check_unbiasedness(const Document& doc, const EduceParams& params,
                                      const EmbeddingTable& emb, const SpanWindow& win,
                                      const LossConfig& lc, std::size_t samples,
                                      std::uint64_t seed, bool include_encoder);

}  // namespace educe
