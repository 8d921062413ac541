#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "educe/lstm.hpp"
#include "educe/rng.hpp"
#include "educe/tape.hpp"
#include "educe/text.hpp"

namespace educe {

// Excerpt stop offsets relative to the start word; offsets 3..10 give
// excerpts of 4 to 11 tokens (both endpoints included).
struct SpanWindow {
    std::size_t min_offset = 3;
    std::size_t max_offset = 10;
};

struct ModelDims {
    std::size_t concepts = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden = 0;
    std::size_t n_out = 0;  // |Y| for classification, T for regression
    TaskKind task = TaskKind::Classification;
};

// All trainable tensors. The alpha/theta/delta heads carry no bias terms.
struct EduceParams {
    EncoderParams encoder;
    Tensor gamma_start;  // C x 2H
    Tensor gamma_stop;   // C x 2H
    Tensor alpha;        // C x d
    Tensor theta;        // C x d
    Tensor delta;        // n_out x C
    TaskKind task = TaskKind::Classification;

    std::size_t concepts() const { return gamma_start.rows(); }
    std::size_t hidden() const { return encoder.hidden(); }
    std::size_t embed_dim() const { return alpha.cols(); }
    std::size_t n_out() const { return delta.rows(); }

    template <class F>
    void visit(F&& f) {
        f("encoder.fwd.wx", encoder.fwd.wx);
        f("encoder.fwd.wh", encoder.fwd.wh);
        f("encoder.fwd.b", encoder.fwd.b);
        f("encoder.bwd.wx", encoder.bwd.wx);
        f("encoder.bwd.wh", encoder.bwd.wh);
        f("encoder.bwd.b", encoder.bwd.b);
        f("gamma_start", gamma_start);
        f("gamma_stop", gamma_stop);
        f("alpha", alpha);
        f("theta", theta);
        f("delta", delta);
    }
    template <class F>
    void visit(F&& f) const {
        const_cast<EduceParams*>(this)->visit(
            [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }
};

EduceParams init_educe_params(const ModelDims& dims, std::uint64_t seed);

// Comparison model: full-text BiLSTM, mean pooling, linear head with bias.
struct FulltextParams {
    EncoderParams encoder;
    Tensor w;     // n_out x 2H
    Tensor bias;  // n_out
    TaskKind task = TaskKind::Classification;

    std::size_t hidden() const { return encoder.hidden(); }
    std::size_t n_out() const { return w.rows(); }

    template <class F>
    void visit(F&& f) {
        f("encoder.fwd.wx", encoder.fwd.wx);
        f("encoder.fwd.wh", encoder.fwd.wh);
        f("encoder.fwd.b", encoder.fwd.b);
        f("encoder.bwd.wx", encoder.bwd.wx);
        f("encoder.bwd.wh", encoder.bwd.wh);
        f("encoder.bwd.b", encoder.bwd.b);
        f("head.w", w);
        f("head.bias", bias);
    }
    template <class F>
    void visit(F&& f) const {
        const_cast<FulltextParams*>(this)->visit(
            [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }
};

FulltextParams init_fulltext_params(const ModelDims& dims, std::uint64_t seed);

template <class Params>
std::vector<std::string> param_names(const Params& p) {
    std::vector<std::string> names;
    p.visit([&](const char* name, const Tensor&) { names.emplace_back(name); });
    return names;
}

struct Span {
    std::size_t start = 0;
    std::size_t stop = 0;  // inclusive

    bool operator==(const Span& o) const { return start == o.start && stop == o.stop; }
};

struct EduceVals {
    LstmCellVals fwd, bwd;
    Val gamma_start, gamma_stop, alpha, theta, delta;
    std::vector<Val> ordered;  // canonical (visit) order
};

EduceVals bind_params(Tape& tape, const EduceParams& params);

std::vector<std::uint8_t> start_mask(std::size_t M, const SpanWindow& win);
std::vector<std::uint8_t> stop_mask(std::size_t M, std::size_t start, const SpanWindow& win);

// p_start(.|x,c): softmax over per-position scores with starts that cannot
// reach any stop masked out.
Val start_distribution(Tape& tape, Val enc_matrix, Val gamma_start, std::size_t concept_id,
                       const SpanWindow& win);
// p_stop(.|x,c,start): support is exactly start+min_offset .. min(start+max_offset, M-1).
Val stop_distribution(Tape& tape, Val enc_matrix, Val gamma_stop, std::size_t concept_id,
                      std::size_t start, const SpanWindow& win);

// Mean of the frozen embedding rows across the span, endpoints included.
Tensor pool_excerpt(const Span& span, const EmbeddingTable& emb,
                    const std::vector<std::size_t>& tokens);

// p_c = sigmoid(alpha_c . s_c); z ~ Bernoulli(p_c).
std::pair<Val, int> presence_head(Tape& tape, Val alpha, std::size_t concept_id, Val excerpt,
                                  Rng& rng);

// softmax(theta . s), no bias.
Val concept_classifier(Tape& tape, Val theta, Val excerpt);

struct ConceptExtraction {
    std::size_t concept_id = 0;
    Span span;
    Tensor excerpt;       // s_c
    double log_p_start = 0.0;
    double log_p_stop = 0.0;
    double presence_p = 0.0;  // p_c
    int z = 0;
    Tensor concept_probs;  // p_theta(.|s_c)

    Val p_start_dist, p_stop_dist;
    Val p_node;      // p_c
    Val st_node;     // straight-through z_c
    Val log_q_node;  // log p_theta(c|s_c)
    Val log_span_node;
};

// Everything sampled and computed in one stochastic forward pass. Never moved
// or copied: Val handles point into the owned tape.
struct ForwardTrace {
    Tape tape;
    EduceVals pv;
    std::vector<Val> enc;
    Val enc_matrix;
    std::vector<ConceptExtraction> concepts;
    std::vector<int> code;  // z
    Val output;             // class distribution or per-target prediction
    Tensor output_value;
    Val logprob_spans;  // sum_c (log p_start + log p_stop)
    double logprob_value = 0.0;
    std::size_t doc_len = 0;
    TaskKind task = TaskKind::Classification;

    ForwardTrace() = default;
    ForwardTrace(const ForwardTrace&) = delete;
    ForwardTrace& operator=(const ForwardTrace&) = delete;
};

enum class SampleMode { Sample, Argmax };

using TracePtr = std::unique_ptr<ForwardTrace>;

// Stochastic draws come from rng in fixed order: per concept start then stop
// (concepts ascending), then all z bits (concepts ascending).
TracePtr forward(const Document& doc, const EduceParams& params, const EmbeddingTable& emb,
                 const SpanWindow& win, Rng& rng, SampleMode mode = SampleMode::Sample);

// Same graph with spans and z pinned; used by the enumeration oracle and the
// trace-surgery tests. No rng draws.
TracePtr forward_forced(const Document& doc, const EduceParams& params,
                        const EmbeddingTable& emb, const SpanWindow& win,
                        const std::vector<Span>& spans, const std::vector<int>& z);

// The prediction as a function of (z, delta) alone, computed with the same
// primitive sequence as forward so results agree bit-for-bit.
Tensor output_from_code(const EduceParams& params, const std::vector<int>& code);

std::vector<Span> valid_spans(std::size_t M, const SpanWindow& win);

struct FulltextVals {
    LstmCellVals fwd, bwd;
    Val w, bias;
    std::vector<Val> ordered;
};

struct FulltextTrace {
    Tape tape;
    FulltextVals pv;
    Val output;
    Tensor output_value;

    FulltextTrace() = default;
    FulltextTrace(const FulltextTrace&) = delete;
    FulltextTrace& operator=(const FulltextTrace&) = delete;
};

std::unique_ptr<FulltextTrace> fulltext_forward(const Document& doc,
                                                const FulltextParams& params,
                                                const EmbeddingTable& emb);

// Versioned binary container with named, shape-checked sections.
struct Checkpoint {
    std::string model_kind;  // educe | no_concept | no_concept_l1 | fulltext_baseline
    TaskKind task = TaskKind::Classification;
    std::vector<std::pair<std::string, Tensor>> sections;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint to_checkpoint(const EduceParams& params, const std::string& model_kind);
Checkpoint to_checkpoint(const FulltextParams& params);
EduceParams educe_from_checkpoint(const Checkpoint& ck);
FulltextParams fulltext_from_checkpoint(const Checkpoint& ck);

}  // namespace educe
