#include "educe/model.hpp"

#include <algorithm>
#include <cmath>

namespace educe {

EduceParams init_educe_params(const ModelDims& dims, std::uint64_t seed) {
    if (dims.concepts == 0) throw ConfigError("init_educe_params: need at least one concept");
    EduceParams p;
    p.task = dims.task;
    p.encoder = init_encoder(dims.embed_dim, dims.hidden, mix_seed(seed, 0x11));
    Rng rng(mix_seed(seed, 0x22));
    auto fill = [&](Tensor& t, Shape shape) {
        t = Tensor::zeros(std::move(shape));
        for (auto& v : t.data) v = rng.uniform(-0.1, 0.1);
    };
    fill(p.gamma_start, {dims.concepts, 2 * dims.hidden});
    fill(p.gamma_stop, {dims.concepts, 2 * dims.hidden});
    fill(p.alpha, {dims.concepts, dims.embed_dim});
    fill(p.theta, {dims.concepts, dims.embed_dim});
    fill(p.delta, {dims.n_out, dims.concepts});
    return p;
}

FulltextParams init_fulltext_params(const ModelDims& dims, std::uint64_t seed) {
    FulltextParams p;
    p.task = dims.task;
    p.encoder = init_encoder(dims.embed_dim, dims.hidden, mix_seed(seed, 0x11));
    Rng rng(mix_seed(seed, 0x33));
    p.w = Tensor::zeros({dims.n_out, 2 * dims.hidden});
    for (auto& v : p.w.data) v = rng.uniform(-0.1, 0.1);
    p.bias = Tensor::zeros({dims.n_out});
    return p;
}

EduceVals bind_params(Tape& tape, const EduceParams& params) {
    EduceVals v;
    params.visit([&](const char*, const Tensor& t) { v.ordered.push_back(tape.leaf(t, true)); });
    v.fwd = {v.ordered[0], v.ordered[1], v.ordered[2]};
    v.bwd = {v.ordered[3], v.ordered[4], v.ordered[5]};
    v.gamma_start = v.ordered[6];
    v.gamma_stop = v.ordered[7];
    v.alpha = v.ordered[8];
    v.theta = v.ordered[9];
    v.delta = v.ordered[10];
    return v;
}

std::vector<std::uint8_t> start_mask(std::size_t M, const SpanWindow& win) {
    std::vector<std::uint8_t> mask(M, 0);
    for (std::size_t k = 0; k < M; ++k)
        if (k + win.min_offset <= M - 1) mask[k] = 1;
    return mask;
}

std::vector<std::uint8_t> stop_mask(std::size_t M, std::size_t start, const SpanWindow& win) {
    std::vector<std::uint8_t> mask(M, 0);
    const std::size_t lo = start + win.min_offset;
    const std::size_t hi = std::min(start + win.max_offset, M - 1);
    for (std::size_t k = lo; k <= hi && k < M; ++k) mask[k] = 1;
    return mask;
}

std::vector<Span> valid_spans(std::size_t M, const SpanWindow& win) {
    std::vector<Span> spans;
    for (std::size_t k = 0; k + win.min_offset <= M - 1; ++k) {
        const std::size_t hi = std::min(k + win.max_offset, M - 1);
        for (std::size_t stop = k + win.min_offset; stop <= hi; ++stop)
            spans.push_back({k, stop});
    }
    return spans;
}

Val start_distribution(Tape& tape, Val enc_matrix, Val gamma_start, std::size_t concept_id,
                       const SpanWindow& win) {
    const std::size_t M = tape.value(enc_matrix).rows();
    Val scores = tape.matvec(enc_matrix, tape.row(gamma_start, concept_id));
    return tape.masked_softmax(scores, start_mask(M, win));
}

Val stop_distribution(Tape& tape, Val enc_matrix, Val gamma_stop, std::size_t concept_id,
                      std::size_t start, const SpanWindow& win) {
    const std::size_t M = tape.value(enc_matrix).rows();
    Val scores = tape.matvec(enc_matrix, tape.row(gamma_stop, concept_id));
    return tape.masked_softmax(scores, stop_mask(M, start, win));
}

Tensor pool_excerpt(const Span& span, const EmbeddingTable& emb,
                    const std::vector<std::size_t>& tokens) {
    return emb.mean_of(tokens, span.start, span.stop);
}

std::pair<Val, int> presence_head(Tape& tape, Val alpha, std::size_t concept_id, Val excerpt,
                                  Rng& rng) {
    Val p = tape.sigmoid(tape.dot(tape.row(alpha, concept_id), excerpt));
    const int z = rng.bernoulli(tape.scalar(p)) ? 1 : 0;
    return {p, z};
}

Val concept_classifier(Tape& tape, Val theta, Val excerpt) {
    Val logits = tape.matvec(theta, excerpt);
    return tape.masked_softmax(logits, std::vector<std::uint8_t>(tape.value(logits).numel(), 1));
}

namespace {

std::size_t argmax_index(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i)
        if (t.data[i] > t.data[best]) best = i;
    return best;
}

TracePtr forward_impl(const Document& doc, const EduceParams& params,
                      const EmbeddingTable& emb, const SpanWindow& win, Rng* rng,
                      SampleMode mode, const std::vector<Span>* forced_spans,
                      const std::vector<int>* forced_z) {
    const std::size_t M = doc.tokens.size();
    if (M < win.min_offset + 1)
        throw MaskError("forward: document of length " + std::to_string(M) +
                        " admits no valid span");
    const std::size_t C = params.concepts();

    auto trace = std::make_unique<ForwardTrace>();
    ForwardTrace& tr = *trace;
    tr.doc_len = M;
    tr.task = params.task;
    tr.pv = bind_params(tr.tape, params);
    tr.enc = encode_bidirectional(tr.tape, doc.tokens, emb, tr.pv.fwd, tr.pv.bwd,
                                  params.hidden());
    tr.enc_matrix = tr.tape.stack_rows(tr.enc);

    tr.concepts.resize(C);
    // spans first: concept 0..C-1, start before stop
    for (std::size_t c = 0; c < C; ++c) {
        ConceptExtraction& ex = tr.concepts[c];
        ex.concept_id = c;
        ex.p_start_dist = start_distribution(tr.tape, tr.enc_matrix, tr.pv.gamma_start, c, win);
        std::size_t k0;
        if (forced_spans)
            k0 = (*forced_spans)[c].start;
        else if (mode == SampleMode::Argmax)
            k0 = argmax_index(tr.tape.value(ex.p_start_dist));
        else
            k0 = rng->categorical(tr.tape.value(ex.p_start_dist).data);

        ex.p_stop_dist = stop_distribution(tr.tape, tr.enc_matrix, tr.pv.gamma_stop, c, k0, win);
        std::size_t stop;
        if (forced_spans)
            stop = (*forced_spans)[c].stop;
        else if (mode == SampleMode::Argmax)
            stop = argmax_index(tr.tape.value(ex.p_stop_dist));
        else
            stop = rng->categorical(tr.tape.value(ex.p_stop_dist).data);

        ex.span = {k0, stop};
        Val lps = tr.tape.log(tr.tape.pick(ex.p_start_dist, k0));
        Val lpt = tr.tape.log(tr.tape.pick(ex.p_stop_dist, stop));
        ex.log_p_start = tr.tape.scalar(lps);
        ex.log_p_stop = tr.tape.scalar(lpt);
        ex.log_span_node = tr.tape.add(lps, lpt);
        ex.excerpt = pool_excerpt(ex.span, emb, doc.tokens);
    }

    // then all z bits, concept 0..C-1
    tr.code.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        ConceptExtraction& ex = tr.concepts[c];
        Val s_const = tr.tape.leaf(ex.excerpt, true);
        ex.p_node = tr.tape.sigmoid(tr.tape.dot(tr.tape.row(tr.pv.alpha, c), s_const));
        ex.presence_p = tr.tape.scalar(ex.p_node);
        int z;
        if (forced_z)
            z = (*forced_z)[c];
        else if (mode == SampleMode::Argmax)
            z = ex.presence_p >= 0.5 ? 1 : 0;
        else
            z = rng->bernoulli(ex.presence_p) ? 1 : 0;
        ex.z = z;
        tr.code[c] = z;
        ex.st_node = tr.tape.st_sample(ex.p_node, static_cast<double>(z));

        Val q = concept_classifier(tr.tape, tr.pv.theta, s_const);
        ex.concept_probs = tr.tape.value(q);
        ex.log_q_node = tr.tape.log(tr.tape.pick(q, c));
    }

    std::vector<Val> bits;
    bits.reserve(C);
    for (auto& ex : tr.concepts) bits.push_back(ex.st_node);
    Val zvec = tr.tape.concat(bits);
    Val logits = tr.tape.matvec(tr.pv.delta, zvec);
    if (params.task == TaskKind::Classification)
        tr.output = tr.tape.masked_softmax(logits,
                                           std::vector<std::uint8_t>(params.n_out(), 1));
    else
        tr.output = tr.tape.sigmoid(logits);
    tr.output_value = tr.tape.value(tr.output);

    Val lp = tr.concepts[0].log_span_node;
    for (std::size_t c = 1; c < C; ++c) lp = tr.tape.add(lp, tr.concepts[c].log_span_node);
    tr.logprob_spans = lp;
    tr.logprob_value = tr.tape.scalar(lp);
    return trace;
}

}  // namespace

TracePtr forward(const Document& doc, const EduceParams& params, const EmbeddingTable& emb,
                 const SpanWindow& win, Rng& rng, SampleMode mode) {
    return forward_impl(doc, params, emb, win, &rng, mode, nullptr, nullptr);
}

TracePtr forward_forced(const Document& doc, const EduceParams& params,
                        const EmbeddingTable& emb, const SpanWindow& win,
                        const std::vector<Span>& spans, const std::vector<int>& z) {
    if (spans.size() != params.concepts() || z.size() != params.concepts())
        throw ShapeError("forward_forced: need one span and one bit per concept");
    return forward_impl(doc, params, emb, win, nullptr, SampleMode::Sample, &spans, &z);
}

Tensor output_from_code(const EduceParams& params, const std::vector<int>& code) {
    if (code.size() != params.concepts())
        throw ShapeError("output_from_code: code length " + std::to_string(code.size()) +
                         " vs " + std::to_string(params.concepts()) + " concepts");
    Tape tape;
    Val delta = tape.leaf(params.delta, true);
    std::vector<double> bits(code.begin(), code.end());
    Val logits = tape.matvec(delta, tape.leaf(Tensor::vec(std::move(bits))));
    if (params.task == TaskKind::Classification) {
        Val out = tape.masked_softmax(logits, std::vector<std::uint8_t>(params.n_out(), 1));
        return tape.value(out);
    }
    return tape.value(tape.sigmoid(logits));
}

std::unique_ptr<FulltextTrace> fulltext_forward(const Document& doc,
                                                const FulltextParams& params,
                                                const EmbeddingTable& emb) {
    auto trace = std::make_unique<FulltextTrace>();
    FulltextTrace& tr = *trace;
    params.visit([&](const char*, const Tensor& t) { tr.pv.ordered.push_back(tr.tape.leaf(t, true)); });
    tr.pv.fwd = {tr.pv.ordered[0], tr.pv.ordered[1], tr.pv.ordered[2]};
    tr.pv.bwd = {tr.pv.ordered[3], tr.pv.ordered[4], tr.pv.ordered[5]};
    tr.pv.w = tr.pv.ordered[6];
    tr.pv.bias = tr.pv.ordered[7];

    auto enc = encode_bidirectional(tr.tape, doc.tokens, emb, tr.pv.fwd, tr.pv.bwd,
                                    params.hidden());
    Val mat = tr.tape.stack_rows(enc);
    Val pooled = tr.tape.mean_rows(mat, 0, doc.tokens.size());
    Val logits = tr.tape.add(tr.tape.matvec(tr.pv.w, pooled), tr.pv.bias);
    if (params.task == TaskKind::Classification)
        tr.output = tr.tape.masked_softmax(logits, std::vector<std::uint8_t>(params.n_out(), 1));
    else
        tr.output = tr.tape.sigmoid(logits);
    tr.output_value = tr.tape.value(tr.output);
    return trace;
}

}  // namespace educe
