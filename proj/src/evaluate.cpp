#include "educe/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "educe/train.hpp"

namespace educe {

namespace {

std::size_t argmax_index(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i)
        if (t.data[i] > t.data[best]) best = i;
    return best;
}

TracePtr eval_forward(const EduceParams& params, const Document& doc, const EmbeddingTable& emb,
                      const EvalConfig& ec, std::size_t doc_index) {
    Rng doc_rng(mix_seed(ec.eval_seed, doc_index));
    return forward(doc, params, emb, ec.window, doc_rng,
                   ec.argmax ? SampleMode::Argmax : SampleMode::Sample);
}

}  // namespace

double evaluate_output(const EduceParams& params, const Dataset& ds, const EmbeddingTable& emb,
                       const EvalConfig& ec) {
    if (ds.docs.empty()) throw DataError("evaluate_output: empty dataset");
    std::size_t correct = 0;
    double se = 0.0;
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        auto tr = eval_forward(params, ds.docs[i], emb, ec, i);
        if (ds.task == TaskKind::Classification) {
            if (argmax_index(tr->output_value) == ds.docs[i].label) ++correct;
        } else {
            const auto& targets = ds.docs[i].targets;
            for (std::size_t j = 0; j < targets.size(); ++j) {
                const double d = tr->output_value.data[j] - targets[j];
                se += d * d / static_cast<double>(targets.size());
            }
        }
    }
    const double n = static_cast<double>(ds.docs.size());
    return ds.task == TaskKind::Classification ? static_cast<double>(correct) / n : se / n;
}

namespace {

// bias-free linear softmax head, trainable with adam_step
struct LinearProbe {
    Tensor w;  // C x d

    template <class F>
    void visit(F&& f) {
        f("w", w);
    }
    template <class F>
    void visit(F&& f) const {
        f("w", static_cast<const Tensor&>(w));
    }
};

}  // namespace

PosterioriResult posteriori_concept_accuracy(const EduceParams& params, const Dataset& ds,
                                             const EmbeddingTable& emb, const EvalConfig& ec,
                                             std::uint64_t split_seed) {
    const std::size_t C = params.concepts();
    std::vector<Tensor> excerpts;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        auto tr = eval_forward(params, ds.docs[i], emb, ec, i);
        for (const auto& ex : tr->concepts) {
            if (!ex.z) continue;
            excerpts.push_back(ex.excerpt);
            labels.push_back(ex.concept_id);
        }
    }

    PosterioriResult res;
    res.excerpts_collected = labels.size();

    // concepts with a single excerpt cannot be stratified into two parts
    std::vector<std::size_t> per_concept(C, 0);
    for (auto c : labels) ++per_concept[c];
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (per_concept[labels[i]] >= 2) keep.push_back(i);
    res.dropped_singletons = labels.size() - keep.size();

    std::set<std::size_t> distinct;
    for (auto i : keep) distinct.insert(labels[i]);
    res.concepts_used = distinct.size();
    if (distinct.size() < 2)
        throw DegenerateProtocolError(
            "posteriori_concept_accuracy: fewer than 2 distinct concepts present (" +
            std::to_string(distinct.size()) + ")");

    std::vector<std::size_t> kept_labels;
    kept_labels.reserve(keep.size());
    for (auto i : keep) kept_labels.push_back(labels[i]);
    const auto parts = stratified_index_split(kept_labels, C, {0.8, 0.2}, split_seed);
    res.n_train = parts[0].size();
    res.n_test = parts[1].size();
    if (parts[1].empty())
        throw DegenerateProtocolError("posteriori_concept_accuracy: empty held-out side");

    const std::size_t d = params.embed_dim();
    LinearProbe probe;
    probe.w = Tensor::zeros({C, d});
    OptimizerState opt;
    // full-batch softmax cross-entropy; gradient has the closed form (q - e_c) s^T
    for (std::size_t epoch = 0; epoch < 200; ++epoch) {
        GradSet grads = grads_like(probe);
        for (auto pi : parts[0]) {
            const Tensor& s = excerpts[keep[pi]];
            const std::size_t label = kept_labels[pi];
            std::vector<double> logits(C, 0.0);
            double mx = -1e300;
            for (std::size_t c = 0; c < C; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += probe.w.at(c, j) * s.data[j];
                logits[c] = acc;
                mx = std::max(mx, acc);
            }
            double z = 0.0;
            for (auto& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (std::size_t c = 0; c < C; ++c) {
                const double q = logits[c] / z;
                const double coef = (q - (c == label ? 1.0 : 0.0)) /
                                    static_cast<double>(parts[0].size());
                for (std::size_t j = 0; j < d; ++j) grads[0].at(c, j) += coef * s.data[j];
            }
        }
        adam_step(probe, std::move(grads), opt, 1e-2, 0.0);
    }

    std::size_t correct = 0;
    for (auto pi : parts[1]) {
        const Tensor& s = excerpts[keep[pi]];
        std::size_t best = 0;
        double best_v = -1e300;
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += probe.w.at(c, j) * s.data[j];
            if (acc > best_v) {
                best_v = acc;
                best = c;
            }
        }
        if (best == kept_labels[pi]) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(parts[1].size());
    return res;
}

double sparsity(const EduceParams& params, const Dataset& ds, const EmbeddingTable& emb,
                const EvalConfig& ec) {
    if (ds.docs.empty()) throw DataError("sparsity: empty dataset");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        auto tr = eval_forward(params, ds.docs[i], emb, ec, i);
        for (int z : tr->code) total += z;
    }
    return total / static_cast<double>(ds.docs.size());
}

RationaleReport rationale_precision(const EduceParams& params, const Dataset& ds,
                                    const EmbeddingTable& emb, const EvalConfig& ec,
                                    std::size_t n_aspects) {
    const std::size_t C = params.concepts();
    RationaleReport rep;
    rep.concepts = C;
    rep.aspects = n_aspects;
    rep.precision = Tensor::zeros({C, n_aspects});
    rep.selected_tokens.assign(C, 0);
    rep.presence_count.assign(C, 0);

    std::vector<std::vector<std::size_t>> inside(C, std::vector<std::size_t>(n_aspects, 0));
    std::size_t union_selected = 0, corpus_tokens = 0;
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        const Document& doc = ds.docs[i];
        auto tr = eval_forward(params, doc, emb, ec, i);
        corpus_tokens += doc.length;
        std::vector<std::uint8_t> covered(doc.length, 0);
        for (const auto& ex : tr->concepts) {
            if (!ex.z) continue;
            ++rep.presence_count[ex.concept_id];
            for (std::size_t k = ex.span.start; k <= ex.span.stop; ++k) {
                if (k >= doc.length) continue;  // padding carries no text
                covered[k] = 1;
                ++rep.selected_tokens[ex.concept_id];
                for (const auto& g : doc.gold_spans)
                    if (g.aspect < n_aspects && k >= g.start && k < g.stop)
                        ++inside[ex.concept_id][g.aspect];
            }
        }
        for (auto c : covered) union_selected += c;
    }

    for (std::size_t c = 0; c < C; ++c) {
        if (rep.selected_tokens[c] > 0) rep.any_present = true;
        for (std::size_t a = 0; a < n_aspects; ++a)
            rep.precision.at(c, a) =
                rep.selected_tokens[c]
                    ? static_cast<double>(inside[c][a]) / static_cast<double>(rep.selected_tokens[c])
                    : 0.0;
    }
    rep.extraction_fraction =
        corpus_tokens ? static_cast<double>(union_selected) / static_cast<double>(corpus_tokens)
                      : 0.0;
    return rep;
}

std::vector<std::vector<std::size_t>> label_repartition(const EduceParams& params,
                                                        const Dataset& ds,
                                                        const EmbeddingTable& emb,
                                                        const EvalConfig& ec,
                                                        std::size_t n_word_labels,
                                                        std::size_t neutral_label) {
    const std::size_t C = params.concepts();
    std::vector<std::vector<std::size_t>> hist(C, std::vector<std::size_t>(n_word_labels, 0));
    for (std::size_t i = 0; i < ds.docs.size(); ++i) {
        const Document& doc = ds.docs[i];
        if (doc.word_labels.empty()) continue;
        auto tr = eval_forward(params, doc, emb, ec, i);
        for (const auto& ex : tr->concepts) {
            if (!ex.z) continue;
            for (std::size_t k = ex.span.start; k <= ex.span.stop; ++k) {
                if (k >= doc.length) continue;
                const std::size_t wl = doc.word_labels[k];
                if (wl == neutral_label || wl >= n_word_labels) continue;
                ++hist[ex.concept_id][wl];
            }
        }
    }
    return hist;
}

ExactExpectation exact_expectation(const Document& doc, const EduceParams& params,
                                   const EmbeddingTable& emb, const SpanWindow& win,
                                   const LossConfig& lc, std::size_t budget) {
    const std::size_t M = doc.tokens.size();
    const std::size_t C = params.concepts();
    const auto spans = valid_spans(M, win);
    const std::size_t S = spans.size();

    double config_count = std::pow(static_cast<double>(S), static_cast<double>(C)) *
                          std::pow(2.0, static_cast<double>(C));
    if (config_count > static_cast<double>(budget))
        throw BudgetError("exact_expectation: " + std::to_string(config_count) +
                          " configurations exceed budget " + std::to_string(budget));

    Tape tape;
    EduceVals pv = bind_params(tape, params);
    auto enc = encode_bidirectional(tape, doc.tokens, emb, pv.fwd, pv.bwd, params.hidden());
    Val enc_matrix = tape.stack_rows(enc);

    // per-concept start distributions, per-(concept,start) stop distributions
    std::vector<Val> p_start(C);
    std::vector<std::map<std::size_t, Val>> p_stop(C);
    for (std::size_t c = 0; c < C; ++c) {
        p_start[c] = start_distribution(tape, enc_matrix, pv.gamma_start, c, win);
        for (const auto& sp : spans)
            if (!p_stop[c].count(sp.start))
                p_stop[c][sp.start] =
                    stop_distribution(tape, enc_matrix, pv.gamma_stop, c, sp.start, win);
    }

    // per-(concept, span): span probability, presence/absence factors, and the
    // lambda-scaled concept loss term
    std::vector<std::vector<Val>> span_p(C, std::vector<Val>(S));
    std::vector<std::vector<Val>> present_f(C, std::vector<Val>(S));
    std::vector<std::vector<Val>> absent_f(C, std::vector<Val>(S));
    std::vector<std::vector<Val>> concept_term(C, std::vector<Val>(S));
    Val one = tape.scalar_leaf(1.0);
    for (std::size_t s = 0; s < S; ++s) {
        Val pooled = tape.leaf(pool_excerpt(spans[s], emb, doc.tokens));
        for (std::size_t c = 0; c < C; ++c) {
            span_p[c][s] = tape.mul(tape.pick(p_start[c], spans[s].start),
                                    tape.pick(p_stop[c].at(spans[s].start), spans[s].stop));
            Val p = tape.sigmoid(tape.dot(tape.row(pv.alpha, c), pooled));
            present_f[c][s] = tape.mul(span_p[c][s], p);
            absent_f[c][s] = tape.mul(span_p[c][s], tape.add(one, tape.scale(p, -1.0)));
            Val q = concept_classifier(tape, pv.theta, pooled);
            concept_term[c][s] = tape.scale(tape.log(tape.pick(q, c)), -lc.lambda);
        }
    }

    // output loss per z configuration
    const std::size_t n_z = static_cast<std::size_t>(1) << C;
    std::vector<Val> out_loss(n_z);
    for (std::size_t zc = 0; zc < n_z; ++zc) {
        std::vector<double> bits(C);
        for (std::size_t c = 0; c < C; ++c) bits[c] = (zc >> c) & 1 ? 1.0 : 0.0;
        Val logits = tape.matvec(pv.delta, tape.leaf(Tensor::vec(bits)));
        if (lc.task == TaskKind::Classification) {
            Val dist = tape.masked_softmax(logits,
                                           std::vector<std::uint8_t>(params.n_out(), 1));
            out_loss[zc] = tape.scale(tape.log(tape.pick(dist, doc.label)), -1.0);
        } else {
            Val pred = tape.sigmoid(logits);
            Val target = tape.leaf(Tensor::vec(doc.targets));
            Val diff = tape.add(pred, tape.scale(target, -1.0));
            out_loss[zc] = tape.scale(tape.sum(tape.mul(diff, diff)),
                                      1.0 / static_cast<double>(doc.targets.size()));
        }
    }

    ExactExpectation res;
    Val e_loss{};
    Val p_sum{};
    bool first = true;
    std::vector<std::size_t> pick(C, 0);  // span odometer
    while (true) {
        for (std::size_t zc = 0; zc < n_z; ++zc) {
            // configuration probability
            Val w = (zc & 1) ? present_f[0][pick[0]] : absent_f[0][pick[0]];
            for (std::size_t c = 1; c < C; ++c)
                w = tape.mul(w, (zc >> c) & 1 ? present_f[c][pick[c]] : absent_f[c][pick[c]]);
            // configuration loss
            Val loss = out_loss[zc];
            for (std::size_t c = 0; c < C; ++c)
                if ((zc >> c) & 1) loss = tape.add(loss, concept_term[c][pick[c]]);
            if (lc.lambda_l1 != 0.0) {
                double zsum = 0.0;
                for (std::size_t c = 0; c < C; ++c) zsum += (zc >> c) & 1;
                loss = tape.add(loss, tape.scalar_leaf(lc.lambda_l1 * zsum));
            }
            Val contrib = tape.mul(w, loss);
            e_loss = first ? contrib : tape.add(e_loss, contrib);
            p_sum = first ? w : tape.add(p_sum, w);
            first = false;
            ++res.configurations;
        }
        // advance odometer
        std::size_t c = 0;
        while (c < C && ++pick[c] == S) {
            pick[c] = 0;
            ++c;
        }
        if (c == C) break;
    }

    res.expected_loss = tape.scalar(e_loss);
    res.prob_sum = tape.scalar(p_sum);
    tape.backward(e_loss);
    for (Val v : pv.ordered) res.grads.push_back(tape.grad(v));
    return res;
}

Explanation explain(const EduceParams& params, const Document& doc, std::size_t doc_id,
                    const Vocab& vocab, const EmbeddingTable& emb, const EvalConfig& ec) {
    auto tr = eval_forward(params, doc, emb, ec, doc_id);
    Explanation ex;
    ex.doc_id = doc_id;
    ex.task = params.task;
    if (params.task == TaskKind::Classification) {
        ex.pred = argmax_index(tr->output_value);
        ex.label = doc.label;
    } else {
        ex.pred_values.assign(tr->output_value.data.begin(), tr->output_value.data.end());
        ex.label_values = doc.targets;
    }
    for (const auto& ce : tr->concepts) {
        ConceptRecord rec;
        rec.concept_id = ce.concept_id;
        rec.present = ce.z != 0;
        rec.start = ce.span.start;
        rec.stop = ce.span.stop;
        for (std::size_t k = ce.span.start; k <= ce.span.stop; ++k)
            rec.tokens.push_back(vocab.token(doc.tokens[k]));
        rec.p = ce.presence_p;
        rec.argmax_concept = argmax_index(ce.concept_probs);
        ex.concepts.push_back(std::move(rec));
    }
    return ex;
}

std::string explanation_json(const Explanation& ex) {
    nlohmann::ordered_json j;
    j["doc_id"] = ex.doc_id;
    if (ex.task == TaskKind::Classification) {
        j["pred"] = ex.pred;
        j["label"] = ex.label;
    } else {
        j["pred"] = ex.pred_values;
        j["label"] = ex.label_values;
    }
    j["concepts"] = nlohmann::ordered_json::array();
    for (const auto& rec : ex.concepts) {
        nlohmann::ordered_json c;
        c["c"] = rec.concept_id;
        c["present"] = rec.present;
        c["start"] = rec.start;
        c["stop"] = rec.stop;
        c["tokens"] = rec.tokens;
        c["p"] = rec.p;
        c["argmax_concept"] = rec.argmax_concept;
        j["concepts"].push_back(std::move(c));
    }
    return j.dump();
}

Explanation explanation_from_json(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    Explanation ex;
    ex.doc_id = j.at("doc_id").get<std::size_t>();
    if (j.at("pred").is_array()) {
        ex.task = TaskKind::Regression;
        ex.pred_values = j.at("pred").get<std::vector<double>>();
        ex.label_values = j.at("label").get<std::vector<double>>();
    } else {
        ex.task = TaskKind::Classification;
        ex.pred = j.at("pred").get<std::size_t>();
        ex.label = j.at("label").get<std::size_t>();
    }
    for (const auto& c : j.at("concepts")) {
        ConceptRecord rec;
        rec.concept_id = c.at("c").get<std::size_t>();
        rec.present = c.at("present").get<bool>();
        rec.start = c.at("start").get<std::size_t>();
        rec.stop = c.at("stop").get<std::size_t>();
        rec.tokens = c.at("tokens").get<std::vector<std::string>>();
        rec.p = c.at("p").get<double>();
        rec.argmax_concept = c.at("argmax_concept").get<std::size_t>();
        ex.concepts.push_back(std::move(rec));
    }
    return ex;
}

UnbiasednessReport check_unbiasedness(const Document& doc, const EduceParams& params,
                                      const EmbeddingTable& emb, const SpanWindow& win,
                                      const LossConfig& lc, std::size_t samples,
                                      std::uint64_t seed, bool include_encoder) {
    const auto exact = exact_expectation(doc, params, emb, win, lc);
    const auto names = param_names(params);

    // blocks compared: score-function estimator for gamma (+ encoder),
    // pathwise for delta and theta; alpha is straight-through (biased by
    // construction) and is checked separately in its saturation regime.
    std::vector<std::size_t> rl_blocks = {6, 7};  // gamma_start, gamma_stop
    if (include_encoder)
        for (std::size_t p = 0; p < 6; ++p) rl_blocks.push_back(p);
    const std::vector<std::size_t> path_blocks = {10, 9};  // delta, theta

    std::vector<Tensor> rl_sum, rl_sumsq, path_sum, path_sumsq;
    params.visit([&](const char*, const Tensor& t) {
        rl_sum.push_back(Tensor::zeros(t.shape));
        rl_sumsq.push_back(Tensor::zeros(t.shape));
        path_sum.push_back(Tensor::zeros(t.shape));
        path_sumsq.push_back(Tensor::zeros(t.shape));
    });

    double loss_sum = 0.0, loss_sumsq = 0.0;
    Rng rng(seed);
    for (std::size_t n = 0; n < samples; ++n) {
        Rng draw(rng.next_u64());
        auto tr = forward(doc, params, emb, win, draw);
        LossNodes ln = compute_losses(*tr, doc, lc);
        const double L = ln.values.joint;
        loss_sum += L;
        loss_sumsq += L * L;

        tr->tape.backward(tr->logprob_spans);
        for (auto p : rl_blocks) {
            const Tensor g = tr->tape.grad(tr->pv.ordered[p]);
            for (std::size_t j = 0; j < g.numel(); ++j) {
                const double est = L * g.data[j];  // b = 0
                rl_sum[p].data[j] += est;
                rl_sumsq[p].data[j] += est * est;
            }
        }
        tr->tape.backward(ln.joint);
        for (auto p : path_blocks) {
            const Tensor g = tr->tape.grad(tr->pv.ordered[p]);
            for (std::size_t j = 0; j < g.numel(); ++j) {
                path_sum[p].data[j] += g.data[j];
                path_sumsq[p].data[j] += g.data[j] * g.data[j];
            }
        }
    }

    UnbiasednessReport rep;
    rep.samples = samples;
    rep.exact_loss = exact.expected_loss;
    const double N = static_cast<double>(samples);
    rep.mc_loss_mean = loss_sum / N;
    const double loss_var = std::max(0.0, (loss_sumsq / N - rep.mc_loss_mean * rep.mc_loss_mean) *
                                              N / (N - 1.0));
    rep.mc_loss_se = std::sqrt(loss_var / N);
    rep.loss_ok = std::abs(rep.mc_loss_mean - rep.exact_loss) <=
                  3.0 * std::max(rep.mc_loss_se, 1e-12);

    auto block_check = [&](std::size_t p, const std::vector<Tensor>& sum,
                           const std::vector<Tensor>& sumsq, const char* tag) {
        BlockCheck bc;
        bc.name = std::string(names[p]) + " (" + tag + ")";
        bc.coordinates = sum[p].numel();
        bc.ok = true;
        for (std::size_t j = 0; j < sum[p].numel(); ++j) {
            const double mean = sum[p].data[j] / N;
            const double var = std::max(
                0.0, (sumsq[p].data[j] / N - mean * mean) * N / (N - 1.0));
            const double se = std::sqrt(var / N);
            const double diff = std::abs(mean - exact.grads[p].data[j]);
            if (se > 0.0) {
                const double zscore = diff / se;
                bc.max_abs_z = std::max(bc.max_abs_z, zscore);
                if (zscore > 3.0) bc.ok = false;
            } else if (diff > 1e-9 * std::max(1.0, std::abs(exact.grads[p].data[j]))) {
                bc.ok = false;
                bc.max_abs_z = 1e300;
            }
        }
        rep.blocks.push_back(bc);
    };
    for (auto p : rl_blocks) block_check(p, rl_sum, rl_sumsq, "score-function");
    for (auto p : path_blocks) block_check(p, path_sum, path_sumsq, "pathwise");

    rep.all_ok = rep.loss_ok;
    for (const auto& b : rep.blocks) rep.all_ok = rep.all_ok && b.ok;
    return rep;
}

}  // namespace educe
