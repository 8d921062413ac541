#include "educe/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "educe/parallel.hpp"

namespace educe {

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Educe: return "educe";
        case ModelKind::NoConcept: return "no_concept";
        case ModelKind::NoConceptL1: return "no_concept_l1";
        case ModelKind::FulltextBaseline: return "fulltext_baseline";
    }
    throw ConfigError("model_kind_name: bad kind");
}

ModelKind model_kind_from(const std::string& name) {
    if (name == "educe") return ModelKind::Educe;
    if (name == "no_concept") return ModelKind::NoConcept;
    if (name == "no_concept_l1") return ModelKind::NoConceptL1;
    if (name == "fulltext_baseline") return ModelKind::FulltextBaseline;
    throw ConfigError("unknown model kind '" + name + "'");
}

void TrainConfig::validate() const {
    if (r < 0.0 || r > 1.0) throw ConfigError("r must be in [0,1], got " + std::to_string(r));
    if (lambda0 < 0.0) throw ConfigError("lambda0 must be >= 0");
    if (lambda_l1 < 0.0) throw ConfigError("lambda_l1 must be >= 0");
    if (concepts < 1) throw ConfigError("concepts must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (lambda_growth <= 0.0) throw ConfigError("lambda_growth must be > 0");
    if (clip < 0.0) throw ConfigError("clip must be >= 0");
    if (window.min_offset < 1 || window.max_offset < window.min_offset)
        throw ConfigError("span offsets must satisfy 1 <= min <= max");
    if (model == ModelKind::NoConcept || model == ModelKind::NoConceptL1) {
        if (lambda0 != 0.0)
            throw ConfigError("model " + model_kind_name(model) + " requires lambda0 = 0");
    }
    if (model != ModelKind::NoConceptL1 && lambda_l1 != 0.0)
        throw ConfigError("lambda_l1 applies to model no_concept_l1 only");
}

double TrainConfig::effective_lambda0() const {
    return (model == ModelKind::NoConcept || model == ModelKind::NoConceptL1) ? 0.0 : lambda0;
}

double TrainConfig::effective_lambda_l1() const {
    return model == ModelKind::NoConceptL1 ? lambda_l1 : 0.0;
}

double lambda_schedule(double lambda0, double growth, std::size_t epoch) {
    return lambda0 * std::pow(growth, static_cast<double>(epoch));
}

void clip_global_norm(GradSet& grads, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g.data) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm <= clip) return;
    const double factor = clip / norm;
    for (auto& g : grads)
        for (double& x : g.data) x *= factor;
}

namespace {

GradSet collect_grads(const Tape& tape, const std::vector<Val>& ordered) {
    GradSet out;
    out.reserve(ordered.size());
    for (Val v : ordered) out.push_back(tape.grad(v));
    return out;
}

double binary_entropy(double p) {
    return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

}  // namespace

GradSet estimate_gradients(const Dataset& ds, const std::vector<std::size_t>& batch,
                           const EduceParams& params, const EmbeddingTable& emb,
                           const TrainConfig& cfg, double lambda, BaselineState& baseline,
                           Rng& rng, BatchStats* stats) {
    if (batch.empty()) throw DataError("estimate_gradients: empty batch");
    const std::size_t B = batch.size();
    const std::size_t C = params.concepts();
    const LossConfig lc{cfg.task, lambda, cfg.effective_lambda_l1()};

    // substream seeds drawn serially so results do not depend on thread count
    std::vector<std::uint64_t> sub(B);
    for (auto& s : sub) s = rng.next_u64();

    std::vector<TracePtr> traces(B);
    std::vector<LossNodes> losses(B);
    parallel_for(B, [&](std::size_t i) {
        Rng doc_rng(sub[i]);
        traces[i] = forward(ds.docs[batch[i]], params, emb, cfg.window, doc_rng);
        losses[i] = compute_losses(*traces[i], ds.docs[batch[i]], lc);
    });
    for (std::size_t i = 0; i < B; ++i)
        if (!std::isfinite(losses[i].values.joint))
            throw NumericError("estimate_gradients: non-finite loss at document index " +
                               std::to_string(batch[i]));

    // entropy regularizer on the batch-mean presence probabilities; excluded
    // from the per-document reinforcement reward
    double entropy_loss = 0.0;
    std::vector<double> p_seed(C, 0.0);
    if (cfg.entropy_weight != 0.0) {
        std::vector<double> pbar(C, 0.0);
        for (const auto& t : traces)
            for (std::size_t c = 0; c < C; ++c) pbar[c] += t->concepts[c].presence_p;
        for (std::size_t c = 0; c < C; ++c) {
            pbar[c] /= static_cast<double>(B);
            entropy_loss += -binary_entropy(pbar[c]) / static_cast<double>(C);
            // d/dp of -H(p)/C, split evenly over the batch
            p_seed[c] = cfg.entropy_weight * (-1.0 / static_cast<double>(C)) *
                        std::log((1.0 - pbar[c]) / pbar[c]) / static_cast<double>(B);
        }
    }

    const double b = baseline.value();
    std::vector<GradSet> g_path(B), g_rl(B);
    parallel_for(B, [&](std::size_t i) {
        Tape& tp = traces[i]->tape;
        std::vector<std::pair<Val, double>> seeds{{losses[i].joint, 1.0}};
        if (cfg.entropy_weight != 0.0)
            for (std::size_t c = 0; c < C; ++c)
                seeds.emplace_back(traces[i]->concepts[c].p_node, p_seed[c]);
        tp.backward_weighted(seeds);
        g_path[i] = collect_grads(tp, traces[i]->pv.ordered);
        tp.backward(traces[i]->logprob_spans);
        g_rl[i] = collect_grads(tp, traces[i]->pv.ordered);
    });

    GradSet acc_path = grads_like(params);
    GradSet acc_rl = grads_like(params);
    double joint_sum = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double reward = losses[i].values.joint - b;
        joint_sum += losses[i].values.joint;
        for (std::size_t p = 0; p < acc_path.size(); ++p) {
            for (std::size_t j = 0; j < acc_path[p].numel(); ++j) {
                acc_path[p].data[j] += g_path[i][p].data[j];
                acc_rl[p].data[j] += reward * g_rl[i][p].data[j];
            }
        }
    }
    // mean over documents first, then r-mix, so the r=0 and r=1 runs compose
    // exactly into the mixed gradient
    GradSet out = grads_like(params);
    const double invB = 1.0 / static_cast<double>(B);
    for (std::size_t p = 0; p < out.size(); ++p)
        for (std::size_t j = 0; j < out[p].numel(); ++j)
            out[p].data[j] = (1.0 - cfg.r) * (acc_path[p].data[j] * invB) +
                             cfg.r * (acc_rl[p].data[j] * invB);

    if (stats) {
        stats->docs = B;
        stats->loss_output = 0.0;
        stats->loss_concept = 0.0;
        stats->loss_l1 = 0.0;
        for (const auto& ln : losses) {
            stats->loss_output += ln.values.output * invB;
            stats->loss_concept += ln.values.concept_loss * invB;
            stats->loss_l1 += ln.values.l1 * invB;
        }
        stats->loss_entropy = entropy_loss;
        stats->loss_joint = joint_sum * invB;
    }
    baseline.update(joint_sum * invB);
    return out;
}

std::string log_header() {
    return "epoch,loss_output,loss_concept,loss_aux,lambda,baseline_b,val_score,elapsed_s\n";
}

std::string log_row(const EpochLog& row) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", row.epoch,
                  row.loss_output, row.loss_concept, row.loss_aux, row.lambda, row.baseline_b,
                  row.val_score, row.elapsed_s);
    return buf;
}

namespace {

std::size_t argmax_index(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.numel(); ++i)
        if (t.data[i] > t.data[best]) best = i;
    return best;
}

double regression_se(const Tensor& pred, const std::vector<double>& targets) {
    double se = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double d = pred.data[j] - targets[j];
        se += d * d;
    }
    return se / static_cast<double>(targets.size());
}

// EDUCE validation criterion: output accuracy (or -MSE) plus lambda times the
// fraction of present excerpts whose concept-classifier argmax matches their
// concept, under a fixed evaluation seed.
double validation_score(const EduceParams& params, const Dataset& val, const EmbeddingTable& emb,
                        const TrainConfig& cfg, double lambda) {
    std::size_t correct = 0;
    double se = 0.0;
    std::size_t present = 0, concept_correct = 0;
    for (std::size_t i = 0; i < val.docs.size(); ++i) {
        Rng doc_rng(mix_seed(cfg.eval_seed, i));
        auto tr = forward(val.docs[i], params, emb, cfg.window, doc_rng);
        if (cfg.task == TaskKind::Classification) {
            if (argmax_index(tr->output_value) == val.docs[i].label) ++correct;
        } else {
            se += regression_se(tr->output_value, val.docs[i].targets);
        }
        for (const auto& ex : tr->concepts) {
            if (!ex.z) continue;
            ++present;
            if (argmax_index(ex.concept_probs) == ex.concept_id) ++concept_correct;
        }
    }
    const double n = static_cast<double>(val.docs.size());
    const double out_score = cfg.task == TaskKind::Classification
                                 ? static_cast<double>(correct) / n
                                 : -se / n;
    if (cfg.model != ModelKind::Educe) return out_score;
    const double concept_acc =
        present ? static_cast<double>(concept_correct) / static_cast<double>(present) : 0.0;
    return out_score + lambda * concept_acc;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& shuffle_rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle_rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t take = std::min(batch_size, n - at);
        batches.emplace_back(idx.begin() + at, idx.begin() + at + take);
    }
    return batches;
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                         const EmbeddingTable& emb) {
    cfg.validate();
    if (cfg.model == ModelKind::FulltextBaseline) return run_fulltext_baseline(cfg, train, val, emb);
    if (train.docs.empty()) throw DataError("run_training: empty training set");
    if (train.task != cfg.task || val.task != cfg.task)
        throw DataError("run_training: dataset task does not match config");

    const std::size_t n_out =
        cfg.task == TaskKind::Classification ? train.n_classes : train.n_targets;
    const ModelDims dims{cfg.concepts, cfg.embed_dim, cfg.hidden, n_out, cfg.task};
    EduceParams params = init_educe_params(dims, mix_seed(cfg.seed, 0x1217));

    OptimizerState opt;
    BaselineState baseline;
    Rng train_rng(mix_seed(cfg.seed, 0xba7c4));

    TrainResult result;
    result.log_csv = log_header();
    EduceParams best = params;
    double best_score = -1e300;
    std::size_t best_epoch = 0, since_improve = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lambda =
            lambda_schedule(cfg.effective_lambda0(), cfg.lambda_growth, epoch);
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, 0x5aff1e), epoch));
        const auto batches = make_batches(train.docs.size(), cfg.batch_size, shuffle_rng);

        double sum_out = 0.0, sum_concept = 0.0, sum_aux = 0.0;
        for (const auto& batch : batches) {
            BatchStats st;
            GradSet grads =
                estimate_gradients(train, batch, params, emb, cfg, lambda, baseline, train_rng, &st);
            adam_step(params, std::move(grads), opt, cfg.learning_rate, cfg.clip);
            sum_out += st.loss_output;
            sum_concept += st.loss_concept;
            sum_aux += cfg.effective_lambda_l1() * st.loss_l1 +
                       cfg.entropy_weight * st.loss_entropy;
        }
        const double nb = static_cast<double>(batches.size());
        const double score = validation_score(params, val, emb, cfg, lambda);
        EpochLog row;
        row.epoch = epoch;
        row.loss_output = sum_out / nb;
        row.loss_concept = sum_concept / nb;
        row.loss_aux = sum_aux / nb;
        row.lambda = lambda;
        row.baseline_b = baseline.value();
        row.val_score = score;
        row.elapsed_s =
            cfg.log_timing
                ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                : 0.0;
        result.log.push_back(row);
        result.log_csv += log_row(row);

        if (score > best_score) {
            best_score = score;
            best = params;
            best_epoch = epoch;
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    result.best = to_checkpoint(best, model_kind_name(cfg.model));
    result.best_epoch = best_epoch;
    result.best_score = best_score;
    return result;
}

TrainResult run_fulltext_baseline(const TrainConfig& cfg, const Dataset& train,
                                  const Dataset& val, const EmbeddingTable& emb) {
    cfg.validate();
    if (train.docs.empty()) throw DataError("run_fulltext_baseline: empty training set");
    if (train.task != cfg.task || val.task != cfg.task)
        throw DataError("run_fulltext_baseline: dataset task does not match config");

    const std::size_t n_out =
        cfg.task == TaskKind::Classification ? train.n_classes : train.n_targets;
    const ModelDims dims{0, cfg.embed_dim, cfg.hidden, n_out, cfg.task};
    FulltextParams params = init_fulltext_params(dims, mix_seed(cfg.seed, 0x1217));

    OptimizerState opt;
    TrainResult result;
    result.log_csv = log_header();
    FulltextParams best = params;
    double best_score = -1e300;
    std::size_t best_epoch = 0, since_improve = 0;

    auto doc_loss = [&](const Document& doc, FulltextTrace& tr) -> Val {
        Tape& tp = tr.tape;
        if (cfg.task == TaskKind::Classification)
            return tp.scale(tp.log(tp.pick(tr.output, doc.label)), -1.0);
        Val target = tp.leaf(Tensor::vec(doc.targets));
        Val diff = tp.add(tr.output, tp.scale(target, -1.0));
        return tp.scale(tp.sum(tp.mul(diff, diff)), 1.0 / static_cast<double>(doc.targets.size()));
    };

    auto evaluate = [&](const FulltextParams& p) {
        std::size_t correct = 0;
        double se = 0.0;
        for (const auto& doc : val.docs) {
            auto tr = fulltext_forward(doc, p, emb);
            if (cfg.task == TaskKind::Classification) {
                if (argmax_index(tr->output_value) == doc.label) ++correct;
            } else {
                se += regression_se(tr->output_value, doc.targets);
            }
        }
        const double n = static_cast<double>(val.docs.size());
        return cfg.task == TaskKind::Classification ? static_cast<double>(correct) / n : -se / n;
    };

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, 0x5aff1e), epoch));
        const auto batches = make_batches(train.docs.size(), cfg.batch_size, shuffle_rng);

        double sum_out = 0.0;
        for (const auto& batch : batches) {
            const std::size_t B = batch.size();
            std::vector<std::unique_ptr<FulltextTrace>> traces(B);
            std::vector<double> loss_vals(B);
            std::vector<GradSet> per_doc(B);
            parallel_for(B, [&](std::size_t i) {
                const Document& doc = train.docs[batch[i]];
                traces[i] = fulltext_forward(doc, params, emb);
                Val loss = doc_loss(doc, *traces[i]);
                loss_vals[i] = traces[i]->tape.scalar(loss);
                traces[i]->tape.backward(loss);
                per_doc[i] = collect_grads(traces[i]->tape, traces[i]->pv.ordered);
            });
            double joint = 0.0;
            GradSet acc = grads_like(params);
            for (std::size_t i = 0; i < B; ++i) {
                if (!std::isfinite(loss_vals[i]))
                    throw NumericError(
                        "run_fulltext_baseline: non-finite loss at document index " +
                        std::to_string(batch[i]));
                joint += loss_vals[i];
                for (std::size_t p = 0; p < acc.size(); ++p)
                    for (std::size_t j = 0; j < acc[p].numel(); ++j)
                        acc[p].data[j] += per_doc[i][p].data[j];
            }
            const double invB = 1.0 / static_cast<double>(B);
            for (auto& g : acc)
                for (auto& x : g.data) x *= invB;
            adam_step(params, std::move(acc), opt, cfg.learning_rate, cfg.clip);
            sum_out += joint * invB;
        }

        const double score = evaluate(params);
        EpochLog row;
        row.epoch = epoch;
        row.loss_output = sum_out / static_cast<double>(batches.size());
        row.val_score = score;
        row.elapsed_s =
            cfg.log_timing
                ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                : 0.0;
        result.log.push_back(row);
        result.log_csv += log_row(row);

        if (score > best_score) {
            best_score = score;
            best = params;
            best_epoch = epoch;
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    result.best = to_checkpoint(best);
    result.best_epoch = best_epoch;
    result.best_score = best_score;
    return result;
}

}  // namespace educe
