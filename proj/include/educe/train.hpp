#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "educe/losses.hpp"
#include "educe/model.hpp"

namespace educe {

enum class ModelKind { Educe, NoConcept, NoConceptL1, FulltextBaseline };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from(const std::string& name);

struct TrainConfig {
    TaskKind task = TaskKind::Classification;
    ModelKind model = ModelKind::Educe;
    std::size_t concepts = 10;
    std::size_t embed_dim = 300;
    std::size_t hidden = 200;
    double lambda0 = 0.1;
    double lambda_growth = 1.1;
    double lambda_l1 = 0.0;  // comparison model only
    double r = 0.1;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 30;
    std::size_t patience = 5;
    double clip = 0.0;            // global-norm clip, 0 = off
    double entropy_weight = 0.0;  // w_H, regression presets only
    std::uint64_t seed = 0;
    std::uint64_t eval_seed = 9001;
    SpanWindow window;
    bool log_timing = true;

    void validate() const;
    // lambda0/lambda_l1 actually applied given the model kind.
    double effective_lambda0() const;
    double effective_lambda_l1() const;
};

// Control variate b: arithmetic mean of every batch-mean joint loss so far.
struct BaselineState {
    double sum = 0.0;
    std::size_t count = 0;

    double value() const { return count ? sum / static_cast<double>(count) : 0.0; }
    void update(double batch_mean_joint) {
        sum += batch_mean_joint;
        ++count;
    }
};

struct OptimizerState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Gradient tensors in the parameters' visit order.
using GradSet = std::vector<Tensor>;

template <class Params>
GradSet grads_like(const Params& p) {
    GradSet g;
    p.visit([&](const char*, const Tensor& t) { g.push_back(Tensor::zeros(t.shape)); });
    return g;
}

struct BatchStats {
    double loss_output = 0.0;
    double loss_concept = 0.0;
    double loss_l1 = 0.0;
    double loss_entropy = 0.0;
    double loss_joint = 0.0;  // mean per-document joint loss
    std::size_t docs = 0;
};

// Hybrid estimator: (1-r) * pathwise gradient of the joint loss (z bits
// straight-through) + r * (L_joint - b) * grad log p(spans) per document,
// averaged over the batch. The baseline is updated with the batch's mean
// joint loss only after the reinforcement term has been computed.
GradSet estimate_gradients(const Dataset& ds, const std::vector<std::size_t>& batch,
                           const EduceParams& params, const EmbeddingTable& emb,
                           const TrainConfig& cfg, double lambda, BaselineState& baseline,
                           Rng& rng, BatchStats* stats = nullptr);

void clip_global_norm(GradSet& grads, double clip);

// If clip > 0 the global gradient norm is rescaled to at most clip before the
// moment updates; then a standard bias-corrected update.
template <class Params>
void adam_step(Params& params, GradSet grads, OptimizerState& state, double lr, double clip) {
    std::vector<Tensor*> ts;
    params.visit([&](const char*, Tensor& t) { ts.push_back(&t); });
    if (ts.size() != grads.size())
        throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(ts.size()) + " parameters");
    if (state.m.empty()) {
        for (auto* t : ts) {
            state.m.push_back(Tensor::zeros(t->shape));
            state.v.push_back(Tensor::zeros(t->shape));
        }
    }
    clip_global_norm(grads, clip);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < ts.size(); ++p) {
        require_same_shape(*ts[p], grads[p], "adam_step");
        for (std::size_t i = 0; i < ts[p]->numel(); ++i) {
            const double g = grads[p].data[i];
            double& m = state.m[p].data[i];
            double& v = state.v[p].data[i];
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            ts[p]->data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double lambda_schedule(double lambda0, double growth, std::size_t epoch);

struct EpochLog {
    std::size_t epoch = 0;
    double loss_output = 0.0;
    double loss_concept = 0.0;
    double loss_aux = 0.0;
    double lambda = 0.0;
    double baseline_b = 0.0;
    double val_score = 0.0;
    double elapsed_s = 0.0;
};

std::string log_header();
std::string log_row(const EpochLog& row);

struct TrainResult {
    Checkpoint best;
    std::size_t best_epoch = 0;
    double best_score = 0.0;
    std::vector<EpochLog> log;
    std::string log_csv;  // header plus one row per epoch, exact bytes
};

TrainResult run_training(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                         const EmbeddingTable& emb);

TrainResult run_fulltext_baseline(const TrainConfig& cfg, const Dataset& train,
                                  const Dataset& val, const EmbeddingTable& emb);

}  // namespace educe
