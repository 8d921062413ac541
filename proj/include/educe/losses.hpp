#pragma once

#include "educe/model.hpp"

namespace educe {

struct LossConfig {
    TaskKind task = TaskKind::Classification;
    double lambda = 0.0;
    double lambda_l1 = 0.0;
};

struct LossValues {
    double output = 0.0;
    double concept_loss = 0.0;
    double l1 = 0.0;
    double entropy = 0.0;  // batch-level quantity; 0 for a single trace
    double joint = 0.0;
};

// Loss nodes live on the trace's tape so gradients can be pulled from them.
struct LossNodes {
    Val output;
    Val concept_loss;
    Val l1;
    Val joint;
    LossValues values;
};

// L_output: cross-entropy (classification) or mean squared error over the
// targets (regression). L_concept: sum over concepts of -z_c log p(c|s_c),
// each term gated by the sampled bit through the straight-through node so the
// gate also carries gradient to alpha. L_l1: sum of the z bits.
// L_joint = L_output + lambda * L_concept (+ lambda_l1 * L_l1 when nonzero).
LossNodes compute_losses(ForwardTrace& trace, const Document& doc, const LossConfig& cfg);

}  // namespace educe
