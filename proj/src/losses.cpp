#include "educe/losses.hpp"

namespace educe {

LossNodes compute_losses(ForwardTrace& trace, const Document& doc, const LossConfig& cfg) {
    if (trace.task != cfg.task)
        throw DomainError("compute_losses: trace and loss config disagree on task kind");
    Tape& tp = trace.tape;
    LossNodes ln;

    if (cfg.task == TaskKind::Classification) {
        const std::size_t n_out = tp.value(trace.output).numel();
        if (doc.label >= n_out)
            throw DataError("compute_losses: label " + std::to_string(doc.label) +
                            " outside [0," + std::to_string(n_out) + ")");
        ln.output = tp.scale(tp.log(tp.pick(trace.output, doc.label)), -1.0);
    } else {
        const std::size_t n_out = tp.value(trace.output).numel();
        if (doc.targets.size() != n_out)
            throw DataError("compute_losses: " + std::to_string(doc.targets.size()) +
                            " targets for " + std::to_string(n_out) + " outputs");
        Val target = tp.leaf(Tensor::vec(doc.targets));
        Val diff = tp.add(trace.output, tp.scale(target, -1.0));
        ln.output = tp.scale(tp.sum(tp.mul(diff, diff)),
                             1.0 / static_cast<double>(doc.targets.size()));
    }

    Val concept_acc{};
    Val l1_acc{};
    for (std::size_t c = 0; c < trace.concepts.size(); ++c) {
        const auto& ex = trace.concepts[c];
        Val term = tp.mul(ex.st_node, tp.scale(ex.log_q_node, -1.0));
        concept_acc = c == 0 ? term : tp.add(concept_acc, term);
        l1_acc = c == 0 ? ex.st_node : tp.add(l1_acc, ex.st_node);
    }
    ln.concept_loss = concept_acc;
    ln.l1 = l1_acc;

    Val joint = tp.add(ln.output, tp.scale(ln.concept_loss, cfg.lambda));
    if (cfg.lambda_l1 != 0.0) joint = tp.add(joint, tp.scale(ln.l1, cfg.lambda_l1));
    ln.joint = joint;

    ln.values.output = tp.scalar(ln.output);
    ln.values.concept_loss = tp.scalar(ln.concept_loss);
    ln.values.l1 = tp.scalar(ln.l1);
    ln.values.entropy = 0.0;
    ln.values.joint = tp.scalar(ln.joint);
    return ln;
}

}  // namespace educe
