#include "educe/lstm.hpp"

#include <cmath>

namespace educe {

LstmCellParams init_lstm_cell(std::size_t input, std::size_t hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    LstmCellParams cell;
    cell.wx = Tensor::zeros({4 * hidden, input});
    cell.wh = Tensor::zeros({4 * hidden, hidden});
    cell.b = Tensor::zeros({4 * hidden});
    for (auto& v : cell.wx.data) v = rng.uniform(-bound, bound);
    for (auto& v : cell.wh.data) v = rng.uniform(-bound, bound);
    // forget-gate bias 1 (second gate block), others 0
    for (std::size_t i = hidden; i < 2 * hidden; ++i) cell.b.data[i] = 1.0;
    return cell;
}

EncoderParams init_encoder(std::size_t input, std::size_t hidden, std::uint64_t seed) {
    Rng rng(seed);
    EncoderParams enc;
    enc.fwd = init_lstm_cell(input, hidden, rng);
    enc.bwd = init_lstm_cell(input, hidden, rng);
    return enc;
}

LstmState lstm_step(Tape& tape, const LstmCellVals& cell, const LstmState& state, Val input,
                    std::size_t hidden) {
    const std::size_t H = hidden;
    Val pre = tape.add(tape.add(tape.matvec(cell.wx, input), tape.matvec(cell.wh, state.h)),
                       cell.b);
    Val gi = tape.sigmoid(tape.segment(pre, 0, H));
    Val gf = tape.sigmoid(tape.segment(pre, H, H));
    Val gg = tape.tanh(tape.segment(pre, 2 * H, H));
    Val go = tape.sigmoid(tape.segment(pre, 3 * H, H));
    Val c = tape.add(tape.mul(gf, state.c), tape.mul(gi, gg));
    Val h = tape.mul(go, tape.tanh(c));
    return {h, c};
}

std::vector<Val> encode_bidirectional(Tape& tape, const std::vector<std::size_t>& tokens,
                                      const EmbeddingTable& emb, const LstmCellVals& fwd,
                                      const LstmCellVals& bwd, std::size_t hidden) {
    if (tokens.empty()) throw ShapeError("encode_bidirectional: empty token sequence");
    const std::size_t M = tokens.size();
    std::vector<Val> inputs;
    inputs.reserve(M);
    for (std::size_t k = 0; k < M; ++k) {
        if (tokens[k] >= emb.vocab_size())
            throw DataError("encode_bidirectional: token id " + std::to_string(tokens[k]) +
                            " >= vocab size " + std::to_string(emb.vocab_size()));
        Tensor e = Tensor::zeros({emb.dim()});
        for (std::size_t j = 0; j < emb.dim(); ++j) e.data[j] = emb.weights.at(tokens[k], j);
        inputs.push_back(tape.leaf(std::move(e)));
    }

    LstmState zero{tape.leaf(Tensor::zeros({hidden})), tape.leaf(Tensor::zeros({hidden}))};

    std::vector<Val> fw(M);
    LstmState st = zero;
    for (std::size_t k = 0; k < M; ++k) {
        st = lstm_step(tape, fwd, st, inputs[k], hidden);
        fw[k] = st.h;
    }
    std::vector<Val> bw(M);
    st = zero;
    for (std::size_t k = M; k-- > 0;) {
        st = lstm_step(tape, bwd, st, inputs[k], hidden);
        bw[k] = st.h;
    }

    std::vector<Val> out;
    out.reserve(M);
    for (std::size_t k = 0; k < M; ++k) out.push_back(tape.concat({fw[k], bw[k]}));
    return out;
}

}  // namespace educe
