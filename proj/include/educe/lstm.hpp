#pragma once

#include <cstdint>
#include <vector>

#include "educe/rng.hpp"
#include "educe/tape.hpp"
#include "educe/text.hpp"

namespace educe {

// One direction of the LSTM. Gate order in the stacked dimension: i, f, g, o.
struct LstmCellParams {
    Tensor wx;  // 4H x input
    Tensor wh;  // 4H x H
    Tensor b;   // 4H

    std::size_t hidden() const { return b.numel() / 4; }
    std::size_t input() const { return wx.cols(); }
};

struct EncoderParams {
    LstmCellParams fwd;
    LstmCellParams bwd;

    std::size_t hidden() const { return fwd.hidden(); }
    std::size_t input() const { return fwd.input(); }
};

// Weights ~ uniform(-1/sqrt(H), 1/sqrt(H)), forget-gate bias 1, other biases 0.
LstmCellParams init_lstm_cell(std::size_t input, std::size_t hidden, Rng& rng);
EncoderParams init_encoder(std::size_t input, std::size_t hidden, std::uint64_t seed);

struct LstmCellVals {
    Val wx, wh, b;
};

struct LstmState {
    Val h, c;
};

LstmState lstm_step(Tape& tape, const LstmCellVals& cell, const LstmState& state, Val input,
                    std::size_t hidden);

// Rows h_k = [forward_k ; backward_k], width 2H. Token embeddings are frozen
// constants, so no gradient ever reaches the embedding table.
std::vector<Val> encode_bidirectional(Tape& tape, const std::vector<std::size_t>& tokens,
                                      const EmbeddingTable& emb, const LstmCellVals& fwd,
                                      const LstmCellVals& bwd, std::size_t hidden);

}  // namespace educe
