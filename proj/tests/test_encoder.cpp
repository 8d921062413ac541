#include <doctest.h>

#include <cmath>

#include "educe/finite_diff.hpp"
#include "educe/lstm.hpp"

using namespace educe;

namespace {

EmbeddingTable tiny_embeddings(std::size_t vocab, std::size_t d, std::uint64_t seed) {
    Vocab v;
    v.id_to_token.resize(vocab, "t");
    Rng rng(seed);
    EmbeddingTable t;
    t.weights = Tensor::zeros({vocab, d});
    for (auto& x : t.weights.data) x = rng.uniform(-1.0, 1.0);
    return t;
}

std::vector<Tensor> cell_tensors(const LstmCellParams& c) {
    return {c.wx, c.wh, c.b};
}

}  // namespace

TEST_CASE("lstm_step") {
    const std::size_t H = 3, in = 2;
    SUBCASE("all-zero parameters give zero state") {
        LstmCellParams cell;
        cell.wx = Tensor::zeros({4 * H, in});
        cell.wh = Tensor::zeros({4 * H, H});
        cell.b = Tensor::zeros({4 * H});
        Tape tape;
        LstmCellVals cv{tape.leaf(cell.wx), tape.leaf(cell.wh), tape.leaf(cell.b)};
        LstmState st{tape.leaf(Tensor::zeros({H})), tape.leaf(Tensor::zeros({H}))};
        auto next = lstm_step(tape, cv, st, tape.leaf(Tensor::vec({1.5, -2.0})), H);
        for (double v : tape.value(next.h).data) CHECK(v == 0.0);
        for (double v : tape.value(next.c).data) CHECK(v == 0.0);
    }
    SUBCASE("saturated forget gate preserves the cell") {
        // zero input weights; forget bias +20, other gates -20 => c' ~= c
        LstmCellParams cell;
        cell.wx = Tensor::zeros({4 * H, in});
        cell.wh = Tensor::zeros({4 * H, H});
        cell.b = Tensor::full({4 * H}, -20.0);
        for (std::size_t i = H; i < 2 * H; ++i) cell.b.data[i] = 20.0;
        Tape tape;
        LstmCellVals cv{tape.leaf(cell.wx), tape.leaf(cell.wh), tape.leaf(cell.b)};
        LstmState st{tape.leaf(Tensor::zeros({H})), tape.leaf(Tensor::vec({10.0, -3.0, 0.5}))};
        auto next = lstm_step(tape, cv, st, tape.leaf(Tensor::vec({0.7, 0.1})), H);
        CHECK(tape.value(next.c).data[0] == doctest::Approx(10.0).epsilon(1e-7));
        CHECK(tape.value(next.c).data[1] == doctest::Approx(-3.0).epsilon(1e-7));
        CHECK(tape.value(next.c).data[2] == doctest::Approx(0.5).epsilon(1e-7));
    }
    SUBCASE("|h| bounded by 1") {
        Rng rng(3);
        LstmCellParams cell = init_lstm_cell(in, H, rng);
        Tape tape;
        LstmCellVals cv{tape.leaf(cell.wx), tape.leaf(cell.wh), tape.leaf(cell.b)};
        LstmState st{tape.leaf(Tensor::vec({0.9, -0.5, 0.1})),
                     tape.leaf(Tensor::vec({3.0, -8.0, 2.0}))};
        auto next = lstm_step(tape, cv, st, tape.leaf(Tensor::vec({5.0, -5.0})), H);
        for (double v : tape.value(next.h).data) CHECK(std::abs(v) <= 1.0);
    }
    SUBCASE("gradients match finite differences") {
        Rng rng(17);
        LstmCellParams cell = init_lstm_cell(in, H, rng);
        const Tensor h0 = Tensor::vec({0.3, -0.2, 0.1});
        const Tensor c0 = Tensor::vec({0.5, 0.4, -0.6});
        const Tensor x0 = Tensor::vec({1.1, -0.7});
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            LstmCellVals cv{tape.leaf(ps[0]), tape.leaf(ps[1]), tape.leaf(ps[2])};
            LstmState st{tape.leaf(h0), tape.leaf(c0)};
            auto next = lstm_step(tape, cv, st, tape.leaf(x0), H);
            return tape.scalar(tape.sum(next.h));
        };
        Tape tape;
        LstmCellVals cv{tape.leaf(cell.wx), tape.leaf(cell.wh), tape.leaf(cell.b)};
        LstmState st{tape.leaf(h0), tape.leaf(c0)};
        auto next = lstm_step(tape, cv, st, tape.leaf(x0), H);
        tape.backward(tape.sum(next.h));
        const double err = finite_diff_check(f, cell_tensors(cell),
                                             {tape.grad(cv.wx), tape.grad(cv.wh), tape.grad(cv.b)},
                                             1e-5);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("encode_bidirectional") {
    const std::size_t H = 3, d = 4;
    EmbeddingTable emb = tiny_embeddings(10, d, 404);

    SUBCASE("zero parameters give all-zero rows") {
        EncoderParams enc;
        enc.fwd = {Tensor::zeros({4 * H, d}), Tensor::zeros({4 * H, H}), Tensor::zeros({4 * H})};
        enc.bwd = enc.fwd;
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        auto rows = encode_bidirectional(tape, {1, 2, 3}, emb, fv, bv, H);
        REQUIRE(rows.size() == 3);
        for (const auto& r : rows)
            for (double v : tape.value(r).data) CHECK(v == 0.0);
    }
    SUBCASE("single token: both halves equal one lstm step") {
        EncoderParams enc = init_encoder(d, H, 11);
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        auto rows = encode_bidirectional(tape, {5}, emb, fv, bv, H);
        REQUIRE(rows.size() == 1);
        Tensor e = Tensor::zeros({d});
        for (std::size_t j = 0; j < d; ++j) e.data[j] = emb.weights.at(5, j);
        LstmState zero{tape.leaf(Tensor::zeros({H})), tape.leaf(Tensor::zeros({H}))};
        auto fstep = lstm_step(tape, fv, zero, tape.leaf(e), H);
        auto bstep = lstm_step(tape, bv, zero, tape.leaf(e), H);
        for (std::size_t j = 0; j < H; ++j) {
            CHECK(tape.value(rows[0]).data[j] == tape.value(fstep.h).data[j]);
            CHECK(tape.value(rows[0]).data[H + j] == tape.value(bstep.h).data[j]);
        }
    }
    SUBCASE("reversing the sequence and swapping directions swaps the halves") {
        EncoderParams enc = init_encoder(d, H, 21);
        const std::vector<std::size_t> tokens = {1, 4, 2, 7, 3, 9};
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        auto rows = encode_bidirectional(tape, tokens, emb, fv, bv, H);
        std::vector<std::size_t> rev(tokens.rbegin(), tokens.rend());
        auto rrows = encode_bidirectional(tape, rev, emb, bv, fv, H);
        const std::size_t M = tokens.size();
        for (std::size_t k = 0; k < M; ++k)
            for (std::size_t j = 0; j < H; ++j) {
                CHECK(tape.value(rrows[k]).data[j] ==
                      doctest::Approx(tape.value(rows[M - 1 - k]).data[H + j]).epsilon(1e-14));
                CHECK(tape.value(rrows[k]).data[H + j] ==
                      doctest::Approx(tape.value(rows[M - 1 - k]).data[j]).epsilon(1e-14));
            }
    }
    SUBCASE("causality under token perturbation") {
        EncoderParams enc = init_encoder(d, H, 33);
        std::vector<std::size_t> tokens = {1, 2, 3, 4, 5};
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        auto base = encode_bidirectional(tape, tokens, emb, fv, bv, H);
        std::vector<std::size_t> perturbed = tokens;
        perturbed[3] = 9;  // position k = 3
        auto mod = encode_bidirectional(tape, perturbed, emb, fv, bv, H);
        // forward halves before position 3 unchanged; backward halves after 3 unchanged
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < H; ++j)
                CHECK(tape.value(mod[k]).data[j] == tape.value(base[k]).data[j]);
        for (std::size_t k = 4; k < 5; ++k)
            for (std::size_t j = 0; j < H; ++j)
                CHECK(tape.value(mod[k]).data[H + j] == tape.value(base[k]).data[H + j]);
        // and the forward half at position 3 itself does change
        bool changed = false;
        for (std::size_t j = 0; j < H; ++j)
            changed = changed || tape.value(mod[3]).data[j] != tape.value(base[3]).data[j];
        CHECK(changed);
    }
    SUBCASE("token id out of range") {
        EncoderParams enc = init_encoder(d, H, 5);
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        CHECK_THROWS_AS(encode_bidirectional(tape, {1, 99}, emb, fv, bv, H), DataError);
    }
    SUBCASE("end-to-end gradient matches finite differences") {
        EncoderParams enc = init_encoder(d, H, 77);
        const std::vector<std::size_t> tokens = {1, 2, 3, 4, 5};
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            LstmCellVals fv{tape.leaf(ps[0]), tape.leaf(ps[1]), tape.leaf(ps[2])};
            LstmCellVals bv{tape.leaf(ps[3]), tape.leaf(ps[4]), tape.leaf(ps[5])};
            auto rows = encode_bidirectional(tape, tokens, emb, fv, bv, H);
            Val acc = tape.sum(rows[0]);
            for (std::size_t k = 1; k < rows.size(); ++k)
                acc = tape.add(acc, tape.scale(tape.sum(tape.tanh(rows[k])), 0.7));
            return tape.scalar(acc);
        };
        Tape tape;
        LstmCellVals fv{tape.leaf(enc.fwd.wx), tape.leaf(enc.fwd.wh), tape.leaf(enc.fwd.b)};
        LstmCellVals bv{tape.leaf(enc.bwd.wx), tape.leaf(enc.bwd.wh), tape.leaf(enc.bwd.b)};
        auto rows = encode_bidirectional(tape, tokens, emb, fv, bv, H);
        Val acc = tape.sum(rows[0]);
        for (std::size_t k = 1; k < rows.size(); ++k)
            acc = tape.add(acc, tape.scale(tape.sum(tape.tanh(rows[k])), 0.7));
        tape.backward(acc);
        std::vector<Tensor> params = {enc.fwd.wx, enc.fwd.wh, enc.fwd.b,
                                      enc.bwd.wx, enc.bwd.wh, enc.bwd.b};
        std::vector<Tensor> analytic = {tape.grad(fv.wx), tape.grad(fv.wh), tape.grad(fv.b),
                                        tape.grad(bv.wx), tape.grad(bv.wh), tape.grad(bv.b)};
        CHECK(finite_diff_check(f, params, analytic, 1e-5) < 1e-4);
    }
    SUBCASE("forget-gate bias initialized to one") {
        EncoderParams enc = init_encoder(d, H, 123);
        for (std::size_t i = 0; i < H; ++i) {
            CHECK(enc.fwd.b.data[H + i] == 1.0);
            CHECK(enc.fwd.b.data[i] == 0.0);
            CHECK(enc.fwd.b.data[2 * H + i] == 0.0);
            CHECK(enc.fwd.b.data[3 * H + i] == 0.0);
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(H));
        for (double w : enc.fwd.wx.data) CHECK(std::abs(w) <= bound);
    }
}
