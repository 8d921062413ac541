#include <doctest.h>

#include <cmath>

#include "educe/finite_diff.hpp"
#include "educe/rng.hpp"
#include "educe/tape.hpp"

using namespace educe;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("primitive forward values") {
    Tape tape;
    SUBCASE("sigmoid(0) = 0.5") {
        Val y = tape.sigmoid(tape.scalar_leaf(0.0));
        CHECK(tape.scalar(y) == 0.5);
    }
    SUBCASE("mean of rows") {
        Val m = tape.leaf(Tensor::matrix(3, 2, {1, 0, 0, 1, 1, 1}));
        Val y = tape.mean_rows(m, 0, 3);
        CHECK(tape.value(y).data[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(tape.value(y).data[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("matvec with identity") {
        Val m = tape.leaf(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
        Val v = tape.leaf(Tensor::vec({2.5, -1.0, 4.0}));
        Val y = tape.matvec(m, v);
        CHECK(tape.value(y).data == std::vector<double>{2.5, -1.0, 4.0});
    }
    SUBCASE("matmul") {
        Val a = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        Val b = tape.leaf(Tensor::matrix(2, 2, {5, 6, 7, 8}));
        Val y = tape.matmul(a, b);
        CHECK(tape.value(y).data == std::vector<double>{19, 22, 43, 50});
    }
    SUBCASE("shape mismatch names both shapes") {
        Val a = tape.leaf(Tensor::vec({1, 2}));
        Val b = tape.leaf(Tensor::vec({1, 2, 3}));
        CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("[2]"), ShapeError);
        try {
            tape.add(a, b);
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("[3]") != std::string::npos);
        }
    }
    SUBCASE("finite outputs on bounded inputs") {
        Rng rng(7);
        for (int trial = 0; trial < 50; ++trial) {
            Val x = tape.leaf(random_tensor({8}, rng, -1e6, 1e6));
            CHECK(tape.value(tape.exp(x)).all_finite());
            CHECK(tape.value(tape.sigmoid(x)).all_finite());
            CHECK(tape.value(tape.tanh(x)).all_finite());
        }
    }
}

TEST_CASE("masked_softmax") {
    Tape tape;
    SUBCASE("equal scores give uniform over valid set") {
        Val s = tape.leaf(Tensor::vec({5, 5, 5}));
        Val y = tape.masked_softmax(s, {1, 1, 1});
        for (double v : tape.value(y).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("single valid position takes all mass") {
        Val s = tape.leaf(Tensor::vec({9, 2, 7}));
        Val y = tape.masked_softmax(s, {0, 1, 0});
        CHECK(tape.value(y).data[0] == 0.0);
        CHECK(tape.value(y).data[1] == 1.0);
        CHECK(tape.value(y).data[2] == 0.0);
    }
    SUBCASE("hand-evaluated two-way softmax") {
        Val s = tape.leaf(Tensor::vec({0.0, std::log(3.0)}));
        Val y = tape.masked_softmax(s, {1, 1});
        CHECK(tape.value(y).data[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(tape.value(y).data[1] == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("all positions masked") {
        Val s = tape.leaf(Tensor::vec({1, 2}));
        CHECK_THROWS_AS(tape.masked_softmax(s, {0, 0}), MaskError);
    }
    SUBCASE("valid distribution on random scores") {
        Rng rng(99);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 1 + rng.below(12);
            Tensor scores = random_tensor({n}, rng, -30.0, 30.0);
            std::vector<std::uint8_t> mask(n, 0);
            bool any = false;
            for (auto& m : mask) {
                m = rng.bernoulli(0.6) ? 1 : 0;
                any = any || m;
            }
            if (!any) mask[rng.below(n)] = 1;
            Val y = tape.masked_softmax(tape.leaf(scores), mask);
            const Tensor& out = tape.value(y);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (mask[i]) {
                    CHECK(out.data[i] >= 0.0);
                    sum += out.data[i];
                } else {
                    CHECK(out.data[i] == 0.0);
                }
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("invariant to constant shifts of valid scores") {
        Rng rng(123);
        for (int trial = 0; trial < 200; ++trial) {
            Tensor scores = random_tensor({6}, rng, -5.0, 5.0);
            std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0, 1};
            const double shift = rng.uniform(-40.0, 40.0);
            Tensor shifted = scores;
            for (std::size_t i = 0; i < 6; ++i)
                if (mask[i]) shifted.data[i] += shift;
            Val a = tape.masked_softmax(tape.leaf(scores), mask);
            Val b = tape.masked_softmax(tape.leaf(shifted), mask);
            for (std::size_t i = 0; i < 6; ++i)
                CHECK(tape.value(a).data[i] ==
                      doctest::Approx(tape.value(b).data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward basics") {
    SUBCASE("loss = sigmoid(w.x) at w = 0 gives grad 0.25 x") {
        Tape tape;
        Val w = tape.leaf(Tensor::vec({0, 0, 0}));
        Val x = tape.leaf(Tensor::vec({1.0, -2.0, 0.5}));
        Val loss = tape.sigmoid(tape.dot(w, x));
        tape.backward(loss);
        const Tensor g = tape.grad(w);
        CHECK(g.data[0] == doctest::Approx(0.25 * 1.0).epsilon(1e-15));
        CHECK(g.data[1] == doctest::Approx(0.25 * -2.0).epsilon(1e-15));
        CHECK(g.data[2] == doctest::Approx(0.25 * 0.5).epsilon(1e-15));
    }
    SUBCASE("unused parameter has exactly zero gradient") {
        Tape tape;
        Val used = tape.leaf(Tensor::vec({1.0, 2.0}));
        Val unused = tape.leaf(Tensor::vec({3.0, 4.0}));
        Val loss = tape.sum(used);
        tape.backward(loss);
        for (double v : tape.grad(unused).data) CHECK(v == 0.0);
        (void)unused;
    }
    SUBCASE("loss from another tape is rejected") {
        Tape a, b;
        Val loss = a.sum(a.leaf(Tensor::vec({1.0})));
        CHECK_THROWS_AS(b.backward(loss), ProvenanceError);
    }
    SUBCASE("log softmax pick gradient matches finite differences") {
        Rng rng(2024);
        Tensor w0 = random_tensor({4, 3}, rng);
        Tensor x0 = random_tensor({3}, rng);
        const std::size_t label = 2;
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            Val w = tape.leaf(ps[0]);
            Val x = tape.leaf(x0);
            Val dist = tape.masked_softmax(tape.matvec(w, x), {1, 1, 1, 1});
            return tape.scalar(tape.log(tape.pick(dist, label)));
        };
        Tape tape;
        Val w = tape.leaf(w0);
        Val x = tape.leaf(x0);
        Val loss = tape.log(tape.pick(tape.masked_softmax(tape.matvec(w, x), {1, 1, 1, 1}), label));
        tape.backward(loss);
        const double err = finite_diff_check(f, {w0}, {tape.grad(w)}, 1e-5);
        CHECK(err < 1e-5);
    }
    SUBCASE("backward is idempotent bit-for-bit") {
        Rng rng(5);
        Tape tape;
        Val w = tape.leaf(random_tensor({5, 4}, rng));
        Val x = tape.leaf(random_tensor({4}, rng));
        Val loss = tape.sum(tape.tanh(tape.matvec(w, x)));
        tape.backward(loss);
        const Tensor g1 = tape.grad(w);
        tape.backward(loss);
        const Tensor g2 = tape.grad(w);
        CHECK(g1.data == g2.data);
    }
}

TEST_CASE("every primitive matches central finite differences") {
    Rng rng(31337);
    auto fd = [&](const ScalarFn& f, const std::vector<Tensor>& params,
                  const std::vector<Tensor>& analytic) {
        return finite_diff_check(f, params, analytic, 1e-5);
    };

    SUBCASE("add/mul/scale/dot/sum/segment/concat") {
        Tensor a0 = random_tensor({6}, rng), b0 = random_tensor({6}, rng);
        auto build = [&](const std::vector<Tensor>& ps, Tape& tape, Val& a, Val& b) {
            a = tape.leaf(ps[0]);
            b = tape.leaf(ps[1]);
            Val m = tape.mul(tape.add(a, tape.scale(b, 1.7)), b);
            Val s1 = tape.segment(m, 1, 3);
            Val c = tape.concat({s1, tape.segment(m, 0, 2)});
            return tape.add(tape.sum(c), tape.dot(a, b));
        };
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            Val a, b;
            Val loss = build(ps, tape, a, b);
            return tape.scalar(loss);
        };
        Tape tape;
        Val a, b;
        Val loss = build({a0, b0}, tape, a, b);
        tape.backward(loss);
        CHECK(fd(f, {a0, b0}, {tape.grad(a), tape.grad(b)}) < 1e-5);
    }
    SUBCASE("matvec/matmul/row/mean_rows/stack_rows") {
        Tensor m0 = random_tensor({4, 3}, rng), n0 = random_tensor({3, 5}, rng),
               v0 = random_tensor({5}, rng);
        auto build = [&](const std::vector<Tensor>& ps, Tape& tape, Val& m, Val& n, Val& v) {
            m = tape.leaf(ps[0]);
            n = tape.leaf(ps[1]);
            v = tape.leaf(ps[2]);
            Val prod = tape.matmul(m, n);  // 4x5
            Val mv = tape.matvec(prod, v);
            Val stacked = tape.stack_rows({mv, tape.scale(mv, 0.5)});
            Val pooled = tape.mean_rows(stacked, 0, 2);
            return tape.add(tape.sum(pooled), tape.sum(tape.row(prod, 2)));
        };
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            Val m, n, v;
            return tape.scalar(build(ps, tape, m, n, v));
        };
        Tape tape;
        Val m, n, v;
        Val loss = build({m0, n0, v0}, tape, m, n, v);
        tape.backward(loss);
        CHECK(fd(f, {m0, n0, v0}, {tape.grad(m), tape.grad(n), tape.grad(v)}) < 1e-5);
    }
    SUBCASE("sigmoid/tanh/exp/log/masked_softmax/pick") {
        Tensor x0 = random_tensor({5}, rng, 0.1, 2.0);
        const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 1};
        auto build = [&](const std::vector<Tensor>& ps, Tape& tape, Val& x) {
            x = tape.leaf(ps[0]);
            Val soft = tape.masked_softmax(tape.tanh(x), mask);
            Val picked = tape.log(tape.pick(soft, 2));
            return tape.add(picked, tape.sum(tape.sigmoid(tape.exp(tape.log(x)))));
        };
        auto f = [&](const std::vector<Tensor>& ps) {
            Tape tape;
            Val x;
            return tape.scalar(build(ps, tape, x));
        };
        Tape tape;
        Val x;
        Val loss = build({x0}, tape, x);
        tape.backward(loss);
        CHECK(fd(f, {x0}, {tape.grad(x)}) < 1e-5);
    }
    SUBCASE("straight-through node passes gradient to p") {
        Tape tape;
        Val a = tape.scalar_leaf(0.3);
        Val p = tape.sigmoid(a);
        Val z = tape.st_sample(p, 1.0);
        Val loss = tape.scale(z, 2.0);
        CHECK(tape.scalar(z) == 1.0);
        tape.backward(loss);
        const double pv = tape.scalar(p);
        CHECK(tape.grad(a).data[0] == doctest::Approx(2.0 * pv * (1.0 - pv)).epsilon(1e-14));
    }
}

TEST_CASE("finite_diff_check contract") {
    SUBCASE("quadratic is exact") {
        auto f = [](const std::vector<Tensor>& ps) { return ps[0].data[0] * ps[0].data[0]; };
        const double err =
            finite_diff_check(f, {Tensor::scalar(3.0)}, {Tensor::scalar(6.0)}, 1e-5);
        CHECK(err < 1e-6);
    }
    SUBCASE("constant function has zero gradient") {
        auto f = [](const std::vector<Tensor>&) { return 42.0; };
        const double err =
            finite_diff_check(f, {Tensor::scalar(1.0)}, {Tensor::scalar(0.0)}, 1e-5);
        CHECK(err < 1e-9);
    }
    SUBCASE("non-deterministic f is rejected") {
        int calls = 0;
        auto f = [&](const std::vector<Tensor>&) { return static_cast<double>(calls++); };
        CHECK_THROWS_AS(
            finite_diff_check(f, {Tensor::scalar(1.0)}, {Tensor::scalar(0.0)}, 1e-5),
            DeterminismError);
    }
    SUBCASE("epsilon outside range is rejected") {
        auto f = [](const std::vector<Tensor>&) { return 0.0; };
        CHECK_THROWS_AS(finite_diff_check(f, {Tensor::scalar(1.0)}, {Tensor::scalar(0.0)}, 1e-2),
                        DomainError);
    }
}
