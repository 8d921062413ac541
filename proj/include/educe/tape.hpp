#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "educe/tensor.hpp"

namespace educe {

class Tape;

// Handle to a tape node. Carries the owning tape so provenance can be checked.
struct Val {
    const Tape* tape = nullptr;
    std::uint32_t id = 0;
};

// Reverse-mode tape over a fixed set of dense primitives. Nodes are recorded
// in forward order; backward() replays them in exact reverse order. Tensors
// are immutable once recorded; a tape is single-owner and single-threaded.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    // Leaf holding a parameter or constant.
    Val leaf(Tensor value);
    Val leaf(const Tensor& value, bool copy);
    Val scalar_leaf(double v) { return leaf(Tensor::scalar(v)); }

    Val add(Val a, Val b);
    Val mul(Val a, Val b);
    Val scale(Val a, double k);
    Val matvec(Val m, Val v);
    Val matmul(Val a, Val b);
    Val concat(const std::vector<Val>& parts);
    Val stack_rows(const std::vector<Val>& rows);
    Val mean_rows(Val m, std::size_t row_begin, std::size_t row_end);
    Val segment(Val v, std::size_t offset, std::size_t len);
    Val row(Val m, std::size_t r);
    Val pick(Val v, std::size_t i);
    Val dot(Val a, Val b);
    Val sum(Val v);
    Val sigmoid(Val a);
    Val tanh(Val a);
    Val exp(Val a);
    Val log(Val a);
    // Softmax over the valid positions; masked entries come out exactly 0.
    Val masked_softmax(Val scores, const std::vector<std::uint8_t>& valid);
    // Straight-through Bernoulli draw: forward value is the sampled bit,
    // backward passes the incoming gradient to p unchanged (so the chain
    // through p = sigmoid(a) substitutes sigma'(a) for dz/da).
    Val st_sample(Val p, double sampled);

    const Tensor& value(Val v) const;
    double scalar(Val v) const;

    // Backward pass seeded with 1.0 at a scalar loss node.
    void backward(Val loss);
    // Backward pass seeded with the given weights at several scalar nodes.
    void backward_weighted(const std::vector<std::pair<Val, double>>& seeds);

    // Gradient of the last backward pass; zeros if the node was not reached.
    Tensor grad(Val v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf,
        Add,
        Mul,
        Scale,
        MatVec,
        MatMul,
        Concat,
        StackRows,
        MeanRows,
        Segment,
        Row,
        Pick,
        Dot,
        Sum,
        Sigmoid,
        Tanh,
        Exp,
        Log,
        MaskedSoftmax,
        StSample,
    };

    struct Node {
        Op op = Op::Leaf;
        Tensor value;
        std::uint32_t a0 = 0, a1 = 0;       // parent ids
        std::vector<std::uint32_t> extra;    // parents for Concat/StackRows
        std::size_t ia = 0, ib = 0;          // op indices (offsets, rows, ...)
        double k = 0.0;                      // Scale constant / StSample bit
        std::vector<std::uint8_t> mask;      // MaskedSoftmax validity
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;

    std::uint32_t check(Val v, const char* op) const;
    Val push(Node n);
    Tensor& grad_buf(std::uint32_t id);
    void backprop_node(std::uint32_t id);
};

// Free-function spellings so expressions read naturally.
inline Val add(Val a, Val b) { return const_cast<Tape*>(a.tape)->add(a, b); }
inline Val mul(Val a, Val b) { return const_cast<Tape*>(a.tape)->mul(a, b); }
inline Val scale(Val a, double k) { return const_cast<Tape*>(a.tape)->scale(a, k); }
inline Val sub(Val a, Val b) { return add(a, scale(b, -1.0)); }

}  // namespace educe
