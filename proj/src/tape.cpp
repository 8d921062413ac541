#include "educe/tape.hpp"

#include <cfloat>
#include <cmath>

namespace educe {

namespace {

// Clamped away from {0,1} so downstream log() stays finite even at extreme
// pre-activations; the derivative y*(1-y) is consistent with the clamp.
double stable_sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    const double lo = 1e-300;
    const double hi = 1.0 - DBL_EPSILON / 2;  // nextafter(1, 0)
    if (y < lo) y = lo;
    if (y > hi) y = hi;
    return y;
}

// exp saturates at the finite range instead of overflowing to inf.
double stable_exp(double x) {
    if (x > 709.0) x = 709.0;
    if (x < -745.0) x = -745.0;
    return std::exp(x);
}

}  // namespace

std::uint32_t Tape::check(Val v, const char* op) const {
    if (v.tape != this)
        throw ProvenanceError(std::string(op) + ": value does not belong to this tape");
    if (v.id >= nodes_.size())
        throw ProvenanceError(std::string(op) + ": node id out of range");
    return v.id;
}

Val Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Val{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Val Tape::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Val Tape::leaf(const Tensor& value, bool) {
    return leaf(Tensor(value));
}

const Tensor& Tape::value(Val v) const {
    return nodes_[check(v, "value")].value;
}

double Tape::scalar(Val v) const {
    const Tensor& t = value(v);
    if (!t.is_scalar()) throw ShapeError("scalar: node has shape " + shape_str(t.shape));
    return t.data[0];
}

Val Tape::add(Val a, Val b) {
    const auto ia = check(a, "add"), ib = check(b, "add");
    require_same_shape(nodes_[ia].value, nodes_[ib].value, "add");
    Node n;
    n.op = Op::Add;
    n.a0 = ia;
    n.a1 = ib;
    n.value = nodes_[ia].value;
    const auto& bd = nodes_[ib].value.data;
    for (std::size_t i = 0; i < bd.size(); ++i) n.value.data[i] += bd[i];
    return push(std::move(n));
}

Val Tape::mul(Val a, Val b) {
    const auto ia = check(a, "mul"), ib = check(b, "mul");
    require_same_shape(nodes_[ia].value, nodes_[ib].value, "mul");
    Node n;
    n.op = Op::Mul;
    n.a0 = ia;
    n.a1 = ib;
    n.value = nodes_[ia].value;
    const auto& bd = nodes_[ib].value.data;
    for (std::size_t i = 0; i < bd.size(); ++i) n.value.data[i] *= bd[i];
    return push(std::move(n));
}

Val Tape::scale(Val a, double k) {
    const auto ia = check(a, "scale");
    Node n;
    n.op = Op::Scale;
    n.a0 = ia;
    n.k = k;
    n.value = nodes_[ia].value;
    for (auto& v : n.value.data) v *= k;
    return push(std::move(n));
}

Val Tape::matvec(Val m, Val v) {
    const auto im = check(m, "matvec"), iv = check(v, "matvec");
    const Tensor& mt = nodes_[im].value;
    const Tensor& vt = nodes_[iv].value;
    if (mt.rank() != 2 || vt.rank() != 1 || mt.cols() != vt.numel())
        throw ShapeError("matvec: shape mismatch " + shape_str(mt.shape) + " vs " +
                         shape_str(vt.shape));
    Node n;
    n.op = Op::MatVec;
    n.a0 = im;
    n.a1 = iv;
    n.value = Tensor::zeros({mt.rows()});
    for (std::size_t r = 0; r < mt.rows(); ++r) {
        double acc = 0.0;
        const double* mrow = &mt.data[r * mt.cols()];
        for (std::size_t c = 0; c < mt.cols(); ++c) acc += mrow[c] * vt.data[c];
        n.value.data[r] = acc;
    }
    return push(std::move(n));
}

Val Tape::matmul(Val a, Val b) {
    const auto ia = check(a, "matmul"), ib = check(b, "matmul");
    const Tensor& at = nodes_[ia].value;
    const Tensor& bt = nodes_[ib].value;
    if (at.rank() != 2 || bt.rank() != 2 || at.cols() != bt.rows())
        throw ShapeError("matmul: shape mismatch " + shape_str(at.shape) + " vs " +
                         shape_str(bt.shape));
    Node n;
    n.op = Op::MatMul;
    n.a0 = ia;
    n.a1 = ib;
    n.value = Tensor::zeros({at.rows(), bt.cols()});
    for (std::size_t r = 0; r < at.rows(); ++r)
        for (std::size_t k = 0; k < at.cols(); ++k) {
            const double av = at.at(r, k);
            if (av == 0.0) continue;
            for (std::size_t c = 0; c < bt.cols(); ++c) n.value.at(r, c) += av * bt.at(k, c);
        }
    return push(std::move(n));
}

Val Tape::concat(const std::vector<Val>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    Node n;
    n.op = Op::Concat;
    std::size_t total = 0;
    n.extra.reserve(parts.size());
    for (Val p : parts) {
        const auto ip = check(p, "concat");
        if (nodes_[ip].value.rank() != 1)
            throw ShapeError("concat: part has shape " + shape_str(nodes_[ip].value.shape));
        n.extra.push_back(ip);
        total += nodes_[ip].value.numel();
    }
    n.value = Tensor::zeros({total});
    std::size_t off = 0;
    for (auto ip : n.extra) {
        const auto& d = nodes_[ip].value.data;
        for (std::size_t i = 0; i < d.size(); ++i) n.value.data[off + i] = d[i];
        off += d.size();
    }
    return push(std::move(n));
}

Val Tape::stack_rows(const std::vector<Val>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    Node n;
    n.op = Op::StackRows;
    const auto i0 = check(rows[0], "stack_rows");
    const std::size_t width = nodes_[i0].value.numel();
    n.extra.reserve(rows.size());
    for (Val r : rows) {
        const auto ir = check(r, "stack_rows");
        const Tensor& t = nodes_[ir].value;
        if (t.rank() != 1 || t.numel() != width)
            throw ShapeError("stack_rows: row shape " + shape_str(t.shape) + " vs width " +
                             std::to_string(width));
        n.extra.push_back(ir);
    }
    n.value = Tensor::zeros({rows.size(), width});
    for (std::size_t r = 0; r < n.extra.size(); ++r) {
        const auto& d = nodes_[n.extra[r]].value.data;
        for (std::size_t c = 0; c < width; ++c) n.value.at(r, c) = d[c];
    }
    return push(std::move(n));
}

Val Tape::mean_rows(Val m, std::size_t row_begin, std::size_t row_end) {
    const auto im = check(m, "mean_rows");
    const Tensor& mt = nodes_[im].value;
    if (mt.rank() != 2) throw ShapeError("mean_rows: tensor has shape " + shape_str(mt.shape));
    if (row_begin >= row_end || row_end > mt.rows())
        throw ShapeError("mean_rows: range [" + std::to_string(row_begin) + "," +
                         std::to_string(row_end) + ") out of " + std::to_string(mt.rows()) +
                         " rows");
    Node n;
    n.op = Op::MeanRows;
    n.a0 = im;
    n.ia = row_begin;
    n.ib = row_end;
    n.value = Tensor::zeros({mt.cols()});
    for (std::size_t r = row_begin; r < row_end; ++r)
        for (std::size_t c = 0; c < mt.cols(); ++c) n.value.data[c] += mt.at(r, c);
    const double inv = 1.0 / static_cast<double>(row_end - row_begin);
    for (auto& v : n.value.data) v *= inv;
    return push(std::move(n));
}

Val Tape::segment(Val v, std::size_t offset, std::size_t len) {
    const auto iv = check(v, "segment");
    const Tensor& vt = nodes_[iv].value;
    if (vt.rank() != 1 || offset + len > vt.numel())
        throw ShapeError("segment: [" + std::to_string(offset) + "," +
                         std::to_string(offset + len) + ") out of " + shape_str(vt.shape));
    Node n;
    n.op = Op::Segment;
    n.a0 = iv;
    n.ia = offset;
    n.ib = len;
    n.value = Tensor::zeros({len});
    for (std::size_t i = 0; i < len; ++i) n.value.data[i] = vt.data[offset + i];
    return push(std::move(n));
}

Val Tape::row(Val m, std::size_t r) {
    const auto im = check(m, "row");
    const Tensor& mt = nodes_[im].value;
    if (mt.rank() != 2 || r >= mt.rows())
        throw ShapeError("row: row " + std::to_string(r) + " out of " + shape_str(mt.shape));
    Node n;
    n.op = Op::Row;
    n.a0 = im;
    n.ia = r;
    n.value = Tensor::zeros({mt.cols()});
    for (std::size_t c = 0; c < mt.cols(); ++c) n.value.data[c] = mt.at(r, c);
    return push(std::move(n));
}

Val Tape::pick(Val v, std::size_t i) {
    const auto iv = check(v, "pick");
    const Tensor& vt = nodes_[iv].value;
    if (vt.rank() != 1 || i >= vt.numel())
        throw ShapeError("pick: index " + std::to_string(i) + " out of " + shape_str(vt.shape));
    Node n;
    n.op = Op::Pick;
    n.a0 = iv;
    n.ia = i;
    n.value = Tensor::scalar(vt.data[i]);
    return push(std::move(n));
}

Val Tape::dot(Val a, Val b) {
    const auto ia = check(a, "dot"), ib = check(b, "dot");
    const Tensor& at = nodes_[ia].value;
    const Tensor& bt = nodes_[ib].value;
    if (at.rank() != 1 || bt.rank() != 1 || at.numel() != bt.numel())
        throw ShapeError("dot: shape mismatch " + shape_str(at.shape) + " vs " +
                         shape_str(bt.shape));
    Node n;
    n.op = Op::Dot;
    n.a0 = ia;
    n.a1 = ib;
    double acc = 0.0;
    for (std::size_t i = 0; i < at.numel(); ++i) acc += at.data[i] * bt.data[i];
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Val Tape::sum(Val v) {
    const auto iv = check(v, "sum");
    Node n;
    n.op = Op::Sum;
    n.a0 = iv;
    double acc = 0.0;
    for (double x : nodes_[iv].value.data) acc += x;
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Val Tape::sigmoid(Val a) {
    const auto ia = check(a, "sigmoid");
    Node n;
    n.op = Op::Sigmoid;
    n.a0 = ia;
    n.value = nodes_[ia].value;
    for (auto& v : n.value.data) v = stable_sigmoid(v);
    return push(std::move(n));
}

Val Tape::tanh(Val a) {
    const auto ia = check(a, "tanh");
    Node n;
    n.op = Op::Tanh;
    n.a0 = ia;
    n.value = nodes_[ia].value;
    for (auto& v : n.value.data) v = std::tanh(v);
    return push(std::move(n));
}

Val Tape::exp(Val a) {
    const auto ia = check(a, "exp");
    Node n;
    n.op = Op::Exp;
    n.a0 = ia;
    n.value = nodes_[ia].value;
    for (auto& v : n.value.data) v = stable_exp(v);
    return push(std::move(n));
}

Val Tape::log(Val a) {
    const auto ia = check(a, "log");
    Node n;
    n.op = Op::Log;
    n.a0 = ia;
    n.value = nodes_[ia].value;
    for (auto& v : n.value.data) {
        if (v <= 0.0) throw DomainError("log: non-positive input " + std::to_string(v));
        v = std::log(v);
    }
    return push(std::move(n));
}

Val Tape::masked_softmax(Val scores, const std::vector<std::uint8_t>& valid) {
    const auto is = check(scores, "masked_softmax");
    const Tensor& st = nodes_[is].value;
    if (st.rank() != 1 || st.numel() != valid.size())
        throw ShapeError("masked_softmax: scores " + shape_str(st.shape) + " vs mask length " +
                         std::to_string(valid.size()));
    // max over valid entries only, for stability
    double mx = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (!valid[i]) continue;
        if (!any || st.data[i] > mx) mx = st.data[i];
        any = true;
    }
    if (!any) throw MaskError("masked_softmax: no valid position");
    Node n;
    n.op = Op::MaskedSoftmax;
    n.a0 = is;
    n.mask = valid;
    n.value = Tensor::zeros({st.numel()});
    double z = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (!valid[i]) continue;
        const double e = stable_exp(st.data[i] - mx);
        n.value.data[i] = e;
        z += e;
    }
    for (std::size_t i = 0; i < valid.size(); ++i)
        if (valid[i]) n.value.data[i] /= z;
    return push(std::move(n));
}

Val Tape::st_sample(Val p, double sampled) {
    const auto ip = check(p, "st_sample");
    if (!nodes_[ip].value.is_scalar())
        throw ShapeError("st_sample: p has shape " + shape_str(nodes_[ip].value.shape));
    if (sampled != 0.0 && sampled != 1.0)
        throw DomainError("st_sample: sampled bit must be 0 or 1");
    Node n;
    n.op = Op::StSample;
    n.a0 = ip;
    n.k = sampled;
    n.value = Tensor::scalar(sampled);
    return push(std::move(n));
}

Tensor& Tape::grad_buf(std::uint32_t id) {
    if (grads_[id].empty()) grads_[id] = Tensor::zeros(nodes_[id].value.shape);
    return grads_[id];
}

void Tape::backward(Val loss) {
    backward_weighted({{loss, 1.0}});
}

void Tape::backward_weighted(const std::vector<std::pair<Val, double>>& seeds) {
    grads_.assign(nodes_.size(), Tensor{});
    for (const auto& [v, w] : seeds) {
        const auto id = check(v, "backward");
        if (!nodes_[id].value.is_scalar())
            throw ShapeError("backward: seed node has shape " + shape_str(nodes_[id].value.shape));
        grad_buf(id).data[0] += w;
    }
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (grads_[i].empty()) continue;  // node unreached; contributes exactly zero
        backprop_node(static_cast<std::uint32_t>(i));
    }
}

void Tape::backprop_node(std::uint32_t id) {
    const Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            Tensor& ga = grad_buf(n.a0);
            Tensor& gb = grad_buf(n.a1);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
            break;
        }
        case Op::Mul: {
            const Tensor& av = nodes_[n.a0].value;
            const Tensor& bv = nodes_[n.a1].value;
            Tensor& ga = grad_buf(n.a0);
            Tensor& gb = grad_buf(n.a1);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                ga.data[i] += g.data[i] * bv.data[i];
                gb.data[i] += g.data[i] * av.data[i];
            }
            break;
        }
        case Op::Scale: {
            Tensor& ga = grad_buf(n.a0);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += n.k * g.data[i];
            break;
        }
        case Op::MatVec: {
            const Tensor& mv = nodes_[n.a0].value;
            const Tensor& vv = nodes_[n.a1].value;
            Tensor& gm = grad_buf(n.a0);
            Tensor& gv = grad_buf(n.a1);
            const std::size_t R = mv.rows(), C = mv.cols();
            for (std::size_t r = 0; r < R; ++r) {
                const double gr = g.data[r];
                if (gr == 0.0) continue;
                double* gmr = &gm.data[r * C];
                const double* mr = &mv.data[r * C];
                for (std::size_t c = 0; c < C; ++c) {
                    gmr[c] += gr * vv.data[c];
                    gv.data[c] += gr * mr[c];
                }
            }
            break;
        }
        case Op::MatMul: {
            const Tensor& av = nodes_[n.a0].value;
            const Tensor& bv = nodes_[n.a1].value;
            Tensor& ga = grad_buf(n.a0);
            Tensor& gb = grad_buf(n.a1);
            const std::size_t R = av.rows(), K = av.cols(), C = bv.cols();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c) acc += g.data[r * C + c] * bv.data[k * C + c];
                    ga.data[r * K + k] += acc;
                }
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < R; ++r) acc += av.data[r * K + k] * g.data[r * C + c];
                    gb.data[k * C + c] += acc;
                }
            break;
        }
        case Op::Concat: {
            std::size_t off = 0;
            for (auto ip : n.extra) {
                Tensor& gp = grad_buf(ip);
                for (std::size_t i = 0; i < gp.numel(); ++i) gp.data[i] += g.data[off + i];
                off += gp.numel();
            }
            break;
        }
        case Op::StackRows: {
            const std::size_t width = n.value.cols();
            for (std::size_t r = 0; r < n.extra.size(); ++r) {
                Tensor& gp = grad_buf(n.extra[r]);
                for (std::size_t c = 0; c < width; ++c) gp.data[c] += g.data[r * width + c];
            }
            break;
        }
        case Op::MeanRows: {
            Tensor& gm = grad_buf(n.a0);
            const std::size_t C = nodes_[n.a0].value.cols();
            const double inv = 1.0 / static_cast<double>(n.ib - n.ia);
            for (std::size_t r = n.ia; r < n.ib; ++r)
                for (std::size_t c = 0; c < C; ++c) gm.data[r * C + c] += inv * g.data[c];
            break;
        }
        case Op::Segment: {
            Tensor& gv = grad_buf(n.a0);
            for (std::size_t i = 0; i < n.ib; ++i) gv.data[n.ia + i] += g.data[i];
            break;
        }
        case Op::Row: {
            Tensor& gm = grad_buf(n.a0);
            const std::size_t C = nodes_[n.a0].value.cols();
            for (std::size_t c = 0; c < C; ++c) gm.data[n.ia * C + c] += g.data[c];
            break;
        }
        case Op::Pick: {
            grad_buf(n.a0).data[n.ia] += g.data[0];
            break;
        }
        case Op::Dot: {
            const Tensor& av = nodes_[n.a0].value;
            const Tensor& bv = nodes_[n.a1].value;
            Tensor& ga = grad_buf(n.a0);
            Tensor& gb = grad_buf(n.a1);
            const double gs = g.data[0];
            for (std::size_t i = 0; i < av.numel(); ++i) {
                ga.data[i] += gs * bv.data[i];
                gb.data[i] += gs * av.data[i];
            }
            break;
        }
        case Op::Sum: {
            Tensor& gv = grad_buf(n.a0);
            const double gs = g.data[0];
            for (auto& x : gv.data) x += gs;
            break;
        }
        case Op::Sigmoid: {
            Tensor& ga = grad_buf(n.a0);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double y = n.value.data[i];
                ga.data[i] += g.data[i] * y * (1.0 - y);
            }
            break;
        }
        case Op::Tanh: {
            Tensor& ga = grad_buf(n.a0);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double y = n.value.data[i];
                ga.data[i] += g.data[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::Exp: {
            Tensor& ga = grad_buf(n.a0);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * n.value.data[i];
            break;
        }
        case Op::Log: {
            const Tensor& xv = nodes_[n.a0].value;
            Tensor& ga = grad_buf(n.a0);
            for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] / xv.data[i];
            break;
        }
        case Op::MaskedSoftmax: {
            // dL/ds_j = y_j * (g_j - sum_i g_i y_i) over valid positions
            Tensor& gs = grad_buf(n.a0);
            double inner = 0.0;
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (n.mask[i]) inner += g.data[i] * n.value.data[i];
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (n.mask[i]) gs.data[i] += n.value.data[i] * (g.data[i] - inner);
            break;
        }
        case Op::StSample: {
            grad_buf(n.a0).data[0] += g.data[0];
            break;
        }
    }
}

Tensor Tape::grad(Val v) const {
    const auto id = check(v, "grad");
    if (grads_.size() != nodes_.size() || grads_[id].empty())
        return Tensor::zeros(nodes_[id].value.shape);
    return grads_[id];
}

}  // namespace educe
