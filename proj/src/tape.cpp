#include "csreft/tape.hpp"

#include <cmath>
#include <string>

#include "csreft/errors.hpp"

namespace csreft {

namespace {

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) return Broadcast::kSame;
    if (b.numel() == 1) return Broadcast::kScalar;
    if (a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1]) return Broadcast::kRow;
    throw ShapeError("incompatible operand shapes " + a.shape_str() + " vs " + b.shape_str());
}

void softmax_row(const double* x, double* y, int n) {
    double m = x[0];
    for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - m);
        z += y[i];
    }
    const double inv = 1.0 / z;
    for (int i = 0; i < n; ++i) y[i] *= inv;
}

}  // namespace

NodeId Tape::append(Node node) {
    if (!all_finite(node.value)) {
        throw NonFinite("non-finite value produced by tape op");
    }
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::val(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
}

double Tape::scalar_value(NodeId id) const {
    const Tensor& v = val(id);
    if (v.numel() != 1) throw NotScalar("node has " + std::to_string(v.numel()) + " elements");
    return v.data[0];
}

NodeId Tape::input(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return append(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
    Node n;
    n.op = Op::kMatmul;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.value = csreft::matmul(val(a), val(b), trans_a, trans_b);
    n.parents = {a, b};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return append(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    Broadcast bc = broadcast_kind(av, bv);
    Tensor out = av;
    if (bc == Broadcast::kSame) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    } else if (bc == Broadcast::kScalar) {
        for (double& v : out.data) v += bv.data[0];
    } else {
        const int cols = av.shape[1];
        for (int i = 0; i < av.shape[0]; ++i)
            for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] += bv.data[j];
    }
    Node n;
    n.op = Op::kAdd;
    n.value = std::move(out);
    n.parents = {a, b};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return append(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    Broadcast bc = broadcast_kind(av, bv);
    Tensor out = av;
    if (bc == Broadcast::kSame) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    } else if (bc == Broadcast::kScalar) {
        for (double& v : out.data) v -= bv.data[0];
    } else {
        const int cols = av.shape[1];
        for (int i = 0; i < av.shape[0]; ++i)
            for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] -= bv.data[j];
    }
    Node n;
    n.op = Op::kSub;
    n.value = std::move(out);
    n.parents = {a, b};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return append(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    Broadcast bc = broadcast_kind(av, bv);
    Tensor out = av;
    if (bc == Broadcast::kSame) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    } else if (bc == Broadcast::kScalar) {
        for (double& v : out.data) v *= bv.data[0];
    } else {
        const int cols = av.shape[1];
        for (int i = 0; i < av.shape[0]; ++i)
            for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] *= bv.data[j];
    }
    Node n;
    n.op = Op::kMul;
    n.value = std::move(out);
    n.parents = {a, b};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return append(std::move(n));
}

NodeId Tape::scalar_mul(NodeId a, double s) {
    Node n;
    n.op = Op::kScalarMul;
    n.scalar = s;
    n.value = val(a);
    for (double& v : n.value.data) v *= s;
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::kRelu;
    n.value = val(a);
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
    Node n;
    n.op = Op::kSigmoid;
    n.value = val(a);
    for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
    Node n;
    n.op = Op::kTanh;
    n.value = val(a);
    for (double& v : n.value.data) v = std::tanh(v);
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::softmax(NodeId a) {
    const Tensor& av = val(a);
    const int cols = av.cols();
    const int rows = static_cast<int>(av.numel() / cols);
    Tensor out = av;
    for (int i = 0; i < rows; ++i) {
        softmax_row(&av.data[static_cast<std::size_t>(i) * cols],
                    &out.data[static_cast<std::size_t>(i) * cols], cols);
    }
    Node n;
    n.op = Op::kSoftmax;
    n.value = std::move(out);
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::layernorm(NodeId a) {
    const Tensor& av = val(a);
    const int cols = av.cols();
    const int rows = static_cast<int>(av.numel() / cols);
    Tensor out = av;
    for (int i = 0; i < rows; ++i) {
        const double* x = &av.data[static_cast<std::size_t>(i) * cols];
        double* y = &out.data[static_cast<std::size_t>(i) * cols];
        double mu = 0.0;
        for (int j = 0; j < cols; ++j) mu += x[j];
        mu /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * inv;
    }
    Node n;
    n.op = Op::kLayerNorm;
    n.value = std::move(out);
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::embedding(NodeId table, std::vector<int> tokens) {
    const Tensor& tv = val(table);
    if (tv.rank() != 2) throw ShapeError("embedding table must be a matrix, got " + tv.shape_str());
    const int vocab = tv.shape[0];
    const int d = tv.shape[1];
    Tensor out = Tensor::zeros({static_cast<int>(tokens.size()), d});
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] < 0 || tokens[t] >= vocab) {
            throw ShapeError("embedding index " + std::to_string(tokens[t]) + " out of range [0," +
                             std::to_string(vocab) + ")");
        }
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(t), j) = tv.at(tokens[t], j);
    }
    Node n;
    n.op = Op::kEmbedding;
    n.value = std::move(out);
    n.parents = {table};
    n.indices = std::move(tokens);
    n.requires_grad = requires_grad(table);
    return append(std::move(n));
}

NodeId Tape::slice(NodeId a, int axis, int start, int extent) {
    const Tensor& av = val(a);
    if (av.rank() != 2) throw ShapeError("slice expects a matrix, got " + av.shape_str());
    if (axis != 0 && axis != 1) throw ShapeError("slice axis must be 0 or 1");
    const int limit = av.shape[axis];
    if (start < 0 || extent < 1 || start + extent > limit) {
        throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + extent) +
                         ") out of range for axis extent " + std::to_string(limit));
    }
    Tensor out;
    if (axis == 0) {
        out = Tensor::zeros({extent, av.shape[1]});
        for (int i = 0; i < extent; ++i)
            for (int j = 0; j < av.shape[1]; ++j) out.at(i, j) = av.at(start + i, j);
    } else {
        out = Tensor::zeros({av.shape[0], extent});
        for (int i = 0; i < av.shape[0]; ++i)
            for (int j = 0; j < extent; ++j) out.at(i, j) = av.at(i, start + j);
    }
    Node n;
    n.op = Op::kSlice;
    n.value = std::move(out);
    n.parents = {a};
    n.axis = axis;
    n.start = start;
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::concat(const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero parts");
    if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
    const int other = 1 - axis;
    int total = 0;
    for (NodeId p : parts) {
        const Tensor& pv = val(p);
        if (pv.rank() != 2) throw ShapeError("concat expects matrices, got " + pv.shape_str());
        if (pv.shape[other] != val(parts[0]).shape[other]) {
            throw ShapeError("concat parts disagree on axis " + std::to_string(other));
        }
        total += pv.shape[axis];
    }
    Tensor out = axis == 0 ? Tensor::zeros({total, val(parts[0]).shape[1]})
                           : Tensor::zeros({val(parts[0]).shape[0], total});
    int off = 0;
    bool rg = false;
    for (NodeId p : parts) {
        const Tensor& pv = val(p);
        if (axis == 0) {
            for (int i = 0; i < pv.shape[0]; ++i)
                for (int j = 0; j < pv.shape[1]; ++j) out.at(off + i, j) = pv.at(i, j);
        } else {
            for (int i = 0; i < pv.shape[0]; ++i)
                for (int j = 0; j < pv.shape[1]; ++j) out.at(i, off + j) = pv.at(i, j);
        }
        off += pv.shape[axis];
        rg = rg || requires_grad(p);
    }
    Node n;
    n.op = Op::kConcat;
    n.value = std::move(out);
    n.parents = parts;
    n.axis = axis;
    n.requires_grad = rg;
    return append(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    double s = 0.0;
    for (double v : val(a).data) s += v;
    Node n;
    n.op = Op::kSum;
    n.value = Tensor({1}, {s});
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::mean(NodeId a) {
    double s = 0.0;
    for (double v : val(a).data) s += v;
    Node n;
    n.op = Op::kMean;
    n.value = Tensor({1}, {s / static_cast<double>(val(a).numel())});
    n.parents = {a};
    n.requires_grad = requires_grad(a);
    return append(std::move(n));
}

NodeId Tape::mse_loss(NodeId a, NodeId b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) {
        throw ShapeError("mse_loss shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < av.data.size(); ++i) {
        const double d = av.data[i] - bv.data[i];
        s += d * d;
    }
    Node n;
    n.op = Op::kMseLoss;
    n.value = Tensor({1}, {s / static_cast<double>(av.numel())});
    n.parents = {a, b};
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return append(std::move(n));
}

NodeId Tape::cross_entropy(NodeId logits, std::vector<int> targets) {
    const Tensor& lv = val(logits);
    if (lv.rank() != 2) throw ShapeError("cross_entropy expects a logits matrix, got " + lv.shape_str());
    const int rows = lv.shape[0];
    const int cols = lv.shape[1];
    if (static_cast<int>(targets.size()) != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
    }
    double total = 0.0;
    for (int i = 0; i < rows; ++i) {
        const int t = targets[i];
        if (t < 0 || t >= cols) {
            throw ShapeError("cross_entropy target " + std::to_string(t) + " out of range");
        }
        const double* x = &lv.data[static_cast<std::size_t>(i) * cols];
        double m = x[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) z += std::exp(x[j] - m);
        total += m + std::log(z) - x[t];
    }
    Node n;
    n.op = Op::kCrossEntropy;
    n.value = Tensor({1}, {total / rows});
    n.parents = {logits};
    n.indices = std::move(targets);
    n.requires_grad = requires_grad(logits);
    return append(std::move(n));
}

std::vector<Tensor> Tape::backward(NodeId loss) const {
    const std::size_t n = nodes_.size();
    if (val(loss).numel() != 1) {
        throw NotScalar("backward needs a scalar loss, got shape " + val(loss).shape_str());
    }
    std::vector<Tensor> grads(n);
    std::vector<char> present(n, 0);

    auto accum = [&](NodeId id, Tensor g) {
        if (!nodes_[static_cast<std::size_t>(id)].requires_grad) return;
        if (!present[static_cast<std::size_t>(id)]) {
            grads[static_cast<std::size_t>(id)] = std::move(g);
            present[static_cast<std::size_t>(id)] = 1;
        } else {
            axpy(1.0, g, grads[static_cast<std::size_t>(id)]);
        }
    };

    if (nodes_[static_cast<std::size_t>(loss)].requires_grad) {
        Tensor seed = val(loss);
        seed.data[0] = 1.0;
        grads[static_cast<std::size_t>(loss)] = std::move(seed);
        present[static_cast<std::size_t>(loss)] = 1;
    }

    for (NodeId id = loss; id >= 0; --id) {
        const std::size_t ui = static_cast<std::size_t>(id);
        if (!present[ui]) continue;
        const Node& nd = nodes_[ui];
        const Tensor& g = grads[ui];
        switch (nd.op) {
            case Op::kInput:
                break;
            case Op::kMatmul: {
                const NodeId a = nd.parents[0], b = nd.parents[1];
                const Tensor& av = val(a);
                const Tensor& bv = val(b);
                if (requires_grad(a)) {
                    Tensor da = !nd.trans_a
                                    ? (!nd.trans_b ? csreft::matmul(g, bv, false, true)
                                                   : csreft::matmul(g, bv, false, false))
                                    : (!nd.trans_b ? csreft::matmul(bv, g, false, true)
                                                   : csreft::matmul(bv, g, true, true));
                    accum(a, std::move(da));
                }
                if (requires_grad(b)) {
                    Tensor db = !nd.trans_b
                                    ? (!nd.trans_a ? csreft::matmul(av, g, true, false)
                                                   : csreft::matmul(av, g, false, false))
                                    : (!nd.trans_a ? csreft::matmul(g, av, true, false)
                                                   : csreft::matmul(g, av, true, true));
                    accum(b, std::move(db));
                }
                break;
            }
            case Op::kAdd:
            case Op::kSub: {
                const NodeId a = nd.parents[0], b = nd.parents[1];
                const double sign = nd.op == Op::kAdd ? 1.0 : -1.0;
                if (requires_grad(a)) accum(a, g);
                if (requires_grad(b)) {
                    const Tensor& bv = val(b);
                    Broadcast bc = broadcast_kind(val(a), bv);
                    Tensor db;
                    if (bc == Broadcast::kSame) {
                        db = g;
                        if (sign < 0) for (double& v : db.data) v = -v;
                    } else if (bc == Broadcast::kScalar) {
                        double s = 0.0;
                        for (double v : g.data) s += v;
                        db = bv;
                        db.data[0] = sign * s;
                    } else {
                        db = colsum(g);
                        if (sign < 0) for (double& v : db.data) v = -v;
                    }
                    accum(b, std::move(db));
                }
                break;
            }
            case Op::kMul: {
                const NodeId a = nd.parents[0], b = nd.parents[1];
                const Tensor& av = val(a);
                const Tensor& bv = val(b);
                Broadcast bc = broadcast_kind(av, bv);
                if (requires_grad(a)) {
                    Tensor da = g;
                    if (bc == Broadcast::kSame) {
                        for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] *= bv.data[i];
                    } else if (bc == Broadcast::kScalar) {
                        for (double& v : da.data) v *= bv.data[0];
                    } else {
                        const int cols = av.shape[1];
                        for (int i = 0; i < av.shape[0]; ++i)
                            for (int j = 0; j < cols; ++j)
                                da.data[static_cast<std::size_t>(i) * cols + j] *= bv.data[j];
                    }
                    accum(a, std::move(da));
                }
                if (requires_grad(b)) {
                    Tensor db;
                    if (bc == Broadcast::kSame) {
                        db = g;
                        for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] *= av.data[i];
                    } else if (bc == Broadcast::kScalar) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < g.data.size(); ++i) s += g.data[i] * av.data[i];
                        db = bv;
                        db.data[0] = s;
                    } else {
                        db = Tensor::zeros(bv.shape);
                        const int cols = av.shape[1];
                        for (int i = 0; i < av.shape[0]; ++i)
                            for (int j = 0; j < cols; ++j)
                                db.data[j] += g.data[static_cast<std::size_t>(i) * cols + j] *
                                              av.data[static_cast<std::size_t>(i) * cols + j];
                    }
                    accum(b, std::move(db));
                }
                break;
            }
            case Op::kScalarMul: {
                if (requires_grad(nd.parents[0])) {
                    Tensor da = g;
                    for (double& v : da.data) v *= nd.scalar;
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kRelu: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& x = val(nd.parents[0]);
                    Tensor da = g;
                    for (std::size_t i = 0; i < da.data.size(); ++i) {
                        if (x.data[i] <= 0.0) da.data[i] = 0.0;
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kSigmoid: {
                if (requires_grad(nd.parents[0])) {
                    Tensor da = g;
                    for (std::size_t i = 0; i < da.data.size(); ++i) {
                        const double y = nd.value.data[i];
                        da.data[i] *= y * (1.0 - y);
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kTanh: {
                if (requires_grad(nd.parents[0])) {
                    Tensor da = g;
                    for (std::size_t i = 0; i < da.data.size(); ++i) {
                        const double y = nd.value.data[i];
                        da.data[i] *= 1.0 - y * y;
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kSoftmax: {
                if (requires_grad(nd.parents[0])) {
                    const int cols = nd.value.cols();
                    const int rows = static_cast<int>(nd.value.numel() / cols);
                    Tensor da = Tensor::zeros(nd.value.shape);
                    for (int i = 0; i < rows; ++i) {
                        const double* y = &nd.value.data[static_cast<std::size_t>(i) * cols];
                        const double* gr = &g.data[static_cast<std::size_t>(i) * cols];
                        double dotv = 0.0;
                        for (int j = 0; j < cols; ++j) dotv += gr[j] * y[j];
                        double* o = &da.data[static_cast<std::size_t>(i) * cols];
                        for (int j = 0; j < cols; ++j) o[j] = y[j] * (gr[j] - dotv);
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kLayerNorm: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& x = val(nd.parents[0]);
                    const int cols = x.cols();
                    const int rows = static_cast<int>(x.numel() / cols);
                    Tensor da = Tensor::zeros(x.shape);
                    for (int i = 0; i < rows; ++i) {
                        const double* xr = &x.data[static_cast<std::size_t>(i) * cols];
                        const double* y = &nd.value.data[static_cast<std::size_t>(i) * cols];
                        const double* gr = &g.data[static_cast<std::size_t>(i) * cols];
                        double mu = 0.0;
                        for (int j = 0; j < cols; ++j) mu += xr[j];
                        mu /= cols;
                        double var = 0.0;
                        for (int j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                        var /= cols;
                        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                        double gmean = 0.0, gymean = 0.0;
                        for (int j = 0; j < cols; ++j) {
                            gmean += gr[j];
                            gymean += gr[j] * y[j];
                        }
                        gmean /= cols;
                        gymean /= cols;
                        double* o = &da.data[static_cast<std::size_t>(i) * cols];
                        for (int j = 0; j < cols; ++j) o[j] = inv * (gr[j] - gmean - y[j] * gymean);
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kEmbedding: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& tv = val(nd.parents[0]);
                    Tensor da = Tensor::zeros(tv.shape);
                    const int d = tv.shape[1];
                    for (std::size_t t = 0; t < nd.indices.size(); ++t) {
                        for (int j = 0; j < d; ++j) {
                            da.at(nd.indices[t], j) += g.at(static_cast<int>(t), j);
                        }
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kSlice: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& pv = val(nd.parents[0]);
                    Tensor da = Tensor::zeros(pv.shape);
                    if (nd.axis == 0) {
                        for (int i = 0; i < nd.value.shape[0]; ++i)
                            for (int j = 0; j < nd.value.shape[1]; ++j)
                                da.at(nd.start + i, j) = g.at(i, j);
                    } else {
                        for (int i = 0; i < nd.value.shape[0]; ++i)
                            for (int j = 0; j < nd.value.shape[1]; ++j)
                                da.at(i, nd.start + j) = g.at(i, j);
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
            case Op::kConcat: {
                int off = 0;
                for (NodeId p : nd.parents) {
                    const Tensor& pv = val(p);
                    if (requires_grad(p)) {
                        Tensor dp = Tensor::zeros(pv.shape);
                        if (nd.axis == 0) {
                            for (int i = 0; i < pv.shape[0]; ++i)
                                for (int j = 0; j < pv.shape[1]; ++j) dp.at(i, j) = g.at(off + i, j);
                        } else {
                            for (int i = 0; i < pv.shape[0]; ++i)
                                for (int j = 0; j < pv.shape[1]; ++j) dp.at(i, j) = g.at(i, off + j);
                        }
                        accum(p, std::move(dp));
                    }
                    off += pv.shape[nd.axis];
                }
                break;
            }
            case Op::kSum: {
                if (requires_grad(nd.parents[0])) {
                    accum(nd.parents[0], Tensor::full(val(nd.parents[0]).shape, g.data[0]));
                }
                break;
            }
            case Op::kMean: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& pv = val(nd.parents[0]);
                    accum(nd.parents[0], Tensor::full(pv.shape, g.data[0] / static_cast<double>(pv.numel())));
                }
                break;
            }
            case Op::kMseLoss: {
                const NodeId a = nd.parents[0], b = nd.parents[1];
                const Tensor& av = val(a);
                const Tensor& bv = val(b);
                const double scale = 2.0 * g.data[0] / static_cast<double>(av.numel());
                if (requires_grad(a)) {
                    Tensor da = Tensor::zeros(av.shape);
                    for (std::size_t i = 0; i < av.data.size(); ++i)
                        da.data[i] = scale * (av.data[i] - bv.data[i]);
                    accum(a, std::move(da));
                }
                if (requires_grad(b)) {
                    Tensor db = Tensor::zeros(bv.shape);
                    for (std::size_t i = 0; i < bv.data.size(); ++i)
                        db.data[i] = -scale * (av.data[i] - bv.data[i]);
                    accum(b, std::move(db));
                }
                break;
            }
            case Op::kCrossEntropy: {
                if (requires_grad(nd.parents[0])) {
                    const Tensor& lv = val(nd.parents[0]);
                    const int rows = lv.shape[0];
                    const int cols = lv.shape[1];
                    Tensor da = Tensor::zeros(lv.shape);
                    const double scale = g.data[0] / rows;
                    std::vector<double> sm(static_cast<std::size_t>(cols));
                    for (int i = 0; i < rows; ++i) {
                        softmax_row(&lv.data[static_cast<std::size_t>(i) * cols], sm.data(), cols);
                        double* o = &da.data[static_cast<std::size_t>(i) * cols];
                        for (int j = 0; j < cols; ++j) o[j] = scale * sm[static_cast<std::size_t>(j)];
                        o[nd.indices[static_cast<std::size_t>(i)]] -= scale;
                    }
                    accum(nd.parents[0], std::move(da));
                }
                break;
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (nodes_[i].requires_grad && !present[i]) {
            grads[i] = Tensor::zeros(nodes_[i].value.shape);
        }
    }
    return grads;
}

}  // namespace csreft
