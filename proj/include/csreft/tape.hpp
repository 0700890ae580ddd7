#pragma once

#include <vector>

#include "csreft/tensor.hpp"

namespace csreft {

// Primitive op set for the reverse-mode tape.
enum class Op {
    kInput,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kScalarMul,
    kRelu,
    kSigmoid,
    kTanh,
    kSoftmax,    // last dim
    kLayerNorm,  // last dim, eps 1e-5
    kEmbedding,
    kSlice,
    kConcat,
    kSum,
    kMean,
    kMseLoss,
    kCrossEntropy,  // softmax cross-entropy, mean over rows
};

using NodeId = int;

struct Node {
    Op op;
    Tensor value;
    std::vector<NodeId> parents;
    bool requires_grad = false;
    // op attributes
    bool trans_a = false;
    bool trans_b = false;
    double scalar = 0.0;
    int axis = 0;
    int start = 0;
    std::vector<int> indices;  // embedding tokens / cross-entropy targets
};

// Append-only define-by-run tape. Parents always precede children, so the
// reverse pass is a single backwards sweep. One tape per training step;
// tapes are not shared across threads.
//
// add/sub/mul accept, besides equal shapes, a rank-1 right operand
// broadcast over the rows of a matrix left operand, and a one-element right
// operand broadcast over everything (used for gate coefficients).
class Tape {
public:
    NodeId input(Tensor value, bool requires_grad = false);
    NodeId constant(Tensor value) { return input(std::move(value), false); }

    NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scalar_mul(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId softmax(NodeId a);
    NodeId layernorm(NodeId a);
    NodeId embedding(NodeId table, std::vector<int> tokens);
    NodeId slice(NodeId a, int axis, int start, int extent);
    NodeId concat(const std::vector<NodeId>& parts, int axis);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId mse_loss(NodeId a, NodeId b);
    NodeId cross_entropy(NodeId logits, std::vector<int> targets);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    double scalar_value(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

    // Gradient of a scalar node w.r.t. every node. Entry i is empty when
    // node i does not require grad, zero when it requires grad but lies on
    // no path to the loss. Throws NotScalar unless loss has one element.
    std::vector<Tensor> backward(NodeId loss) const;

    static constexpr double kLayerNormEps = 1e-5;

private:
    NodeId append(Node node);
    const Tensor& val(NodeId id) const;

    std::vector<Node> nodes_;
};

}  // namespace csreft
