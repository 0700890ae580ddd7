#pragma once

#include <cstdint>
#include <vector>

#include "csreft/intervention.hpp"
#include "csreft/tape.hpp"
#include "csreft/tensor.hpp"

namespace csreft {

enum class GateMode { kSoft, kHard };

// What the router reads: the first token's hidden state at the earliest
// hooked layer (default), or the mean over all positions.
enum class RouteInput { kFirstToken, kMeanPool };

// Two-layer gating network: d -> floor(d/2) with ReLU, then -> k with
// sigmoid, so every gate lies in (0,1). Hard mode thresholds at >= threshold
// (a tie at the threshold turns the gate on).
struct RouterNet {
    Tensor w1;  // floor(d/2) x d
    Tensor b1;  // floor(d/2)
    Tensor w2;  // k x floor(d/2)
    Tensor b2;  // k
    double threshold = 0.5;

    int dim() const { return w1.shape[1]; }
    int hidden() const { return w1.shape[0]; }
    int n_gates() const { return w2.shape[0]; }
};

// Gaussian(0, 1/sqrt(fan_in)) weights, zero biases; at init every gate
// evaluates to 0.5 for any input with zero biases only when weights are
// zero, so tests that need exact 0.5 build an all-zero router instead.
RouterNet init_router(int d, int k, std::uint64_t seed);
RouterNet zero_router(int d, int k);

// alpha = sigmoid(w2 relu(w1 h + b1) + b2) for a d-vector h.
Tensor route(const RouterNet& router, const Tensor& h_first);

// Soft mode returns alpha unchanged; hard mode maps each entry to {0,1}.
Tensor gate(const Tensor& alpha, GateMode mode, double threshold);

// h + sum_i alpha[i] * edit_delta(edits[i], h). Entries with alpha[i] == 0
// are skipped entirely, so the result is bit-independent of those edits.
Tensor compose(const std::vector<SubspaceEdit>& edits, const Tensor& alpha, const Tensor& h);

struct RouterNodes {
    NodeId w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

RouterNodes router_leaves(Tape& tape, const RouterNet& router, bool requires_grad);

// alpha node (1 x k) from a (1 x d) hidden row.
NodeId route_node(Tape& tape, const RouterNodes& router, NodeId h_row);

}  // namespace csreft
