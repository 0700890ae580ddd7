#include "csreft/router.hpp"

#include <cmath>
#include <string>

#include "csreft/errors.hpp"
#include "csreft/rng.hpp"

namespace csreft {

RouterNet init_router(int d, int k, std::uint64_t seed) {
    if (d < 1 || k < 1) throw ConfigError("router needs d >= 1 and k >= 1");
    const int hidden = d / 2 > 0 ? d / 2 : 1;
    Rng rng(seed);
    RouterNet r;
    r.w1 = Tensor::zeros({hidden, d});
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : r.w1.data) v = s1 * rng.gaussian();
    r.b1 = Tensor::zeros({hidden});
    r.w2 = Tensor::zeros({k, hidden});
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : r.w2.data) v = s2 * rng.gaussian();
    r.b2 = Tensor::zeros({k});
    return r;
}

RouterNet zero_router(int d, int k) {
    if (d < 1 || k < 1) throw ConfigError("router needs d >= 1 and k >= 1");
    const int hidden = d / 2 > 0 ? d / 2 : 1;
    RouterNet r;
    r.w1 = Tensor::zeros({hidden, d});
    r.b1 = Tensor::zeros({hidden});
    r.w2 = Tensor::zeros({k, hidden});
    r.b2 = Tensor::zeros({k});
    return r;
}

Tensor route(const RouterNet& router, const Tensor& h_first) {
    const int d = router.dim();
    if (h_first.rank() != 1 || h_first.shape[0] != d) {
        throw ShapeError("route: input " + h_first.shape_str() + " does not match router dim " +
                         std::to_string(d));
    }
    const int hidden = router.hidden();
    const int k = router.n_gates();
    Tensor z1 = Tensor::zeros({hidden});
    for (int i = 0; i < hidden; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += router.w1.at(i, j) * h_first.at(j);
        s += router.b1.at(i);
        z1.at(i) = s > 0.0 ? s : 0.0;
    }
    Tensor alpha = Tensor::zeros({k});
    for (int i = 0; i < k; ++i) {
        double s = 0.0;
        for (int j = 0; j < hidden; ++j) s += router.w2.at(i, j) * z1.at(j);
        s += router.b2.at(i);
        alpha.at(i) = 1.0 / (1.0 + std::exp(-s));
    }
    return alpha;
}

Tensor gate(const Tensor& alpha, GateMode mode, double threshold) {
    if (mode == GateMode::kSoft) return alpha;
    Tensor out = alpha;
    for (double& v : out.data) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

Tensor compose(const std::vector<SubspaceEdit>& edits, const Tensor& alpha, const Tensor& h) {
    if (alpha.numel() != static_cast<std::int64_t>(edits.size())) {
        throw ShapeError("compose: " + std::to_string(alpha.numel()) + " gates for " +
                         std::to_string(edits.size()) + " edits");
    }
    for (const SubspaceEdit& e : edits) {
        if (e.dim() != static_cast<int>(h.numel())) {
            throw DimMismatch("compose: edit dim " + std::to_string(e.dim()) +
                              " does not match hidden dim " + std::to_string(h.numel()));
        }
    }
    Tensor out = h;
    for (std::size_t i = 0; i < edits.size(); ++i) {
        const double a = alpha.data[i];
        if (a == 0.0) continue;
        Tensor delta = edit_delta(edits[i], h);
        axpy(a, delta, out);
    }
    return out;
}

RouterNodes router_leaves(Tape& tape, const RouterNet& router, bool requires_grad) {
    RouterNodes nodes;
    nodes.w1 = tape.input(router.w1, requires_grad);
    nodes.b1 = tape.input(router.b1, requires_grad);
    nodes.w2 = tape.input(router.w2, requires_grad);
    nodes.b2 = tape.input(router.b2, requires_grad);
    return nodes;
}

NodeId route_node(Tape& tape, const RouterNodes& router, NodeId h_row) {
    NodeId hidden = tape.relu(tape.add(tape.matmul(h_row, router.w1, false, true), router.b1));
    return tape.sigmoid(tape.add(tape.matmul(hidden, router.w2, false, true), router.b2));
}

}  // namespace csreft
