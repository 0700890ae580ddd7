#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csreft/tape.hpp"
#include "csreft/tensor.hpp"

namespace csreft {

// Loss builder for the generic checker: must register the given parameter
// tensors as grad leaves (in order, one leaf per tensor) and return the
// scalar loss node.
using LossBuilder =
    std::function<NodeId(Tape&, const std::vector<Tensor>&, std::vector<NodeId>&)>;

// Max over all parameter entries of
//   |analytic - central_difference| / max(1, |analytic|, |numeric|).
// eps must lie in [1e-7, 1e-3]. Throws NonFinite if any probe evaluation
// is non-finite.
double grad_check(const LossBuilder& f, std::vector<Tensor> params, double eps);

struct GradCheckGroup {
    std::string group;
    double max_rel_err = 0.0;
    std::string worst_param;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::vector<GradCheckGroup> groups;
};

// Central-difference check of the full composed training objective (edits
// at every layer plus router, soft gates) at the given dims, against the
// analytic gradients from the tape. Deterministic fixture.
GradCheckReport grad_check_model(int d, int r, int k, double eps);

}  // namespace csreft
