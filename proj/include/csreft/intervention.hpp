#pragma once

#include <cstdint>

#include "csreft/backbone.hpp"
#include "csreft/tape.hpp"
#include "csreft/tensor.hpp"

namespace csreft {

// One task's low-rank residual edit at one hook site. The edit rewrites the
// rank-r subspace spanned by the rows of basis:
//
//   edited(h) = h + basis^T (coord_map h + coord_bias - basis h)
//
// basis rows stay orthonormal (enforced by retract after optimizer steps);
// coord_map and coord_bias are unconstrained.
struct SubspaceEdit {
    Tensor basis;       // r x d, orthonormal rows
    Tensor coord_map;   // r x d
    Tensor coord_bias;  // r
    HookSite site;

    int rank() const { return basis.shape[0]; }
    int dim() const { return basis.shape[1]; }
    double orthonormality_error() const;  // max |basis basis^T - I|
};

// h + delta for a single d-vector.
Tensor apply_edit(const SubspaceEdit& edit, const Tensor& h);

// The delta alone; apply_edit(e, h) == h + edit_delta(e, h) exactly.
Tensor edit_delta(const SubspaceEdit& edit, const Tensor& h);

// Edit that reproduces the identity map: basis seeded orthonormal,
// coord_map a copy of basis, zero bias.
SubspaceEdit identity_init(int r, int d, HookSite site, std::uint64_t seed);

// Re-orthonormalize basis; coord_map and coord_bias untouched.
SubspaceEdit retract(const SubspaceEdit& edit);

// Tape leaves for one edit's parameters.
struct EditNodes {
    NodeId basis = -1;
    NodeId coord_map = -1;
    NodeId coord_bias = -1;
};

EditNodes edit_leaves(Tape& tape, const SubspaceEdit& edit, bool requires_grad);

// Delta for a (p x d) block of hidden rows, row-vector convention.
NodeId edit_delta_node(Tape& tape, const EditNodes& edit, NodeId h_rows);

}  // namespace csreft
