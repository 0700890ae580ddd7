#include "csreft/intervention.hpp"

#include <cmath>
#include <string>

#include "csreft/errors.hpp"
#include "csreft/linalg.hpp"

namespace csreft {

double SubspaceEdit::orthonormality_error() const {
    Tensor gram = matmul(basis, basis, false, true);
    double worst = 0.0;
    for (int i = 0; i < gram.shape[0]; ++i) {
        for (int j = 0; j < gram.shape[1]; ++j) {
            worst = std::max(worst, std::fabs(gram.at(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

Tensor edit_delta(const SubspaceEdit& edit, const Tensor& h) {
    const int r = edit.rank();
    const int d = edit.dim();
    if (h.rank() != 1 || h.shape[0] != d) {
        throw ShapeError("edit_delta: hidden vector " + h.shape_str() + " does not match dim " +
                         std::to_string(d));
    }
    // coords = coord_map h + coord_bias - basis h
    Tensor coords = Tensor::zeros({r});
    for (int i = 0; i < r; ++i) {
        double wh = 0.0;
        double rh = 0.0;
        for (int j = 0; j < d; ++j) {
            wh += edit.coord_map.at(i, j) * h.at(j);
            rh += edit.basis.at(i, j) * h.at(j);
        }
        coords.at(i) = wh + edit.coord_bias.at(i) - rh;
    }
    Tensor delta = Tensor::zeros({d});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < d; ++j) delta.at(j) += edit.basis.at(i, j) * coords.at(i);
    }
    return delta;
}

Tensor apply_edit(const SubspaceEdit& edit, const Tensor& h) {
    Tensor out = h;
    Tensor delta = edit_delta(edit, h);
    for (int j = 0; j < edit.dim(); ++j) out.at(j) += delta.at(j);
    return out;
}

SubspaceEdit identity_init(int r, int d, HookSite site, std::uint64_t seed) {
    SubspaceEdit edit;
    edit.basis = random_orthonormal(r, d, seed);
    edit.coord_map = edit.basis;
    edit.coord_bias = Tensor::zeros({r});
    edit.site = std::move(site);
    return edit;
}

SubspaceEdit retract(const SubspaceEdit& edit) {
    SubspaceEdit out = edit;
    // a basis already on the constraint set passes through untouched, so
    // steps that moved nothing leave the parameters bit-identical
    if (edit.orthonormality_error() > 1e-13) {
        out.basis = orthonormalize_rows(edit.basis);
    }
    return out;
}

EditNodes edit_leaves(Tape& tape, const SubspaceEdit& edit, bool requires_grad) {
    EditNodes nodes;
    nodes.basis = tape.input(edit.basis, requires_grad);
    nodes.coord_map = tape.input(edit.coord_map, requires_grad);
    nodes.coord_bias = tape.input(edit.coord_bias, requires_grad);
    return nodes;
}

NodeId edit_delta_node(Tape& tape, const EditNodes& edit, NodeId h_rows) {
    NodeId desired = tape.add(tape.matmul(h_rows, edit.coord_map, false, true), edit.coord_bias);
    NodeId current = tape.matmul(h_rows, edit.basis, false, true);
    return tape.matmul(tape.sub(desired, current), edit.basis);
}

}  // namespace csreft
