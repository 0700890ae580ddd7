#pragma once

#include <cstdint>

#include "csreft/tensor.hpp"

namespace csreft {

// Modified Gram-Schmidt over the rows of M, in fixed row order. The result R
// satisfies R*R^T = I_r to ~1e-15 and spans the same rowspace as M.
// Throws ShapeError if M is not r x d with r <= d, RankDeficient if an
// intermediate row norm falls below 1e-10.
Tensor orthonormalize_rows(const Tensor& m);

// Seeded Gaussian r x d matrix passed through orthonormalize_rows. Fully
// determined by (r, d, seed).
Tensor random_orthonormal(int r, int d, std::uint64_t seed);

// P = R^T R, the orthogonal projector onto rowspace(R) when R has
// orthonormal rows.
Tensor rowspace_projector(const Tensor& r);

}  // namespace csreft
