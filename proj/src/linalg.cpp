#include "csreft/linalg.hpp"

#include <cmath>
#include <string>

#include "csreft/errors.hpp"
#include "csreft/rng.hpp"

namespace csreft {

namespace {
constexpr double kRankTol = 1e-10;
}

Tensor orthonormalize_rows(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("orthonormalize_rows expects a matrix, got " + m.shape_str());
    const int r = m.shape[0];
    const int d = m.shape[1];
    if (r > d) {
        throw ShapeError("orthonormalize_rows: " + std::to_string(r) + " rows cannot be orthonormal in dim " +
                         std::to_string(d));
    }
    Tensor q = m;
    for (int i = 0; i < r; ++i) {
        double* qi = &q.data[static_cast<std::size_t>(i) * d];
        for (int j = 0; j < i; ++j) {
            const double* qj = &q.data[static_cast<std::size_t>(j) * d];
            double proj = 0.0;
            for (int c = 0; c < d; ++c) proj += qi[c] * qj[c];
            for (int c = 0; c < d; ++c) qi[c] -= proj * qj[c];
        }
        double norm = 0.0;
        for (int c = 0; c < d; ++c) norm += qi[c] * qi[c];
        norm = std::sqrt(norm);
        if (norm < kRankTol) {
            throw RankDeficient("orthonormalize_rows: row " + std::to_string(i) + " norm " +
                                std::to_string(norm) + " below " + std::to_string(kRankTol));
        }
        const double inv = 1.0 / norm;
        for (int c = 0; c < d; ++c) qi[c] *= inv;
    }
    return q;
}

Tensor random_orthonormal(int r, int d, std::uint64_t seed) {
    if (r < 1 || d < 1 || r > d) {
        throw ShapeError("random_orthonormal: invalid dims r=" + std::to_string(r) + " d=" + std::to_string(d));
    }
    Rng rng(seed);
    Tensor m = Tensor::zeros({r, d});
    for (double& v : m.data) v = rng.gaussian();
    return orthonormalize_rows(m);
}

Tensor rowspace_projector(const Tensor& r) {
    if (r.rank() != 2) throw ShapeError("rowspace_projector expects a matrix, got " + r.shape_str());
    return matmul(r, r, /*trans_a=*/true, /*trans_b=*/false);
}

}  // namespace csreft
