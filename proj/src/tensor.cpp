#include "csreft/tensor.hpp"

#include <cmath>
#include <sstream>

#include "csreft/errors.hpp"

namespace csreft {

namespace {

std::int64_t product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in tensor shape");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (product(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("tensor data length does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::int64_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    std::int64_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::vector(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(data.size());
}

int Tensor::rows() const {
    if (rank() == 2) return shape[0];
    if (rank() == 1) return 1;
    throw ShapeError("rows() on tensor of rank " + std::to_string(rank()));
}

int Tensor::cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    throw ShapeError("cols() on tensor of rank " + std::to_string(rank()));
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const int m = trans_a ? a.cols() : a.rows();
    const int ka = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (ka != kb) {
        throw ShapeError("matmul inner dims " + a.shape_str() + " x " + b.shape_str());
    }
    Tensor c = Tensor::zeros({m, n});
    if (!trans_a && !trans_b) {
        // ikj order: contiguous inner loop over both b and c rows.
        for (int i = 0; i < m; ++i) {
            const double* ar = &a.data[static_cast<std::size_t>(i) * ka];
            double* cr = &c.data[static_cast<std::size_t>(i) * n];
            for (int l = 0; l < ka; ++l) {
                const double av = ar[l];
                const double* br = &b.data[static_cast<std::size_t>(l) * n];
                for (int j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    } else if (!trans_a && trans_b) {
        for (int i = 0; i < m; ++i) {
            const double* ar = &a.data[static_cast<std::size_t>(i) * ka];
            double* cr = &c.data[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) {
                const double* br = &b.data[static_cast<std::size_t>(j) * ka];
                double s = 0.0;
                for (int l = 0; l < ka; ++l) s += ar[l] * br[l];
                cr[j] = s;
            }
        }
    } else if (trans_a && !trans_b) {
        for (int l = 0; l < ka; ++l) {
            const double* ar = &a.data[static_cast<std::size_t>(l) * m];
            const double* br = &b.data[static_cast<std::size_t>(l) * n];
            for (int i = 0; i < m; ++i) {
                const double av = ar[i];
                double* cr = &c.data[static_cast<std::size_t>(i) * n];
                for (int j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            double* cr = &c.data[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) {
                const double* br = &b.data[static_cast<std::size_t>(j) * ka];
                double s = 0.0;
                for (int l = 0; l < ka; ++l) s += a.data[static_cast<std::size_t>(l) * m + i] * br[l];
                cr[j] = s;
            }
        }
    }
    return c;
}

void axpy(double s, const Tensor& b, Tensor& a) {
    if (!a.same_shape(b)) {
        throw ShapeError("axpy shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

Tensor colsum(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("colsum expects a matrix, got " + m.shape_str());
    Tensor out = Tensor::zeros({m.cols()});
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) out.at(j) += m.at(i, j);
    }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw ShapeError("dot length mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

double norm2(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace csreft
