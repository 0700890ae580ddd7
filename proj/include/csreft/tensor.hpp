#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace csreft {

// Dense row-major float64 tensor. The single value type for all math in
// this library; rank is 1 or 2 everywhere in practice.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(int rows, int cols, std::vector<double> values);
    static Tensor identity(int n);

    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t numel() const;
    bool empty() const { return data.empty(); }

    int rows() const;
    int cols() const;

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

bool all_finite(const Tensor& t);

// C = op_a(A) * op_b(B) where op transposes its operand when the flag is set.
// Summation order over the contracted index is ascending for every flag
// combination, so algebraically equal calls are bitwise reproducible.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// a += s * b, shapes must match.
void axpy(double s, const Tensor& b, Tensor& a);

Tensor colsum(const Tensor& m);

double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
double norm2(const Tensor& t);

}  // namespace csreft
