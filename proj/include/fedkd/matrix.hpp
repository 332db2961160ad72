#pragma once

// Dense linear-algebra substrate. Everything is a row-major matrix of
// doubles; batches are (samples x features). All functions are pure and
// shape-checked, so a mismatch surfaces as a ShapeError instead of an
// Eigen assertion.

#include <Eigen/Dense>

#include <string>

#include "fedkd/errors.hpp"

namespace fedkd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_str(const Matrix& m);

// result[i][j] = sum_k a[i][k] * b[k][j]; throws ShapeError when inner
// dimensions disagree.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
// Elementwise (Hadamard) product.
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// relu(x) = max(0, x)
Matrix relu(const Matrix& a);
// relu_grad(x) = 1 if x > 0 else 0. The value at exactly 0 is 0.
Matrix relu_grad(const Matrix& a);

bool all_finite(const Matrix& m);

}  // namespace fedkd
