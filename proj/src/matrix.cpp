#include "fedkd/matrix.hpp"

namespace fedkd {

std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a) +
                         " vs " + shape_str(b));
    }
    return a * b;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape("add", a, b);
    return a + b;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape("sub", a, b);
    return a - b;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape("hadamard", a, b);
    return a.cwiseProduct(b);
}

Matrix scale(const Matrix& a, double s) {
    return a * s;
}

Matrix relu(const Matrix& a) {
    return a.cwiseMax(0.0);
}

Matrix relu_grad(const Matrix& a) {
    return (a.array() > 0.0).cast<double>().matrix();
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

}  // namespace fedkd
