#pragma once
#include <random>

#include "covgreeks/geometry.hpp"

namespace covgreeks::testing {

inline std::mt19937& rng() {
    static std::mt19937 gen(20240516);
    return gen;
}

inline double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline Vector random_vector(int d, double lo = -1.0, double hi = 1.0) {
    Vector v(d);
    for (int i = 0; i < d; ++i)
        v[i] = uniform(lo, hi);
    return v;
}

inline Matrix random_matrix(int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = uniform(lo, hi);
    return m;
}

inline Matrix random_symmetric(int d, double lo = -1.0, double hi = 1.0) {
    Matrix m = random_matrix(d, d, lo, hi);
    return 0.5 * (m + m.transpose());
}

inline Matrix random_spd(int d, double shift = 0.5) {
    Matrix m = random_matrix(d, d);
    return Matrix(m * m.transpose() + shift * Matrix::Identity(d, d));
}

inline std::vector<Matrix> random_symmetric_slices(int d, double lo = -1.0, double hi = 1.0) {
    std::vector<Matrix> slices;
    for (int k = 0; k < d; ++k)
        slices.push_back(random_symmetric(d, lo, hi));
    return slices;
}

inline Matrix random_invertible(int d) {
    for (;;) {
        Matrix m = random_matrix(d, d);
        if (std::abs(m.determinant()) > 0.1)
            return m;
    }
}

inline double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
    const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

} // namespace covgreeks::testing
