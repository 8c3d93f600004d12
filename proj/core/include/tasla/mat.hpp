#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tasla {

// Dense row-major matrix of 64-bit reals. All kernels below accumulate
// strictly left to right so results are bit-stable across runs.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> data);
    static Mat identity(int n);

    double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

    std::span<double> row_span(int r) { return {row(r), static_cast<std::size_t>(cols)}; }
    std::span<const double> row_span(int r) const { return {row(r), static_cast<std::size_t>(cols)}; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;

    Mat transposed() const;

    // Throws if any entry is NaN or infinite.
    void check_finite(const std::string& what) const;
};

// Thrown when a correlation is requested on a zero-variance sequence.
// Callers decide policy (prosody metrics translate it into a degenerate flag).
struct ZeroVarianceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Standard matrix product with deterministic accumulation order.
Mat matmul(const Mat& a, const Mat& b);

// Row-wise softmax with max-subtraction for stability. Total on finite input;
// each output row is nonnegative and sums to 1.
Mat softmax_rows(const Mat& m);

// In-place softmax of a contiguous buffer, same stability trick.
void softmax_inplace(std::span<double> x);

// Pearson correlation coefficient. Requires equal lengths >= 2; throws
// ZeroVarianceError when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

// Legendre polynomial value P_n(x) via the three-term recurrence.
double legendre_p(int n, double x);

// Least-squares fit of y against the Legendre basis P_0..P_degree on x in
// [-1, 1]. Solved by normal equations; a 1e-12 ridge is applied only when the
// plain system is singular. Throws on rank deficiency that survives the ridge.
std::vector<double> legendre_fit(std::span<const double> x, std::span<const double> y,
                                 int degree = 3);

// Evaluate a Legendre expansion sum_j c[j] * P_j(x).
double legendre_eval(std::span<const double> coeffs, double x);

}  // namespace tasla
