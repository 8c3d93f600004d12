#include "tasla/mat.hpp"

#include <algorithm>
#include <cmath>

namespace tasla {

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> data) {
    Mat m;
    m.rows = static_cast<int>(data.size());
    m.cols = m.rows > 0 ? static_cast<int>(data.begin()->size()) : 0;
    m.v.reserve(static_cast<std::size_t>(m.rows) * m.cols);
    for (const auto& r : data) {
        if (static_cast<int>(r.size()) != m.cols)
            throw std::invalid_argument("Mat::from_rows: ragged rows");
        m.v.insert(m.v.end(), r.begin(), r.end());
    }
    return m;
}

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Mat::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

Mat Mat::transposed() const {
    Mat t(cols, rows);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    return t;
}

void Mat::check_finite(const std::string& what) const {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::invalid_argument(what + ": non-finite entry");
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: dimension mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

void softmax_inplace(std::span<double> x) {
    if (x.empty()) return;
    double mx = x[0];
    for (double t : x) mx = std::max(mx, t);
    double sum = 0.0;
    for (double& t : x) {
        t = std::exp(t - mx);
        sum += t;
    }
    for (double& t : x) t /= sum;
}

Mat softmax_rows(const Mat& m) {
    Mat out = m;
    for (int r = 0; r < out.rows; ++r) softmax_inplace(out.row_span(r));
    return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw std::invalid_argument("pearson: length mismatch " + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()));
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ZeroVarianceError("pearson: zero-variance input");
    double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

double legendre_p(int n, double x) {
    if (n == 0) return 1.0;
    if (n == 1) return x;
    double pm1 = 1.0, p = x;
    for (int k = 2; k <= n; ++k) {
        double next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * pm1) / k;
        pm1 = p;
        p = next;
    }
    return p;
}

namespace {

// Gaussian elimination with partial pivoting; returns false on singularity.
bool solve_inplace(Mat& a, std::vector<double>& b) {
    const int n = a.rows;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (std::abs(a(piv, col)) < 1e-300) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
            std::swap(b[piv], b[col]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a(r, c) * b[c];
        b[r] = acc / a(r, r);
    }
    return true;
}

}  // namespace

std::vector<double> legendre_fit(std::span<const double> x, std::span<const double> y,
                                 int degree) {
    if (x.size() != y.size()) throw std::invalid_argument("legendre_fit: length mismatch");
    const int k = degree + 1;
    if (static_cast<int>(x.size()) < k)
        throw std::invalid_argument("legendre_fit: need at least " + std::to_string(k) +
                                    " points for degree " + std::to_string(degree));
    // Design matrix evaluated on the fly into the normal equations.
    Mat ata(k, k);
    std::vector<double> aty(k, 0.0);
    std::vector<double> basis(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int j = 0; j < k; ++j) basis[j] = legendre_p(j, x[i]);
        for (int r = 0; r < k; ++r) {
            for (int c = 0; c < k; ++c) ata(r, c) += basis[r] * basis[c];
            aty[r] += basis[r] * y[i];
        }
    }
    Mat a = ata;
    std::vector<double> sol = aty;
    if (!solve_inplace(a, sol)) {
        // Exact singularity: retry once with a small ridge.
        a = ata;
        for (int i = 0; i < k; ++i) a(i, i) += 1e-12;
        sol = aty;
        if (!solve_inplace(a, sol))
            throw std::runtime_error("legendre_fit: rank-deficient design matrix");
    }
    for (double c : sol)
        if (!std::isfinite(c)) throw std::runtime_error("legendre_fit: fit failed (non-finite)");
    return sol;
}

double legendre_eval(std::span<const double> coeffs, double x) {
    double acc = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j)
        acc += coeffs[j] * legendre_p(static_cast<int>(j), x);
    return acc;
}

}  // namespace tasla
