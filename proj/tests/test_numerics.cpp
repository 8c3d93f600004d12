#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tasla/gradcheck.hpp"
#include "tasla/mat.hpp"

using namespace tasla;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat m(r, c);
    for (double& x : m.v) x = u(rng);
    return m;
}

}  // namespace

TEST_CASE("matmul basics") {
    const Mat a = Mat::from_rows({{1, 2}, {3, 4}});

    SUBCASE("identity is neutral") {
        const Mat out = matmul(Mat::identity(2), a);
        for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(out.v[i] == a.v[i]);
    }
    SUBCASE("hand product") {
        const Mat b = Mat::from_rows({{1}, {1}});
        const Mat out = matmul(a, b);
        CHECK(out(0, 0) == doctest::Approx(3.0));
        CHECK(out(1, 0) == doctest::Approx(7.0));
    }
    SUBCASE("zero matrix annihilates") {
        const Mat z(2, 2);
        const Mat out = matmul(z, a);
        for (double x : out.v) CHECK(x == 0.0);
    }
    SUBCASE("dimension mismatch names both shapes") {
        const Mat b(3, 1);
        CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x2"), std::invalid_argument);
    }
    SUBCASE("associativity on random matrices") {
        std::mt19937_64 rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            const Mat x = random_mat(3, 4, rng);
            const Mat y = random_mat(4, 5, rng);
            const Mat z = random_mat(5, 2, rng);
            const Mat lhs = matmul(matmul(x, y), z);
            const Mat rhs = matmul(x, matmul(y, z));
            for (std::size_t i = 0; i < lhs.v.size(); ++i)
                CHECK(lhs.v[i] == doctest::Approx(rhs.v[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("softmax_rows") {
    SUBCASE("equal logits give uniform") {
        const Mat out = softmax_rows(Mat::from_rows({{0, 0, 0, 0}}));
        for (double x : out.v) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("two-class closed form, shift invariant") {
        for (double c : {-5.0, 0.0, 3.0, 100.0}) {
            const Mat out = softmax_rows(Mat::from_rows({{c, c + std::log(3.0)}}));
            CHECK(out(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
            CHECK(out(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
        }
    }
    SUBCASE("no overflow on huge logits") {
        const Mat out = softmax_rows(Mat::from_rows({{1000.0, 0.0}}));
        CHECK(out(0, 0) == doctest::Approx(1.0));
        CHECK(out(0, 1) < 1e-300);
        CHECK(std::isfinite(out(0, 1)));
    }
    SUBCASE("rows land on the simplex for random shapes") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            const int r = 1 + static_cast<int>(rng() % 6);
            const int c = 1 + static_cast<int>(rng() % 9);
            const Mat out = softmax_rows(random_mat(r, c, rng, 10.0));
            for (int i = 0; i < r; ++i) {
                double sum = 0.0;
                for (int j = 0; j < c; ++j) {
                    CHECK(out(i, j) >= 0.0);
                    sum += out(i, j);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
    SUBCASE("adding a constant per row changes nothing") {
        std::mt19937_64 rng(13);
        const Mat m = random_mat(4, 6, rng, 3.0);
        Mat shifted = m;
        for (int i = 0; i < m.rows; ++i)
            for (int j = 0; j < m.cols; ++j) shifted(i, j) += 0.5 + i;
        const Mat a = softmax_rows(m);
        const Mat b = softmax_rows(shifted);
        for (std::size_t i = 0; i < a.v.size(); ++i)
            CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("pearson") {
    const std::vector<double> x = {1.0, 2.0, 3.0};

    SUBCASE("self correlation is one") {
        CHECK(pearson(x, x) == doctest::Approx(1.0));
    }
    SUBCASE("negated affine flips sign") {
        const std::vector<double> y = {-1.0 + 7.0, -2.0 + 7.0, -3.0 + 7.0};
        CHECK(pearson(x, y) == doctest::Approx(-1.0));
    }
    SUBCASE("textbook value") {
        // By hand: r = 3 / sqrt(2 * 14/3) = 0.98198...
        const std::vector<double> y = {1.0, 2.0, 4.0};
        CHECK(pearson(x, y) == doctest::Approx(0.9819805060619659).epsilon(1e-10));
    }
    SUBCASE("zero variance throws") {
        const std::vector<double> c = {5.0, 5.0, 5.0};
        CHECK_THROWS_AS((void)pearson(x, c), ZeroVarianceError);
        CHECK_THROWS_AS((void)pearson(c, x), ZeroVarianceError);
    }
    SUBCASE("invariant under positive affine maps") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> a(8), b(8);
            for (auto& v : a) v = u(rng);
            for (auto& v : b) v = u(rng);
            const double base = pearson(a, b);
            std::vector<double> a2 = a;
            for (auto& v : a2) v = 2.5 * v + 11.0;
            CHECK(pearson(a2, b) == doctest::Approx(base).epsilon(1e-12));
            std::vector<double> b2 = b;
            for (auto& v : b2) v = -v;
            CHECK(pearson(a, b2) == doctest::Approx(-base).epsilon(1e-12));
        }
    }
}

TEST_CASE("legendre_fit") {
    const std::vector<double> x = {-1.0, -0.5, 0.0, 0.5, 1.0};

    SUBCASE("constant maps to P0") {
        const std::vector<double> y(5, 5.0);
        const auto c = legendre_fit(x, y, 3);
        CHECK(c[0] == doctest::Approx(5.0).epsilon(1e-10));
        for (int j = 1; j < 4; ++j) CHECK(c[static_cast<std::size_t>(j)] == doctest::Approx(0.0).scale(1));
    }
    SUBCASE("y = x maps to P1") {
        const auto c = legendre_fit(x, x, 3);
        CHECK(c[0] == doctest::Approx(0.0).scale(1));
        CHECK(c[1] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(c[2] == doctest::Approx(0.0).scale(1));
        CHECK(c[3] == doctest::Approx(0.0).scale(1));
    }
    SUBCASE("x^2 expands as P0/3 + 2 P2/3") {
        std::vector<double> y;
        for (double xi : x) y.push_back(xi * xi);
        const auto c = legendre_fit(x, y, 3);
        CHECK(c[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
        CHECK(c[1] == doctest::Approx(0.0).scale(1));
        CHECK(c[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
        CHECK(c[3] == doctest::Approx(0.0).scale(1));
    }
    SUBCASE("recovers any degree-3 polynomial within 1e-9") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int trial = 0; trial < 25; ++trial) {
            const std::vector<double> truth = {u(rng), u(rng), u(rng), u(rng)};
            const int n = 4 + static_cast<int>(rng() % 12);
            std::vector<double> xs(static_cast<std::size_t>(n)), ys;
            for (int i = 0; i < n; ++i)
                xs[static_cast<std::size_t>(i)] = -1.0 + 2.0 * i / (n - 1);
            for (double xi : xs) ys.push_back(legendre_eval(truth, xi));
            const auto c = legendre_fit(xs, ys, 3);
            for (int j = 0; j < 4; ++j)
                CHECK(c[static_cast<std::size_t>(j)] ==
                      doctest::Approx(truth[static_cast<std::size_t>(j)]).epsilon(1e-9).scale(1));
        }
    }
    SUBCASE("rank-deficient design fails") {
        const std::vector<double> same = {0.3, 0.3, 0.3, 0.3};
        const std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
        CHECK_THROWS_AS((void)legendre_fit(same, y, 3), std::runtime_error);
    }
    SUBCASE("too few points rejected") {
        const std::vector<double> xs = {0.0, 0.5, 1.0};
        CHECK_THROWS_AS((void)legendre_fit(xs, xs, 3), std::invalid_argument);
    }
}

TEST_CASE("grad_check") {
    SUBCASE("quadratic with exact derivative") {
        auto f = [](const std::vector<double>& x) { return x[0] * x[0]; };
        const auto rep = grad_check(f, {3.0}, {6.0});
        CHECK(rep.max_relative_error < 1e-8);
        CHECK(rep.per_parameter_errors.size() == 1);
        CHECK(rep.max_relative_error == rep.per_parameter_errors[0]);
    }
    SUBCASE("constant function passes with zero gradient") {
        auto f = [](const std::vector<double>&) { return 4.2; };
        CHECK(grad_check(f, {1.0, -2.0}, {0.0, 0.0}).max_relative_error < 1e-8);
    }
    SUBCASE("planted fault of 2x reports error near 1") {
        auto f = [](const std::vector<double>& x) { return x[0] * x[0]; };
        const auto rep = grad_check(f, {3.0}, {12.0});
        CHECK(rep.max_relative_error == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("non-finite evaluation throws") {
        auto f = [](const std::vector<double>& x) { return std::log(x[0]); };
        CHECK_THROWS_AS((void)grad_check(f, {0.0}, {0.0}), std::runtime_error);
    }
}
