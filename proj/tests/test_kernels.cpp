#include "doctest.h"

#include <vector>

#include "blum/kernels.hpp"
#include "blum/rng.hpp"
#include "blum/tensor.hpp"

using namespace blum;
namespace kn = blum::kernels;

namespace {

Mat<float> random_mat(int r, int c, Rng& rng) {
    Mat<float> m(r, c);
    for (auto& v : m.d) v = static_cast<float>(rng.normal());
    return m;
}

}  // namespace

TEST_CASE("matmul matches serial reference bit for bit") {
    Rng rng(42);
    for (int trial = 0; trial < 3; ++trial) {
        const int m = 7 + trial * 13, k = 5 + trial * 9, n = 11 + trial * 3;
        const Mat<float> a = random_mat(m, k, rng);
        const Mat<float> b = random_mat(k, n, rng);
        Mat<float> c_par(m, n), c_ser(m, n);
        kn::matmul(a.data(), b.data(), c_par.data(), m, k, n);
        kn::serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n);
        CHECK(c_par.d == c_ser.d);

        const Mat<float> bt = random_mat(n, k, rng);
        kn::matmul_nt(a.data(), bt.data(), c_par.data(), m, k, n);
        kn::serial::matmul_nt(a.data(), bt.data(), c_ser.data(), m, k, n);
        CHECK(c_par.d == c_ser.d);

        const Mat<float> at = random_mat(k, m, rng);
        const Mat<float> b2 = random_mat(k, n, rng);
        kn::matmul_tn(at.data(), b2.data(), c_par.data(), m, k, n);
        kn::serial::matmul_tn(at.data(), b2.data(), c_ser.data(), m, k, n);
        CHECK(c_par.d == c_ser.d);
    }
}

TEST_CASE("matmul agrees with a naive triple loop") {
    Rng rng(9);
    const int m = 6, k = 10, n = 5;
    const Mat<float> a = random_mat(m, k, rng);
    const Mat<float> b = random_mat(k, n, rng);
    Mat<float> c(m, n);
    kn::matmul(a.data(), b.data(), c.data(), m, k, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double ref = 0;
            for (int p = 0; p < k; ++p) ref += static_cast<double>(a(i, p)) * b(p, j);
            CHECK(c(i, j) == doctest::Approx(ref).epsilon(1e-5));
        }

    // A^T B and A B^T against the same reference
    Mat<float> at(k, m), bt(n, k);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) at(p, i) = a(i, p);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) bt(j, p) = b(p, j);
    Mat<float> c_tn(m, n), c_nt(m, n);
    kn::matmul_tn(at.data(), b.data(), c_tn.data(), m, k, n);
    kn::matmul_nt(a.data(), bt.data(), c_nt.data(), m, k, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            CHECK(c_tn(i, j) == doctest::Approx(c(i, j)).epsilon(1e-5));
            CHECK(c_nt(i, j) == doctest::Approx(c(i, j)).epsilon(1e-5));
        }
}

TEST_CASE("matmul matches serial reference under forced multithreading") {
#ifdef _OPENMP
    const int saved = kn::max_threads();
    kn::set_threads(4);
    Rng rng(7);
    const int m = 33, k = 17, n = 29;
    const Mat<float> a = random_mat(m, k, rng);
    const Mat<float> b = random_mat(k, n, rng);
    Mat<float> c_par(m, n), c_ser(m, n);
    kn::matmul(a.data(), b.data(), c_par.data(), m, k, n);
    kn::serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n);
    CHECK(c_par.d == c_ser.d);
    kn::set_threads(saved);
#endif
}

TEST_CASE("softmax rows are normalized and ignore masked entries") {
    Mat<double> s(2, 4);
    s(0, 0) = 1.0;
    s(0, 1) = 2.0;
    s(0, 2) = kn::neg_inf<double>();
    s(0, 3) = 0.5;
    s(1, 0) = -3.0;
    s(1, 1) = -3.0;
    s(1, 2) = -3.0;
    s(1, 3) = -3.0;
    kn::softmax_rows(s.data(), 2, 4);
    CHECK(s(0, 2) == 0.0);
    double sum0 = 0;
    for (int j = 0; j < 4; ++j) sum0 += s(0, j);
    CHECK(sum0 == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < 4; ++j) CHECK(s(1, j) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("layer norm forward/backward consistency via finite differences") {
    Rng rng(3);
    const int rows = 4, n = 8;
    Mat<double> x(rows, n), y(rows, n);
    Vec<double> g(n), b(n), mean(rows), rstd(rows);
    for (auto& v : x.d) v = rng.normal();
    for (auto& v : g) v = 1.0 + 0.1 * rng.normal();
    for (auto& v : b) v = 0.1 * rng.normal();
    kn::layer_norm_rows(x.data(), g.data(), b.data(), y.data(), mean.data(), rstd.data(), rows, n, 1e-5);

    // scalar objective: sum of y * w
    Mat<double> w(rows, n);
    for (auto& v : w.d) v = rng.normal();

    Mat<double> dx(rows, n);
    Vec<double> dg(n, 0.0), db(n, 0.0);
    kn::layer_norm_backward_input(w.data(), x.data(), g.data(), mean.data(), rstd.data(), dx.data(), rows, n);
    kn::layer_norm_backward_params(w.data(), x.data(), mean.data(), rstd.data(), dg.data(), db.data(), rows, n);

    auto objective = [&]() {
        Mat<double> yy(rows, n);
        Vec<double> mm(rows), rr(rows);
        kn::serial::layer_norm_rows(x.data(), g.data(), b.data(), yy.data(), mm.data(), rr.data(), rows, n, 1e-5);
        double s = 0;
        for (std::size_t i = 0; i < yy.d.size(); ++i) s += yy.d[i] * w.d[i];
        return s;
    };
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.d.size(); i += 7) {
        const double orig = x.d[i];
        x.d[i] = orig + h;
        const double fp = objective();
        x.d[i] = orig - h;
        const double fm = objective();
        x.d[i] = orig;
        CHECK(dx.d[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    }
    for (std::size_t i = 0; i < g.size(); i += 3) {
        const double orig = g[i];
        g[i] = orig + h;
        const double fp = objective();
        g[i] = orig - h;
        const double fm = objective();
        g[i] = orig;
        CHECK(dg[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("gelu gradient matches finite differences") {
    for (double z : {-2.5, -0.3, 0.0, 0.7, 3.1}) {
        const double h = 1e-6;
        const double fd = (kn::serial::gelu(z + h) - kn::serial::gelu(z - h)) / (2 * h);
        CHECK(kn::serial::gelu_grad(z) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("attention score mask applies scale, alibi and causality") {
    const int len = 4;
    Mat<double> s(len, len);
    s.fill(2.0);
    std::vector<std::uint8_t> mask{1, 1, 1, 0};
    kn::attn_score_mask(s.data(), len, 0.5, 0.25, mask.data(), true);
    // row 2: scaled to 1.0, alibi -0.25*|2-j|, causal kills j=3 (also PAD)
    CHECK(s(2, 0) == doctest::Approx(1.0 - 0.5));
    CHECK(s(2, 1) == doctest::Approx(1.0 - 0.25));
    CHECK(s(2, 2) == doctest::Approx(1.0));
    CHECK(std::isinf(s(2, 3)));
    CHECK(std::isinf(s(0, 1)));  // causal
}

TEST_CASE("scatter_add accumulates duplicate rows deterministically") {
    Mat<float> table(3, 2);
    std::vector<std::int32_t> ids{1, 1, 2};
    Mat<float> dx(3, 2);
    dx(0, 0) = 1;
    dx(1, 0) = 2;
    dx(2, 1) = 5;
    kn::scatter_add_rows(table.data(), ids.data(), dx.data(), 3, 2);
    CHECK(table(1, 0) == 3.0f);
    CHECK(table(2, 1) == 5.0f);
    CHECK(table(0, 0) == 0.0f);
}
