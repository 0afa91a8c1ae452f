#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stepdiff/pde.hpp"
#include "stepdiff/rng.hpp"
#include "test_support.hpp"

using namespace stepdiff;

namespace {

double operator_identity_residual(const PdeOperator& op) {
    // || A C - (B - I) ||_max
    const Mat ac = matmul(op.A, op.C);
    double mx = 0.0;
    for (std::size_t r = 0; r < ac.rows; ++r)
        for (std::size_t c = 0; c < ac.cols; ++c) {
            const double bmi = op.B(r, c) - (r == c ? 1.0 : 0.0);
            mx = std::max(mx, std::fabs(ac(r, c) - bmi));
        }
    return mx;
}

std::vector<double> smooth_positive_field(std::size_t X, std::size_t Y, Rng& rng) {
    std::vector<double> v(X * Y);
    const double cx = rng.uniform(2, X - 2.0), cy = rng.uniform(2, Y - 2.0);
    for (std::size_t x = 0; x < X; ++x)
        for (std::size_t y = 0; y < Y; ++y) {
            const double dx = x - cx, dy = y - cy;
            v[x * Y + y] = 40.0 + 25.0 * std::exp(-(dx * dx + dy * dy) / 8.0);
        }
    return v;
}

}  // namespace

TEST_CASE("stencil assembly: 2x2 grid with K=1, n=1, no wind") {
    PdeParams p = PdeParams::uniform(1.0, 0.0, 0.0, 2, 2, /*n=*/1.0, /*dt=*/1.0);
    const PdeOperator op = build_transition(p, 2, 2);
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(op.A(r, r) == doctest::Approx(-4.0));
        for (std::size_t c = 0; c < 4; ++c)
            if (r != c && op.A(r, c) != 0.0) CHECK(op.A(r, c) == doctest::Approx(1.0));
    }
    // absorbing boundary: each 2x2 cell has exactly two in-grid neighbors
    for (std::size_t r = 0; r < 4; ++r) {
        int nnz = 0;
        for (std::size_t c = 0; c < 4; ++c)
            if (r != c && op.A(r, c) != 0.0) ++nnz;
        CHECK(nnz == 2);
    }
}

TEST_CASE("stencil assembly: K=0, P=0 gives A=0, B=I, C=dt*I") {
    PdeParams p = PdeParams::uniform(0.0, 0.0, 0.0, 3, 3, 500.0, 3600.0);
    const PdeOperator op = build_transition(p, 3, 3);
    CHECK(op.A.max_abs() == 0.0);
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 9; ++c) {
            CHECK(op.B(r, c) == (r == c ? 1.0 : 0.0));
            CHECK(op.C(r, c) == (r == c ? 3600.0 : 0.0));
        }
}

TEST_CASE("stencil assembly: hand value for K=0.5, n=500, uniform Px=2") {
    PdeParams p = PdeParams::uniform(0.5, 2.0, 0.0, 3, 3, 500.0, 3600.0);
    const PdeOperator op = build_transition(p, 3, 3);
    // A((x,y),(x+1,y)) = K/n^2 - Px/n = 0.5/250000 - 2/500
    const std::size_t r = 0 * 3 + 1, c = 1 * 3 + 1;
    CHECK(op.A(r, c) == doctest::Approx(-0.003998).epsilon(1e-12));
}

TEST_CASE("stencil assembly: non-finite parameters are rejected") {
    PdeParams p = PdeParams::uniform(1.0, 0.0, 0.0, 2, 2);
    p.Px[1] = std::nan("");
    CHECK_THROWS_AS(build_transition(p, 2, 2), std::invalid_argument);
    PdeParams q = PdeParams::uniform(-1.0, 0.0, 0.0, 2, 2);
    CHECK_THROWS_AS(build_transition(q, 2, 2), std::invalid_argument);
}

TEST_CASE("matrix exponential: closed forms") {
    SUBCASE("zero matrix") {
        Mat A(5, 5);
        Mat B, C;
        matrix_exponential(A, 2.5, B, C);
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c) {
                CHECK(B(r, c) == (r == c ? 1.0 : 0.0));
                CHECK(C(r, c) == doctest::Approx(r == c ? 2.5 : 0.0));
            }
    }
    SUBCASE("diagonal matrix, dt = 1") {
        Mat A(4, 4);
        const double diag[4] = {-1.5, 0.3, 2.0, 0.0};
        for (int i = 0; i < 4; ++i) A(i, i) = diag[i];
        Mat B, C;
        matrix_exponential(A, 1.0, B, C);
        for (int i = 0; i < 4; ++i) {
            CHECK(B(i, i) == doctest::Approx(std::exp(diag[i])).epsilon(1e-14));
            const double phi = diag[i] == 0.0 ? 1.0 : (std::exp(diag[i]) - 1.0) / diag[i];
            CHECK(C(i, i) == doctest::Approx(phi).epsilon(1e-13));
        }
    }
    SUBCASE("non-square input is rejected") {
        Mat A(3, 4);
        Mat B, C;
        CHECK_THROWS_AS(matrix_exponential(A, 1.0, B, C), std::invalid_argument);
    }
}

TEST_CASE("matrix exponential matches the 200-term Taylor oracle") {
    Rng rng(2718);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(15);  // up to 16x16
        Mat A(n, n);
        for (double& v : A.a) v = rng.uniform(-1.0, 1.0);
        // scale so ||dt*A||_inf <= 2
        const double dt = 2.0 / std::max(1e-12, A.inf_norm()) * rng.uniform(0.2, 1.0);
        Mat B, C;
        matrix_exponential(A, dt, B, C);

        Mat M(n, n);
        for (std::size_t i = 0; i < n * n; ++i) M.a[i] = dt * A.a[i];
        const Mat Bo = oracle::expm_taylor(M);
        const Mat Co = oracle::phi1_taylor(M);
        double berr = 0.0, cerr = 0.0;
        for (std::size_t i = 0; i < n * n; ++i) {
            berr = std::max(berr, std::fabs(B.a[i] - Bo.a[i]));
            cerr = std::max(cerr, std::fabs(C.a[i] - dt * Co.a[i]));
        }
        CHECK(berr < 1e-9);
        CHECK(cerr < 1e-9);
    }
}

TEST_CASE("operator identity A*C == B - I for constructed operators") {
    Rng rng(33);
    // includes the singular A = 0 case and strong-wind parameters
    const double cases[][3] = {{0.0, 0.0, 0.0}, {5.0, -1.0, 0.0},  {1.0, 0.0, 0.0},
                               {20.0, 3.0, -3.0}, {0.5, 2.0, 0.0}, {12.5, -2.0, 1.0}};
    for (const auto& c : cases) {
        const PdeOperator op = build_transition(PdeParams::uniform(c[0], c[1], c[2], 6, 6), 6, 6);
        const double tol = 1e-9 * (1.0 + op.B.max_abs());
        CHECK_MESSAGE(operator_identity_residual(op) < tol, "K=", c[0], " Px=", c[1],
                      " Py=", c[2]);
    }
}

TEST_CASE("theorem: noise-propagation identity is exact linear algebra") {
    Rng rng(424242);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 4 + rng.uniform_int(13);
        Mat B(n, n);
        for (double& v : B.a) v = rng.uniform(-1.0, 1.0);
        std::vector<double> v0(n), eps(n);
        for (auto& x : v0) x = rng.normal(0, 2);
        for (auto& x : eps) x = rng.normal();
        const double alpha = rng.uniform(0.01, 0.99);
        const double sa = std::sqrt(alpha), sn = std::sqrt(1.0 - alpha);

        std::vector<double> vT(n);
        for (std::size_t i = 0; i < n; ++i) vT[i] = sa * v0[i] + sn * eps[i];
        const std::vector<double> eps_p = matvec(B, eps);
        const std::vector<double> vT_p = matvec(B, vT);
        const std::vector<double> Bv0 = matvec(B, v0);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            err = std::max(err, std::fabs((vT_p[i] - sn * eps_p[i]) / sa - Bv0[i]));
        CHECK(err < 1e-12);
    }
}

TEST_CASE("evolve") {
    SUBCASE("identity dynamics leave the field unchanged") {
        const PdeOperator op = build_transition(PdeParams::uniform(0, 0, 0, 3, 3), 3, 3);
        std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
        const std::vector<double> out = evolve(op, v, std::vector<double>(9, 0.0));
        CHECK(out == v);
    }
    SUBCASE("uniform source adds dt*s per step") {
        const PdeOperator op = build_transition(PdeParams::uniform(0, 0, 0, 3, 3), 3, 3);
        const std::vector<double> out =
            evolve(op, std::vector<double>(9, 10.0), std::vector<double>(9, 0.001));
        for (double x : out) CHECK(x == doctest::Approx(13.6).epsilon(1e-12));
    }
    SUBCASE("pure diffusion spreads a hotspot to its four neighbors") {
        const PdeOperator op =
            build_transition(PdeParams::uniform(5.0, 0, 0, 5, 5, 500.0, 3600.0), 5, 5);
        std::vector<double> v(25, 0.0);
        v[2 * 5 + 2] = 100.0;
        const std::vector<double> out = evolve(op, v, std::vector<double>(25, 0.0));
        CHECK(out[2 * 5 + 2] < 100.0);
        CHECK(out[1 * 5 + 2] > 0.0);
        CHECK(out[3 * 5 + 2] > 0.0);
        CHECK(out[2 * 5 + 1] > 0.0);
        CHECK(out[2 * 5 + 3] > 0.0);
        // symmetric stencil: the four neighbors receive equal mass
        CHECK(out[1 * 5 + 2] == doctest::Approx(out[3 * 5 + 2]));
        CHECK(out[2 * 5 + 1] == doctest::Approx(out[2 * 5 + 3]));
        // matches the dense matrix-vector product entry by entry
        const std::vector<double> dense = matvec(op.B, v);
        for (std::size_t i = 0; i < 25; ++i) CHECK(out[i] == doctest::Approx(dense[i]));
    }
    SUBCASE("shape mismatch") {
        const PdeOperator op = build_transition(PdeParams::uniform(0, 0, 0, 3, 3), 3, 3);
        CHECK_THROWS_AS(evolve(op, std::vector<double>(4, 0.0), std::vector<double>(9, 0.0)),
                        std::invalid_argument);
    }
}

TEST_CASE("evolve is linear in the state") {
    Rng rng(11);
    const PdeOperator op =
        build_transition(PdeParams::uniform(4.0, -1.0, -0.5, 6, 6, 500.0, 3600.0), 6, 6);
    const std::vector<double> zero(36, 0.0);
    std::vector<double> v1(36), v2(36);
    for (auto& x : v1) x = rng.normal(0, 10);
    for (auto& x : v2) x = rng.normal(0, 10);
    const double a = 1.7, b = -0.4;
    std::vector<double> mix(36);
    for (std::size_t i = 0; i < 36; ++i) mix[i] = a * v1[i] + b * v2[i];
    const auto lhs = evolve(op, mix, zero);
    const auto e1 = evolve(op, v1, zero);
    const auto e2 = evolve(op, v2, zero);
    for (std::size_t i = 0; i < 36; ++i)
        CHECK(lhs[i] == doctest::Approx(a * e1[i] + b * e2[i]).epsilon(1e-9));
}

TEST_CASE("estimate_source") {
    Rng rng(21);
    const std::size_t X = 5, Y = 5, n = X * Y;
    const PdeOperator op =
        build_transition(PdeParams::uniform(3.0, -0.8, -0.4, X, Y, 500.0, 3600.0), X, Y);

    SUBCASE("source-free dynamics estimate S ~ 0") {
        std::vector<std::vector<double>> vals{smooth_positive_field(X, Y, rng)};
        for (int l = 0; l < 7; ++l)
            vals.push_back(evolve(op, vals.back(), std::vector<double>(n, 0.0)));
        std::vector<std::uint8_t> ones(n, 1);
        std::vector<HistorySlice> hist;
        for (const auto& v : vals) hist.push_back({v.data(), ones.data()});
        const SourceEstimate est = estimate_source(hist, op);
        CHECK(est.window_used == 6);
        for (double s : est.S) CHECK(std::fabs(s) < 1e-8);
    }
    SUBCASE("known constant source is recovered") {
        std::vector<double> s_true(n);
        for (auto& s : s_true) s = rng.uniform(0.0, 0.01);
        std::vector<std::vector<double>> vals{smooth_positive_field(X, Y, rng)};
        for (int l = 0; l < 7; ++l) vals.push_back(evolve(op, vals.back(), s_true));
        std::vector<std::uint8_t> ones(n, 1);
        std::vector<HistorySlice> hist;
        for (const auto& v : vals) hist.push_back({v.data(), ones.data()});
        const SourceEstimate est = estimate_source(hist, op);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(est.S[i] - s_true[i]) < 1e-6);
    }
    SUBCASE("single slice returns the zero estimate") {
        const auto v = smooth_positive_field(X, Y, rng);
        std::vector<std::uint8_t> ones(n, 1);
        const SourceEstimate est = estimate_source({{v.data(), ones.data()}}, op);
        CHECK(est.window_used == 0);
        for (double s : est.S) CHECK(s == 0.0);
    }
}

TEST_CASE("pde_forecast") {
    const std::size_t X = 5, Y = 5, n = X * Y;
    SUBCASE("constant field with identity dynamics stays constant") {
        const PdeOperator op = build_transition(PdeParams::uniform(0, 0, 0, X, Y), X, Y);
        WindowSample w;
        w.L1 = 4;
        w.L2 = 3;
        w.X = X;
        w.Y = Y;
        w.v_co.assign(4 * n, 42.0);
        w.m_co.assign(4 * n, 1);
        const auto f = pde_forecast(w, op, 3);
        for (double v : f) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));

        SUBCASE("half-masked constant field forecasts identically") {
            WindowSample h = w;
            for (std::size_t i = 0; i < h.m_co.size(); i += 2) {
                h.m_co[i] = 0;
                h.v_co[i] = 0.0;
            }
            const auto g = pde_forecast(h, op, 3);
            for (std::size_t i = 0; i < g.size(); ++i)
                CHECK(g[i] == doctest::Approx(f[i]).epsilon(1e-12));
        }
    }
    SUBCASE("empty history is an error") {
        const PdeOperator op = build_transition(PdeParams::uniform(0, 0, 0, X, Y), X, Y);
        WindowSample w;
        w.L1 = 2;
        w.L2 = 2;
        w.X = X;
        w.Y = Y;
        w.v_co.assign(2 * n, 0.0);
        w.m_co.assign(2 * n, 0);
        CHECK_THROWS_WITH_AS(pde_forecast(w, op, 2),
                             "pde_forecast: no observations to anchor forecast",
                             std::invalid_argument);
    }
}

TEST_CASE("fit_pde_params") {
    const std::size_t X = 6, Y = 6, n = X * Y;
    SUBCASE("recovers on-lattice parameters from exact dynamics") {
        Rng rng(91);
        // the worked recovery point K=5, P=(1,-1); data built by the same
        // evolve map, so the true candidate has exactly zero residual
        const PdeOperator gen =
            build_transition(PdeParams::uniform(5.0, 1.0, -1.0, X, Y, 500.0, 3600.0), X, Y);
        GridSpec g;
        g.X = X;
        g.Y = Y;
        MaskedField f(g, 12);
        std::vector<double> v = smooth_positive_field(X, Y, rng);
        std::copy(v.begin(), v.end(), f.values.begin());
        for (std::size_t l = 1; l < 12; ++l) {
            v = evolve(gen, v, std::vector<double>(n, 0.0));
            std::copy(v.begin(), v.end(), f.values.begin() + l * n);
        }
        std::fill(f.mask.begin(), f.mask.end(), 1);
        const PdeParams fit = fit_pde_params(f, 2);
        CHECK(fit.K == doctest::Approx(5.0));
        CHECK(fit.Px[0] == doctest::Approx(1.0));
        CHECK(fit.Py[0] == doctest::Approx(-1.0));
    }
    SUBCASE("white noise still yields a valid parameter set") {
        Rng rng(14);
        GridSpec g;
        g.X = X;
        g.Y = Y;
        MaskedField f(g, 12);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.values[i] = 50.0 + 10.0 * rng.normal();
            f.mask[i] = 1;
        }
        const PdeParams fit = fit_pde_params(f, 2);
        CHECK(fit.K >= 0.0);
        CHECK(fit.K <= 20.0);
        CHECK(std::fabs(fit.Px[0]) <= 3.0);
        CHECK(std::fabs(fit.Py[0]) <= 3.0);
    }
    SUBCASE("constant field tie-breaks to zero dynamics") {
        GridSpec g;
        g.X = X;
        g.Y = Y;
        MaskedField f(g, 12);
        std::fill(f.values.begin(), f.values.end(), 33.0);
        std::fill(f.mask.begin(), f.mask.end(), 1);
        const PdeParams fit = fit_pde_params(f, 2);
        CHECK(fit.K == 0.0);
        CHECK(fit.Px[0] == 0.0);
        CHECK(fit.Py[0] == 0.0);
    }
    SUBCASE("too few joint pairs is an error") {
        GridSpec g;
        g.X = X;
        g.Y = Y;
        MaskedField f(g, 5);
        std::fill(f.mask.begin(), f.mask.end(), 1);
        CHECK_THROWS_AS(fit_pde_params(f), std::invalid_argument);
    }
}
