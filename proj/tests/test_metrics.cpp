#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stepdiff/metrics.hpp"
#include "stepdiff/rng.hpp"

using namespace stepdiff;

TEST_CASE("metric worked examples") {
    SUBCASE("single entry") {
        const MetricReport r = metrics({40.0}, {50.0}, {1});
        CHECK(r.mae == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(r.rmse == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(r.mape == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(r.n == 1);
    }
    SUBCASE("two entries") {
        const MetricReport r = metrics({40.0, 120.0}, {50.0, 100.0}, {1, 1});
        CHECK(r.mae == doctest::Approx(15.0).epsilon(1e-12));
        CHECK(r.rmse == doctest::Approx(std::sqrt(250.0)).epsilon(1e-12));
        CHECK(r.mape == doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("perfect prediction") {
        const MetricReport r = metrics({1, 2, 3}, {1, 2, 3}, {1, 1, 1});
        CHECK(r.mae == 0.0);
        CHECK(r.rmse == 0.0);
        CHECK(r.mape == 0.0);
    }
    SUBCASE("near-zero truth is excluded from MAPE and counted") {
        const MetricReport r = metrics({1.0, 5.0}, {0.0, 10.0}, {1, 1});
        CHECK(r.mape == doctest::Approx(0.5));
        CHECK(r.mape_excluded == 1);
        CHECK(r.n == 2);
    }
    SUBCASE("empty mask is an error") {
        CHECK_THROWS_AS(metrics({1.0}, {1.0}, {0}), std::invalid_argument);
    }
}

TEST_CASE("rmse dominates mae on random inputs") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(50);
        std::vector<double> p(n), t(n);
        std::vector<std::uint8_t> m(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.normal(50, 20);
            t[i] = rng.normal(50, 20);
        }
        const MetricReport r = metrics(p, t, m);
        CHECK(r.rmse >= r.mae - 1e-12);
    }
}

TEST_CASE("metrics are invariant to a simultaneous permutation") {
    Rng rng(7);
    const std::size_t n = 64;
    std::vector<double> p(n), t(n);
    std::vector<std::uint8_t> m(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = rng.normal(40, 10);
        t[i] = rng.normal(40, 10);
        m[i] = rng.uniform() < 0.8;
    }
    const MetricReport a = metrics(p, t, m);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    std::vector<double> p2(n), t2(n);
    std::vector<std::uint8_t> m2(n);
    for (std::size_t i = 0; i < n; ++i) {
        p2[i] = p[perm[i]];
        t2[i] = t[perm[i]];
        m2[i] = m[perm[i]];
    }
    const MetricReport b = metrics(p2, t2, m2);
    CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
    CHECK(a.rmse == doctest::Approx(b.rmse).epsilon(1e-12));
    CHECK(a.mape == doctest::Approx(b.mape).epsilon(1e-12));
    CHECK(a.n == b.n);
}

TEST_CASE("stratified buckets") {
    const std::size_t L = 48, cells = 2;
    std::vector<double> truth(L * cells, 50.0), pred(L * cells, 50.0);
    std::vector<std::uint8_t> mask(L * cells, 1);
    const std::vector<double> coverage{0.1, 0.9};

    SUBCASE("uniform data: every bucket equals the global report") {
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = 45.0;
        const StratifiedReport r = stratified(pred, truth, mask, L, cells, coverage, 3600.0);
        const MetricReport g = metrics(pred, truth, mask);
        for (const auto& [k, v] : r.by_time) CHECK(v.mae == doctest::Approx(g.mae));
        for (const auto& [k, v] : r.by_coverage) CHECK(v.mae == doctest::Approx(g.mae));
        CHECK(r.by_time.size() == 4);
    }
    SUBCASE("errors confined to hours 0-5 land in the first bucket only") {
        for (std::size_t l = 0; l < L; ++l)
            if (l % 24 < 6)
                for (std::size_t k = 0; k < cells; ++k) pred[l * cells + k] = 40.0;
        const StratifiedReport r = stratified(pred, truth, mask, L, cells, coverage, 3600.0);
        CHECK(r.by_time.at("00-06").mae == doctest::Approx(10.0));
        CHECK(r.by_time.at("06-12").mae == 0.0);
        CHECK(r.by_time.at("12-18").mae == 0.0);
        CHECK(r.by_time.at("18-24").mae == 0.0);
    }
    SUBCASE("coverage 0.1 and 0.9 route to the first and last buckets") {
        pred[0] = 44.0;  // cell 0, coverage 0.1
        pred[1] = 47.0;  // cell 1, coverage 0.9
        const StratifiedReport r = stratified(pred, truth, mask, L, cells, coverage, 3600.0);
        CHECK(r.by_coverage.count("[0.0,0.2]") == 1);
        CHECK(r.by_coverage.count("(0.6,1.0]") == 1);
        CHECK(r.by_coverage.count("(0.2,0.4]") == 0);
        CHECK(r.by_coverage.count("(0.4,0.6]") == 0);
    }
}

TEST_CASE("bucket reports recombine to the global MAE") {
    Rng rng(12);
    const std::size_t L = 72, cells = 9;
    std::vector<double> truth(L * cells), pred(L * cells), coverage(cells);
    std::vector<std::uint8_t> mask(L * cells);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = rng.normal(50, 12);
        pred[i] = rng.normal(50, 12);
        mask[i] = rng.uniform() < 0.7;
    }
    for (auto& c : coverage) c = rng.uniform();
    const MetricReport global = metrics(pred, truth, mask);
    const StratifiedReport r = stratified(pred, truth, mask, L, cells, coverage, 3600.0);
    double weighted = 0.0;
    std::size_t n_total = 0;
    for (const auto& [k, v] : r.by_time) {
        weighted += v.mae * static_cast<double>(v.n);
        n_total += v.n;
    }
    CHECK(n_total == global.n);
    CHECK(weighted / static_cast<double>(n_total) == doctest::Approx(global.mae).epsilon(1e-12));
}

TEST_CASE("warning evaluation") {
    SUBCASE("confusion arithmetic reproduces the reported pair") {
        const WarningReport r = warning_from_counts(4, 1, 0, 5);
        CHECK(r.recall == doctest::Approx(1.0));
        CHECK(r.precision == doctest::Approx(0.8));
        CHECK(r.f1 == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    }
    SUBCASE("field-level daily means, thresholding and skipped days") {
        GridSpec g;
        g.X = 2;
        g.Y = 1;
        const std::size_t days = 4, L = days * 24;
        MaskedField truth(g, L), pred(g, L);
        // day d mean = 20 + 4d: days 2,3 exceed 25
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k < 2; ++k) {
                truth.values[l * 2 + k] = 20.0 + 4.0 * static_cast<double>(l / 24);
                truth.mask[l * 2 + k] = 1;
                pred.values[l * 2 + k] = truth.values[l * 2 + k];
                pred.mask[l * 2 + k] = 1;
            }
        WarningReport r = warning_eval(pred, truth, 25.0);
        CHECK(r.tp == 2);
        CHECK(r.tn == 2);
        CHECK(r.recall == 1.0);
        CHECK(r.f1 == 1.0);
        CHECK(r.days_skipped == 0);

        // blank out one whole day of truth: it is skipped and counted
        for (std::size_t l = 24; l < 48; ++l)
            for (std::size_t k = 0; k < 2; ++k) truth.mask[l * 2 + k] = 0;
        r = warning_eval(pred, truth, 25.0);
        CHECK(r.days_skipped == 1);
        CHECK(r.tp + r.fp + r.fn + r.tn == 3);
    }
}

TEST_CASE("persistence baseline") {
    WindowSample w;
    w.L1 = 3;
    w.L2 = 2;
    w.X = 2;
    w.Y = 1;
    w.v_co = {1, 2, 3, 4, 0, 6};
    w.m_co = {1, 1, 1, 1, 0, 1};
    const auto f = persistence_forecast(w, 2);
    REQUIRE(f.size() == 4);
    CHECK(f[0] == doctest::Approx(6.0));  // missing cell filled with slice mean
    CHECK(f[1] == doctest::Approx(6.0));
    CHECK(f[2] == f[0]);
    CHECK(f[3] == f[1]);

    WindowSample empty = w;
    std::fill(empty.m_co.begin(), empty.m_co.end(), 0);
    CHECK_THROWS_AS(persistence_forecast(empty, 2), std::invalid_argument);
}
