#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stepdiff/synth.hpp"

using namespace stepdiff;

namespace {

SynthConfig base_cfg() {
    SynthConfig c;
    c.grid.X = 10;
    c.grid.Y = 10;
    c.L = 6;
    c.K = 0.0;
    c.px = 0.0;
    c.py = 0.0;
    c.init_mode = InitMode::hotspot;
    c.seed = 3;
    return c;
}

double centroid_x(const MaskedField& f, std::size_t l) {
    double num = 0.0, den = 0.0;
    for (std::size_t x = 0; x < f.grid.X; ++x)
        for (std::size_t y = 0; y < f.grid.Y; ++y) {
            num += static_cast<double>(x) * f.value(l, x, y);
            den += f.value(l, x, y);
        }
    return num / den;
}

}  // namespace

TEST_CASE("identity dynamics keep every slice equal to slice 0") {
    const MaskedField f = gen_ground_truth(base_cfg());
    const std::size_t n = f.cells();
    for (std::size_t l = 1; l < f.L; ++l)
        for (std::size_t k = 0; k < n; ++k) CHECK(f.values[l * n + k] == f.values[k]);
    for (auto m : f.mask) CHECK(m == 1);
}

TEST_CASE("a point source grows its cell by dt*S per slice") {
    SynthConfig c = base_cfg();
    c.init_mode = InitMode::smooth_random;
    c.base_level = 10.0;
    c.S.assign(100, 0.0);
    c.S[4 * 10 + 7] = 0.002;  // ug/m^3/s
    const MaskedField f = gen_ground_truth(c);
    const std::size_t n = f.cells();
    const double step = 0.002 * 3600.0;
    for (std::size_t l = 1; l < f.L; ++l) {
        CHECK(f.values[l * n + 47] ==
              doctest::Approx(f.values[47] + step * static_cast<double>(l)).epsilon(1e-12));
        // an unsourced cell stays put under K=0, P=0
        CHECK(f.values[l * n + 11] == doctest::Approx(f.values[11]));
    }
}

TEST_CASE("uniform +x wind drifts the hotspot centroid in +x") {
    SynthConfig c = base_cfg();
    c.K = 0.2;
    c.px = 0.15;  // m/s -> 0.15*3600/500 = 1.08 cells per slice
    c.L = 4;
    const MaskedField f = gen_ground_truth(c);
    double prev = centroid_x(f, 0);
    CHECK(prev == doctest::Approx(4.5).epsilon(0.01));
    for (std::size_t l = 1; l < f.L; ++l) {
        const double cur = centroid_x(f, l);
        CHECK(cur > prev);
        prev = cur;
    }
    const double expected_drift = 0.15 * 3600.0 / 500.0 * 3.0;
    const double drift = centroid_x(f, 3) - centroid_x(f, 0);
    CHECK(drift > 0.5 * expected_drift);
    CHECK(drift < 1.5 * expected_drift);
}

TEST_CASE("fleet masks") {
    GridSpec g;
    g.X = 10;
    g.Y = 10;
    SUBCASE("one always-active bus over a 10-cell route covers 0.1 per slice") {
        FleetConfig f;
        f.n_vehicles = 1;
        f.mode = FleetMode::bus_route;
        f.route_len = 10;
        f.route_period = 1;
        f.seed = 5;
        const auto mask = gen_fleet_mask(f, g, 8);
        for (std::size_t l = 0; l < 8; ++l) {
            int count = 0;
            for (std::size_t k = 0; k < 100; ++k) count += mask[l * 100 + k];
            CHECK(count == 10);
        }
    }
    SUBCASE("inactive hours have zero coverage") {
        FleetConfig f;
        f.n_vehicles = 3;
        f.mode = FleetMode::free_car;
        f.seed = 6;
        for (int h = 6; h <= 23; ++h) f.active_hours.insert(h);  // 0-5 excluded
        const auto mask = gen_fleet_mask(f, g, 30);
        for (std::size_t l = 0; l < 30; ++l) {
            int count = 0;
            for (std::size_t k = 0; k < 100; ++k) count += mask[l * 100 + k];
            if (l % 24 < 6)
                CHECK(count == 0);
            else
                CHECK(count > 0);
        }
    }
    SUBCASE("same seed gives identical masks") {
        FleetConfig f;
        f.n_vehicles = 4;
        f.seed = 77;
        CHECK(gen_fleet_mask(f, g, 12) == gen_fleet_mask(f, g, 12));
    }
    SUBCASE("n_vehicles must be positive") {
        FleetConfig f;
        f.n_vehicles = 0;
        CHECK_THROWS_AS(gen_fleet_mask(f, g, 4), std::invalid_argument);
    }
}

TEST_CASE("make_observed") {
    SynthConfig c = base_cfg();
    c.init_mode = InitMode::smooth_random;
    c.L = 10;
    const MaskedField truth = gen_ground_truth(c);

    SUBCASE("zero noise reproduces truth under the mask") {
        FleetConfig f;
        f.n_vehicles = 5;
        f.seed = 4;
        const auto mask = gen_fleet_mask(f, truth.grid, truth.L);
        const MaskedField obs = make_observed(truth, mask, 0.0, 9);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            if (mask[i]) {
                CHECK(obs.values[i] == truth.values[i]);
                CHECK(obs.mask[i] == 1);
            } else {
                CHECK(obs.values[i] == 0.0);
                CHECK(obs.mask[i] == 0);
            }
        }
    }
    SUBCASE("all-zero mask gives all sentinels") {
        const std::vector<std::uint8_t> mask(truth.size(), 0);
        const MaskedField obs = make_observed(truth, mask, 2.0, 9);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            CHECK(obs.values[i] == 0.0);
            CHECK(obs.mask[i] == 0);
        }
    }
    SUBCASE("unit noise has residual std inside the 3-sigma band") {
        SynthConfig big = c;
        big.grid.X = 10;
        big.grid.Y = 10;
        big.L = 100;  // 10^4 observed cells
        const MaskedField t2 = gen_ground_truth(big);
        const std::vector<std::uint8_t> mask(t2.size(), 1);
        const MaskedField obs = make_observed(t2, mask, 1.0, 123);
        double ss = 0.0;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const double r = obs.values[i] - t2.values[i];
            ss += r * r;
        }
        const double std_hat = std::sqrt(ss / static_cast<double>(obs.size()));
        CHECK(std_hat > 0.97);
        CHECK(std_hat < 1.03);
    }
    SUBCASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(make_observed(truth, std::vector<std::uint8_t>(5, 1), 0.0, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("generators are deterministic functions of their seeds") {
    SynthConfig c = base_cfg();
    c.init_mode = InitMode::smooth_random;
    const MaskedField a = gen_ground_truth(c);
    const MaskedField b = gen_ground_truth(c);
    CHECK(a.values == b.values);
    c.seed += 1;
    const MaskedField d = gen_ground_truth(c);
    CHECK(a.values != d.values);
}
