#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stepdiff/grid.hpp"
#include "stepdiff/rng.hpp"

using namespace stepdiff;

namespace {

constexpr double kMetersPerDeg = 111320.0;

GridSpec test_grid(std::size_t X = 10, std::size_t Y = 10) {
    GridSpec g;
    g.origin_lat = 0.0;  // cos(0) = 1 keeps the meter arithmetic exact
    g.origin_lon = 0.0;
    g.X = X;
    g.Y = Y;
    return g;
}

RawRecord rec(double east_m, double north_m, std::int64_t ts, double value) {
    RawRecord r;
    r.device_id = "dev";
    r.lon = east_m / kMetersPerDeg;
    r.lat = north_m / kMetersPerDeg;
    r.timestamp = ts;
    r.value = value;
    return r;
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("discretize averages records per cell and slice") {
    const GridSpec g = test_grid();
    std::vector<RawRecord> rs{rec(1200, 700, 100, 40.0), rec(1300, 650, 200, 60.0)};
    const MaskedField f = discretize(rs, g, 0, 4);
    CHECK(f.value(0, 2, 1) == doctest::Approx(50.0));
    CHECK(f.observed(0, 2, 1));
    CHECK_FALSE(f.observed(0, 0, 0));
    CHECK(f.value(0, 0, 0) == 0.0);
    CHECK(f.L == 4);
}

TEST_CASE("discretize produces the 336x10x10 layout") {
    const GridSpec g = test_grid();
    Rng rng(8);
    std::vector<RawRecord> rs;
    for (int i = 0; i < 4000; ++i)
        rs.push_back(rec(rng.uniform(0, 4999), rng.uniform(0, 4999),
                         static_cast<std::int64_t>(rng.uniform(0, 336 * 3600.0 - 1)),
                         rng.uniform(5, 80)));
    const MaskedField f = discretize(rs, g, 0, 336);
    CHECK(f.L == 336);
    CHECK(f.grid.X == 10);
    CHECK(f.grid.Y == 10);
    CHECK(f.values.size() == 336 * 10 * 10);
}

TEST_CASE("discretize rejects out-of-range records with their index") {
    const GridSpec g = test_grid();
    std::vector<RawRecord> rs{rec(100, 100, 50, 10.0), rec(6000, 100, 50, 11.0),
                              rec(100, 100, 999999, 12.0)};
    std::vector<std::size_t> rejected;
    const MaskedField f = discretize(rs, g, 0, 4, &rejected);
    CHECK(rejected == std::vector<std::size_t>{1, 2});
    CHECK(f.observed(0, 0, 0));
    CHECK_THROWS_WITH_AS(discretize(rs, g, 0, 4),
                         "discretize: record 1 outside grid/time bounds", std::invalid_argument);
    CHECK_THROWS_AS(discretize(rs, g, 0, 0), std::invalid_argument);
}

TEST_CASE("discretize is exactly permutation-invariant") {
    const GridSpec g = test_grid(4, 4);
    Rng rng(77);
    std::vector<RawRecord> rs;
    for (int i = 0; i < 300; ++i)
        rs.push_back(rec(rng.uniform(0, 1999), rng.uniform(0, 1999),
                         static_cast<std::int64_t>(rng.uniform(0, 6 * 3600.0 - 1)),
                         rng.uniform(0, 100)));
    const MaskedField a = discretize(rs, g, 0, 6);
    // deterministic shuffle
    for (std::size_t i = rs.size(); i > 1; --i)
        std::swap(rs[i - 1], rs[rng.uniform_int(i)]);
    const MaskedField b = discretize(rs, g, 0, 6);
    CHECK(a.values == b.values);
    CHECK(a.mask == b.mask);
}

TEST_CASE("coverage statistics") {
    const GridSpec g = test_grid();
    MaskedField f(g, 5);
    SUBCASE("all-ones mask") {
        std::fill(f.mask.begin(), f.mask.end(), 1);
        const CoverageStats st = coverage_stats(f);
        for (double v : st.spatial) CHECK(v == 1.0);
        for (double v : st.temporal) CHECK(v == 1.0);
    }
    SUBCASE("single observed cell in slice 0") {
        f.mask[f.idx(0, 3, 4)] = 1;
        const CoverageStats st = coverage_stats(f);
        CHECK(st.spatial[0] == doctest::Approx(0.01));
        CHECK(st.spatial[1] == 0.0);
    }
    SUBCASE("checkerboard mask covers half of everything") {
        MaskedField c(g, 4);
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t x = 0; x < 10; ++x)
                for (std::size_t y = 0; y < 10; ++y)
                    c.mask[c.idx(l, x, y)] = (l + x + y) % 2;
        const CoverageStats st = coverage_stats(c);
        for (double v : st.spatial) CHECK(v == doctest::Approx(0.5));
        for (double v : st.temporal) CHECK(v == doctest::Approx(0.5));
    }
}

TEST_CASE("coverage means equal the overall mask density") {
    const GridSpec g = test_grid(6, 7);
    Rng rng(31);
    MaskedField f(g, 11);
    double ones = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.mask[i] = rng.uniform() < 0.37 ? 1 : 0;
        ones += f.mask[i];
    }
    const double density = ones / static_cast<double>(f.size());
    const CoverageStats st = coverage_stats(f);
    double ms = 0.0, mt = 0.0;
    for (double v : st.spatial) ms += v;
    for (double v : st.temporal) mt += v;
    ms /= static_cast<double>(st.spatial.size());
    mt /= static_cast<double>(st.temporal.size());
    CHECK(ms == doctest::Approx(density).epsilon(1e-12));
    CHECK(mt == doctest::Approx(density).epsilon(1e-12));
}

TEST_CASE("sliding windows: counts and boundaries") {
    const GridSpec g = test_grid();
    CHECK(sliding_windows(MaskedField(g, 240)).size() == 217);
    CHECK(sliding_windows(MaskedField(g, 48)).size() == 25);
    CHECK(sliding_windows(MaskedField(g, 24)).size() == 1);
    CHECK_THROWS_AS(sliding_windows(MaskedField(g, 23)), std::invalid_argument);

    // count formula over the whole range, including non-default lengths
    Rng rng(5);
    for (int i = 0; i < 40; ++i) {
        const std::size_t L = 24 + rng.uniform_int(377);
        CHECK(sliding_windows(MaskedField(g, L)).size() == L - 24 + 1);
    }
}

TEST_CASE("sliding windows copy the right slices") {
    const GridSpec g = test_grid(2, 2);
    MaskedField f(g, 30);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.values[i] = static_cast<double>(i);
        f.mask[i] = 1;
    }
    const auto ws = sliding_windows(f, 12, 12);
    CHECK(ws.size() == 7);
    const WindowSample& w = ws[3];
    CHECK(w.start == 3);
    CHECK(w.v_co[0] == f.values[3 * 4]);
    CHECK(w.v_ta[0] == f.values[(3 + 12) * 4]);
    CHECK(w.v_ta.size() == 12 * 4);
}

TEST_CASE("5:1:1 split") {
    const GridSpec g = test_grid();
    SUBCASE("paper-scale 336 gives 240/48/48") {
        MaskedField f(g, 336);
        const Split s = split_5_1_1(f);
        CHECK(s.train.L == 240);
        CHECK(s.val.L == 48);
        CHECK(s.test.L == 48);
        CHECK(sliding_windows(s.train).size() == 217);
        CHECK(sliding_windows(s.val).size() == 25);
        CHECK(sliding_windows(s.test).size() == 25);
    }
    SUBCASE("minimal 7 gives 5/1/1") {
        const Split s = split_5_1_1(MaskedField(g, 7));
        CHECK(s.train.L == 5);
        CHECK(s.val.L == 1);
        CHECK(s.test.L == 1);
    }
    SUBCASE("concatenating the splits reproduces the field") {
        Rng rng(9);
        MaskedField f(g, 37);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.values[i] = rng.uniform(0, 10);
            f.mask[i] = rng.uniform() < 0.5;
        }
        const Split s = split_5_1_1(f);
        std::vector<double> cat = s.train.values;
        cat.insert(cat.end(), s.val.values.begin(), s.val.values.end());
        cat.insert(cat.end(), s.test.values.begin(), s.test.values.end());
        CHECK(cat == f.values);
        CHECK(s.train.L + s.val.L + s.test.L == f.L);
    }
}

TEST_CASE("STPF roundtrip is bit-exact") {
    GridSpec g = test_grid();
    g.origin_lat = 31.643;
    g.origin_lon = 120.726;
    Rng rng(55);
    MaskedField f(g, 24);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.values[i] = rng.normal(40, 15);
        f.mask[i] = rng.uniform() < 0.6;
    }
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!f.mask[i]) f.values[i] = 0.0;
    const std::string path = tmp_path("roundtrip.stpf");
    save_stpf(f, path);
    const MaskedField r = load_stpf(path);
    CHECK(r.values == f.values);
    CHECK(r.mask == f.mask);
    CHECK(r.L == f.L);
    CHECK(r.grid.origin_lat == f.grid.origin_lat);
    CHECK(r.grid.cell_size_m == f.grid.cell_size_m);

    SUBCASE("empty-mask field roundtrips too") {
        MaskedField e(g, 3);
        const std::string p2 = tmp_path("empty.stpf");
        save_stpf(e, p2);
        const MaskedField r2 = load_stpf(p2);
        CHECK(r2.values == e.values);
        CHECK(r2.mask == e.mask);
    }
}

TEST_CASE("STPF format errors") {
    const std::string bad = tmp_path("bad.stpf");
    std::ofstream(bad, std::ios::binary) << "XXXXjunkjunk";
    CHECK_THROWS_WITH_AS(load_stpf(bad), ("field file: bad magic in " + bad).c_str(),
                         std::runtime_error);

    // truncated payload
    const GridSpec g = test_grid(3, 3);
    MaskedField f(g, 2);
    const std::string full = tmp_path("full.stpf");
    save_stpf(f, full);
    std::ifstream is(full, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    const std::string trunc = tmp_path("trunc.stpf");
    std::ofstream(trunc, std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(load_stpf(trunc), std::runtime_error);
}

TEST_CASE("CSV records parse") {
    const std::string path = tmp_path("records.csv");
    {
        std::ofstream os(path);
        os << "device_id,timestamp,lon,lat,value\n";
        os << "car-1,1622000000,120.7271,31.6452,42.5\n";
        os << "car-2,1622000100,120.7305,31.6441,38.0\n";
    }
    const auto rs = read_records_csv(path);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].device_id == "car-1");
    CHECK(rs[0].timestamp == 1622000000);
    CHECK(rs[1].value == doctest::Approx(38.0));

    const std::string badhdr = tmp_path("badhdr.csv");
    std::ofstream(badhdr) << "a,b,c\n";
    CHECK_THROWS_AS(read_records_csv(badhdr), std::runtime_error);
}
