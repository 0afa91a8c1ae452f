#include "stepdiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stepdiff/rng.hpp"

namespace stepdiff {

PdeParams SynthConfig::pde_params() const {
    PdeParams p;
    p.K = K;
    const std::size_t n = grid.X * grid.Y;
    p.Px = Px.empty() ? std::vector<double>(n, px) : Px;
    p.Py = Py.empty() ? std::vector<double>(n, py) : Py;
    p.cell_size_m = grid.cell_size_m;
    p.dt = grid.slice_seconds;
    return p;
}

void SynthConfig::validate() const {
    grid.validate();
    if (L == 0) throw std::invalid_argument("synth: L must be positive");
    if (K < 0.0) throw std::invalid_argument("synth: K must be non-negative");
    if (obs_noise_sigma < 0.0) throw std::invalid_argument("synth: noise sigma must be >= 0");
    const std::size_t n = grid.X * grid.Y;
    if (!Px.empty() && Px.size() != n) throw std::invalid_argument("synth: Px size != X*Y");
    if (!Py.empty() && Py.size() != n) throw std::invalid_argument("synth: Py size != X*Y");
    if (!S.empty() && S.size() != n) throw std::invalid_argument("synth: S size != X*Y");
}

namespace {

std::vector<double> initial_slice(const SynthConfig& cfg, Rng& rng) {
    const std::size_t X = cfg.grid.X, Y = cfg.grid.Y;
    std::vector<double> v(X * Y, 0.0);
    if (cfg.init_mode == InitMode::hotspot) {
        const double cx = (static_cast<double>(X) - 1.0) / 2.0;
        const double cy = (static_cast<double>(Y) - 1.0) / 2.0;
        const double sig = std::max(1.0, static_cast<double>(X) / 6.0);
        for (std::size_t x = 0; x < X; ++x)
            for (std::size_t y = 0; y < Y; ++y) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                v[x * Y + y] = 100.0 * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
            }
        return v;
    }
    // smooth-random: a handful of seeded Gaussian bumps over a base level
    const int bumps = 6;
    std::vector<double> cx(bumps), cy(bumps), amp(bumps), sig(bumps);
    for (int b = 0; b < bumps; ++b) {
        cx[b] = rng.uniform(0.0, static_cast<double>(X));
        cy[b] = rng.uniform(0.0, static_cast<double>(Y));
        amp[b] = rng.uniform(-0.4, 0.7) * cfg.base_level;
        sig[b] = rng.uniform(1.0, static_cast<double>(std::max<std::size_t>(X, 3)) / 2.0);
    }
    for (std::size_t x = 0; x < X; ++x)
        for (std::size_t y = 0; y < Y; ++y) {
            double s = cfg.base_level;
            for (int b = 0; b < bumps; ++b) {
                const double dx = static_cast<double>(x) - cx[b];
                const double dy = static_cast<double>(y) - cy[b];
                s += amp[b] * std::exp(-(dx * dx + dy * dy) / (2.0 * sig[b] * sig[b]));
            }
            v[x * Y + y] = std::max(0.0, s);
        }
    return v;
}

}  // namespace

MaskedField gen_ground_truth(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t n = cfg.grid.X * cfg.grid.Y;
    const PdeOperator op = build_transition(cfg.pde_params(), cfg.grid.X, cfg.grid.Y);
    const std::vector<double> src = cfg.S.empty() ? std::vector<double>(n, 0.0) : cfg.S;

    MaskedField field(cfg.grid, cfg.L);
    std::fill(field.mask.begin(), field.mask.end(), 1);
    std::vector<double> state = initial_slice(cfg, rng);
    std::copy(state.begin(), state.end(), field.values.begin());
    for (std::size_t l = 1; l < cfg.L; ++l) {
        state = evolve(op, state, src);
        for (double& v : state) v = std::max(0.0, v);  // concentrations are physical
        std::copy(state.begin(), state.end(), field.values.begin() + l * n);
    }
    return field;
}

std::vector<std::uint8_t> gen_fleet_mask(const FleetConfig& cfg, const GridSpec& grid,
                                         std::size_t L) {
    cfg.validate();
    grid.validate();
    const std::size_t X = grid.X, Y = grid.Y, n = X * Y;
    std::vector<std::uint8_t> mask(L * n, 0);
    Rng rng(cfg.seed);

    if (cfg.mode == FleetMode::bus_route) {
        // Each bus owns a fixed cyclic lawnmower path; per slice it covers the
        // route segment for the current phase of route_period.
        const int period = std::max(1, cfg.route_period);
        for (int v = 0; v < cfg.n_vehicles; ++v) {
            const std::size_t offset = rng.uniform_int(n);
            std::vector<std::size_t> route(static_cast<std::size_t>(cfg.route_len));
            for (int i = 0; i < cfg.route_len; ++i) {
                const std::size_t cell = (offset + static_cast<std::size_t>(i)) % n;
                // lawnmower order: even rows left-to-right, odd rows reversed
                const std::size_t row = cell / Y, col = cell % Y;
                route[static_cast<std::size_t>(i)] = row * Y + (row % 2 ? Y - 1 - col : col);
            }
            const std::size_t seg = (route.size() + period - 1) / period;
            for (std::size_t l = 0; l < L; ++l) {
                if (!cfg.active(l)) continue;
                const std::size_t phase = l % static_cast<std::size_t>(period);
                for (std::size_t i = phase * seg; i < std::min(route.size(), (phase + 1) * seg);
                     ++i)
                    mask[l * n + route[i]] = 1;
            }
        }
    } else {
        // free-car: seeded 4-neighbor random walk, walk_len cells per slice
        std::vector<std::size_t> pos_x(cfg.n_vehicles), pos_y(cfg.n_vehicles);
        for (int v = 0; v < cfg.n_vehicles; ++v) {
            pos_x[v] = rng.uniform_int(X);
            pos_y[v] = rng.uniform_int(Y);
        }
        for (std::size_t l = 0; l < L; ++l) {
            const bool act = cfg.active(l);
            for (int v = 0; v < cfg.n_vehicles; ++v) {
                for (int s = 0; s < cfg.walk_len; ++s) {
                    if (act) mask[l * n + pos_x[v] * Y + pos_y[v]] = 1;
                    const std::uint64_t dir = rng.uniform_int(4);
                    if (dir == 0 && pos_x[v] + 1 < X) ++pos_x[v];
                    else if (dir == 1 && pos_x[v] > 0) --pos_x[v];
                    else if (dir == 2 && pos_y[v] + 1 < Y) ++pos_y[v];
                    else if (dir == 3 && pos_y[v] > 0) --pos_y[v];
                }
            }
        }
    }
    return mask;
}

void FleetConfig::validate() const {
    if (n_vehicles < 1) throw std::invalid_argument("fleet: n_vehicles must be >= 1");
    if (route_len < 1) throw std::invalid_argument("fleet: route_len must be >= 1");
    if (walk_len < 1) throw std::invalid_argument("fleet: walk_len must be >= 1");
    for (int h : active_hours)
        if (h < 0 || h > 23) throw std::invalid_argument("fleet: active hour out of [0,23]");
}

MaskedField make_observed(const MaskedField& truth, const std::vector<std::uint8_t>& mask,
                          double obs_noise_sigma, std::uint64_t seed) {
    if (mask.size() != truth.size())
        throw std::invalid_argument("make_observed: mask size " + std::to_string(mask.size()) +
                                    " != field size " + std::to_string(truth.size()));
    MaskedField obs(truth.grid, truth.L);
    Rng rng(seed);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask[i]) {
            obs.values[i] = truth.values[i] + (obs_noise_sigma > 0.0
                                                   ? rng.normal(0.0, obs_noise_sigma)
                                                   : 0.0);
            obs.mask[i] = 1;
        }
    }
    return obs;
}

}  // namespace stepdiff
