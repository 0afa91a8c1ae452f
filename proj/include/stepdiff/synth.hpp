#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stepdiff/grid.hpp"
#include "stepdiff/pde.hpp"

namespace stepdiff {

enum class InitMode { smooth_random, hotspot };

/// Scenario for generating ground-truth fields from known convection-
/// diffusion dynamics.
struct SynthConfig {
    GridSpec grid;
    std::size_t L = 336;
    double K = 5.0;                 // m^2/s
    std::vector<double> Px, Py;     // X*Y winds; empty means uniform px/py below
    double px = 0.0, py = 0.0;      // uniform wind fallback, m/s
    std::vector<double> S;          // X*Y source, ug/(m^3 s); empty = none
    InitMode init_mode = InitMode::smooth_random;
    double base_level = 35.0;       // ug/m^3 around which init fields sit
    double obs_noise_sigma = 0.0;   // ug/m^3
    std::uint64_t seed = 1;

    PdeParams pde_params() const;
    void validate() const;
};

enum class FleetMode { bus_route, free_car };

/// Mobile-fleet observation pattern.
struct FleetConfig {
    int n_vehicles = 8;
    FleetMode mode = FleetMode::free_car;
    int route_period = 1;      // slices per full route traversal (bus mode)
    int route_len = 20;        // cells per bus route
    int walk_len = 6;          // cells visited per slice (free-car mode)
    std::set<int> active_hours;  // empty = all 24
    std::uint64_t seed = 1;

    void validate() const;
    bool active(std::size_t slice) const {
        return active_hours.empty() || active_hours.count(static_cast<int>(slice % 24)) > 0;
    }
};

/// Slice 0 from init_mode, then slice l+1 = evolve(slice l) with the
/// configured operator; values clamped to >= 0 after each step. The mask is
/// all ones.
MaskedField gen_ground_truth(const SynthConfig& cfg);

/// Visited-cell mask for a simulated fleet, L*X*Y bytes.
std::vector<std::uint8_t> gen_fleet_mask(const FleetConfig& cfg, const GridSpec& grid,
                                         std::size_t L);

/// truth + N(0, sigma^2) where mask = 1, sentinel 0 elsewhere.
MaskedField make_observed(const MaskedField& truth, const std::vector<std::uint8_t>& mask,
                          double obs_noise_sigma, std::uint64_t seed);

}  // namespace stepdiff
