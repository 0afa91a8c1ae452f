#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stepdiff {

/// Regular lat/lon-anchored grid: square cells of cell_size_m meters,
/// time slices of slice_seconds.
struct GridSpec {
    double origin_lat = 0.0;
    double origin_lon = 0.0;
    double cell_size_m = 500.0;
    double slice_seconds = 3600.0;
    std::size_t X = 10;
    std::size_t Y = 10;

    void validate() const;
};

/// One mobile-sensor measurement of the configured pollutant channel.
struct RawRecord {
    std::string device_id;
    std::int64_t timestamp = 0;  // unix seconds
    double lon = 0.0;
    double lat = 0.0;
    double value = 0.0;  // ug/m^3
};

/// Gridded values with a binary observation mask. Entries with mask == 0
/// hold the sentinel 0.0 and must never be read as measurements.
struct MaskedField {
    GridSpec grid;
    std::size_t L = 0;
    std::vector<double> values;        // L*X*Y row-major
    std::vector<std::uint8_t> mask;    // same layout, 0/1

    MaskedField() = default;
    MaskedField(GridSpec g, std::size_t slices)
        : grid(g), L(slices), values(slices * g.X * g.Y, 0.0), mask(slices * g.X * g.Y, 0) {}

    std::size_t idx(std::size_t l, std::size_t x, std::size_t y) const {
        return (l * grid.X + x) * grid.Y + y;
    }
    std::size_t cells() const { return grid.X * grid.Y; }
    std::size_t size() const { return values.size(); }

    double value(std::size_t l, std::size_t x, std::size_t y) const { return values[idx(l, x, y)]; }
    bool observed(std::size_t l, std::size_t x, std::size_t y) const { return mask[idx(l, x, y)] != 0; }

    /// Time-contiguous sub-field [l0, l1).
    MaskedField slice_range(std::size_t l0, std::size_t l1) const;
};

/// One training/evaluation unit cut from a field: L1 history slices and
/// L2 target slices, each X*Y cells per slice.
struct WindowSample {
    std::size_t start = 0;  // offset of the window in its source field
    std::size_t L1 = 12, L2 = 12, X = 0, Y = 0;
    std::vector<double> v_co, v_ta;
    std::vector<std::uint8_t> m_co, m_ta;
    std::vector<double> v_de;   // DeepONet output; empty until filled
    std::vector<double> v_pde;  // optional extra conditional channel

    std::size_t cells() const { return X * Y; }
};

struct CoverageStats {
    std::vector<double> spatial;   // per slice, length L
    std::vector<double> temporal;  // per cell, length X*Y
};

/// Averages records into cells/slices; mask=1 iff at least one record
/// mapped. Records outside the grid box or [t0, t0 + L*slice_seconds) are
/// rejected: their indices go to *rejected when given, otherwise the first
/// offender raises with its index.
MaskedField discretize(const std::vector<RawRecord>& records, const GridSpec& grid,
                       std::int64_t t0, std::size_t L,
                       std::vector<std::size_t>* rejected = nullptr);

/// spatial[l] = mean of mask[l,:,:]; temporal[x,y] = mean of mask[:,x,y].
CoverageStats coverage_stats(const MaskedField& field);

/// Stride-1 windows at every offset 0 .. L-(L1+L2); count L-(L1+L2)+1.
std::vector<WindowSample> sliding_windows(const MaskedField& field, std::size_t L1 = 12,
                                          std::size_t L2 = 12);

struct Split {
    MaskedField train, val, test;
};

/// Contiguous 5:1:1 time split; val and test get floor(L/7) slices each and
/// train takes the rest.
Split split_5_1_1(const MaskedField& field);

/// STPF field file: magic "STPF", u32 version=1, u32 L, u32 X, u32 Y,
/// f64 origin_lat, origin_lon, cell_size, slice_seconds, then L*X*Y
/// little-endian f64 values and L*X*Y u8 mask bytes.
void save_stpf(const MaskedField& field, const std::string& path);
MaskedField load_stpf(const std::string& path);

/// CSV with header device_id,timestamp,lon,lat,value.
std::vector<RawRecord> read_records_csv(const std::string& path);

}  // namespace stepdiff
