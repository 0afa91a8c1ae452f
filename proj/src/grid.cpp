#include "stepdiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stepdiff/log.hpp"

namespace stepdiff {

namespace {

constexpr double kMetersPerDegLat = 111320.0;

template <typename T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("field file: truncated " + path);
    return v;
}

}  // namespace

void GridSpec::validate() const {
    if (X < 1 || Y < 1) throw std::invalid_argument("grid: X and Y must be >= 1");
    if (cell_size_m <= 0.0) throw std::invalid_argument("grid: cell size must be positive");
    if (slice_seconds <= 0.0) throw std::invalid_argument("grid: slice length must be positive");
}

MaskedField MaskedField::slice_range(std::size_t l0, std::size_t l1) const {
    if (l0 > l1 || l1 > L) throw std::invalid_argument("field: bad slice range");
    MaskedField out(grid, l1 - l0);
    const std::size_t c = cells();
    std::copy(values.begin() + l0 * c, values.begin() + l1 * c, out.values.begin());
    std::copy(mask.begin() + l0 * c, mask.begin() + l1 * c, out.mask.begin());
    return out;
}

MaskedField discretize(const std::vector<RawRecord>& records, const GridSpec& grid,
                       std::int64_t t0, std::size_t L, std::vector<std::size_t>* rejected) {
    grid.validate();
    if (L == 0) throw std::invalid_argument("discretize: L must be positive");
    MaskedField field(grid, L);
    // per-cell value lists, summed in sorted order so the mean is exactly
    // permutation-invariant over the input records
    std::vector<std::vector<double>> bins(field.size());
    const double cos_lat = std::cos(grid.origin_lat * M_PI / 180.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const RawRecord& r = records[i];
        // local equirectangular projection anchored at the grid origin
        const double east = (r.lon - grid.origin_lon) * kMetersPerDegLat * cos_lat;
        const double north = (r.lat - grid.origin_lat) * kMetersPerDegLat;
        const double xs = std::floor(east / grid.cell_size_m);
        const double ys = std::floor(north / grid.cell_size_m);
        const double ls = std::floor(static_cast<double>(r.timestamp - t0) / grid.slice_seconds);
        const bool in_range = xs >= 0 && xs < static_cast<double>(grid.X) && ys >= 0 &&
                              ys < static_cast<double>(grid.Y) && ls >= 0 &&
                              ls < static_cast<double>(L);
        if (!in_range) {
            if (rejected) {
                rejected->push_back(i);
                continue;
            }
            throw std::invalid_argument("discretize: record " + std::to_string(i) +
                                        " outside grid/time bounds");
        }
        const std::size_t k = field.idx(static_cast<std::size_t>(ls), static_cast<std::size_t>(xs),
                                        static_cast<std::size_t>(ys));
        bins[k].push_back(r.value);
    }
    for (std::size_t k = 0; k < field.size(); ++k) {
        if (bins[k].empty()) continue;
        std::sort(bins[k].begin(), bins[k].end());
        double sum = 0.0;
        for (double v : bins[k]) sum += v;
        field.values[k] = sum / static_cast<double>(bins[k].size());
        field.mask[k] = 1;
    }
    return field;
}

CoverageStats coverage_stats(const MaskedField& field) {
    CoverageStats st;
    st.spatial.assign(field.L, 0.0);
    st.temporal.assign(field.cells(), 0.0);
    const std::size_t c = field.cells();
    for (std::size_t l = 0; l < field.L; ++l)
        for (std::size_t k = 0; k < c; ++k)
            if (field.mask[l * c + k]) {
                st.spatial[l] += 1.0;
                st.temporal[k] += 1.0;
            }
    for (double& v : st.spatial) v /= static_cast<double>(c);
    for (double& v : st.temporal) v /= static_cast<double>(field.L);
    return st;
}

std::vector<WindowSample> sliding_windows(const MaskedField& field, std::size_t L1,
                                          std::size_t L2) {
    if (field.L < L1 + L2)
        throw std::invalid_argument("sliding_windows: field has " + std::to_string(field.L) +
                                    " slices, need at least " + std::to_string(L1 + L2));
    const std::size_t count = field.L - (L1 + L2) + 1;
    const std::size_t c = field.cells();
    std::vector<WindowSample> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        WindowSample s;
        s.start = w;
        s.L1 = L1;
        s.L2 = L2;
        s.X = field.grid.X;
        s.Y = field.grid.Y;
        s.v_co.assign(field.values.begin() + w * c, field.values.begin() + (w + L1) * c);
        s.m_co.assign(field.mask.begin() + w * c, field.mask.begin() + (w + L1) * c);
        s.v_ta.assign(field.values.begin() + (w + L1) * c,
                      field.values.begin() + (w + L1 + L2) * c);
        s.m_ta.assign(field.mask.begin() + (w + L1) * c, field.mask.begin() + (w + L1 + L2) * c);
        out.push_back(std::move(s));
    }
    return out;
}

Split split_5_1_1(const MaskedField& field) {
    const std::size_t q = field.L / 7;
    if (q == 0) throw std::invalid_argument("split: need at least 7 slices");
    const std::size_t train_len = field.L - 2 * q;
    if (field.L < 168)
        log::info("split: %zu slices gives %zu per val/test; 12+12 windows need 24", field.L, q);
    Split s;
    s.train = field.slice_range(0, train_len);
    s.val = field.slice_range(train_len, train_len + q);
    s.test = field.slice_range(train_len + q, field.L);
    return s;
}

void save_stpf(const MaskedField& field, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("field file: cannot open " + path + " for writing");
    os.write("STPF", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(field.L));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(field.grid.X));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(field.grid.Y));
    put<double>(os, field.grid.origin_lat);
    put<double>(os, field.grid.origin_lon);
    put<double>(os, field.grid.cell_size_m);
    put<double>(os, field.grid.slice_seconds);
    os.write(reinterpret_cast<const char*>(field.values.data()),
             static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(field.mask.data()),
             static_cast<std::streamsize>(field.mask.size()));
    if (!os) throw std::runtime_error("field file: write failed for " + path);
}

MaskedField load_stpf(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("field file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "STPF", 4) != 0)
        throw std::runtime_error("field file: bad magic in " + path);
    const auto version = get<std::uint32_t>(is, path);
    if (version != 1)
        throw std::runtime_error("field file: unsupported version " + std::to_string(version));
    GridSpec g;
    const auto L = get<std::uint32_t>(is, path);
    g.X = get<std::uint32_t>(is, path);
    g.Y = get<std::uint32_t>(is, path);
    g.origin_lat = get<double>(is, path);
    g.origin_lon = get<double>(is, path);
    g.cell_size_m = get<double>(is, path);
    g.slice_seconds = get<double>(is, path);
    MaskedField field(g, L);
    is.read(reinterpret_cast<char*>(field.values.data()),
            static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (!is) throw std::runtime_error("field file: truncated values in " + path);
    is.read(reinterpret_cast<char*>(field.mask.data()),
            static_cast<std::streamsize>(field.mask.size()));
    if (!is) throw std::runtime_error("field file: truncated mask in " + path);
    return field;
}

std::vector<RawRecord> read_records_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty file " + path);
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "device_id,timestamp,lon,lat,value")
        throw std::runtime_error("csv: unexpected header '" + line + "' in " + path);
    std::vector<RawRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        RawRecord r;
        std::string field;
        try {
            std::getline(ss, r.device_id, ',');
            std::getline(ss, field, ',');
            r.timestamp = std::stoll(field);
            std::getline(ss, field, ',');
            r.lon = std::stod(field);
            std::getline(ss, field, ',');
            r.lat = std::stod(field);
            std::getline(ss, field, ',');
            r.value = std::stod(field);
        } catch (const std::exception&) {
            throw std::runtime_error("csv: malformed line " + std::to_string(lineno) + " in " +
                                     path);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace stepdiff
