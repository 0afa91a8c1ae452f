#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stepdiff/grid.hpp"

namespace stepdiff {

struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    std::size_t n = 0;            // evaluated entries
    std::size_t mape_excluded = 0;  // entries skipped by the near-zero-truth rule
};

/// MAE/RMSE/MAPE over mask=1 entries; MAPE excludes |truth| < 1e-6 and
/// reports how many entries that removed. Empty mask is an error.
MetricReport metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                     const std::vector<std::uint8_t>& mask);

/// Bucketed reports: four hour-of-day ranges (00-06, 06-12, 12-18, 18-24 by
/// slice hour) and four per-cell temporal-coverage intervals ([0,0.2],
/// (0.2,0.4], (0.4,0.6], (0.6,1.0]). Empty buckets are absent from the maps.
struct StratifiedReport {
    std::map<std::string, MetricReport> by_time;
    std::map<std::string, MetricReport> by_coverage;
};

StratifiedReport stratified(const std::vector<double>& pred, const std::vector<double>& truth,
                            const std::vector<std::uint8_t>& mask, std::size_t L,
                            std::size_t cells, const std::vector<double>& cell_coverage,
                            double slice_seconds, int start_hour = 0);

struct WarningReport {
    double threshold = 25.0;
    int tp = 0, fp = 0, fn = 0, tn = 0;
    int days_skipped = 0;
    double recall = 0.0, precision = 0.0, f1 = 0.0;
};

/// Computes daily 24-hour means (spatial mean over cells where truth is
/// observed, then mean over the day's slices), binarizes both sides at the
/// threshold and fills the confusion counts. Days without any observed
/// truth are skipped and counted.
WarningReport warning_eval(const MaskedField& pred, const MaskedField& truth,
                           double threshold = 25.0);

/// Confusion counts -> recall/precision/F1 (zero denominators give 0).
WarningReport warning_from_counts(int tp, int fp, int fn, int tn, double threshold = 25.0);

/// Last observed slice repeated over the horizon; missing cells filled with
/// that slice's observed mean (empty slices fall back to earlier ones).
std::vector<double> persistence_forecast(const WindowSample& w, std::size_t horizon);

}  // namespace stepdiff
