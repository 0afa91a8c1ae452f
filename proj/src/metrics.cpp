#include "stepdiff/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace stepdiff {

MetricReport metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                     const std::vector<std::uint8_t>& mask) {
    if (pred.size() != truth.size() || pred.size() != mask.size())
        throw std::invalid_argument("metrics: pred/truth/mask sizes differ");
    MetricReport r;
    double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
    std::size_t ape_n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double d = truth[i] - pred[i];
        abs_sum += std::fabs(d);
        sq_sum += d * d;
        ++r.n;
        if (std::fabs(truth[i]) < 1e-6) {
            ++r.mape_excluded;
        } else {
            ape_sum += std::fabs(d / truth[i]);
            ++ape_n;
        }
    }
    if (r.n == 0) throw std::invalid_argument("metrics: empty mask");
    r.mae = abs_sum / static_cast<double>(r.n);
    r.rmse = std::sqrt(sq_sum / static_cast<double>(r.n));
    r.mape = ape_n ? ape_sum / static_cast<double>(ape_n) : 0.0;
    return r;
}

namespace {

struct Accum {
    double abs = 0.0, sq = 0.0, ape = 0.0;
    std::size_t n = 0, ape_n = 0, excluded = 0;

    void add(double pred, double truth) {
        const double d = truth - pred;
        abs += std::fabs(d);
        sq += d * d;
        ++n;
        if (std::fabs(truth) < 1e-6)
            ++excluded;
        else {
            ape += std::fabs(d / truth);
            ++ape_n;
        }
    }
    MetricReport report() const {
        MetricReport r;
        r.n = n;
        r.mape_excluded = excluded;
        if (n) {
            r.mae = abs / static_cast<double>(n);
            r.rmse = std::sqrt(sq / static_cast<double>(n));
            r.mape = ape_n ? ape / static_cast<double>(ape_n) : 0.0;
        }
        return r;
    }
};

}  // namespace

StratifiedReport stratified(const std::vector<double>& pred, const std::vector<double>& truth,
                            const std::vector<std::uint8_t>& mask, std::size_t L,
                            std::size_t cells, const std::vector<double>& cell_coverage,
                            double slice_seconds, int start_hour) {
    if (pred.size() != L * cells || pred.size() != truth.size() || pred.size() != mask.size())
        throw std::invalid_argument("stratified: shapes disagree");
    if (cell_coverage.size() != cells)
        throw std::invalid_argument("stratified: coverage length != cells");
    static const char* time_names[4] = {"00-06", "06-12", "12-18", "18-24"};
    static const char* cov_names[4] = {"[0.0,0.2]", "(0.2,0.4]", "(0.4,0.6]", "(0.6,1.0]"};
    Accum by_time[4], by_cov[4];
    for (std::size_t l = 0; l < L; ++l) {
        const double hours = static_cast<double>(start_hour) +
                             static_cast<double>(l) * slice_seconds / 3600.0;
        const int hour = static_cast<int>(std::fmod(hours, 24.0));
        const int tb = hour / 6;
        for (std::size_t k = 0; k < cells; ++k) {
            const std::size_t i = l * cells + k;
            if (!mask[i]) continue;
            by_time[tb].add(pred[i], truth[i]);
            const double c = cell_coverage[k];
            const int cb = c <= 0.2 ? 0 : (c <= 0.4 ? 1 : (c <= 0.6 ? 2 : 3));
            by_cov[cb].add(pred[i], truth[i]);
        }
    }
    StratifiedReport out;
    for (int b = 0; b < 4; ++b) {
        if (by_time[b].n) out.by_time[time_names[b]] = by_time[b].report();
        if (by_cov[b].n) out.by_coverage[cov_names[b]] = by_cov[b].report();
    }
    return out;
}

WarningReport warning_from_counts(int tp, int fp, int fn, int tn, double threshold) {
    WarningReport r;
    r.threshold = threshold;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    r.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

WarningReport warning_eval(const MaskedField& pred, const MaskedField& truth, double threshold) {
    if (pred.L != truth.L || pred.cells() != truth.cells())
        throw std::invalid_argument("warning_eval: field shapes differ");
    const std::size_t slices_per_day =
        static_cast<std::size_t>(std::lround(86400.0 / truth.grid.slice_seconds));
    if (slices_per_day == 0) throw std::invalid_argument("warning_eval: bad slice length");
    const std::size_t days = truth.L / slices_per_day;
    const std::size_t n = truth.cells();
    int tp = 0, fp = 0, fn = 0, tn = 0, skipped = 0;
    for (std::size_t d = 0; d < days; ++d) {
        double tsum = 0.0, psum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t l = d * slices_per_day; l < (d + 1) * slices_per_day; ++l) {
            for (std::size_t k = 0; k < n; ++k) {
                if (!truth.mask[l * n + k]) continue;
                tsum += truth.values[l * n + k];
                psum += pred.values[l * n + k];
                ++cnt;
            }
        }
        if (cnt == 0) {
            ++skipped;
            continue;
        }
        const bool truth_day = tsum / cnt > threshold;
        const bool pred_day = psum / cnt > threshold;
        if (truth_day && pred_day) ++tp;
        else if (!truth_day && pred_day) ++fp;
        else if (truth_day && !pred_day) ++fn;
        else ++tn;
    }
    WarningReport r = warning_from_counts(tp, fp, fn, tn, threshold);
    r.days_skipped = skipped;
    return r;
}

std::vector<double> persistence_forecast(const WindowSample& w, std::size_t horizon) {
    const std::size_t n = w.cells();
    std::vector<double> anchor(n, 0.0);
    bool found = false;
    for (std::size_t l = w.L1; l-- > 0 && !found;) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (w.m_co[l * n + k]) {
                sum += w.v_co[l * n + k];
                ++cnt;
            }
        if (cnt == 0) continue;
        const double mean = sum / static_cast<double>(cnt);
        for (std::size_t k = 0; k < n; ++k)
            anchor[k] = w.m_co[l * n + k] ? w.v_co[l * n + k] : mean;
        found = true;
    }
    if (!found) throw std::invalid_argument("persistence: no observations in history");
    std::vector<double> out;
    out.reserve(horizon * n);
    for (std::size_t h = 0; h < horizon; ++h) out.insert(out.end(), anchor.begin(), anchor.end());
    return out;
}

}  // namespace stepdiff
