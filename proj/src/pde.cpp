#include "stepdiff/pde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "stepdiff/log.hpp"

namespace stepdiff {

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double Mat::max_abs() const {
    double mx = 0.0;
    for (double v : a) mx = std::max(mx, std::fabs(v));
    return mx;
}

double Mat::inf_norm() const {
    double mx = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::fabs(a[r * cols + c]);
        mx = std::max(mx, s);
    }
    return mx;
}

bool Mat::all_finite() const {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

Mat matmul(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) throw std::invalid_argument("mat: inner dimensions differ");
    Mat out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double* oi = out.a.data() + i * out.cols;
        const double* xi = x.a.data() + i * x.cols;
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = xi[k];
            if (v == 0.0) continue;
            const double* yk = y.a.data() + k * y.cols;
            for (std::size_t j = 0; j < y.cols; ++j) oi[j] += v * yk[j];
        }
    }
    return out;
}

std::vector<double> matvec(const Mat& m, const std::vector<double>& v) {
    if (m.cols != v.size()) throw std::invalid_argument("mat: vector length mismatch");
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* mi = m.a.data() + i * m.cols;
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += mi[j] * v[j];
        out[i] = s;
    }
    return out;
}

void matrix_exponential(const Mat& m, double scale, Mat& B, Mat& C) {
    if (m.rows != m.cols) throw std::invalid_argument("matrix_exponential: square matrix required");
    if (!m.all_finite() || !std::isfinite(scale))
        throw std::invalid_argument("matrix_exponential: non-finite input");
    const std::size_t n = m.rows;
    Mat M(n, n);
    for (std::size_t i = 0; i < n * n; ++i) M.a[i] = scale * m.a[i];

    // Scale so the series argument has norm <= 0.25, run both series to
    // machine convergence, then square up. phi1 doubles via
    // phi1(2z) = phi1(z) (e^z + I) / 2.
    int s = 0;
    double norm = M.inf_norm();
    while (norm > 0.25 && s < 60) {
        norm *= 0.5;
        ++s;
    }
    const double inv = std::ldexp(1.0, -s);
    Mat Ms(n, n);
    for (std::size_t i = 0; i < n * n; ++i) Ms.a[i] = M.a[i] * inv;

    Mat E = Mat::identity(n);   // sum M^k / k!
    Mat P = Mat::identity(n);   // sum M^k / (k+1)!
    Mat term = Mat::identity(n);
    for (int k = 1; k <= 40; ++k) {
        term = matmul(term, Ms);
        for (std::size_t i = 0; i < n * n; ++i) term.a[i] /= static_cast<double>(k);
        double tmax = 0.0;
        for (std::size_t i = 0; i < n * n; ++i) {
            E.a[i] += term.a[i];
            P.a[i] += term.a[i] / static_cast<double>(k + 1);
            tmax = std::max(tmax, std::fabs(term.a[i]));
        }
        if (tmax < 1e-300) break;
        if (k > 3 && tmax < 1e-19 * std::max(1.0, E.max_abs())) break;
    }
    for (int r = 0; r < s; ++r) {
        Mat EI = E;
        for (std::size_t i = 0; i < n; ++i) EI(i, i) += 1.0;
        Mat Pn = matmul(P, EI);
        for (std::size_t i = 0; i < n * n; ++i) Pn.a[i] *= 0.5;
        P = std::move(Pn);
        E = matmul(E, E);
    }
    B = std::move(E);
    C = std::move(P);
    for (std::size_t i = 0; i < n * n; ++i) C.a[i] *= scale;
}

PdeParams PdeParams::uniform(double K, double px, double py, std::size_t X, std::size_t Y,
                             double n, double dt) {
    PdeParams p;
    p.K = K;
    p.Px.assign(X * Y, px);
    p.Py.assign(X * Y, py);
    p.cell_size_m = n;
    p.dt = dt;
    return p;
}

void PdeParams::validate() const {
    if (!(cell_size_m > 0.0)) throw std::invalid_argument("pde: cell size must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("pde: dt must be positive");
    if (!(K >= 0.0)) throw std::invalid_argument("pde: K must be non-negative");
    auto finite = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    };
    if (!std::isfinite(K) || !finite(Px) || !finite(Py))
        throw std::invalid_argument("pde: non-finite parameters");
}

PdeOperator build_transition(const PdeParams& params, std::size_t X, std::size_t Y) {
    params.validate();
    if (params.Px.size() != X * Y || params.Py.size() != X * Y)
        throw std::invalid_argument("pde: wind field size != X*Y");
    const double n = params.cell_size_m;
    const double kd = params.K / (n * n);
    // nearest in-grid wind lookup for out-of-grid references
    auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(X) - 1);
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(Y) - 1);
        return params.Px[static_cast<std::size_t>(x) * Y + static_cast<std::size_t>(y)];
    };
    auto py = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(X) - 1);
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(Y) - 1);
        return params.Py[static_cast<std::size_t>(x) * Y + static_cast<std::size_t>(y)];
    };

    PdeOperator op;
    op.params = params;
    op.X = X;
    op.Y = Y;
    op.A = Mat(X * Y, X * Y);
    for (std::size_t x = 0; x < X; ++x) {
        for (std::size_t y = 0; y < Y; ++y) {
            const std::size_t r = x * Y + y;
            if (y + 1 < Y) op.A(r, x * Y + (y + 1)) = kd - py(x, y) / n;
            if (x + 1 < X) op.A(r, (x + 1) * Y + y) = kd - px(x, y) / n;
            if (y >= 1) op.A(r, x * Y + (y - 1)) = kd;
            if (x >= 1) op.A(r, (x - 1) * Y + y) = kd;
            op.A(r, r) = -4.0 * kd -
                         (px(static_cast<std::ptrdiff_t>(x) + 1, y) - 2.0 * px(x, y) +
                          py(x, static_cast<std::ptrdiff_t>(y) + 1) - 2.0 * py(x, y)) /
                             n;
        }
    }
    matrix_exponential(op.A, params.dt, op.B, op.C);
    return op;
}

namespace {

// Cholesky solve of (G + lambda I) x = b; returns false if a pivot fails.
bool solve_spd(std::vector<double> G, std::vector<double> b, std::size_t n, double lambda,
               std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) G[i * n + i] += lambda;
    for (std::size_t j = 0; j < n; ++j) {
        double d = G[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= G[j * n + k] * G[j * n + k];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double lj = std::sqrt(d);
        G[j * n + j] = lj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = G[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= G[i * n + k] * G[j * n + k];
            G[i * n + j] = s / lj;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= G[i * n + k] * b[k];
        b[i] = s / G[i * n + i];
    }
    x.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= G[k * n + i] * x[k];
        x[i] = s / G[i * n + i];
    }
    return true;
}

}  // namespace

SourceEstimate estimate_source(const std::vector<HistorySlice>& history, const PdeOperator& op,
                               int window) {
    const std::size_t n = op.X * op.Y;
    SourceEstimate est;
    est.S.assign(n, 0.0);
    if (history.size() < 2) return est;

    const std::size_t first =
        history.size() > static_cast<std::size_t>(window) + 1
            ? history.size() - static_cast<std::size_t>(window) - 1
            : 0;
    // Normal equations sum_l C_R^T C_R S = sum_l C_R^T y_l over rows R_l
    // jointly observed at slices l and l+1.
    std::vector<double> G(n * n, 0.0), rhs(n, 0.0);
    int used = 0;
    for (std::size_t l = first; l + 1 < history.size(); ++l) {
        const HistorySlice& cur = history[l];
        const HistorySlice& nxt = history[l + 1];
        std::vector<double> v(cur.values, cur.values + n);
        std::vector<double> bv = matvec(op.B, v);
        bool any = false;
        for (std::size_t r = 0; r < n; ++r) {
            if (!cur.mask[r] || !nxt.mask[r]) continue;
            any = true;
            const double y = nxt.values[r] - bv[r];
            const double* cr = op.C.a.data() + r * n;
            for (std::size_t i = 0; i < n; ++i) {
                rhs[i] += cr[i] * y;
                for (std::size_t j = 0; j <= i; ++j) G[i * n + j] += cr[i] * cr[j];
            }
        }
        if (any) ++used;
    }
    if (used == 0) return est;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) G[i * n + j] = G[j * n + i];

    std::vector<double> s;
    if (!solve_spd(G, rhs, n, 0.0, s)) {
        log::info("estimate_source: rank-deficient normal equations, ridge fallback");
        if (!solve_spd(G, rhs, n, 1e-8, s)) s.assign(n, 0.0);
    }
    est.S = std::move(s);
    est.window_used = used;
    return est;
}

std::vector<double> evolve(const PdeOperator& op, const std::vector<double>& v,
                           const std::vector<double>& s) {
    const std::size_t n = op.X * op.Y;
    if (v.size() != n || s.size() != n)
        throw std::invalid_argument("evolve: expected " + std::to_string(n) + " cells, got " +
                                    std::to_string(v.size()) + "/" + std::to_string(s.size()));
    std::vector<double> out = matvec(op.B, v);
    std::vector<double> cs = matvec(op.C, s);
    for (std::size_t i = 0; i < n; ++i) out[i] += cs[i];
    return out;
}

std::vector<double> pde_forecast(const WindowSample& window, const PdeOperator& op,
                                 std::size_t horizon) {
    const std::size_t n = window.cells();
    if (n != op.X * op.Y) throw std::invalid_argument("pde_forecast: grid mismatch");
    bool any_obs = false;
    for (std::uint8_t m : window.m_co) any_obs |= (m != 0);
    if (!any_obs) throw std::invalid_argument("pde_forecast: no observations to anchor forecast");

    // Fill each history slice: missing cells get the slice's observed mean;
    // fully empty slices carry the previous filled slice forward.
    std::vector<std::vector<double>> filled(window.L1, std::vector<double>(n, 0.0));
    bool have_prev = false;
    std::vector<double> prev(n, 0.0);
    for (std::size_t l = 0; l < window.L1; ++l) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (window.m_co[l * n + k]) {
                sum += window.v_co[l * n + k];
                ++cnt;
            }
        if (cnt == 0) {
            if (have_prev) filled[l] = prev;
            // leading empty slices stay zero; the anchor slice is found later
        } else {
            const double mean = sum / static_cast<double>(cnt);
            for (std::size_t k = 0; k < n; ++k)
                filled[l][k] = window.m_co[l * n + k] ? window.v_co[l * n + k] : mean;
        }
        prev = filled[l];
        have_prev = have_prev || cnt > 0;
    }

    std::vector<HistorySlice> history(window.L1);
    for (std::size_t l = 0; l < window.L1; ++l)
        history[l] = HistorySlice{window.v_co.data() + l * n, window.m_co.data() + l * n};
    const SourceEstimate src = estimate_source(history, op);

    std::vector<double> state = filled[window.L1 - 1];
    std::vector<double> out;
    out.reserve(horizon * n);
    for (std::size_t h = 0; h < horizon; ++h) {
        state = evolve(op, state, src.S);
        out.insert(out.end(), state.begin(), state.end());
    }
    return out;
}

PdeParams fit_pde_params(const MaskedField& field, int n_threads) {
    const std::size_t n = field.cells();
    const std::size_t X = field.grid.X, Y = field.grid.Y;
    if (field.L < 2) throw std::invalid_argument("fit_pde_params: need at least 2 slices");

    std::size_t joint_pairs = 0;
    for (std::size_t l = 0; l + 1 < field.L; ++l) {
        for (std::size_t k = 0; k < n; ++k)
            if (field.mask[l * n + k] && field.mask[(l + 1) * n + k]) {
                ++joint_pairs;
                break;
            }
    }
    if (joint_pairs < 10)
        throw std::invalid_argument("fit_pde_params: need >= 10 consecutive slice pairs with "
                                    "joint observations, have " +
                                    std::to_string(joint_pairs));

    struct Candidate {
        double K, px, py;
    };
    std::vector<Candidate> lattice;
    for (int ki = 0; ki <= 40; ++ki)
        for (int px = -3; px <= 3; ++px)
            for (int py = -3; py <= 3; ++py)
                lattice.push_back({0.5 * ki, static_cast<double>(px), static_cast<double>(py)});

    std::vector<double> errors(lattice.size());
    auto eval_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c) {
            const PdeParams p = PdeParams::uniform(lattice[c].K, lattice[c].px, lattice[c].py, X,
                                                   Y, field.grid.cell_size_m,
                                                   field.grid.slice_seconds);
            const PdeOperator op = build_transition(p, X, Y);
            double err = 0.0;
            std::vector<double> v(n);
            for (std::size_t l = 0; l + 1 < field.L; ++l) {
                std::copy(field.values.begin() + l * n, field.values.begin() + (l + 1) * n,
                          v.begin());
                const std::vector<double> pred = matvec(op.B, v);
                for (std::size_t k = 0; k < n; ++k) {
                    if (!field.mask[l * n + k] || !field.mask[(l + 1) * n + k]) continue;
                    const double d = field.values[(l + 1) * n + k] - pred[k];
                    err += d * d;
                }
            }
            errors[c] = err;
        }
    };
    const int jobs = std::max(1, n_threads);
    if (jobs == 1) {
        eval_range(0, lattice.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (lattice.size() + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(lattice.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(eval_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    std::size_t best = 0;
    auto norm2 = [&](std::size_t c) {
        return lattice[c].K * lattice[c].K + lattice[c].px * lattice[c].px +
               lattice[c].py * lattice[c].py;
    };
    for (std::size_t c = 1; c < lattice.size(); ++c) {
        if (errors[c] < errors[best] || (errors[c] == errors[best] && norm2(c) < norm2(best)))
            best = c;
    }
    return PdeParams::uniform(lattice[best].K, lattice[best].px, lattice[best].py, X, Y,
                              field.grid.cell_size_m, field.grid.slice_seconds);
}

}  // namespace stepdiff
