#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stepdiff/grid.hpp"

namespace stepdiff {

/// Small dense row-major matrix for the (X*Y)x(X*Y) transition operators.
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}
    static Mat identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    double max_abs() const;
    double inf_norm() const;  // max absolute row sum
    bool all_finite() const;
};

Mat matmul(const Mat& x, const Mat& y);
std::vector<double> matvec(const Mat& m, const std::vector<double>& v);

/// B = exp(scale*M) and C = scale*phi1(scale*M) with phi1(z) = (e^z - 1)/z,
/// computed by scaling-and-squaring on truncated series; no inverse is
/// formed, so singular M is safe.
void matrix_exponential(const Mat& m, double scale, Mat& B, Mat& C);

/// Convection-diffusion parameters on a grid of cell size n meters.
struct PdeParams {
    double K = 0.0;               // m^2/s, scalar diffusion coefficient
    std::vector<double> Px, Py;   // X*Y wind fields, m/s
    double cell_size_m = 500.0;   // n
    double dt = 3600.0;           // slice interval, seconds

    static PdeParams uniform(double K, double px, double py, std::size_t X, std::size_t Y,
                             double n = 500.0, double dt = 3600.0);
    void validate() const;
};

/// Stencil matrix A (1/s) with its one-slice transition B = exp(dt*A) and
/// source response C = dt*phi1(dt*A). Immutable after construction.
struct PdeOperator {
    Mat A, B, C;
    PdeParams params;
    std::size_t X = 0, Y = 0;
};

/// Least-squares source estimate over a trailing window of transitions.
struct SourceEstimate {
    std::vector<double> S;  // X*Y, ug/(m^3 s)
    int window_used = 0;
};

/// Assembles A row by row from the five-point stencil (absorbing boundary:
/// out-of-grid neighbor columns are dropped; wind terms that reference
/// out-of-grid cells use the nearest in-grid value), then derives B and C.
PdeOperator build_transition(const PdeParams& params, std::size_t X, std::size_t Y);

/// One slice of history for source estimation: values plus observation mask.
struct HistorySlice {
    const double* values;
    const std::uint8_t* mask;
};

/// S minimizing the masked one-step residuals over the trailing `window`
/// transitions; rows restricted to cells observed at both ends. Fewer than
/// two usable slices gives S = 0 with window_used = 0. Rank-deficient normal
/// equations fall back to a ridge solve (lambda = 1e-8).
SourceEstimate estimate_source(const std::vector<HistorySlice>& history, const PdeOperator& op,
                               int window = 6);

/// v_{l+1} = B v_l + C s.
std::vector<double> evolve(const PdeOperator& op, const std::vector<double>& v,
                           const std::vector<double>& s);

/// PDE-only forecast: fills the last history slice's missing cells with that
/// slice's observed mean (empty slices carry the previous filled slice),
/// estimates S, then iterates evolve for `horizon` steps.
std::vector<double> pde_forecast(const WindowSample& window, const PdeOperator& op,
                                 std::size_t horizon);

/// Coordinate grid search over K in {0, 0.5, ..., 20} and uniform
/// (Px, Py) in {-3..3}^2 minimizing masked one-step squared error; ties
/// break toward smaller ||(K, P)||. n_threads > 1 evaluates candidates in
/// parallel (result independent of scheduling).
PdeParams fit_pde_params(const MaskedField& field, int n_threads = 1);

}  // namespace stepdiff
