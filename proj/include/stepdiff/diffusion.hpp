#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stepdiff/deeponet.hpp"
#include "stepdiff/grid.hpp"
#include "stepdiff/param_store.hpp"
#include "stepdiff/pde.hpp"
#include "stepdiff/rng.hpp"

namespace stepdiff {

/// beta/alpha sequences for T diffusion steps. Index convention: entry
/// [t-1] holds the value for diffusion step t in 1..T.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha_hat, alpha, beta_tilde;

    /// beta_t = (sqrt(b_min) + (t-1)/(T-1) (sqrt(b_max)-sqrt(b_min)))^2.
    static NoiseSchedule quadratic(int T = 50, double beta_min = 1e-4, double beta_max = 0.5);
    static NoiseSchedule from_betas(std::vector<double> betas);
};

/// v_t = sqrt(alpha_t) v0 + sqrt(1-alpha_t) eps, t in [1, T].
std::vector<double> forward_noise(const std::vector<double>& v0, int t,
                                  const std::vector<double>& eps, const NoiseSchedule& sched);

/// Conditional channels aligned to the full window L = L1+L2; each vector
/// has one entry per (slice, cell), zero outside its defined slices.
struct ConditionPack {
    std::vector<double> v_co;   // zero-filled history values
    std::vector<double> m_co;   // history mask (zero on target slices)
    std::vector<double> v_de;   // DeepONet forecast on target slices
    std::vector<double> v_pde;  // optional PDE forecast channel; may be empty
};

/// Builds the pack from a (standardized) window; v_de/v_pde of length
/// L2*X*Y or empty.
ConditionPack make_condition_pack(const WindowSample& w, const std::vector<double>& v_de,
                                  const std::vector<double>& v_pde);

struct DenoiserConfig {
    int channels = 64;       // model width d
    int heads = 8;
    int blocks = 4;          // residual blocks R
    int tf_layers = 4;       // attention sublayers per block, alternating
                             // temporal/feature starting with temporal
    int time_embed_dim = 16;
    int cell_embed_dim = 16;
    int diff_embed_dim = 128;
    bool pde_channel = false;  // extra conditional channel from pde_forecast
};

/// Conditional noise-prediction network: per-position input projection over
/// the conditional channels, R residual blocks of temporal/feature attention
/// with (input + transform)/sqrt(2) connections, sinusoidal diffusion-step
/// embedding through a 2-layer FNN, learned per-cell embedding, output
/// projection to one channel read off the target slices.
class Denoiser {
public:
    Denoiser() = default;
    Denoiser(DenoiserConfig cfg, std::size_t L1, std::size_t L2, std::size_t X, std::size_t Y,
             std::uint64_t seed);

    /// Tape forward. v_t holds the noisy target (length L2*X*Y). If
    /// v_de_var is set it supplies the DeepONet channel on the tape
    /// (trainable conditioning); otherwise cond.v_de is used as a constant.
    /// slice_valid, when given, marks window slices that participate in
    /// temporal attention (length L1+L2); others are padding.
    Var forward(Tape& tape, ParamBinder& bind, const std::vector<double>& v_t, int t,
                const ConditionPack& cond, std::optional<Var> v_de_var = std::nullopt,
                const std::vector<std::uint8_t>* slice_valid = nullptr) const;

    DenoiserConfig cfg;
    std::size_t L1 = 0, L2 = 0, X = 0, Y = 0;
    ParamStore store;

private:
    std::size_t window_len() const { return L1 + L2; }
    std::size_t cells() const { return X * Y; }
};

/// Deterministic value-only forward pass.
std::vector<double> predict_noise(const Denoiser& model, const std::vector<double>& v_t, int t,
                                  const ConditionPack& cond);

struct StepLossParts {
    Var total;
    double l_eps = 0.0;
    double l_pde = 0.0;
};

/// L = L_eps + omega * L_pde on the tape; both terms are masked means over
/// observed target entries (destination slices for the PDE term), G applied
/// with S = 0. `op` may be null when omega == 0.
StepLossParts step_loss(Tape& tape, const std::vector<double>& eps, Var eps_hat,
                        const PdeOperator* op, double omega,
                        const std::vector<std::uint8_t>& m_ta, std::size_t L2,
                        std::size_t cells);

enum class PdeRole { none, condition, diff_loss };
enum class PdeFit { known, fit_train, fit_external, random };

struct TrainRunConfig {
    double omega = 1.0;
    int n_iter = 2000;
    int batch = 1;
    double lr = 1e-3;
    int T = 50;
    DenoiserConfig denoiser;
    PdeRole pde_role = PdeRole::none;
    DeepONetRole deeponet_role = DeepONetRole::none;
    PdeFit pde_fit = PdeFit::known;
    std::uint64_t seed = 1;
};

struct LossRow {
    int iter;
    double loss, l_eps, l_pde;
};

struct TrainResult {
    Denoiser denoiser;
    std::vector<LossRow> curve;
};

/// One training run over standardized windows. With pde_role == condition
/// each window must carry v_pde; with deeponet_role != none `deeponet` must
/// be given (trainable_condition also updates it in the same gradient step).
TrainResult train_denoiser(const std::vector<WindowSample>& windows, DeepONetModel* deeponet,
                           const PdeOperator* op, const NoiseSchedule& sched,
                           const TrainRunConfig& cfg);

struct Normalization {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Observed-entry mean/std of a field (the train split).
Normalization compute_normalization(const MaskedField& field);

/// Standardizes observed entries in place; sentinels stay zero.
WindowSample standardize_window(const WindowSample& w, const Normalization& norm);

/// Ancestral sampling (the window's m_ta is expected all-zero at true
/// forecasting time; its values are ignored). Returns the de-standardized
/// forecast clamped at zero, length L2*X*Y. n_samples > 1 averages
/// independent reverse chains.
std::vector<double> sample_forecast(const WindowSample& window_std, const Denoiser& model,
                                    const DeepONetModel* deeponet, const PdeOperator* op,
                                    const NoiseSchedule& sched, const Normalization& norm,
                                    std::uint64_t seed, int n_samples = 1);

}  // namespace stepdiff
