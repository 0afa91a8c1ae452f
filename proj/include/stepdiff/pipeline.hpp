#pragma once

#include <string>
#include <vector>

#include "stepdiff/config.hpp"
#include "stepdiff/diffusion.hpp"
#include "stepdiff/grid.hpp"
#include "stepdiff/metrics.hpp"
#include "stepdiff/pde.hpp"
#include "stepdiff/synth.hpp"

namespace stepdiff {

/// Appendix-style integration mode: how the PDE and DeepONet plug into the
/// diffusion model. Ids 1..10 select the studied combinations; 0 is the
/// plain conditional diffusion model.
struct IntegrationMode {
    int id = 10;
    PdeRole pde_role = PdeRole::diff_loss;
    DeepONetRole deeponet_role = DeepONetRole::frozen_condition;
    PdeFit pde_fit = PdeFit::known;
    DeepONetLoss deeponet_loss = DeepONetLoss::mse;

    static IntegrationMode from_id(int id);
    std::string label() const;
};

SynthConfig synth_config_from(const Config& cfg);
FleetConfig fleet_config_from(const Config& cfg);

struct SimulateResult {
    std::string truth_path, observed_path;
    double mean_spatial_coverage = 0.0;
};

SimulateResult run_simulate(const Config& cfg, const std::string& outdir);

struct IngestResult {
    std::string field_path;
    std::size_t n_records = 0, n_rejected = 0;
};

IngestResult run_ingest(const Config& cfg, const std::string& csv_path,
                        const std::string& out_path);

struct SplitResult {
    std::string train_path, val_path, test_path;
    std::size_t train_slices = 0, val_slices = 0, test_slices = 0;
};

SplitResult run_split(const std::string& in_path, const std::string& out_prefix);

/// Everything a forecast needs, as persisted in the STPC checkpoint.
struct ModelBundle {
    Denoiser denoiser;
    DeepONetModel deeponet;
    bool has_deeponet = false;
    PdeOperator op;
    bool has_op = false;
    NoiseSchedule sched;
    Normalization norm;
    IntegrationMode mode;
};

struct TrainOutcome {
    std::string checkpoint_path, loss_csv_path;
    double seconds = 0.0;
    double first_window_loss = 0.0;   // mean over the first 100 iterations
    double final_smoothed_loss = 0.0; // mean over the last 100 iterations
};

TrainOutcome run_train(const Config& cfg, const std::string& train_field_path,
                       const std::string& outdir);

ModelBundle load_bundle(const std::string& checkpoint_path);
void save_bundle(const ModelBundle& bundle, const std::string& path);

struct ForecastOutcome {
    std::string forecast_path;
    double seconds = 0.0;
    std::size_t n_windows = 0;
};

/// Samples every window of the field, averages overlapping target slices
/// into a full-length field (mask=1 on covered slices) and saves it.
ForecastOutcome run_forecast(const Config& cfg, const std::string& model_path,
                             const std::string& field_path, const std::string& outdir);

/// Per-window forecasts against ground truth; used by tests and `ablate`.
struct WindowEval {
    MetricReport report;
    double persistence_mae = 0.0;
};

WindowEval evaluate_windows(const ModelBundle& bundle, const MaskedField& observed_test,
                            const MaskedField& truth_test, std::size_t L1, std::size_t L2,
                            std::uint64_t seed, int n_samples, std::size_t max_windows = 0,
                            int jobs = 1);

struct EvaluateOutcome {
    MetricReport report;
    WarningReport warning;
    std::string report_json_path;
};

EvaluateOutcome run_evaluate(const Config& cfg, const std::string& pred_path,
                             const std::string& truth_path, const std::string& coverage_path,
                             const std::string& outdir);

struct AblateOutcome {
    std::string table_path;
    int runs = 0;
};

AblateOutcome run_ablate(const Config& cfg, const std::string& train_field_path,
                         const std::string& test_field_path, const std::string& truth_field_path,
                         const std::string& outdir);

/// Per-window standardized forecasting input: m_ta zeroed, v_ta cleared,
/// v_pde attached when the bundle carries a condition operator.
WindowSample forecasting_window(const WindowSample& raw, const ModelBundle& bundle);

}  // namespace stepdiff
