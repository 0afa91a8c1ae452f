// Command-line surface for the forecasting pipeline:
// simulate -> ingest/split -> train -> forecast -> evaluate -> ablate.
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "stepdiff/config.hpp"
#include "stepdiff/log.hpp"
#include "stepdiff/pipeline.hpp"

namespace {

using stepdiff::Config;

struct CommonOpts {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;  // key -> value
};

Config resolve_config(const CommonOpts& common) {
    Config cfg = common.config_path.empty() ? Config() : Config::from_file(common.config_path);
    for (const auto& [k, v] : common.overrides) cfg.set(k, v);
    return cfg;
}

void add_override_flag(CLI::App* sub, CommonOpts& common, const std::string& flag,
                       const std::string& key, const std::string& help) {
    auto handler = [&common, key](const std::string& v) {
        common.overrides.emplace_back(key, v);
    };
    sub->add_option_function<std::string>(flag, handler, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stepdiff: physics-informed diffusion forecasting of gridded pollution fields"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string in_path, out_path, out_dir = "out";
    std::string model_path, data_path, pred_path, truth_path, coverage_path;
    std::string train_path, test_path, out_prefix;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "flat key = value config file");
        add_override_flag(sub, common, "--seed", "train.seed", "training seed");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic scenario");
    add_common(sim);
    sim->add_option("--out", out_dir, "output directory")->required();

    CLI::App* ing = app.add_subcommand("ingest", "grid raw sensor CSV records");
    add_common(ing);
    ing->add_option("--in", in_path, "records CSV (device_id,timestamp,lon,lat,value)")->required();
    ing->add_option("--out", out_path, "output STPF field file")->required();

    CLI::App* spl = app.add_subcommand("split", "5:1:1 time split of a field");
    spl->add_option("--in", in_path, "input STPF field")->required();
    spl->add_option("--out-prefix", out_prefix, "output prefix (default: input stem)");

    CLI::App* trn = app.add_subcommand("train", "train the forecasting model");
    add_common(trn);
    trn->add_option("--data", data_path, "training-split STPF field")->required();
    trn->add_option("--out", out_dir, "output directory")->required();
    add_override_flag(trn, common, "--omega", "train.omega", "PDE loss weight");
    add_override_flag(trn, common, "--layers", "train.layers", "transformer layers per block");
    add_override_flag(trn, common, "--mode", "train.mode", "integration mode id (0-10)");
    add_override_flag(trn, common, "--iters", "train.n_iter", "training iterations");

    CLI::App* fct = app.add_subcommand("forecast", "sample forecasts for every window");
    add_common(fct);
    fct->add_option("--model", model_path, "model checkpoint (STPC)")->required();
    fct->add_option("--data", data_path, "observed STPF field to forecast from")->required();
    fct->add_option("--out", out_dir, "output directory")->required();
    add_override_flag(fct, common, "--samples", "forecast.samples", "draws averaged per window");
    add_override_flag(fct, common, "--jobs", "forecast.jobs", "parallel sampling jobs");

    CLI::App* evl = app.add_subcommand("evaluate", "compare a forecast field against truth");
    add_common(evl);
    evl->add_option("--pred", pred_path, "prediction STPF field")->required();
    evl->add_option("--truth", truth_path, "ground-truth STPF field")->required();
    evl->add_option("--coverage-field", coverage_path,
                    "field whose mask defines coverage buckets (default: truth)");
    evl->add_option("--out", out_dir, "output directory")->required();
    add_override_flag(evl, common, "--truth-source", "eval.truth_source", "mobile or station");
    add_override_flag(evl, common, "--threshold", "eval.threshold", "warning threshold, ug/m^3");

    CLI::App* abl = app.add_subcommand("ablate", "omega/layer sweeps and the mode matrix");
    add_common(abl);
    abl->add_option("--train", train_path, "training-split STPF field")->required();
    abl->add_option("--test", test_path, "test-split STPF field")->required();
    abl->add_option("--truth", truth_path, "ground-truth STPF field for scoring")->required();
    abl->add_option("--out", out_dir, "output directory")->required();
    add_override_flag(abl, common, "--jobs", "train.fit_jobs", "threads for PDE fitting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1; --help exits 0
    }

    try {
        const Config cfg = resolve_config(common);
        if (sim->parsed()) {
            const auto r = stepdiff::run_simulate(cfg, out_dir);
            std::printf("truth: %s\nobserved: %s\nmean spatial coverage: %.3f\n",
                        r.truth_path.c_str(), r.observed_path.c_str(), r.mean_spatial_coverage);
        } else if (ing->parsed()) {
            const auto r = stepdiff::run_ingest(cfg, in_path, out_path);
            std::printf("field: %s (%zu records, %zu rejected)\n", r.field_path.c_str(),
                        r.n_records, r.n_rejected);
        } else if (spl->parsed()) {
            if (out_prefix.empty()) {
                out_prefix = in_path;
                const auto dot = out_prefix.rfind(".stpf");
                if (dot != std::string::npos) out_prefix = out_prefix.substr(0, dot);
            }
            const auto r = stepdiff::run_split(in_path, out_prefix);
            std::printf("train: %s (%zu slices)\nval: %s (%zu slices)\ntest: %s (%zu slices)\n",
                        r.train_path.c_str(), r.train_slices, r.val_path.c_str(), r.val_slices,
                        r.test_path.c_str(), r.test_slices);
        } else if (trn->parsed()) {
            const auto r = stepdiff::run_train(cfg, data_path, out_dir);
            std::printf("checkpoint: %s\nloss curve: %s\ntraining time (s): %.2f\n",
                        r.checkpoint_path.c_str(), r.loss_csv_path.c_str(), r.seconds);
        } else if (fct->parsed()) {
            const auto r = stepdiff::run_forecast(cfg, model_path, data_path, out_dir);
            std::printf("forecast: %s (%zu windows)\ninference time (s): %.2f\n",
                        r.forecast_path.c_str(), r.n_windows, r.seconds);
        } else if (evl->parsed()) {
            const auto r = stepdiff::run_evaluate(cfg, pred_path, truth_path, coverage_path,
                                                  out_dir);
            std::printf("MAE %.4f  RMSE %.4f  MAPE %.4f  (n=%zu)\n", r.report.mae, r.report.rmse,
                        r.report.mape, r.report.n);
            std::printf("warning: recall %.2f precision %.2f f1 %.2f\n", r.warning.recall,
                        r.warning.precision, r.warning.f1);
            std::printf("report: %s\n", r.report_json_path.c_str());
        } else if (abl->parsed()) {
            const auto r = stepdiff::run_ablate(cfg, train_path, test_path, truth_path, out_dir);
            std::printf("ablation table: %s (%d runs)\n", r.table_path.c_str(), r.runs);
        }
    } catch (const std::invalid_argument& e) {
        stepdiff::log::error("%s", e.what());
        return 1;
    } catch (const std::exception& e) {
        stepdiff::log::error("%s", e.what());
        return 2;
    }
    return 0;
}
