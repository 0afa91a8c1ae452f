#pragma once

#include <cstdint>
#include <vector>

#include "stepdiff/grid.hpp"
#include "stepdiff/param_store.hpp"
#include "stepdiff/pde.hpp"

namespace stepdiff {

enum class DeepONetRole { none, frozen_condition, trainable_condition };
enum class DeepONetLoss { mse, mse_plus_pde };

struct DeepONetConfig {
    int p = 64;                      // latent width
    std::vector<int> hidden{256, 256};
    int iters = 1000;
    double lr = 1e-3;
    double omega = 1.0;              // weight of the PDE term under mse_plus_pde
    DeepONetRole role = DeepONetRole::none;
    DeepONetLoss loss_mode = DeepONetLoss::mse;
    std::uint64_t seed = 1;
};

/// Branch net encodes (zero-filled history values || history mask), trunk
/// net encodes the full-window mask into a D x p basis, D = L2*X*Y; the
/// forecast is their inner product plus a learned output bias.
class DeepONetModel {
public:
    DeepONetModel() = default;
    DeepONetModel(DeepONetConfig cfg, std::size_t L1, std::size_t L2, std::size_t X,
                  std::size_t Y);

    /// Tape forward; gradient flows into parameters bound through `bind`.
    /// Output shape {D, 1}.
    Var forward(Tape& tape, ParamBinder& bind, const WindowSample& w) const;

    /// Value-only forward, output length D.
    std::vector<double> forward_value(const WindowSample& w) const;

    DeepONetConfig cfg;
    std::size_t L1 = 0, L2 = 0, X = 0, Y = 0;
    ParamStore store;
    double final_train_loss = 0.0;

private:
    Tensor branch_input(const WindowSample& w) const;
    Tensor trunk_input(const WindowSample& w) const;
};

/// Adam on masked MSE (loss_mode mse_plus_pde adds the one-step PDE residual
/// over target slices, S = 0). Throws if no window has observed targets.
DeepONetModel train_deeponet(const std::vector<WindowSample>& dataset, DeepONetConfig cfg,
                             std::size_t L1, std::size_t L2, std::size_t X, std::size_t Y,
                             const PdeOperator* op = nullptr);

}  // namespace stepdiff
