#include "stepdiff/deeponet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "stepdiff/log.hpp"
#include "stepdiff/rng.hpp"

namespace stepdiff {

namespace {

std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<int>& hidden,
                                      std::size_t out) {
    std::vector<std::size_t> w{in};
    for (int h : hidden) w.push_back(static_cast<std::size_t>(h));
    w.push_back(out);
    return w;
}

void add_fnn_params(ParamStore& store, const std::string& prefix,
                    const std::vector<std::size_t>& widths, Rng& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        store.add(prefix + ".w" + std::to_string(i), Tensor::glorot(widths[i], widths[i + 1], rng));
        store.add(prefix + ".b" + std::to_string(i), Tensor({widths[i + 1]}, 0.0));
    }
}

// tanh FNN; the last layer stays linear
Var fnn(Tape& t, ParamBinder& bind, const std::string& prefix, Var x, std::size_t n_layers) {
    Var h = x;
    for (std::size_t i = 0; i < n_layers; ++i) {
        h = t.dense(h, bind(prefix + ".w" + std::to_string(i)),
                    bind(prefix + ".b" + std::to_string(i)));
        if (i + 1 < n_layers) h = t.tanh_op(h);
    }
    return h;
}

}  // namespace

DeepONetModel::DeepONetModel(DeepONetConfig cfg_, std::size_t L1_, std::size_t L2_, std::size_t X_,
                             std::size_t Y_)
    : cfg(cfg_), L1(L1_), L2(L2_), X(X_), Y(Y_) {
    if (cfg.p < 1) throw std::invalid_argument("deeponet: p must be >= 1");
    const std::size_t cells = X * Y;
    const std::size_t D = L2 * cells;
    Rng rng(cfg.seed);
    add_fnn_params(store, "deeponet.branch",
                   layer_widths(2 * L1 * cells, cfg.hidden, static_cast<std::size_t>(cfg.p)), rng);
    add_fnn_params(store, "deeponet.trunk",
                   layer_widths((L1 + L2) * cells, cfg.hidden, D * static_cast<std::size_t>(cfg.p)),
                   rng);
    store.add("deeponet.bias", Tensor({D}, 0.0));
}

Tensor DeepONetModel::branch_input(const WindowSample& w) const {
    const std::size_t n = L1 * X * Y;
    Tensor in({1, 2 * n});
    for (std::size_t i = 0; i < n; ++i) {
        in.data[i] = w.v_co[i];
        in.data[n + i] = static_cast<double>(w.m_co[i]);
    }
    return in;
}

Tensor DeepONetModel::trunk_input(const WindowSample& w) const {
    const std::size_t n1 = L1 * X * Y, n2 = L2 * X * Y;
    Tensor in({1, n1 + n2});
    for (std::size_t i = 0; i < n1; ++i) in.data[i] = static_cast<double>(w.m_co[i]);
    for (std::size_t i = 0; i < n2; ++i) in.data[n1 + i] = static_cast<double>(w.m_ta[i]);
    return in;
}

Var DeepONetModel::forward(Tape& t, ParamBinder& bind, const WindowSample& w) const {
    if (w.L1 != L1 || w.L2 != L2 || w.X != X || w.Y != Y)
        throw std::invalid_argument("deeponet: window dims " + std::to_string(w.L1) + "+" +
                                    std::to_string(w.L2) + "x" + std::to_string(w.X) + "x" +
                                    std::to_string(w.Y) + " do not match model");
    const std::size_t n_layers = cfg.hidden.size() + 1;
    const std::size_t D = L2 * X * Y;
    Var br = fnn(t, bind, "deeponet.branch", t.leaf(branch_input(w)), n_layers);  // [1, p]
    Var tr = fnn(t, bind, "deeponet.trunk", t.leaf(trunk_input(w)), n_layers);    // [1, D*p]
    Var basis = t.reshape(tr, {D, static_cast<std::size_t>(cfg.p)});
    Var out = t.matmul(basis, br, false, true);  // [D, 1]
    Var bias = t.reshape(bind("deeponet.bias"), {D, 1});
    return t.add(out, bias);
}

std::vector<double> DeepONetModel::forward_value(const WindowSample& w) const {
    Tape t;
    ParamBinder bind(t, const_cast<ParamStore&>(store), /*track_grads=*/false);
    Var out = forward(t, bind, w);
    return t.val(out).data;
}

DeepONetModel train_deeponet(const std::vector<WindowSample>& dataset, DeepONetConfig cfg,
                             std::size_t L1, std::size_t L2, std::size_t X, std::size_t Y,
                             const PdeOperator* op) {
    if (dataset.empty()) throw std::invalid_argument("deeponet: empty dataset");
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        double s = 0.0;
        for (std::uint8_t m : dataset[i].m_ta) s += m;
        if (s > 0.0) usable.push_back(i);
    }
    if (usable.empty()) throw std::invalid_argument("deeponet: no observed target entries");
    if (cfg.loss_mode == DeepONetLoss::mse_plus_pde && op == nullptr)
        throw std::invalid_argument("deeponet: mse_plus_pde requires a PDE operator");

    DeepONetModel model(cfg, L1, L2, X, Y);
    Rng rng(cfg.seed ^ 0x5eed0123abcd77ULL);
    const std::size_t cells = X * Y;
    double last_loss = 0.0;
    for (int it = 0; it < cfg.iters; ++it) {
        const WindowSample& w = dataset[usable[rng.uniform_int(usable.size())]];
        Tape t;
        ParamBinder bind(t, model.store);
        Var vde = model.forward(t, bind, w);  // [D,1]

        Tensor target({L2 * cells, 1});
        Tensor mask({L2 * cells, 1});
        double msum = 0.0;
        for (std::size_t i = 0; i < L2 * cells; ++i) {
            target.data[i] = w.v_ta[i];
            mask.data[i] = static_cast<double>(w.m_ta[i]);
            msum += mask.data[i];
        }
        Var diff = t.hadamard(t.sub(vde, t.leaf(target)), t.leaf(mask));
        Var loss = t.scale(t.sum_all(t.hadamard(diff, diff)), 1.0 / msum);

        if (cfg.loss_mode == DeepONetLoss::mse_plus_pde && L2 >= 2) {
            Tensor bt({cells, cells});
            bt.data = op->B.a;
            Var grid2d = t.reshape(vde, {L2, cells});
            Var pred = t.matmul(t.slice_rows(grid2d, 0, L2 - 1), t.leaf(bt), false, true);
            Var resid = t.sub(t.slice_rows(grid2d, 1, L2), pred);
            Var l_pde = t.scale(t.sum_all(t.hadamard(resid, resid)),
                                1.0 / static_cast<double>((L2 - 1) * cells));
            loss = t.add(loss, t.scale(l_pde, cfg.omega));
        }
        last_loss = t.val(loss).data[0];
        if (!std::isfinite(last_loss))
            throw std::runtime_error("deeponet: non-finite loss at iteration " +
                                     std::to_string(it));
        t.backward(loss);
        adam_step(model.store, bind.grads(), cfg.lr);
    }
    model.final_train_loss = last_loss;
    return model;
}

}  // namespace stepdiff
