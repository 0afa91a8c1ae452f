#include "stepdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "stepdiff/log.hpp"

namespace stepdiff {

NoiseSchedule NoiseSchedule::quadratic(int T, double beta_min, double beta_max) {
    if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
    if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
        throw std::invalid_argument("schedule: need 0 < beta_min < beta_max < 1");
    std::vector<double> betas(T);
    const double lo = std::sqrt(beta_min), hi = std::sqrt(beta_max);
    for (int t = 1; t <= T; ++t) {
        const double f = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const double b = lo + f * (hi - lo);
        betas[t - 1] = b * b;
    }
    return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("schedule: empty beta sequence");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    s.alpha_hat.resize(s.T);
    s.alpha.resize(s.T);
    s.beta_tilde.resize(s.T);
    double prod = 1.0;
    for (int i = 0; i < s.T; ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0))
            throw std::invalid_argument("schedule: beta out of (0,1) at step " +
                                        std::to_string(i + 1));
        s.alpha_hat[i] = 1.0 - s.beta[i];
        prod *= s.alpha_hat[i];
        s.alpha[i] = prod;
    }
    s.beta_tilde[0] = s.beta[0];
    for (int i = 1; i < s.T; ++i)
        s.beta_tilde[i] = (1.0 - s.alpha[i - 1]) / (1.0 - s.alpha[i]) * s.beta[i];
    return s;
}

std::vector<double> forward_noise(const std::vector<double>& v0, int t,
                                  const std::vector<double>& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T)
        throw std::invalid_argument("forward_noise: t = " + std::to_string(t) +
                                    " outside [1, " + std::to_string(sched.T) + "]");
    if (v0.size() != eps.size())
        throw std::invalid_argument("forward_noise: v0/eps length mismatch");
    const double sa = std::sqrt(sched.alpha[t - 1]);
    const double sn = std::sqrt(1.0 - sched.alpha[t - 1]);
    std::vector<double> out(v0.size());
    for (std::size_t i = 0; i < v0.size(); ++i) out[i] = sa * v0[i] + sn * eps[i];
    return out;
}

ConditionPack make_condition_pack(const WindowSample& w, const std::vector<double>& v_de,
                                  const std::vector<double>& v_pde) {
    const std::size_t c = w.cells();
    const std::size_t n1 = w.L1 * c, n2 = w.L2 * c, n = n1 + n2;
    ConditionPack p;
    p.v_co.assign(n, 0.0);
    p.m_co.assign(n, 0.0);
    p.v_de.assign(n, 0.0);
    for (std::size_t i = 0; i < n1; ++i) {
        p.v_co[i] = w.v_co[i];
        p.m_co[i] = static_cast<double>(w.m_co[i]);
    }
    if (!v_de.empty()) {
        if (v_de.size() != n2) throw std::invalid_argument("condition pack: v_de length != L2*X*Y");
        for (std::size_t i = 0; i < n2; ++i) p.v_de[n1 + i] = v_de[i];
    }
    if (!v_pde.empty()) {
        if (v_pde.size() != n2)
            throw std::invalid_argument("condition pack: v_pde length != L2*X*Y");
        p.v_pde.assign(n, 0.0);
        for (std::size_t i = 0; i < n2; ++i) p.v_pde[n1 + i] = v_pde[i];
    }
    return p;
}

namespace {

std::vector<double> sincos_embedding(double pos, int dim) {
    std::vector<double> e(dim, 0.0);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double f = std::pow(10.0, -4.0 * i / std::max(1, half - 1));
        e[2 * i] = std::sin(pos * f);
        e[2 * i + 1] = std::cos(pos * f);
    }
    return e;
}

std::string blk(int r) { return "denoiser.blk" + std::to_string(r); }
std::string sub(int r, int s) { return blk(r) + ".sub" + std::to_string(s); }

}  // namespace

Denoiser::Denoiser(DenoiserConfig cfg_, std::size_t L1_, std::size_t L2_, std::size_t X_,
                   std::size_t Y_, std::uint64_t seed)
    : cfg(cfg_), L1(L1_), L2(L2_), X(X_), Y(Y_) {
    const std::size_t d = static_cast<std::size_t>(cfg.channels);
    if (cfg.channels <= 0 || cfg.heads <= 0 || d % static_cast<std::size_t>(cfg.heads) != 0)
        throw std::invalid_argument("denoiser: channels must be a positive multiple of heads");
    if (cfg.blocks < 1 || cfg.tf_layers < 1)
        throw std::invalid_argument("denoiser: blocks and tf_layers must be >= 1");
    Rng rng(seed);
    const std::size_t c_in = 4 + (cfg.pde_channel ? 1 : 0);
    const std::size_t K = cells();
    const std::size_t side = static_cast<std::size_t>(cfg.time_embed_dim + cfg.cell_embed_dim);

    store.add("denoiser.in.w", Tensor::glorot(c_in, d, rng));
    store.add("denoiser.in.b", Tensor({d}, 0.0));
    store.add("denoiser.side.w", Tensor::glorot(side, d, rng));
    store.add("denoiser.side.b", Tensor({d}, 0.0));
    store.add("denoiser.cell.embed",
              Tensor::randn({K, static_cast<std::size_t>(cfg.cell_embed_dim)}, rng, 0.1));
    const std::size_t de = static_cast<std::size_t>(cfg.diff_embed_dim);
    store.add("denoiser.demb.w0", Tensor::glorot(de, de, rng));
    store.add("denoiser.demb.b0", Tensor({de}, 0.0));
    store.add("denoiser.demb.w1", Tensor::glorot(de, d, rng));
    store.add("denoiser.demb.b1", Tensor({d}, 0.0));
    for (int r = 0; r < cfg.blocks; ++r) {
        store.add(blk(r) + ".demb.w", Tensor::glorot(d, d, rng));
        store.add(blk(r) + ".demb.b", Tensor({d}, 0.0));
        for (int s = 0; s < cfg.tf_layers; ++s) {
            const std::string p = sub(r, s);
            store.add(p + ".ln1.g", Tensor({d}, 1.0));
            store.add(p + ".ln1.b", Tensor({d}, 0.0));
            for (const char* nm : {".wq", ".wk", ".wv", ".wo"})
                store.add(p + nm, Tensor::glorot(d, d, rng));
            for (const char* nm : {".bq", ".bk", ".bv", ".bo"})
                store.add(p + nm, Tensor({d}, 0.0));
            store.add(p + ".ln2.g", Tensor({d}, 1.0));
            store.add(p + ".ln2.b", Tensor({d}, 0.0));
            store.add(p + ".ffn.w0", Tensor::glorot(d, 2 * d, rng));
            store.add(p + ".ffn.b0", Tensor({2 * d}, 0.0));
            store.add(p + ".ffn.w1", Tensor::glorot(2 * d, d, rng));
            store.add(p + ".ffn.b1", Tensor({d}, 0.0));
        }
    }
    store.add("denoiser.out.w0", Tensor::glorot(d, d, rng));
    store.add("denoiser.out.b0", Tensor({d}, 0.0));
    store.add("denoiser.out.w1", Tensor::glorot(d, 1, rng));
    store.add("denoiser.out.b1", Tensor({1}, 0.0));
}

Var Denoiser::forward(Tape& t, ParamBinder& bind, const std::vector<double>& v_t, int step,
                      const ConditionPack& cond, std::optional<Var> v_de_var,
                      const std::vector<std::uint8_t>* slice_valid) const {
    const std::size_t L = window_len(), K = cells(), N = L * K;
    if (v_t.size() != L2 * K)
        throw std::invalid_argument("denoiser: noisy target length " + std::to_string(v_t.size()) +
                                    " != L2*X*Y = " + std::to_string(L2 * K));
    if (cond.v_co.size() != N || cond.m_co.size() != N)
        throw std::invalid_argument("denoiser: condition pack not aligned to the window");
    if (cfg.pde_channel && cond.v_pde.size() != N)
        throw std::invalid_argument("denoiser: pde channel required but missing");
    if (slice_valid && slice_valid->size() != L)
        throw std::invalid_argument("denoiser: slice_valid length != window length");

    // Input projection. With a tape-carried DeepONet channel the projection
    // splits into constant rows and the v_de row of in.w.
    Var w_in = bind("denoiser.in.w");
    Var h;
    {
        const bool on_tape = v_de_var.has_value();
        std::vector<std::size_t> const_ch;
        const_ch.push_back(0);
        const_ch.push_back(1);
        const_ch.push_back(2);
        if (!on_tape) const_ch.push_back(3);
        if (cfg.pde_channel) const_ch.push_back(4);
        Tensor xc({N, const_ch.size()});
        for (std::size_t p = 0; p < N; ++p) {
            const std::size_t l = p / K, k = p % K;
            std::size_t col = 0;
            auto put = [&](double v) { xc.data[p * const_ch.size() + col++] = v; };
            put(l >= L1 ? v_t[(l - L1) * K + k] : 0.0);  // noisy target channel
            put(cond.v_co[p]);
            put(cond.m_co[p]);
            if (!on_tape) put(cond.v_de[p]);
            if (cfg.pde_channel) put(cond.v_pde[p]);
        }
        Var base = t.matmul(t.leaf(std::move(xc)), t.gather_rows(w_in, const_ch));
        if (on_tape) {
            Var col = t.concat_rows(t.leaf(Tensor({L1 * K, 1}, 0.0)),
                                    t.reshape(*v_de_var, {L2 * K, 1}));
            base = t.add(base, t.matmul(col, t.slice_rows(w_in, 3, 4)));
        }
        h = t.add_rowvec(base, bind("denoiser.in.b"));
    }

    // side information: sinusoidal within-window position + learned cell embedding
    {
        Tensor time_part({N, static_cast<std::size_t>(cfg.time_embed_dim)});
        for (std::size_t l = 0; l < L; ++l) {
            const auto e = sincos_embedding(static_cast<double>(l), cfg.time_embed_dim);
            for (std::size_t k = 0; k < K; ++k)
                std::copy(e.begin(), e.end(),
                          time_part.data.begin() +
                              (l * K + k) * static_cast<std::size_t>(cfg.time_embed_dim));
        }
        std::vector<std::size_t> cell_idx(N);
        for (std::size_t p = 0; p < N; ++p) cell_idx[p] = p % K;
        Var side = t.concat_cols(t.leaf(std::move(time_part)),
                                 t.gather_rows(bind("denoiser.cell.embed"), cell_idx));
        h = t.add(h, t.dense(side, bind("denoiser.side.w"), bind("denoiser.side.b")));
    }

    // shared diffusion-step embedding: sinusoidal -> 2-layer FNN
    Var demb;
    {
        Tensor sc({1, static_cast<std::size_t>(cfg.diff_embed_dim)});
        sc.data = sincos_embedding(static_cast<double>(step), cfg.diff_embed_dim);
        Var e = t.silu(t.dense(t.leaf(std::move(sc)), bind("denoiser.demb.w0"),
                               bind("denoiser.demb.b0")));
        demb = t.silu(t.dense(e, bind("denoiser.demb.w1"), bind("denoiser.demb.b1")));
    }

    // permutation between slice-major and cell-major row order
    std::vector<std::size_t> perm_t(N), perm_inv(N);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < L; ++l) perm_t[k * L + l] = l * K + k;
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k) perm_inv[l * K + k] = k * L + l;
    std::vector<std::uint8_t> valid_perm;
    if (slice_valid) {
        valid_perm.resize(N);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < L; ++l) valid_perm[k * L + l] = (*slice_valid)[l];
    }

    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int r = 0; r < cfg.blocks; ++r) {
        Var y = t.add(h, t.broadcast_row(
                             t.dense(demb, bind(blk(r) + ".demb.w"), bind(blk(r) + ".demb.b")), N));
        for (int s = 0; s < cfg.tf_layers; ++s) {
            const bool temporal = (s % 2 == 0);
            const std::string p = sub(r, s);
            Var u = t.layer_norm_rows(y, bind(p + ".ln1.g"), bind(p + ".ln1.b"));
            if (temporal) u = t.gather_rows(u, perm_t);
            Var q = t.dense(u, bind(p + ".wq"), bind(p + ".bq"));
            Var k = t.dense(u, bind(p + ".wk"), bind(p + ".bk"));
            Var v = t.dense(u, bind(p + ".wv"), bind(p + ".bv"));
            Var a = t.attention(q, k, v, cfg.heads, temporal ? K : L,
                                temporal && slice_valid ? &valid_perm : nullptr);
            a = t.dense(a, bind(p + ".wo"), bind(p + ".bo"));
            if (temporal) a = t.gather_rows(a, perm_inv);
            y = t.add(y, a);
            Var u2 = t.layer_norm_rows(y, bind(p + ".ln2.g"), bind(p + ".ln2.b"));
            Var f = t.silu(t.dense(u2, bind(p + ".ffn.w0"), bind(p + ".ffn.b0")));
            f = t.dense(f, bind(p + ".ffn.w1"), bind(p + ".ffn.b1"));
            y = t.add(y, f);
        }
        h = t.scale(t.add(h, y), inv_sqrt2);
    }

    Var o = t.silu(t.dense(h, bind("denoiser.out.w0"), bind("denoiser.out.b0")));
    o = t.dense(o, bind("denoiser.out.w1"), bind("denoiser.out.b1"));
    return t.slice_rows(o, L1 * K, N);  // target-slice rows, [L2*K, 1]
}

std::vector<double> predict_noise(const Denoiser& model, const std::vector<double>& v_t, int t,
                                  const ConditionPack& cond) {
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(model.store), /*track_grads=*/false);
    Var out = model.forward(tape, bind, v_t, t, cond);
    const Tensor& val = tape.val(out);
    if (!val.all_finite()) throw std::runtime_error("predict_noise: non-finite output");
    return val.data;
}

StepLossParts step_loss(Tape& t, const std::vector<double>& eps, Var eps_hat,
                        const PdeOperator* op, double omega,
                        const std::vector<std::uint8_t>& m_ta, std::size_t L2,
                        std::size_t cells) {
    if (eps.size() != L2 * cells || m_ta.size() != L2 * cells)
        throw std::invalid_argument("step_loss: eps/mask length != L2*X*Y");
    if (omega < 0.0) throw std::invalid_argument("step_loss: omega must be >= 0");
    double msum = 0.0;
    for (std::uint8_t m : m_ta) msum += m;
    if (msum == 0.0) throw std::invalid_argument("step_loss: no observed target entries");

    Var eh = t.reshape(eps_hat, {L2, cells});
    Tensor eps_t = Tensor::from({L2, cells}, eps);
    Tensor mask({L2, cells});
    for (std::size_t i = 0; i < m_ta.size(); ++i) mask.data[i] = static_cast<double>(m_ta[i]);

    Var diff = t.hadamard(t.sub(eh, t.leaf(eps_t)), t.leaf(mask));
    Var l_eps = t.scale(t.sum_all(t.hadamard(diff, diff)), 1.0 / msum);

    StepLossParts parts;
    parts.l_eps = t.val(l_eps).data[0];
    Var total = l_eps;
    if (omega > 0.0 && L2 >= 2) {
        if (!op) throw std::invalid_argument("step_loss: omega > 0 requires a PDE operator");
        if (op->X * op->Y != cells) throw std::invalid_argument("step_loss: operator grid mismatch");
        double msum2 = 0.0;
        for (std::size_t i = cells; i < m_ta.size(); ++i) msum2 += m_ta[i];
        if (msum2 > 0.0) {
            Tensor bt({cells, cells});
            bt.data = op->B.a;
            // G(eps_hat^{l-1}) with S = 0 is B applied per slice
            Var pred = t.matmul(t.slice_rows(eh, 0, L2 - 1), t.leaf(std::move(bt)), false, true);
            Tensor eps_tail({L2 - 1, cells});
            std::copy(eps.begin() + cells, eps.end(), eps_tail.data.begin());
            Tensor mask_tail({L2 - 1, cells});
            for (std::size_t i = cells; i < m_ta.size(); ++i)
                mask_tail.data[i - cells] = static_cast<double>(m_ta[i]);
            Var resid = t.hadamard(t.sub(t.leaf(std::move(eps_tail)), pred),
                                   t.leaf(std::move(mask_tail)));
            Var l_pde = t.scale(t.sum_all(t.hadamard(resid, resid)), 1.0 / msum2);
            parts.l_pde = t.val(l_pde).data[0];
            total = t.add(total, t.scale(l_pde, omega));
        }
    }
    parts.total = total;
    return parts;
}

Normalization compute_normalization(const MaskedField& field) {
    double sum = 0.0, n = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i)
        if (field.mask[i]) {
            sum += field.values[i];
            n += 1.0;
        }
    Normalization norm;
    if (n == 0.0) return norm;
    norm.mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i)
        if (field.mask[i]) ss += (field.values[i] - norm.mean) * (field.values[i] - norm.mean);
    norm.stddev = std::sqrt(ss / n);
    if (norm.stddev < 1e-12) norm.stddev = 1.0;
    return norm;
}

WindowSample standardize_window(const WindowSample& w, const Normalization& norm) {
    WindowSample out = w;
    for (std::size_t i = 0; i < out.v_co.size(); ++i)
        out.v_co[i] = out.m_co[i] ? (out.v_co[i] - norm.mean) / norm.stddev : 0.0;
    for (std::size_t i = 0; i < out.v_ta.size(); ++i)
        out.v_ta[i] = out.m_ta[i] ? (out.v_ta[i] - norm.mean) / norm.stddev : 0.0;
    return out;
}

TrainResult train_denoiser(const std::vector<WindowSample>& windows, DeepONetModel* deeponet,
                           const PdeOperator* op, const NoiseSchedule& sched,
                           const TrainRunConfig& cfg) {
    if (windows.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.omega < 0.0) throw std::invalid_argument("train: omega must be >= 0");
    if (cfg.deeponet_role != DeepONetRole::none && deeponet == nullptr)
        throw std::invalid_argument("train: deeponet role set but no model given");
    if (cfg.pde_role == PdeRole::diff_loss && op == nullptr)
        throw std::invalid_argument("train: diff_loss role requires a PDE operator");

    const WindowSample& w0 = windows.front();
    const std::size_t K = w0.cells();
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].L1 != w0.L1 || windows[i].L2 != w0.L2)
            throw std::invalid_argument("train: mixed window lengths");
        if (cfg.pde_role == PdeRole::condition && windows[i].v_pde.size() != w0.L2 * K)
            throw std::invalid_argument("train: pde condition channel missing on window " +
                                        std::to_string(i));
        double s = 0.0;
        for (std::uint8_t m : windows[i].m_ta) s += m;
        if (s > 0.0) usable.push_back(i);
    }
    if (usable.empty()) throw std::invalid_argument("train: no windows with observed targets");
    if (usable.size() < windows.size())
        log::debug("train: %zu/%zu windows lack observed targets and are skipped",
                   windows.size() - usable.size(), windows.size());

    DenoiserConfig dcfg = cfg.denoiser;
    dcfg.pde_channel = (cfg.pde_role == PdeRole::condition);
    TrainResult result;
    result.denoiser = Denoiser(dcfg, w0.L1, w0.L2, w0.X, w0.Y, cfg.seed);
    Denoiser& model = result.denoiser;

    const bool frozen = cfg.deeponet_role == DeepONetRole::frozen_condition;
    const bool trainable = cfg.deeponet_role == DeepONetRole::trainable_condition;
    std::vector<ConditionPack> packs(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        std::vector<double> vde;
        if (frozen) vde = deeponet->forward_value(windows[i]);
        packs[i] = make_condition_pack(windows[i], vde, windows[i].v_pde);
    }

    const double omega_eff = cfg.pde_role == PdeRole::diff_loss ? cfg.omega : 0.0;
    Rng rng(cfg.seed ^ 0x00d1ff5eedULL);
    std::vector<double> eps(w0.L2 * K);
    result.curve.reserve(cfg.n_iter);
    for (int it = 0; it < cfg.n_iter; ++it) {
        Tape tape;
        ParamBinder bind(tape, model.store);
        ParamBinder bind_deep(tape, deeponet ? deeponet->store : model.store);
        Var total{};
        double sum_eps = 0.0, sum_pde = 0.0;
        const int batch = std::max(1, cfg.batch);
        for (int b = 0; b < batch; ++b) {
            const std::size_t wi = usable[rng.uniform_int(usable.size())];
            const WindowSample& w = windows[wi];
            const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.T)));
            for (double& e : eps) e = rng.normal();
            const std::vector<double> v_t = forward_noise(w.v_ta, t, eps, sched);

            std::optional<Var> vde_var;
            if (trainable) vde_var = deeponet->forward(tape, bind_deep, w);
            Var eps_hat = model.forward(tape, bind, v_t, t, packs[wi], vde_var);
            StepLossParts parts =
                step_loss(tape, eps, eps_hat, op, omega_eff, w.m_ta, w.L2, K);
            sum_eps += parts.l_eps;
            sum_pde += parts.l_pde;
            total = (b == 0) ? parts.total : tape.add(total, parts.total);
        }
        if (batch > 1) total = tape.scale(total, 1.0 / batch);
        const double loss_val = tape.val(total).data[0];
        if (!std::isfinite(loss_val))
            throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it) +
                                     " (l_eps sum " + std::to_string(sum_eps) + ", l_pde sum " +
                                     std::to_string(sum_pde) + ")");
        tape.backward(total);
        adam_step(model.store, bind.grads(), cfg.lr);
        if (trainable) adam_step(deeponet->store, bind_deep.grads(), cfg.lr);
        result.curve.push_back(
            {it, loss_val, sum_eps / batch, sum_pde / batch});
    }
    return result;
}

std::vector<double> sample_forecast(const WindowSample& window_std, const Denoiser& model,
                                    const DeepONetModel* deeponet, const PdeOperator* op,
                                    const NoiseSchedule& sched, const Normalization& norm,
                                    std::uint64_t seed, int n_samples) {
    (void)op;
    const std::size_t n = window_std.L2 * window_std.cells();
    std::vector<double> vde;
    if (deeponet) vde = deeponet->forward_value(window_std);
    const ConditionPack pack = make_condition_pack(window_std, vde, window_std.v_pde);

    std::vector<double> mean(n, 0.0);
    Rng base(seed);
    for (int s = 0; s < std::max(1, n_samples); ++s) {
        Rng rng = base.fork(static_cast<std::uint64_t>(s));
        std::vector<double> x(n);
        for (double& v : x) v = rng.normal();
        for (int t = sched.T; t >= 1; --t) {
            const std::vector<double> eps_hat = predict_noise(model, x, t, pack);
            const double inv_sa = 1.0 / std::sqrt(sched.alpha_hat[t - 1]);
            const double coef = sched.beta[t - 1] / std::sqrt(1.0 - sched.alpha[t - 1]);
            const double sigma = std::sqrt(sched.beta_tilde[t - 1]);
            for (std::size_t i = 0; i < n; ++i) {
                double mu = inv_sa * (x[i] - coef * eps_hat[i]);
                x[i] = t > 1 ? mu + sigma * rng.normal() : mu;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            mean[i] += std::max(0.0, x[i] * norm.stddev + norm.mean);
    }
    for (double& v : mean) v /= std::max(1, n_samples);
    return mean;
}

}  // namespace stepdiff
