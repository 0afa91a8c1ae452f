#include "stepdiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace stepdiff {

namespace {

// C[m,n] += op(A) * op(B). Inner loops are unit-stride for the NN/NT/TN
// cases that dominate training.
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n, bool ta, bool tb) {
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c + i * n;
            const double* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ai[p];
                if (av == 0.0) continue;
                const double* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* ai = a + i * k;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* bj = b + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                ci[j] += s;
            }
        }
    } else if (ta && !tb) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* ap = a + p * m;
            const double* bp = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = ap[i];
                if (av == 0.0) continue;
                double* ci = c + i * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[p * m + i];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * b[j * k + p];
            }
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad); }

void Tape::check2d(Var v, const char* op) const {
    if (nodes_[v.id].value.rank() != 2)
        throw std::invalid_argument(std::string(op) + ": rank-2 tensor required, got " +
                                    nodes_[v.id].value.shape_str());
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y] {
            const Tensor& g = grad(y);
            if (requires_grad(a))
                for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(a).data[i] += g.data[i];
            if (requires_grad(b))
                for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(b).data[i] += g.data[i];
        };
    return y;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= tb.data[i];
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y] {
            const Tensor& g = grad(y);
            if (requires_grad(a))
                for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(a).data[i] += g.data[i];
            if (requires_grad(b))
                for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(b).data[i] -= g.data[i];
        };
    return y;
}

Var Tape::hadamard(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("hadamard: shape mismatch " + ta.shape_str() + " vs " +
                                    tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y] {
            const Tensor& g = grad(y);
            if (requires_grad(a)) {
                const Tensor& vb = val(b);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    grad_mut(a).data[i] += g.data[i] * vb.data[i];
            }
            if (requires_grad(b)) {
                const Tensor& va = val(a);
                for (std::size_t i = 0; i < g.numel(); ++i)
                    grad_mut(b).data[i] += g.data[i] * va.data[i];
            }
        };
    return y;
}

Var Tape::scale(Var a, double s) {
    Tensor out = val(a);
    for (double& v : out.data) v *= s;
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y, s] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(a).data[i] += s * g.data[i];
        };
    return y;
}

Var Tape::add_rowvec(Var x, Var b) {
    check2d(x, "add_rowvec");
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    const std::size_t n = tx.rows(), d = tx.cols();
    if (tb.numel() != d)
        throw std::invalid_argument("add_rowvec: bias length " + std::to_string(tb.numel()) +
                                    " != cols " + std::to_string(d));
    Tensor out = tx;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] += tb.data[j];
    Var y = push(std::move(out), requires_grad(x) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, x, b, y, n, d] {
            const Tensor& g = grad(y);
            if (requires_grad(x))
                for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(x).data[i] += g.data[i];
            if (requires_grad(b))
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) grad_mut(b).data[j] += g.data[i * d + j];
        };
    return y;
}

Var Tape::broadcast_row(Var row, std::size_t n) {
    const Tensor& tr = val(row);
    const std::size_t d = tr.numel();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] = tr.data[j];
    Var y = push(std::move(out), requires_grad(row));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, row, y, n, d] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) grad_mut(row).data[j] += g.data[i * d + j];
        };
    return y;
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& ta = val(a);
    if (Tensor::numel_of(shape) != ta.numel())
        throw std::invalid_argument("reshape: cannot view " + ta.shape_str() + " as " +
                                    Tensor::from(shape, std::vector<double>(Tensor::numel_of(shape)))
                                        .shape_str());
    Tensor out = Tensor::from(std::move(shape), ta.data);
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(a).data[i] += g.data[i];
        };
    return y;
}

Var Tape::slice_rows(Var x, std::size_t r0, std::size_t r1) {
    check2d(x, "slice_rows");
    const Tensor& tx = val(x);
    const std::size_t d = tx.cols();
    if (r0 >= r1 || r1 > tx.rows())
        throw std::invalid_argument("slice_rows: invalid range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") for " + tx.shape_str());
    Tensor out({r1 - r0, d});
    std::copy(tx.data.begin() + r0 * d, tx.data.begin() + r1 * d, out.data.begin());
    Var y = push(std::move(out), requires_grad(x));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, x, y, r0, d] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < g.numel(); ++i) grad_mut(x).data[r0 * d + i] += g.data[i];
        };
    return y;
}

Var Tape::concat_cols(Var a, Var b) {
    check2d(a, "concat_cols");
    check2d(b, "concat_cols");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rows() != tb.rows())
        throw std::invalid_argument("concat_cols: row mismatch " + ta.shape_str() + " vs " +
                                    tb.shape_str());
    const std::size_t n = ta.rows(), da = ta.cols(), db = tb.cols();
    Tensor out({n, da + db});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(ta.data.begin() + i * da, ta.data.begin() + (i + 1) * da,
                  out.data.begin() + i * (da + db));
        std::copy(tb.data.begin() + i * db, tb.data.begin() + (i + 1) * db,
                  out.data.begin() + i * (da + db) + da);
    }
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y, n, da, db] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < n; ++i) {
                if (requires_grad(a))
                    for (std::size_t j = 0; j < da; ++j)
                        grad_mut(a).data[i * da + j] += g.data[i * (da + db) + j];
                if (requires_grad(b))
                    for (std::size_t j = 0; j < db; ++j)
                        grad_mut(b).data[i * db + j] += g.data[i * (da + db) + da + j];
            }
        };
    return y;
}

Var Tape::concat_rows(Var a, Var b) {
    check2d(a, "concat_rows");
    check2d(b, "concat_rows");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.cols() != tb.cols())
        throw std::invalid_argument("concat_rows: column mismatch " + ta.shape_str() + " vs " +
                                    tb.shape_str());
    const std::size_t na = ta.rows(), nb = tb.rows(), d = ta.cols();
    Tensor out({na + nb, d});
    std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + na * d);
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y, na, nb, d] {
            const Tensor& g = grad(y);
            if (requires_grad(a))
                for (std::size_t i = 0; i < na * d; ++i) grad_mut(a).data[i] += g.data[i];
            if (requires_grad(b))
                for (std::size_t i = 0; i < nb * d; ++i) grad_mut(b).data[i] += g.data[na * d + i];
        };
    return y;
}

Var Tape::gather_rows(Var x, std::vector<std::size_t> idx) {
    check2d(x, "gather_rows");
    const Tensor& tx = val(x);
    const std::size_t d = tx.cols();
    for (std::size_t r : idx)
        if (r >= tx.rows())
            throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                        " out of range for " + tx.shape_str());
    Tensor out({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(tx.data.begin() + idx[i] * d, tx.data.begin() + (idx[i] + 1) * d,
                  out.data.begin() + i * d);
    Var y = push(std::move(out), requires_grad(x));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, x, y, d, idx = std::move(idx)] {
            const Tensor& g = grad(y);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    grad_mut(x).data[idx[i] * d + j] += g.data[i * d + j];
        };
    return y;
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (double v : ta.data) s += v;
    Var y = push(Tensor::scalar(s), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y] {
            const double g = grad(y).data[0];
            for (double& v : grad_mut(a).data) v += g;
        };
    return y;
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    check2d(a, "matmul");
    check2d(b, "matmul");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    const std::size_t m = trans_a ? ta.cols() : ta.rows();
    const std::size_t ka = trans_a ? ta.rows() : ta.cols();
    const std::size_t kb = trans_b ? tb.cols() : tb.rows();
    const std::size_t n = trans_b ? tb.rows() : tb.cols();
    if (ka != kb)
        throw std::invalid_argument("matmul: inner axes differ, a" + std::string(trans_a ? "^T" : "") +
                                    " cols (" + std::to_string(ka) + ") != b" +
                                    std::string(trans_b ? "^T" : "") + " rows (" +
                                    std::to_string(kb) + ")");
    Tensor out({m, n});
    matmul_acc(ta.data.data(), tb.data.data(), out.data.data(), m, ka, n, trans_a, trans_b);
    Var y = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, b, y, m, ka, n, trans_a, trans_b] {
            const Tensor& g = grad(y);
            const Tensor& va = val(a);
            const Tensor& vb = val(b);
            if (requires_grad(a)) {
                // dA = dY op(B)^T arranged for the stored (untransposed) A
                if (!trans_a)
                    matmul_acc(g.data.data(), vb.data.data(), grad_mut(a).data.data(), m, n, ka,
                               false, !trans_b);
                else
                    matmul_acc(vb.data.data(), g.data.data(), grad_mut(a).data.data(), ka, n, m,
                               trans_b, true);
            }
            if (requires_grad(b)) {
                if (!trans_b)
                    matmul_acc(va.data.data(), g.data.data(), grad_mut(b).data.data(), ka, m, n,
                               !trans_a, false);
                else
                    matmul_acc(g.data.data(), va.data.data(), grad_mut(b).data.data(), n, m, ka,
                               true, trans_a);
            }
        };
    return y;
}

Var Tape::dense(Var x, Var w, Var b) {
    check2d(x, "dense");
    check2d(w, "dense");
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    if (tx.cols() != tw.rows())
        throw std::invalid_argument("dense: x cols (" + std::to_string(tx.cols()) +
                                    ") != W rows (" + std::to_string(tw.rows()) + ")");
    if (tb.numel() != tw.cols())
        throw std::invalid_argument("dense: b length (" + std::to_string(tb.numel()) +
                                    ") != W cols (" + std::to_string(tw.cols()) + ")");
    return add_rowvec(matmul(x, w), b);
}

Var Tape::tanh_op(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::tanh(v);
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y] {
            const Tensor& g = grad(y);
            const Tensor& vy = val(y);
            for (std::size_t i = 0; i < g.numel(); ++i)
                grad_mut(a).data[i] += g.data[i] * (1.0 - vy.data[i] * vy.data[i]);
        };
    return y;
}

Var Tape::sigmoid(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = stable_sigmoid(v);
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y] {
            const Tensor& g = grad(y);
            const Tensor& vy = val(y);
            for (std::size_t i = 0; i < g.numel(); ++i)
                grad_mut(a).data[i] += g.data[i] * vy.data[i] * (1.0 - vy.data[i]);
        };
    return y;
}

Var Tape::silu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v * stable_sigmoid(v);
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y] {
            const Tensor& g = grad(y);
            const Tensor& vx = val(a);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double s = stable_sigmoid(vx.data[i]);
                grad_mut(a).data[i] += g.data[i] * (s + vx.data[i] * s * (1.0 - s));
            }
        };
    return y;
}

Var Tape::softmax_rows(Var a) {
    check2d(a, "softmax_rows");
    const Tensor& ta = val(a);
    const std::size_t n = ta.rows(), d = ta.cols();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = ta.data.data() + i * d;
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            out.data[i * d + j] = std::exp(row[j] - mx);
            sum += out.data[i * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] /= sum;
    }
    Var y = push(std::move(out), requires_grad(a));
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, a, y, n, d] {
            const Tensor& g = grad(y);
            const Tensor& vy = val(y);
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += g.data[i * d + j] * vy.data[i * d + j];
                for (std::size_t j = 0; j < d; ++j)
                    grad_mut(a).data[i * d + j] += vy.data[i * d + j] * (g.data[i * d + j] - dot);
            }
        };
    return y;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    check2d(x, "layer_norm");
    const Tensor& tx = val(x);
    const std::size_t n = tx.rows(), d = tx.cols();
    if (val(gain).numel() != d || val(bias).numel() != d)
        throw std::invalid_argument("layer_norm: gain/bias length != cols (" + std::to_string(d) +
                                    ")");
    Tensor out({n, d});
    std::vector<double> stats(2 * n);  // mean, inv_std per row
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = tx.data.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        stats[2 * i] = mean;
        stats[2 * i + 1] = inv;
        for (std::size_t j = 0; j < d; ++j)
            out.data[i * d + j] = (row[j] - mean) * inv * val(gain).data[j] + val(bias).data[j];
    }
    Var y = push(std::move(out),
                 requires_grad(x) || requires_grad(gain) || requires_grad(bias));
    nodes_[y.id].aux = std::move(stats);
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, x, gain, bias, y, n, d] {
            const Tensor& g = grad(y);
            const Tensor& vx = val(x);
            const Tensor& vg = val(gain);
            const std::vector<double>& st = nodes_[y.id].aux;
            for (std::size_t i = 0; i < n; ++i) {
                const double mean = st[2 * i], inv = st[2 * i + 1];
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double xh = (vx.data[i * d + j] - mean) * inv;
                    const double dxh = g.data[i * d + j] * vg.data[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                    if (requires_grad(gain)) grad_mut(gain).data[j] += g.data[i * d + j] * xh;
                    if (requires_grad(bias)) grad_mut(bias).data[j] += g.data[i * d + j];
                }
                if (requires_grad(x)) {
                    const double dn = static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xh = (vx.data[i * d + j] - mean) * inv;
                        const double dxh = g.data[i * d + j] * vg.data[j];
                        grad_mut(x).data[i * d + j] +=
                            inv * (dxh - sum_dxh / dn - xh * sum_dxh_xh / dn);
                    }
                }
            }
        };
    return y;
}

Var Tape::attention(Var q, Var k, Var v, int heads, std::size_t n_seq,
                    const std::vector<std::uint8_t>* key_valid) {
    check2d(q, "attention");
    check2d(k, "attention");
    check2d(v, "attention");
    const Tensor& tq = val(q);
    const Tensor& tk = val(k);
    const Tensor& tv = val(v);
    if (!tq.same_shape(tk) || !tq.same_shape(tv))
        throw std::invalid_argument("attention: q/k/v shapes differ: " + tq.shape_str() + " " +
                                    tk.shape_str() + " " + tv.shape_str());
    const std::size_t d = tq.cols();
    if (heads <= 0 || d % static_cast<std::size_t>(heads) != 0)
        throw std::invalid_argument("attention: d (" + std::to_string(d) +
                                    ") not divisible by heads (" + std::to_string(heads) + ")");
    const std::size_t rows = tq.rows();
    if (n_seq == 0 || rows % n_seq != 0)
        throw std::invalid_argument("attention: rows (" + std::to_string(rows) +
                                    ") not divisible by n_seq (" + std::to_string(n_seq) + ")");
    if (key_valid && key_valid->size() != rows)
        throw std::invalid_argument("attention: key_valid length != rows");
    const std::size_t T = rows / n_seq;
    const std::size_t h = static_cast<std::size_t>(heads);
    const std::size_t dh = d / h;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out({rows, d});
    std::vector<double> weights(n_seq * h * T * T, 0.0);
    std::vector<double> logits(T);
    for (std::size_t s = 0; s < n_seq; ++s) {
        const std::size_t base = s * T;
        for (std::size_t a = 0; a < h; ++a) {
            const std::size_t off = a * dh;
            double* wblk = weights.data() + (s * h + a) * T * T;
            for (std::size_t i = 0; i < T; ++i) {
                const double* qi = tq.data.data() + (base + i) * d + off;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < T; ++j) {
                    if (key_valid && !(*key_valid)[base + j]) {
                        logits[j] = -std::numeric_limits<double>::infinity();
                        continue;
                    }
                    const double* kj = tk.data.data() + (base + j) * d + off;
                    double dot = 0.0;
                    for (std::size_t p = 0; p < dh; ++p) dot += qi[p] * kj[p];
                    logits[j] = dot * scl;
                    mx = std::max(mx, logits[j]);
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < T; ++j) {
                    const double w =
                        std::isinf(logits[j]) ? 0.0 : std::exp(logits[j] - mx);
                    wblk[i * T + j] = w;
                    sum += w;
                }
                if (sum > 0.0)
                    for (std::size_t j = 0; j < T; ++j) wblk[i * T + j] /= sum;
                double* oi = out.data.data() + (base + i) * d + off;
                for (std::size_t j = 0; j < T; ++j) {
                    const double w = wblk[i * T + j];
                    if (w == 0.0) continue;
                    const double* vj = tv.data.data() + (base + j) * d + off;
                    for (std::size_t p = 0; p < dh; ++p) oi[p] += w * vj[p];
                }
            }
        }
    }
    Var y = push(std::move(out), requires_grad(q) || requires_grad(k) || requires_grad(v));
    nodes_[y.id].aux = std::move(weights);
    if (nodes_[y.id].requires_grad)
        nodes_[y.id].back = [this, q, k, v, y, n_seq, T, h, dh, d, scl] {
            const Tensor& g = grad(y);
            const Tensor& vq = val(q);
            const Tensor& vk = val(k);
            const Tensor& vv = val(v);
            const std::vector<double>& weights = nodes_[y.id].aux;
            const bool gq = requires_grad(q), gk = requires_grad(k), gv = requires_grad(v);
            std::vector<double> dw(T);
            for (std::size_t s = 0; s < n_seq; ++s) {
                const std::size_t base = s * T;
                for (std::size_t a = 0; a < h; ++a) {
                    const std::size_t off = a * dh;
                    const double* wblk = weights.data() + (s * h + a) * T * T;
                    for (std::size_t i = 0; i < T; ++i) {
                        const double* gi = g.data.data() + (base + i) * d + off;
                        // dV and dW = dO . V^T for this query row
                        double wdot = 0.0;
                        for (std::size_t j = 0; j < T; ++j) {
                            const double w = wblk[i * T + j];
                            const double* vj = vv.data.data() + (base + j) * d + off;
                            double dd = 0.0;
                            for (std::size_t p = 0; p < dh; ++p) dd += gi[p] * vj[p];
                            dw[j] = dd;
                            wdot += w * dd;
                            if (gv && w != 0.0) {
                                double* dvj = grad_mut(v).data.data() + (base + j) * d + off;
                                for (std::size_t p = 0; p < dh; ++p) dvj[p] += w * gi[p];
                            }
                        }
                        if (!gq && !gk) continue;
                        const double* qi = vq.data.data() + (base + i) * d + off;
                        for (std::size_t j = 0; j < T; ++j) {
                            const double w = wblk[i * T + j];
                            if (w == 0.0) continue;
                            const double ds = w * (dw[j] - wdot) * scl;
                            const double* kj = vk.data.data() + (base + j) * d + off;
                            if (gq) {
                                double* dqi = grad_mut(q).data.data() + (base + i) * d + off;
                                for (std::size_t p = 0; p < dh; ++p) dqi[p] += ds * kj[p];
                            }
                            if (gk) {
                                double* dkj = grad_mut(k).data.data() + (base + j) * d + off;
                                for (std::size_t p = 0; p < dh; ++p) dkj[p] += ds * qi[p];
                            }
                        }
                    }
                }
            }
        };
    return y;
}

void Tape::backward(Var loss) {
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    if (val(loss).numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    val(loss).shape_str());
    consumed_ = true;
    for (Node& n : nodes_)
        if (n.requires_grad) n.grad = Tensor(n.value.shape, 0.0);
    nodes_[loss.id].grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back && nodes_[i].requires_grad) nodes_[i].back();
        nodes_[i].back = nullptr;
    }
}

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    Tape t;
    Var out = t.attention(t.leaf(q), t.leaf(k), t.leaf(v), heads);
    return t.val(out);
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tape t;
    Var out = t.dense(t.leaf(x), t.leaf(w), t.leaf(b));
    return t.val(out);
}

}  // namespace stepdiff
