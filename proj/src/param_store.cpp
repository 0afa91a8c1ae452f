#include "stepdiff/param_store.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace stepdiff {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (params.count(name)) throw std::logic_error("param store: duplicate name " + name);
    m[name] = Tensor(init.shape, 0.0);
    v[name] = Tensor(init.shape, 0.0);
    return params[name] = std::move(init);
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("param store: unknown name " + name);
    return it->second;
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params) {
        mix(name.data(), name.size());
        mix(t.data.data(), t.data.size() * sizeof(double));
    }
    return h;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1, double beta2, double eps) {
    store.step += 1;
    const double t = static_cast<double>(store.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, p] : store.params) {
        auto git = grads.find(name);
        if (git == grads.end())
            throw std::invalid_argument("adam: missing gradient for parameter " + name);
        const Tensor& g = git->second;
        if (!g.same_shape(p))
            throw std::invalid_argument("adam: gradient shape " + g.shape_str() +
                                        " != parameter shape " + p.shape_str() + " for " + name);
        Tensor& mm = store.m[name];
        Tensor& vv = store.v[name];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            mm.data[i] = beta1 * mm.data[i] + (1.0 - beta1) * g.data[i];
            vv.data[i] = beta2 * vv.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = mm.data[i] / bc1;
            const double vhat = vv.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

Var ParamBinder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.leaf(store_.at(name), track_);
    bound_[name] = v;
    return v;
}

std::map<std::string, Tensor> ParamBinder::grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : bound_) out[name] = tape_.grad(var);
    return out;
}

}  // namespace stepdiff
