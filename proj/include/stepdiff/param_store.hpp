#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "stepdiff/tape.hpp"
#include "stepdiff/tensor.hpp"

namespace stepdiff {

/// Named parameters with per-parameter Adam moments. std::map keeps
/// iteration order stable so updates and checkpoints are deterministic.
struct ParamStore {
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::int64_t step = 0;

    Tensor& add(const std::string& name, Tensor init);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) > 0; }

    /// FNV-1a over parameter bytes in name order; used to assert a store
    /// was not mutated (frozen-condition invariant).
    std::uint64_t checksum() const;
};

/// Standard Adam with bias correction. Every parameter in the store must
/// have a matching gradient; a missing key is a usage error.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Binds store parameters onto a tape as gradient-tracked leaves and
/// collects their gradients after backward().
class ParamBinder {
public:
    ParamBinder(Tape& tape, ParamStore& store, bool track_grads = true)
        : tape_(tape), store_(store), track_(track_grads) {}

    Var operator()(const std::string& name);

    /// Gradients for every bound parameter; call after tape.backward().
    std::map<std::string, Tensor> grads() const;

private:
    Tape& tape_;
    ParamStore& store_;
    bool track_;
    std::map<std::string, Var> bound_;
};

}  // namespace stepdiff
