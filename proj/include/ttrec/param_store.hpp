#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "ttrec/tensor.hpp"

namespace ttrec {

/// Named trainable tensors with gradient slots and Adam moment state.
/// Names are unique; gradient extents always mirror parameter extents.
template <typename Real>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<Real> value;
        Tensor<Real> grad;
        Tensor<Real> m; // first moment
        Tensor<Real> v; // second moment
    };

    int add(const std::string& name, Tensor<Real> value) {
        if (index_.count(name)) throw ConfigError("parameter '" + name + "' already exists");
        Entry e;
        e.name = name;
        e.grad = Tensor<Real>(value.extents());
        e.m = Tensor<Real>(value.extents());
        e.v = Tensor<Real>(value.extents());
        e.value = std::move(value);
        entries_.push_back(std::move(e));
        int id = static_cast<int>(entries_.size()) - 1;
        index_[name] = id;
        return id;
    }

    int add_uniform(const std::string& name, Extents extents, Rng& rng, Real lo = Real(-0.1),
                    Real hi = Real(0.1)) {
        return add(name, Tensor<Real>::uniform(std::move(extents), rng, lo, hi));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    int id_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }

    Entry& entry(int id) { return entries_[static_cast<std::size_t>(id)]; }
    const Entry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }

    Tensor<Real>& value(const std::string& name) { return entry(id_of(name)).value; }
    const Tensor<Real>& value(const std::string& name) const { return entry(id_of(name)).value; }
    Tensor<Real>& grad(const std::string& name) { return entry(id_of(name)).grad; }

    std::size_t count() const { return entries_.size(); }
    std::int64_t step_count() const { return step_; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.name);
        return out;
    }

    std::int64_t total_parameters() const {
        std::int64_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries_) e.grad.fill(Real(0));
    }

    /// Adam with bias correction. L2 weight decay enters as a gradient-side
    /// penalty (the classic, non-decoupled form). Missing gradients are zero
    /// by construction, so untouched parameters only feel the decay term.
    void adam_step(double lr, double beta_m = 0.9, double beta_v = 0.999, double eps = 1e-8,
                   double weight_decay = 0.0) {
        ++step_;
        const double bc_m = 1.0 - std::pow(beta_m, static_cast<double>(step_));
        const double bc_v = 1.0 - std::pow(beta_v, static_cast<double>(step_));
        for (auto& e : entries_) {
            const std::int64_t size = e.value.size();
            for (std::int64_t i = 0; i < size; ++i) {
                double g = static_cast<double>(e.grad[i]) + weight_decay * static_cast<double>(e.value[i]);
                double m = beta_m * static_cast<double>(e.m[i]) + (1.0 - beta_m) * g;
                double v = beta_v * static_cast<double>(e.v[i]) + (1.0 - beta_v) * g * g;
                e.m[i] = static_cast<Real>(m);
                e.v[i] = static_cast<Real>(v);
                const double mhat = m / bc_m;
                const double vhat = v / bc_v;
                e.value[i] = static_cast<Real>(static_cast<double>(e.value[i]) -
                                               lr * mhat / (std::sqrt(vhat) + eps));
            }
            if (!e.value.all_finite())
                throw NumericalError("non-finite values in parameter '" + e.name +
                                     "' after optimizer step " + std::to_string(step_));
        }
    }

    /// FNV-1a over the raw bytes of every parameter value, in registration
    /// order. Used to prove the teacher stays untouched by distillation.
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const void* p, std::size_t bytes) {
            const unsigned char* c = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < bytes; ++i) {
                h ^= c[i];
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& e : entries_) {
            mix(e.name.data(), e.name.size());
            mix(e.value.data(), static_cast<std::size_t>(e.value.size()) * sizeof(Real));
        }
        return h;
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, int> index_;
    std::int64_t step_ = 0;
};

} // namespace ttrec
