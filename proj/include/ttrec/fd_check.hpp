#pragma once

#include <functional>

#include "ttrec/param_store.hpp"

namespace ttrec {

/// Central finite-difference gradient verification. loss_fn must rebuild the
/// forward pass from the store on every call and be deterministic (dropout
/// off, any sampling pinned). Returns the worst relative disagreement between
/// the analytic gradients already present in the store and
/// (f(x+eps) - f(x-eps)) / (2 eps), over every coordinate of every parameter.
template <typename Real>
double fd_check(const std::function<double()>& loss_fn, ParamStore<Real>& store,
                double eps = 1e-4) {
    {
        const double probe = loss_fn();
        if (!std::isfinite(probe)) throw NumericalError("fd_check: loss is not finite");
    }
    double worst = 0.0;
    for (std::size_t pid = 0; pid < store.count(); ++pid) {
        auto& entry = store.entry(static_cast<int>(pid));
        for (std::int64_t i = 0; i < entry.value.size(); ++i) {
            const Real saved = entry.value[i];
            entry.value[i] = static_cast<Real>(static_cast<double>(saved) + eps);
            const double up = loss_fn();
            entry.value[i] = static_cast<Real>(static_cast<double>(saved) - eps);
            const double down = loss_fn();
            entry.value[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = static_cast<double>(entry.grad[i]);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

} // namespace ttrec
