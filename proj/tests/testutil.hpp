#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nang/tensor.hpp"

namespace testutil {

// Central finite differences against the tape's analytic gradients.
//
// `loss_fn` must rebuild the computation from the current parameter values on
// every call (and must be deterministic across calls — re-seed any rng it
// uses). Returns the maximum relative error over all parameter elements,
// with rel err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
inline double max_grad_rel_err(const std::function<nang::Tensor()>& loss_fn,
                               std::vector<nang::Tensor> params, double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    nang::Tensor loss = loss_fn();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& values = params[pi].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            double up = loss_fn().item();
            values[i] = saved - h;
            double down = loss_fn().item();
            values[i] = saved;
            double numeric = (up - down) / (2.0 * h);
            double a = analytic[pi][i];
            double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            if (err > worst) worst = err;
        }
    }
    return worst;
}

} // namespace testutil
