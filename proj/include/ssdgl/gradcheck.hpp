#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssdgl/ops.hpp"
#include "ssdgl/tensor.hpp"

namespace ssdgl {

/// Scalar-valued tensor program: the argument may or may not be recording;
/// the program must not capture a tape of its own.
using TensorProgram = std::function<Tensor<double>(const Tensor<double>&)>;

namespace detail {

inline double eval_at(const TensorProgram& fn, const Tensor<double>& point, long long coord,
                      double delta) {
    Tensor<double> p = point.clone();
    p.raw()[coord] += delta;
    const double v = fn(p).item();
    if (!std::isfinite(v))
        throw NumericError("grad_check: non-finite evaluation while perturbing coordinate " +
                           std::to_string(coord) + " by " + std::to_string(delta));
    return v;
}

}  // namespace detail

/// Central finite-difference check of reverse-mode gradients at `point`,
/// restricted to `coords` (empty = every coordinate). Returns
/// max_i |analytic_i - central_i| / max(1, |analytic_i|).
inline double grad_check_coords(const TensorProgram& fn, const Tensor<double>& point, double step,
                                std::vector<long long> coords) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");
    Tape<double> tape;
    Tensor<double> x = tape.watch(point.clone());
    Tensor<double> loss = fn(x);
    if (loss.size() != 1) throw ShapeError("grad_check: program must be scalar-valued");
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite value at the base point");
    Gradients<double> grads = tape.backward(loss);
    const Tensor<double>& analytic = grads.at(x);

    if (coords.empty()) {
        coords.resize(std::size_t(point.size()));
        for (long long i = 0; i < point.size(); ++i) coords[std::size_t(i)] = i;
    }
    auto central_at = [&](long long c, double h) {
        return (detail::eval_at(fn, point, c, h) - detail::eval_at(fn, point, c, -h)) / (2.0 * h);
    };
    double worst = 0.0;
    for (long long c : coords) {
        const double a = analytic.data()[c];
        if (!std::isfinite(a))
            throw NumericError("grad_check: non-finite analytic gradient at coordinate " + std::to_string(c));
        double central = central_at(c, step);
        double rel = std::fabs(a - central) / std::max(1.0, std::fabs(a));
        if (rel > 1e-6) {
            // Distinguish a wrong gradient from a kink (relu / max tie)
            // inside the difference window: shrink the step only when the
            // difference quotients disagree among themselves. A wrong
            // analytic gradient leaves them mutually consistent, so it can
            // never trigger refinement.
            const double finer = central_at(c, step / 8.0);
            if (std::fabs(central - finer) > 1e-6 * std::max(1.0, std::fabs(finer))) {
                central = central_at(c, step / 64.0);
                rel = std::fabs(a - central) / std::max(1.0, std::fabs(a));
            }
        }
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Full check over every coordinate of `point`.
inline double grad_check(const TensorProgram& fn, const Tensor<double>& point, double step) {
    return grad_check_coords(fn, point, step, {});
}

}  // namespace ssdgl
