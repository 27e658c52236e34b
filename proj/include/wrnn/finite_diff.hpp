#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <concepts>
#include <string>

#include "wrnn/error.hpp"
#include "wrnn/matrix.hpp"

namespace wrnn {

/// Central-difference gradient of a scalar function of `params`.
/// `params` is perturbed in place and restored entry by entry, so `f` may
/// read it by reference.
template <typename F>
    requires std::invocable<F&> && std::convertible_to<std::invoke_result_t<F&>, double>
Matrix finite_diff_grad(F&& f, Matrix& params, double eps = 1e-5) {
    if (!(eps > 0.0)) throw DataError("finite_diff_grad: eps must be positive");
    Matrix grad(params.rows(), params.cols());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = f();
        params[i] = saved - eps;
        const double down = f();
        params[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_grad: non-finite objective at entry " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

/// |a - n| / max(|a|, |n|), zero when both are zero.
inline double relative_error(double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    return scale == 0.0 ? 0.0 : std::abs(analytic - numeric) / scale;
}

/// Worst relative error over entries where either value exceeds `floor` in
/// magnitude. A zero analytic entry against a real numeric one still counts.
inline double worst_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                   double floor = 1e-8) {
    if (analytic.size() != numeric.size()) throw DataError("worst_relative_error: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        if (std::max(std::abs(analytic[i]), std::abs(numeric[i])) <= floor) continue;
        worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    }
    return worst;
}

inline double worst_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-8) {
    require_same_shape(analytic, numeric, "worst_relative_error");
    return worst_relative_error(analytic.values(), numeric.values(), floor);
}

}  // namespace wrnn
