#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dac/matrix.hpp"

namespace dac {

/// Central-difference gradient of a scalar function of several matrices,
/// evaluated entry by entry: (f(x+h) - f(x-h)) / (2h).
using ScalarFn = std::function<double(const std::vector<Matrix>&)>;

std::vector<Matrix> finite_difference(const ScalarFn& f,
                                      std::vector<Matrix> points,
                                      double step = 1e-6);

struct GradCheckReport {
    double max_abs_error = 0.0;
    double max_rel_error = 0.0; // |a-n| / max(1, |a|, |n|)
    std::string worst_entry;    // "matrix 2 (1,3)"
    bool passed = false;
};

/// Compares analytic gradients against central differences. The relative
/// error uses max(1, |analytic|, |numeric|) as denominator so tiny entries
/// are judged on absolute terms.
GradCheckReport compare_gradients(const std::vector<Matrix>& analytic,
                                  const std::vector<Matrix>& numeric,
                                  double tolerance);

struct LossGradCheck {
    std::string name;
    GradCheckReport report;
};

/// Checks every loss and composite objective against central differences
/// w.r.t. all model parameters on a small random batch. Inputs are steered
/// away from non-differentiable points (|cosine| kinks, ReLU boundaries,
/// worst-pair ties) so the comparison is meaningful.
std::vector<LossGradCheck> run_gradient_suite(std::uint64_t seed,
                                              double tolerance,
                                              double step = 1e-6);

} // namespace dac
