#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense least-squares
// problems. Only steps that lower the sum of squares are accepted, so the
// recorded cost trace is non-increasing.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

namespace fluxcal::lm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Problem {
    std::size_t num_residuals = 0;
    std::function<Vector(const Vector&)> residuals;
    /// Optional analytic Jacobian (num_residuals x num_params); central differences otherwise.
    std::function<Matrix(const Vector&)> jacobian;
    /// Optional map applied to every trial point, e.g. clamping to bounds.
    std::function<Vector(const Vector&)> project;
};

struct Options {
    int max_iterations = 300;
    double initial_lambda = 1e-3;
    double cost_tolerance = 1e-14;  ///< relative decrease below which we stop
    double step_tolerance = 1e-12;  ///< relative step below which we stop
    double absolute_cost = 1e-30;   ///< stop once the cost is effectively zero
};

struct Result {
    Vector x;
    double cost = 0.0;  ///< sum of squared residuals
    int iterations = 0;
    bool converged = false;
    std::vector<double> cost_trace;  ///< cost after each accepted step, starting at x0
    Matrix jtj;                      ///< J^T J at the solution
};

Result minimize(const Problem& problem, const Vector& x0, const Options& options = {});

Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x);

/// Parameter covariance as scipy's curve_fit reports it: (J^T J)^-1 * cost / (m - n).
Matrix covariance(const Result& result, std::size_t num_residuals);

}  // namespace fluxcal::lm
