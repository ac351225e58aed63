#include "fluxcal/levenberg_marquardt.hpp"

#include "fluxcal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fluxcal::lm {

Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
    const Vector f0 = f(x);
    Matrix jac(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return jac;
}

Result minimize(const Problem& problem, const Vector& x0, const Options& options) {
    auto project = [&](const Vector& x) { return problem.project ? problem.project(x) : x; };
    auto jacobian = [&](const Vector& x) {
        return problem.jacobian ? problem.jacobian(x) : numeric_jacobian(problem.residuals, x);
    };

    Result result;
    result.x = project(x0);
    Vector r = problem.residuals(result.x);
    if (static_cast<std::size_t>(r.size()) != problem.num_residuals) {
        throw InvalidArgument("residual function returned the wrong number of residuals");
    }
    result.cost = r.squaredNorm();
    if (!std::isfinite(result.cost)) throw FitFailed("non-finite cost at the starting point");
    result.cost_trace.push_back(result.cost);

    double lambda = options.initial_lambda;
    Matrix jac = jacobian(result.x);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        if (result.cost <= options.absolute_cost) {
            result.converged = true;
            break;
        }
        const Matrix jtj = jac.transpose() * jac;
        const Vector grad = jac.transpose() * r;
        Vector diag = jtj.diagonal();
        for (Eigen::Index i = 0; i < diag.size(); ++i) diag[i] = std::max(diag[i], 1e-30);

        bool accepted = false;
        Vector x_new;
        Vector r_new;
        double cost_new = 0.0;
        while (lambda < 1e16) {
            Matrix damped = jtj;
            damped.diagonal() += lambda * diag;
            const Vector step = damped.ldlt().solve(-grad);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            x_new = project(result.x + step);
            r_new = problem.residuals(x_new);
            cost_new = r_new.squaredNorm();
            if (std::isfinite(cost_new) && cost_new < result.cost) {
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No descent direction left at any damping: a local minimum to working precision.
            result.converged = true;
            break;
        }

        const double rel_decrease = (result.cost - cost_new) / std::max(result.cost, 1e-300);
        const double rel_step = (x_new - result.x).norm() / std::max(result.x.norm(), 1e-12);
        result.x = x_new;
        r = r_new;
        result.cost = cost_new;
        result.cost_trace.push_back(cost_new);
        lambda = std::max(lambda / 10.0, 1e-12);
        jac = jacobian(result.x);

        if (rel_decrease < options.cost_tolerance || rel_step < options.step_tolerance) {
            result.converged = true;
            break;
        }
    }
    result.jtj = jac.transpose() * jac;
    return result;
}

Matrix covariance(const Result& result, std::size_t num_residuals) {
    const auto n = static_cast<std::size_t>(result.x.size());
    if (num_residuals <= n) {
        return Matrix::Constant(n, n, std::numeric_limits<double>::infinity());
    }
    const double s2 = result.cost / static_cast<double>(num_residuals - n);
    const Matrix inv = result.jtj.completeOrthogonalDecomposition().pseudoInverse();
    return inv * s2;
}

}  // namespace fluxcal::lm
