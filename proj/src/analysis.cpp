#include "fluxcal/analysis.hpp"

#include "fluxcal/csv.hpp"
#include "fluxcal/errors.hpp"
#include "fluxcal/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>

namespace fluxcal {

std::string to_string(Scheme s) { return s == Scheme::RB ? "RB" : "XEB"; }

Scheme scheme_from_string(const std::string& s) {
    if (s == "RB" || s == "rb") return Scheme::RB;
    if (s == "XEB" || s == "xeb") return Scheme::XEB;
    throw InvalidArgument("scheme must be RB or XEB, got '" + s + "'");
}

DecayFit fit_decay(const std::vector<int>& ns, const std::vector<double>& fidelities) {
    if (ns.size() != fidelities.size()) throw InvalidArgument("n and fidelity columns differ in length");
    if (std::set<int>(ns.begin(), ns.end()).size() < 5) throw InvalidArgument("decay fit needs at least 5 distinct n");
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (ns[i] < 0) throw InvalidArgument("sequence lengths must be non-negative");
        if (!(fidelities[i] >= 0.0 && fidelities[i] <= 1.0)) throw InvalidArgument("fidelities must lie in [0, 1]");
    }

    const auto [lo, hi] = std::minmax_element(fidelities.begin(), fidelities.end());
    if (*hi - *lo <= 1e-12) {
        DecayFit flat;
        flat.B = std::accumulate(fidelities.begin(), fidelities.end(), 0.0) / static_cast<double>(fidelities.size());
        flat.degenerate = true;
        return flat;
    }

    using lm::Matrix;
    using lm::Vector;
    const std::size_t m = ns.size();
    lm::Problem problem;
    problem.num_residuals = m;
    problem.residuals = [&](const Vector& x) {
        Vector r(m);
        for (std::size_t i = 0; i < m; ++i) {
            r[static_cast<Eigen::Index>(i)] = x[0] * std::pow(x[1], ns[i]) + x[2] - fidelities[i];
        }
        return r;
    };
    problem.jacobian = [&](const Vector& x) {
        Matrix jac(m, 3);
        for (std::size_t i = 0; i < m; ++i) {
            const double pn = std::pow(x[1], ns[i]);
            const double dp = ns[i] == 0 ? 0.0 : ns[i] * std::pow(x[1], ns[i] - 1);
            jac.row(static_cast<Eigen::Index>(i)) << pn, x[0] * dp, 1.0;
        }
        return jac;
    };
    problem.project = [](const Vector& x) {
        Vector out = x;
        out[1] = std::clamp(out[1], 1e-9, 1.0);
        return out;
    };

    const Eigen::Map<const Vector> y(fidelities.data(), static_cast<Eigen::Index>(m));
    std::optional<lm::Result> best;
    for (double p0 : {0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995, 0.999}) {
        Matrix basis(m, 2);
        for (std::size_t i = 0; i < m; ++i) basis.row(static_cast<Eigen::Index>(i)) << std::pow(p0, ns[i]), 1.0;
        const Vector ab = basis.colPivHouseholderQr().solve(y);
        Vector x0(3);
        x0 << ab[0], p0, ab[1];
        lm::Result res;
        try {
            res = lm::minimize(problem, x0);
        } catch (const FitFailed&) {
            continue;
        }
        if (!res.x.allFinite()) continue;
        if (!best || res.cost < best->cost) best = std::move(res);
    }
    if (!best) throw FitFailed("decay fit did not converge");

    DecayFit fit;
    fit.A = best->x[0];
    fit.p = best->x[1];
    fit.B = best->x[2];
    const Matrix cov = lm::covariance(*best, m);
    fit.sigma_p = std::sqrt(std::max(cov(1, 1), 0.0));
    return fit;
}

namespace {

void check_p(const DecayFit& f, const char* name) {
    if (!(f.p > 0.0 && f.p <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in (0, 1]");
    if (!(f.sigma_p >= 0.0)) throw InvalidArgument(std::string(name) + " uncertainty must be non-negative");
}

// Shared by RB and XEB: the ratio form and its propagated uncertainty.
FidelityEstimate ratio_fidelity(const DecayFit& gate, const DecayFit& reference, int dimension, Scheme scheme) {
    if (reference.p == 0.0) throw InvalidArgument("reference depolarization must be non-zero");
    check_p(gate, "p_gate");
    check_p(reference, "reference p");
    if (dimension < 2) throw InvalidArgument("Hilbert-space dimension must be at least 2");
    const double coeff = static_cast<double>(dimension - 1) / dimension;
    const double ratio = gate.p / reference.p;
    FidelityEstimate est;
    est.scheme = scheme;
    est.dimension = dimension;
    est.fidelity = 1.0 - (1.0 - ratio) * coeff;
    est.sigma = coeff * ratio * std::hypot(gate.sigma_p / gate.p, reference.sigma_p / reference.p);
    return est;
}

}  // namespace

FidelityEstimate rb_fidelity(const DecayFit& gate, const DecayFit& ref, int dimension) {
    return ratio_fidelity(gate, ref, dimension, Scheme::RB);
}

DecayFit xeb_parallel_combine(const DecayFit& q1, const DecayFit& q2) {
    check_p(q1, "p_q1");
    check_p(q2, "p_q2");
    DecayFit out;
    out.derived = true;
    out.p = (q1.p + q2.p + 3.0 * q1.p * q2.p) / 5.0;
    const double a1 = 1.0 + 3.0 * q1.p;
    const double a2 = 1.0 + 3.0 * q2.p;
    out.sigma_p = std::hypot(a2 / 5.0 * q1.sigma_p, a1 / 5.0 * q2.sigma_p);
    return out;
}

FidelityEstimate xeb_fidelity(const DecayFit& gate, const DecayFit& sq, int dimension) {
    return ratio_fidelity(gate, sq, dimension, Scheme::XEB);
}

DecayData read_decay_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path, {"n", "fidelity"});
    DecayData data;
    for (const auto& row : table.rows) {
        data.ns.push_back(static_cast<int>(csv::parse_integer(row[0])));
        data.fidelities.push_back(csv::parse_real(row[1]));
    }
    return data;
}

std::string decay_to_csv(const DecayData& data) {
    std::string out = "n,fidelity\n";
    for (std::size_t i = 0; i < data.ns.size(); ++i) {
        out += std::to_string(data.ns[i]) + ',' + csv::format_real(data.fidelities[i]) + '\n';
    }
    return out;
}

nlohmann::json to_json(const DecayFit& fit) {
    nlohmann::json j{{"p", fit.p}, {"sigma_p", fit.sigma_p}, {"degenerate", fit.degenerate}};
    if (!fit.derived) {
        j["A"] = fit.A;
        j["B"] = fit.B;
    }
    return j;
}

nlohmann::json to_json(const FidelityEstimate& est) {
    return {{"scheme", to_string(est.scheme)}, {"D", est.dimension}, {"fidelity", est.fidelity}, {"sigma", est.sigma}};
}

}  // namespace fluxcal
