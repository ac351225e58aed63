#include "fluxcal/fitting.hpp"

#include "fluxcal/csv.hpp"
#include "fluxcal/errors.hpp"
#include "fluxcal/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace fluxcal {

std::string to_string(Regime r) { return r == Regime::Short ? "short" : "long"; }

Regime regime_from_string(const std::string& s) {
    if (s == "short") return Regime::Short;
    if (s == "long") return Regime::Long;
    throw InvalidArgument("regime must be 'short' or 'long', got '" + s + "'");
}

void CalibrationRun::validate() const {
    if (delays_ns.size() != compensation.size()) throw InvalidArgument("delays and compensation differ in length");
    if (!std::isfinite(v_step) || v_step == 0.0) throw InvalidArgument("v_step must be non-zero");
    for (std::size_t i = 0; i < delays_ns.size(); ++i) {
        if (!std::isfinite(delays_ns[i]) || !std::isfinite(compensation[i])) {
            throw InvalidArgument("calibration run contains non-finite values");
        }
        if (delays_ns[i] < 0.0) throw InvalidArgument("delays must be non-negative");
        if (i > 0 && !(delays_ns[i] > delays_ns[i - 1])) throw InvalidArgument("delays must be strictly increasing");
    }
}

std::string calibration_run_to_csv(const CalibrationRun& run) {
    std::string out = "t_ns,v_oft\n";
    for (std::size_t i = 0; i < run.size(); ++i) {
        out += csv::format_real(run.delays_ns[i]) + ',' + csv::format_real(run.compensation[i]) + '\n';
    }
    return out;
}

void write_calibration_run_csv(const std::filesystem::path& path, const CalibrationRun& run) {
    csv::write_text(path, calibration_run_to_csv(run));
}

CalibrationRun read_calibration_run_csv(const std::filesystem::path& path, double v_step, Regime regime) {
    const auto table = csv::read_file(path, {"t_ns", "v_oft"});
    CalibrationRun run;
    run.v_step = v_step;
    run.regime = regime;
    for (const auto& row : table.rows) {
        run.delays_ns.push_back(csv::parse_real(row[0]));
        run.compensation.push_back(csv::parse_real(row[1]));
    }
    run.validate();
    return run;
}

namespace {

using lm::Matrix;
using lm::Vector;

std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = std::sqrt(lo * hi);
        return out;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) out[i] = std::exp(a + (b - a) * i / (count - 1));
    return out;
}

void combinations(int n, int k, int start, std::vector<int>& current, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(current.size()) == k) {
        out.push_back(current);
        return;
    }
    for (int i = start; i < n; ++i) {
        current.push_back(i);
        combinations(n, k, i + 1, current, out);
        current.pop_back();
    }
}

double min_spacing(const std::vector<double>& t) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < t.size(); ++i) m = std::min(m, t[i] - t[i - 1]);
    return m;
}

struct Candidate {
    std::vector<double> params;
    double cost = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

/// Lowest cost first; ties broken lexicographically so the choice is order independent.
bool better(const Candidate& a, const Candidate& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.params < b.params;
}

// Sum of p_i exp(-t/tau_i) with parameters laid out as [p_1..p_n, log tau_1..log tau_n].
struct MultiExp {
    const std::vector<double>& t;
    const std::vector<double>& y;
    int n;

    Vector residuals(const Vector& x) const {
        Vector r(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += x[j] * std::exp(-t[i] / std::exp(x[n + j]));
            r[static_cast<Eigen::Index>(i)] = s - y[i];
        }
        return r;
    }

    Matrix jacobian(const Vector& x) const {
        Matrix jac(t.size(), 2 * n);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            for (int j = 0; j < n; ++j) {
                const double tau = std::exp(x[n + j]);
                const double e = std::exp(-t[i] / tau);
                jac(row, j) = e;
                jac(row, n + j) = x[j] * e * t[i] / tau;
            }
        }
        return jac;
    }
};

}  // namespace

FitReport<ShortTimeModel> fit_short_time(const CalibrationRun& run, int n_exp, const FitOptions& options) {
    run.validate();
    if (run.regime != Regime::Short) throw InvalidArgument("fit_short_time needs a short-regime run");
    if (n_exp < 1 || n_exp > 4) throw InvalidArgument("n_exp must be between 1 and 4");
    if (run.size() < static_cast<std::size_t>(4 * n_exp)) {
        throw InvalidArgument("need at least 4 points per exponential term");
    }

    const auto& t = run.delays_ns;
    std::vector<double> y(run.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = -run.compensation[i] / run.v_step;

    const double span = t.back();
    const double tau_lo = min_spacing(t);
    const double tau_hi = 10.0 * span;
    if (!(span > tau_lo)) throw InvalidArgument("delays span too little time to fit");

    const auto seeds = log_spaced(tau_lo, span, 10);

    FitReport<ShortTimeModel> report{ShortTimeModel({{0.0, seeds.front()}}), 0.0};
    const double y_max = std::accumulate(y.begin(), y.end(), 0.0, [](double m, double v) { return std::max(m, std::abs(v)); });
    if (y_max == 0.0) {
        std::vector<ExpTerm> zero;
        for (int j = 0; j < n_exp; ++j) zero.push_back({0.0, seeds[static_cast<std::size_t>(j)]});
        report.model = ShortTimeModel(std::move(zero));
        report.degenerate = true;
        return report;
    }

    // Rank seed combinations by the cost of their linear amplitude solve, then refine the best.
    std::vector<std::vector<int>> combos;
    std::vector<int> scratch;
    combinations(static_cast<int>(seeds.size()), n_exp, 0, scratch, combos);

    struct Seeded {
        double cost;
        Vector x;
    };
    std::vector<Seeded> seeded;
    const Eigen::Map<const Vector> y_vec(y.data(), static_cast<Eigen::Index>(y.size()));
    for (const auto& combo : combos) {
        Matrix basis(t.size(), n_exp);
        for (std::size_t i = 0; i < t.size(); ++i) {
            for (int j = 0; j < n_exp; ++j) {
                basis(static_cast<Eigen::Index>(i), j) = std::exp(-t[i] / seeds[static_cast<std::size_t>(combo[j])]);
            }
        }
        const Vector p = basis.colPivHouseholderQr().solve(y_vec);
        Vector x(2 * n_exp);
        for (int j = 0; j < n_exp; ++j) {
            x[j] = std::clamp(p[j], -0.4999, 0.4999);
            x[n_exp + j] = std::log(seeds[static_cast<std::size_t>(combo[j])]);
        }
        seeded.push_back({(basis * x.head(n_exp) - y_vec).squaredNorm(), std::move(x)});
    }
    std::stable_sort(seeded.begin(), seeded.end(), [](const Seeded& a, const Seeded& b) { return a.cost < b.cost; });
    const std::size_t refine = std::min<std::size_t>(seeded.size(), 12);

    const MultiExp f{t, y, n_exp};
    lm::Problem problem;
    problem.num_residuals = t.size();
    problem.residuals = [&](const Vector& x) { return f.residuals(x); };
    problem.jacobian = [&](const Vector& x) { return f.jacobian(x); };
    const double log_lo = std::log(tau_lo), log_hi = std::log(tau_hi);
    problem.project = [&](const Vector& x) {
        Vector out = x;
        for (int j = 0; j < n_exp; ++j) {
            out[j] = std::clamp(out[j], -0.4999, 0.4999);
            out[n_exp + j] = std::clamp(out[n_exp + j], log_lo, log_hi);
        }
        return out;
    };
    lm::Options lm_options;
    lm_options.max_iterations = options.max_iterations;

    std::vector<Candidate> candidates;
    for (std::size_t s = 0; s < refine; ++s) {
        lm::Result res;
        try {
            res = lm::minimize(problem, seeded[s].x, lm_options);
        } catch (const FitFailed&) {
            continue;
        }
        if (!res.x.allFinite() || !std::isfinite(res.cost)) continue;
        // Canonical order: ascending tau.
        std::vector<std::pair<double, double>> terms;
        for (int j = 0; j < n_exp; ++j) terms.emplace_back(std::exp(res.x[n_exp + j]), res.x[j]);
        std::sort(terms.begin(), terms.end());
        Candidate c;
        for (const auto& [tau, p] : terms) {
            c.params.push_back(tau);
            c.params.push_back(p);
        }
        c.cost = res.cost;
        c.iterations = res.iterations;
        c.trace = std::move(res.cost_trace);
        candidates.push_back(std::move(c));
    }
    if (candidates.empty()) throw FitFailed("no multi-start candidate converged");

    const auto best = *std::min_element(candidates.begin(), candidates.end(), better);
    std::vector<ExpTerm> terms;
    double p_max = 0.0;
    for (int j = 0; j < n_exp; ++j) {
        terms.push_back({best.params[2 * j + 1], best.params[2 * j]});
        p_max = std::max(p_max, std::abs(terms.back().p));
    }
    for (int j = 0; j < n_exp; ++j) {
        if (std::abs(terms[j].p) < 1e-3 * p_max) {
            throw DegenerateFit("term with tau = " + csv::format_real(terms[j].tau_ns) +
                                " ns carries no weight; too many exponentials");
        }
        if (j > 0 && terms[j].tau_ns < 1.05 * terms[j - 1].tau_ns) {
            throw DegenerateFit("relaxation times collapsed within 5%; too many exponentials");
        }
    }

    report.model = ShortTimeModel(std::move(terms));
    report.rms = std::sqrt(best.cost / static_cast<double>(t.size()));
    report.flagged = report.rms > options.rms_threshold;
    report.iterations = best.iterations;
    report.starts = candidates.size();
    report.cost_trace = best.trace;
    return report;
}

FitReport<LongTimeModel> fit_long_time(const CalibrationRun& run, const FitOptions& options) {
    run.validate();
    if (run.regime != Regime::Long) throw InvalidArgument("fit_long_time needs a long-regime run");
    if (run.size() < 6) throw InvalidArgument("need at least 6 points for a long-time fit");

    std::vector<double> t(run.size()), y(run.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = run.delays_ns[i] / kNsPerUs;
        y[i] = 1.0 - run.compensation[i] / run.v_step;
    }
    const double span = t.back();
    const double tau_lo = min_spacing(t);
    const double tau_hi = 10.0 * span;
    if (options.tau_guess_us) {
        if (!(*options.tau_guess_us > 0.0)) throw InvalidArgument("tau guess must be positive");
        if (t.back() - t.front() < 3.0 * *options.tau_guess_us) {
            throw InvalidArgument("long-time delays must span at least 3x the tau guess");
        }
    }

    const auto [y_min, y_max] = std::minmax_element(y.begin(), y.end());
    const double y_scale = std::max(1.0, std::max(std::abs(*y_min), std::abs(*y_max)));
    if (*y_max - *y_min <= 1e-12 * y_scale) {
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        FitReport<LongTimeModel> report{LongTimeModel(mean, mean, span), 0.0};
        report.degenerate = true;
        return report;
    }

    auto seeds = log_spaced(tau_lo, span, 8);
    if (options.tau_guess_us) seeds.push_back(*options.tau_guess_us);

    lm::Problem problem;
    problem.num_residuals = t.size();
    problem.residuals = [&](const Vector& x) {
        Vector r(t.size());
        const double tau = std::exp(x[2]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            r[static_cast<Eigen::Index>(i)] = (x[1] - x[0]) * std::exp(-t[i] / tau) + x[0] - y[i];
        }
        return r;
    };
    problem.jacobian = [&](const Vector& x) {
        Matrix jac(t.size(), 3);
        const double tau = std::exp(x[2]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double e = std::exp(-t[i] / tau);
            jac(row, 0) = 1.0 - e;
            jac(row, 1) = e;
            jac(row, 2) = (x[1] - x[0]) * e * t[i] / tau;
        }
        return jac;
    };
    const double log_lo = std::log(tau_lo), log_hi = std::log(tau_hi);
    problem.project = [&](const Vector& x) {
        Vector out = x;
        out[2] = std::clamp(out[2], log_lo, log_hi);
        return out;
    };
    lm::Options lm_options;
    lm_options.max_iterations = options.max_iterations;

    const Eigen::Map<const Vector> y_vec(y.data(), static_cast<Eigen::Index>(y.size()));
    std::vector<Candidate> candidates;
    for (double tau : seeds) {
        Matrix basis(t.size(), 2);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double e = std::exp(-t[i] / tau);
            basis(static_cast<Eigen::Index>(i), 0) = 1.0 - e;
            basis(static_cast<Eigen::Index>(i), 1) = e;
        }
        const Vector ab = basis.colPivHouseholderQr().solve(y_vec);
        Vector x0(3);
        x0 << ab[0], ab[1], std::log(tau);
        lm::Result res;
        try {
            res = lm::minimize(problem, x0, lm_options);
        } catch (const FitFailed&) {
            continue;
        }
        if (!res.x.allFinite() || !std::isfinite(res.cost)) continue;
        candidates.push_back({{res.x[0], res.x[1], std::exp(res.x[2])}, res.cost, res.iterations, res.cost_trace});
    }
    if (candidates.empty()) throw FitFailed("no long-time start converged");
    const auto best = *std::min_element(candidates.begin(), candidates.end(), better);

    std::optional<LongTimeModel> model;
    try {
        model.emplace(best.params[0], best.params[1], best.params[2]);
    } catch (const InvalidArgument& e) {
        throw FitFailed(std::string("long-time fit diverged: ") + e.what());
    }
    FitReport<LongTimeModel> report{*model, std::sqrt(best.cost / static_cast<double>(t.size()))};
    report.flagged = report.rms > options.rms_threshold;
    report.iterations = best.iterations;
    report.starts = candidates.size();
    report.cost_trace = best.trace;
    return report;
}

// --- anti-crossing -----------------------------------------------------------

void AnticrossingData::validate() const {
    std::size_t lower = 0, upper = 0;
    for (const auto& pt : points) {
        if (!std::isfinite(pt.zpa_c) || !std::isfinite(pt.f_ghz)) {
            throw InvalidArgument("anti-crossing data contains non-finite values");
        }
        (pt.branch == Branch::Lower ? lower : upper) += 1;
    }
    if (lower < 8 || upper < 8) throw InvalidArgument("anti-crossing fit needs at least 8 points per branch");
}

AnticrossingData read_anticrossing_csv(const std::filesystem::path& path) {
    const auto table = csv::read_file(path, {"zpa_c", "f_ghz", "branch"});
    AnticrossingData data;
    for (const auto& row : table.rows) {
        Branch b;
        if (row[2] == "lower") b = Branch::Lower;
        else if (row[2] == "upper") b = Branch::Upper;
        else throw IoError("branch must be 'lower' or 'upper', got '" + row[2] + "'");
        data.points.push_back({csv::parse_real(row[0]), csv::parse_real(row[1]), b});
    }
    return data;
}

std::string anticrossing_to_csv(const AnticrossingData& data) {
    std::string out = "zpa_c,f_ghz,branch\n";
    for (const auto& pt : data.points) {
        out += csv::format_real(pt.zpa_c) + ',' + csv::format_real(pt.f_ghz) + ',' +
               (pt.branch == Branch::Lower ? "lower" : "upper") + '\n';
    }
    return out;
}

namespace {

struct BranchPair {
    double z, lo, hi;
};

// Points sharing a zpa_c value, or the upper branch interpolated onto the lower one.
std::vector<BranchPair> pair_branches(const AnticrossingData& data) {
    std::map<double, std::vector<double>> by_z;
    for (const auto& pt : data.points) by_z[pt.zpa_c].push_back(pt.f_ghz);
    std::vector<BranchPair> pairs;
    for (const auto& [z, fs] : by_z) {
        if (fs.size() == 2) pairs.push_back({z, std::min(fs[0], fs[1]), std::max(fs[0], fs[1])});
    }
    if (pairs.size() >= 3) return pairs;

    pairs.clear();
    std::vector<std::pair<double, double>> upper;
    for (const auto& pt : data.points) {
        if (pt.branch == Branch::Upper) upper.emplace_back(pt.zpa_c, pt.f_ghz);
    }
    std::sort(upper.begin(), upper.end());
    for (const auto& pt : data.points) {
        if (pt.branch != Branch::Lower) continue;
        const auto it = std::lower_bound(upper.begin(), upper.end(), std::make_pair(pt.zpa_c, -1e300));
        if (it == upper.begin() || it == upper.end()) continue;
        const auto& [z1, f1] = *(it - 1);
        const auto& [z2, f2] = *it;
        const double f = f1 + (f2 - f1) * (pt.zpa_c - z1) / (z2 - z1);
        pairs.push_back({pt.zpa_c, std::min(pt.f_ghz, f), std::max(pt.f_ghz, f)});
    }
    return pairs;
}

}  // namespace

AnticrossingFit fit_anticrossing(const AnticrossingData& data, double k_q_estimate, const AnticrossingOptions& options) {
    data.validate();
    if (!std::isfinite(k_q_estimate) || k_q_estimate == 0.0) throw InvalidArgument("k_q estimate must be non-zero");

    // Closed-form start: per zpa_c the two branch frequencies are the roots of
    // f^2 - (f_q + f_c) f + f_q f_c - g^2, so their sum is linear and their
    // product quadratic in zpa_c.
    const auto pairs = pair_branches(data);
    if (pairs.size() < 3) throw FitFailed("branches cannot be paired: not enough overlap in zpa_c");
    Matrix sum_basis(pairs.size(), 2), prod_basis(pairs.size(), 3);
    Vector sums(pairs.size()), prods(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double z = pairs[i].z;
        sum_basis.row(row) << 1.0, z;
        prod_basis.row(row) << 1.0, z, z * z;
        sums[row] = pairs[i].lo + pairs[i].hi;
        prods[row] = pairs[i].lo * pairs[i].hi;
    }
    const Vector s = sum_basis.colPivHouseholderQr().solve(sums);
    const Vector q = prod_basis.colPivHouseholderQr().solve(prods);
    const double disc = std::max(0.0, s[1] * s[1] - 4.0 * q[2]);
    double slope_1 = 0.5 * (s[1] - std::sqrt(disc));
    double slope_2 = 0.5 * (s[1] + std::sqrt(disc));
    if (std::abs(slope_1) > std::abs(slope_2)) std::swap(slope_1, slope_2);
    if (std::abs(slope_2 - slope_1) < 1e-12 * std::max(1.0, std::abs(s[1]))) {
        throw FitFailed("branches inseparable: qubit and coupler slopes coincide");
    }
    const double a0 = (q[1] - slope_1 * s[0]) / (slope_2 - slope_1);
    const double c0 = s[0] - a0;

    const std::size_t m = data.points.size();
    lm::Problem problem;
    problem.num_residuals = m;
    // x = [a, b, c, e, G]: f_q = a + b z, f_c = c + e z, product target G = g^2.
    problem.residuals = [&](const Vector& x) {
        Vector r(m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& pt = data.points[i];
            r[static_cast<Eigen::Index>(i)] =
                (pt.f_ghz - x[0] - x[1] * pt.zpa_c) * (pt.f_ghz - x[2] - x[3] * pt.zpa_c) - x[4];
        }
        return r;
    };
    problem.jacobian = [&](const Vector& x) {
        Matrix jac(m, 5);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& pt = data.points[i];
            const double dq = pt.f_ghz - x[0] - x[1] * pt.zpa_c;
            const double dc = pt.f_ghz - x[2] - x[3] * pt.zpa_c;
            jac.row(static_cast<Eigen::Index>(i)) << -dc, -dc * pt.zpa_c, -dq, -dq * pt.zpa_c, -1.0;
        }
        return jac;
    };
    Vector x0(5);
    x0 << a0, slope_1, c0, slope_2, a0 * c0 - q[0];
    const auto res = lm::minimize(problem, x0);
    if (!res.x.allFinite()) throw FitFailed("anti-crossing fit produced non-finite parameters");

    Vector x = res.x;
    if (std::abs(x[1]) > std::abs(x[3])) {
        std::swap(x[0], x[2]);
        std::swap(x[1], x[3]);
    }

    AnticrossingFit fit;
    const double g_sq = x[4];
    fit.residual_std = std::sqrt(res.cost / static_cast<double>(m));
    fit.g_mhz = std::sqrt(std::max(g_sq, 0.0)) * 1e3;
    fit.degenerate = !(g_sq > options.min_g_ghz * options.min_g_ghz);
    if (!fit.degenerate && fit.residual_std > options.max_relative_std * g_sq) {
        throw FitFailed("anti-crossing residual spread " + csv::format_real(fit.residual_std) +
                        " GHz^2 exceeds threshold");
    }
    fit.coupler_map = {x[3], x[2]};
    fit.crosstalk.k_q = k_q_estimate;
    fit.crosstalk.b_q = x[0];
    fit.crosstalk.k_eff = x[1];
    fit.crosstalk.b_eff = x[0];
    fit.crosstalk.coeff_zxtalk = x[1] / k_q_estimate;
    fit.cost_trace = res.cost_trace;
    return fit;
}

double estimate_kq(const std::vector<std::pair<double, double>>& spectroscopy, double coeff_zxtalk) {
    if (spectroscopy.size() < 2) throw InvalidArgument("need at least two spectroscopy points");
    if (coeff_zxtalk == 0.0 || !std::isfinite(coeff_zxtalk)) throw InvalidArgument("crosstalk coefficient must be non-zero");
    const auto [lo, hi] = std::minmax_element(spectroscopy.begin(), spectroscopy.end(),
                                              [](const auto& a, const auto& b) { return a.first < b.first; });
    const double span = hi->first - lo->first;
    if (!(span > 0.0)) throw InvalidArgument("spectroscopy points have zero zpa span");
    return (hi->second - lo->second) / (coeff_zxtalk * span);
}

}  // namespace fluxcal
