#include "fluxcal/simulator.hpp"

#include "fluxcal/errors.hpp"
#include "fluxcal/predistort.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <numbers>
#include <thread>

namespace fluxcal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Golden-section maximization of a unimodal function on [lo, hi].
template <class F>
double golden_maximize(F&& f, double lo, double hi, double tol) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

// --- coupler map -------------------------------------------------------------

CouplerMap CouplerMap::transmon(double f_max_ghz, double asymmetry, double flux_idle, double flux_per_zpa) {
    if (!(f_max_ghz > 0.0)) throw InvalidArgument("coupler f_max must be positive");
    if (!(asymmetry >= 0.0 && asymmetry < 1.0)) throw InvalidArgument("junction asymmetry must lie in [0, 1)");
    if (!std::isfinite(flux_idle) || !std::isfinite(flux_per_zpa)) throw InvalidArgument("flux parameters must be finite");
    CouplerMap m;
    m.f_max_ = f_max_ghz;
    m.asymmetry_ = asymmetry;
    m.flux_idle_ = flux_idle;
    m.flux_per_zpa_ = flux_per_zpa;
    return m;
}

CouplerMap CouplerMap::polynomial(std::vector<double> coefficients) {
    if (coefficients.empty()) throw InvalidArgument("polynomial coupler map needs coefficients");
    for (double c : coefficients) {
        if (!std::isfinite(c)) throw InvalidArgument("polynomial coefficients must be finite");
    }
    CouplerMap m;
    m.coefficients_ = std::move(coefficients);
    return m;
}

double CouplerMap::frequency(double zpa) const {
    if (is_polynomial()) {
        double f = 0.0;
        for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) f = f * zpa + *it;
        return f;
    }
    const double x = std::numbers::pi * (flux_idle_ + flux_per_zpa_ * zpa);
    const double c = std::cos(x), s = std::sin(x);
    // sqrt|cos| (1 + d^2 tan^2)^(1/4) == (cos^2 + d^2 sin^2)^(1/4)
    return f_max_ * std::pow(c * c + asymmetry_ * asymmetry_ * s * s, 0.25);
}

double CouplerMap::flux_for_frequency(double f_ghz) const {
    if (is_polynomial()) throw InvalidArgument("flux inversion needs the transmon map");
    const CouplerMap unit = with_flux(0.0, 1.0);
    double lo = 0.0, hi = 0.5;
    if (!(f_ghz <= unit.frequency(lo) && f_ghz >= unit.frequency(hi))) {
        throw InvalidArgument("frequency outside the tunable range of the coupler");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (unit.frequency(mid) > f_ghz ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

CouplerMap CouplerMap::with_flux(double flux_idle, double flux_per_zpa) const {
    return transmon(f_max_, asymmetry_, flux_idle, flux_per_zpa);
}

void SystemParams::validate(double zpa_lo, double zpa_hi) const {
    if (!(omega_q_ghz > 0.0)) throw InvalidArgument("qubit frequency must be positive");
    if (!(g_mhz > 0.0)) throw InvalidArgument("coupling strength must be positive");
    if (!std::isfinite(coeff_zxtalk) || !std::isfinite(k_q_ghz_per_zpa)) throw InvalidArgument("crosstalk must be finite");
    constexpr int kSamples = 200;
    int sign = 0;
    double prev = coupler.frequency(zpa_lo);
    if (!(prev > 0.0)) throw InvalidArgument("coupler frequency must be positive");
    for (int i = 1; i <= kSamples; ++i) {
        const double f = coupler.frequency(zpa_lo + (zpa_hi - zpa_lo) * i / kSamples);
        if (!(f > 0.0)) throw InvalidArgument("coupler frequency must be positive");
        const int s = f > prev ? 1 : (f < prev ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) {
            throw InvalidArgument("coupler map is not monotone over the operating zpa range");
        }
        sign = s;
        prev = f;
    }
}

// --- dressed states ------------------------------------------------------------

DressedPair dressed_energies(double omega_q_ghz, double omega_c_ghz, double g_mhz) {
    if (!(g_mhz > 0.0)) throw InvalidArgument("coupling strength must be positive");
    const double g = g_mhz * 1e-3;
    const double delta = std::hypot(omega_q_ghz - omega_c_ghz, 2.0 * g);
    // Mixing angle from atan2 stays accurate when g is tiny on either side of resonance.
    const double theta = 0.5 * std::atan2(2.0 * g, omega_q_ghz - omega_c_ghz);
    DressedPair d;
    d.omega_minus = 0.5 * (omega_q_ghz + omega_c_ghz - delta);
    d.omega_plus = 0.5 * (omega_q_ghz + omega_c_ghz + delta);
    d.plus = {std::cos(theta), std::sin(theta)};
    d.minus = {-std::sin(theta), std::cos(theta)};
    return d;
}

EffectiveRabi effective_rabi(double omega_q_ghz, double omega_c_ghz, double g_mhz, double rabi_mhz) {
    const auto d = dressed_energies(omega_q_ghz, omega_c_ghz, g_mhz);
    // <00|H_d|phi> = -Omega/2 <10|phi>; the rate is -Omega <10|phi>.
    return {-rabi_mhz * d.minus[0], -rabi_mhz * d.plus[0]};
}

RwaCheck check_rwa(double omega_minus_ghz, double omega_plus_ghz, double omega_plus_rabi_mhz, double margin_factor) {
    RwaCheck check;
    check.margin_factor = margin_factor;
    const double half_rabi_ghz = 0.5 * std::abs(omega_plus_rabi_mhz) * 1e-3;
    const double splitting = omega_plus_ghz - omega_minus_ghz;
    if (half_rabi_ghz == 0.0) {
        check.ratio = 0.0;
        check.valid = true;
        return check;
    }
    check.ratio = splitting > 0.0 ? half_rabi_ghz / splitting : std::numeric_limits<double>::infinity();
    check.valid = check.ratio <= margin_factor;
    return check;
}

double pi_pulse_rabi_mhz(double t_pi_ns) {
    if (!(t_pi_ns > 0.0)) throw InvalidArgument("pulse length must be positive");
    return 1e3 / (2.0 * t_pi_ns);
}

// --- drive and evolution -------------------------------------------------------

double DriveParams::envelope(double t_ns) const noexcept {
    const double half = 0.5 * t_pi_ns;
    const double x = t_ns - center_ns;
    if (std::abs(x) > half) return 0.0;
    const double sigma = sigma_fraction * t_pi_ns;
    return std::exp(-x * x / (2.0 * sigma * sigma));
}

double DriveParams::envelope_area() const noexcept {
    const double sigma = sigma_fraction * t_pi_ns;
    return sigma * std::sqrt(kTwoPi) * std::erf(0.5 * t_pi_ns / (sigma * std::numbers::sqrt2));
}

EvolutionResult evolve_excitation(const SystemParams& params, const DriveParams& drive, const Waveform& coupler_zpa,
                                  double zpa_offset, const EvolutionOptions& options) {
    if (!(drive.t_pi_ns > 0.0) || !(drive.sigma_fraction > 0.0)) throw InvalidArgument("invalid drive pulse");
    if (!(options.max_step_ns > 0.0)) throw InvalidArgument("integration step must be positive");
    const double start = drive.center_ns - 0.5 * drive.t_pi_ns;
    const double stop = drive.center_ns + 0.5 * drive.t_pi_ns;
    if (start < -1e-9) throw InvalidArgument("drive window starts before the zpa trace");
    if (stop > coupler_zpa.time_at(coupler_zpa.size() - 1) + coupler_zpa.dt() + 1e-9) {
        throw InvalidArgument("zpa trace does not cover the drive window");
    }

    const auto steps = static_cast<int>(std::ceil(drive.t_pi_ns / options.max_step_ns - 1e-9));
    const double h = drive.t_pi_ns / steps;
    const double g = params.g_ghz();
    const double rabi_ghz = drive.rabi_mhz * 1e-3;

    Eigen::Vector3cd psi(1.0, 0.0, 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    Eigen::Matrix3d H;
    for (int k = 0; k < steps; ++k) {
        const double t = start + (k + 0.5) * h;
        const double zpa = coupler_zpa.value_at(t) + zpa_offset;
        const double half_rabi = 0.5 * rabi_ghz * drive.envelope(t);
        H << 0.0, -half_rabi, 0.0,
             -half_rabi, params.qubit_frequency(zpa) - drive.omega_d_ghz, g,
             0.0, g, params.coupler.frequency(zpa) - drive.omega_d_ghz;
        solver.compute(H);
        if (solver.info() != Eigen::Success) throw IntegrationError("eigen-decomposition failed during propagation");
        const auto& V = solver.eigenvectors();
        const auto& lambda = solver.eigenvalues();
        Eigen::Vector3cd c = V.transpose().cast<std::complex<double>>() * psi;
        for (int j = 0; j < 3; ++j) c[j] *= std::polar(1.0, -kTwoPi * lambda[j] * h);
        psi = V.cast<std::complex<double>>() * c;
    }

    EvolutionResult out;
    for (int j = 0; j < 3; ++j) out.populations[static_cast<std::size_t>(j)] = std::norm(psi[j]);
    out.p1 = out.populations[1];
    out.norm_error = std::abs(psi.squaredNorm() - 1.0);
    if (!(out.norm_error <= options.norm_tolerance)) {
        throw IntegrationError("state norm drifted by " + std::to_string(out.norm_error));
    }
    return out;
}

EvolutionResult evolve_at_constant_bias(const SystemParams& params, const DriveParams& drive, double zpa,
                                        const EvolutionOptions& options) {
    const double stop = drive.center_ns + 0.5 * drive.t_pi_ns;
    const Waveform flat(std::max(stop, 1.0), {zpa, zpa});
    return evolve_excitation(params, drive, flat, 0.0, options);
}

WorkingPoint working_point(const SystemParams& params, double zpa) {
    WorkingPoint wp;
    wp.zpa = zpa;
    wp.f_q_ghz = params.qubit_frequency(zpa);
    wp.f_c_ghz = params.coupler.frequency(zpa);
    wp.dressed = dressed_energies(wp.f_q_ghz, wp.f_c_ghz, params.g_mhz);
    return wp;
}

double calibrate_pi_amplitude(const SystemParams& params, const WorkingPoint& wp, double t_pi_ns,
                              double sigma_fraction) {
    DriveParams drive;
    drive.omega_d_ghz = wp.omega_d_ghz();
    drive.t_pi_ns = t_pi_ns;
    drive.center_ns = 0.5 * t_pi_ns;
    drive.sigma_fraction = sigma_fraction;
    const double weight = std::max(std::abs(wp.dressed.minus[0]), 1e-6);
    const double guess = 1e3 / (2.0 * drive.envelope_area() * weight);
    auto p1 = [&](double rabi) {
        drive.rabi_mhz = rabi;
        return evolve_at_constant_bias(params, drive, wp.zpa).p1;
    };
    return golden_maximize(p1, 0.5 * guess, 1.5 * guess, 1e-7 * guess);
}

double resonance_scan(const SystemParams& params, double zpa, double t_pi_ns, double rabi_mhz, double guess_ghz,
                      double window_mhz, double sigma_fraction) {
    DriveParams drive;
    drive.rabi_mhz = rabi_mhz;
    drive.t_pi_ns = t_pi_ns;
    drive.center_ns = 0.5 * t_pi_ns;
    drive.sigma_fraction = sigma_fraction;
    auto p1 = [&](double f) {
        drive.omega_d_ghz = f;
        return evolve_at_constant_bias(params, drive, zpa).p1;
    };
    constexpr int kGrid = 81;
    const double half = window_mhz * 1e-3;
    const double step = 2.0 * half / (kGrid - 1);
    int best = 0;
    double best_p = -1.0;
    for (int i = 0; i < kGrid; ++i) {
        const double v = p1(guess_ghz - half + i * step);
        if (v > best_p) {
            best_p = v;
            best = i;
        }
    }
    const double centre = guess_ghz - half + best * step;
    return golden_maximize(p1, centre - step, centre + step, 1e-8);
}

// --- calibration sweep ---------------------------------------------------------

double DriveSchedule::t_pi_for(double delay_ns, Regime regime) const {
    if (regime == Regime::Long) return t_pi_max_ns;
    return std::clamp(delay_ns, t_pi_min_ns, t_pi_max_ns);
}

std::vector<double> uniform_offsets(double v_step, double span_fraction, int count) {
    if (count < 3) throw InvalidArgument("offset sweep needs at least 3 points");
    if (!(span_fraction > 0.0)) throw InvalidArgument("offset span must be positive");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        out[static_cast<std::size_t>(j)] = span_fraction * v_step * (2.0 * j / (count - 1) - 1.0);
    }
    return out;
}

std::vector<double> log_spaced_delays(double start_ns, double stop_ns, int count) {
    if (!(start_ns > 0.0 && stop_ns > start_ns) || count < 2) throw InvalidArgument("invalid log delay grid");
    std::vector<double> out(static_cast<std::size_t>(count));
    const double a = std::log(start_ns), b = std::log(stop_ns);
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    out.front() = start_ns;
    out.back() = stop_ns;
    return out;
}

std::vector<double> linear_delays(double start_ns, double stop_ns, int count) {
    if (!(stop_ns > start_ns) || count < 2) throw InvalidArgument("invalid linear delay grid");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = start_ns + (stop_ns - start_ns) * i / (count - 1);
    return out;
}

SimulatedCalibration simulate_calibration(const SystemParams& params, const DriveSchedule& schedule,
                                          const CombinedResponse& channel, const std::vector<double>& delays_ns,
                                          const std::vector<double>& offsets, const SimulationOptions& options) {
    if (delays_ns.empty()) throw InvalidArgument("no delays to simulate");
    for (std::size_t i = 1; i < delays_ns.size(); ++i) {
        if (!(delays_ns[i] > delays_ns[i - 1])) throw InvalidArgument("delays must be strictly increasing");
    }
    if (offsets.size() < 3) throw InvalidArgument("offset sweep needs at least 3 points");
    const double spacing = (offsets.back() - offsets.front()) / static_cast<double>(offsets.size() - 1);
    if (!(spacing > 0.0)) throw InvalidArgument("offsets must be increasing");
    for (std::size_t j = 1; j < offsets.size(); ++j) {
        if (std::abs(offsets[j] - offsets[j - 1] - spacing) > 1e-9 * std::max(1.0, std::abs(spacing))) {
            throw InvalidArgument("offsets must be uniformly spaced");
        }
    }
    if (!std::isfinite(options.v_step) || options.v_step == 0.0) throw InvalidArgument("v_step must be non-zero");

    const double v = options.v_step;
    const double margin = 0.1 * std::abs(v);
    params.validate(std::min(0.0, v + offsets.front()) - margin, std::max(0.0, v + offsets.back()) + margin);

    SimulatedCalibration result;
    auto& report = result.report;
    report.working_point = working_point(params, v);
    report.offsets = offsets;
    const auto& wp = report.working_point;

    const double t_max = schedule.t_pi_max_ns;
    report.rabi_at_t_max_mhz = options.rabi_at_t_max_mhz
                                   ? *options.rabi_at_t_max_mhz
                                   : calibrate_pi_amplitude(params, wp, t_max, schedule.sigma_fraction);
    const double area_product = report.rabi_at_t_max_mhz * t_max;

    double end_ns = 0.0;
    double t_pi_shortest = t_max;
    report.t_pi_ns.resize(delays_ns.size());
    for (std::size_t i = 0; i < delays_ns.size(); ++i) {
        const double t_pi = schedule.t_pi_for(delays_ns[i], options.regime);
        if (delays_ns[i] - 0.5 * t_pi < -1e-9) {
            throw InvalidArgument("delay " + std::to_string(delays_ns[i]) + " ns is shorter than half its pulse");
        }
        report.t_pi_ns[i] = t_pi;
        t_pi_shortest = std::min(t_pi_shortest, t_pi);
        end_ns = std::max(end_ns, delays_ns[i] + 0.5 * t_pi);
    }
    const auto rabi_shortest = effective_rabi(wp.f_q_ghz, wp.f_c_ghz, params.g_mhz, area_product / t_pi_shortest);
    report.rwa_worst = check_rwa(wp.dressed.omega_minus, wp.dressed.omega_plus, rabi_shortest.plus_mhz);

    // Coupler zpa seen by the device: the channel applied to the nominal input.
    const double dt = options.dt_ns;
    const double duration = (std::ceil(end_ns / dt) + 2.0) * dt;
    CombinedResponse unit_channel = channel;
    unit_channel.v_step = 1.0;
    Waveform trace = [&] {
        if (!options.input_pulse) {
            unit_channel.v_step = v;
            return step_response_grid(unit_channel, duration, dt);
        }
        const auto& input = *options.input_pulse;
        if (input.dt() != dt) throw IncompatibleSampling("input pulse and simulation grid differ in dt");
        if (input.time_at(input.size() - 1) < end_ns) throw InvalidArgument("input pulse is shorter than the sweep");
        return apply_channel(input, unit_channel);
    }();

    const std::size_t n_delays = delays_ns.size();
    const auto n_threads = static_cast<std::size_t>(std::max(1, options.threads));
    auto parallel_for = [&](std::size_t n, const auto& body) {
        if (n_threads == 1) {
            for (std::size_t i = 0; i < n; ++i) body(i);
            return;
        }
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(n_threads, n); ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += n_threads) body(i);
            });
        }
        for (auto& th : pool) th.join();
    };

    std::vector<double> best_offsets(n_delays, 0.0);
    report.peak_population.assign(n_delays, 0.0);
    std::vector<double> norm_errors(n_delays, 0.0);
    std::vector<std::exception_ptr> failures(n_delays);

    auto make_drive = [&](double t_pi, double centre) {
        DriveParams drive;
        drive.omega_d_ghz = wp.omega_d_ghz();
        drive.t_pi_ns = t_pi;
        drive.rabi_mhz = area_product / t_pi;
        drive.center_ns = centre;
        drive.sigma_fraction = schedule.sigma_fraction;
        return drive;
    };
    struct Peak {
        double offset = 0.0;
        double population = 0.0;
        double norm_error = 0.0;
    };
    auto locate_peak = [&](const DriveParams& drive, const Waveform& on) {
        Peak peak;
        std::vector<double> p1(offsets.size());
        for (std::size_t j = 0; j < offsets.size(); ++j) {
            const auto evo = evolve_excitation(params, drive, on, offsets[j], options.evolution);
            p1[j] = evo.p1;
            peak.norm_error = std::max(peak.norm_error, evo.norm_error);
        }
        const auto jmax = static_cast<std::size_t>(std::max_element(p1.begin(), p1.end()) - p1.begin());
        if (jmax == 0 || jmax + 1 == p1.size()) {
            throw SweepRangeError("no interior maximum at delay " + std::to_string(drive.center_ns) +
                                  " ns; widen the offset sweep");
        }
        const double ym = p1[jmax - 1], y0 = p1[jmax], yp = p1[jmax + 1];
        const double curvature = ym - 2.0 * y0 + yp;
        const double shift = curvature < 0.0 ? 0.5 * (ym - yp) / curvature : 0.0;
        peak.offset = offsets[jmax] + shift * spacing;
        peak.population = y0;
        return peak;
    };

    report.baseline.assign(n_delays, 0.0);
    if (options.subtract_baseline) {
        std::vector<double> lengths = report.t_pi_ns;
        std::sort(lengths.begin(), lengths.end());
        lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
        std::vector<double> settled(lengths.size());
        std::vector<std::exception_ptr> errors(lengths.size());
        parallel_for(lengths.size(), [&](std::size_t k) {
            try {
                const Waveform flat(dt, std::vector<double>(static_cast<std::size_t>(std::ceil(lengths[k] / dt)) + 3, v));
                settled[k] = locate_peak(make_drive(lengths[k], 0.5 * lengths[k] + dt), flat).offset;
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
        for (std::size_t i = 0; i < n_delays; ++i) {
            const auto k = std::lower_bound(lengths.begin(), lengths.end(), report.t_pi_ns[i]) - lengths.begin();
            report.baseline[i] = settled[static_cast<std::size_t>(k)];
        }
    }

    auto run_delay = [&](std::size_t i) {
        try {
            const auto peak = locate_peak(make_drive(report.t_pi_ns[i], delays_ns[i]), trace);
            best_offsets[i] = peak.offset - report.baseline[i];
            report.peak_population[i] = peak.population;
            norm_errors[i] = peak.norm_error;
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };

    parallel_for(n_delays, run_delay);
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    report.max_norm_error = *std::max_element(norm_errors.begin(), norm_errors.end());
    result.run.delays_ns = delays_ns;
    result.run.compensation = std::move(best_offsets);
    result.run.v_step = v;
    result.run.regime = options.regime;
    return result;
}

}  // namespace fluxcal
