#include "fluxcal/roundtrip.hpp"

#include "fluxcal/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluxcal {

namespace {

double max_abs_relative(const CalibrationRun& run) {
    double m = 0.0;
    for (double v : run.compensation) m = std::max(m, std::abs(v / run.v_step));
    return m;
}

}  // namespace

RoundtripResult run_roundtrip(const RoundtripOptions& o) {
    const auto& preset = chip_preset(o.chip);
    const SystemParams system = preset_system(o.chip, o.v_step);
    const CombinedResponse truth = preset.channel;
    const DriveSchedule schedule;
    const int n_exp = o.n_exp > 0 ? o.n_exp : preset.short_terms;
    const double v = o.v_step;

    const double rabi = calibrate_pi_amplitude(system, working_point(system, v), schedule.t_pi_max_ns,
                                               schedule.sigma_fraction);
    const auto offsets = uniform_offsets(v, o.offset_span, o.offsets);
    const auto short_delays = log_spaced_delays(o.short_start_ns, o.short_stop_ns, o.short_delays);
    const auto long_delays = log_spaced_delays(o.long_start_ns, o.long_stop_ns, o.long_delays);
    const bool has_long = truth.long_time.has_value();

    // Pulses must outlast the latest drive window of their sweep.
    auto pulse_length = [&](double last_delay) {
        return (std::ceil((last_delay + 0.5 * schedule.t_pi_max_ns) / o.dt_ns) + 2.0) * o.dt_ns;
    };
    const double short_len = pulse_length(o.short_stop_ns);
    const double full_len = pulse_length(has_long ? o.long_stop_ns : o.short_stop_ns);

    std::uint64_t noise_stream = o.seed;
    auto sweep = [&](Regime regime, const std::vector<double>& delays, std::optional<Waveform> input, bool noisy) {
        SimulationOptions so;
        so.v_step = v;
        so.dt_ns = o.dt_ns;
        so.regime = regime;
        so.input_pulse = std::move(input);
        so.rabi_at_t_max_mhz = rabi;
        so.threads = o.threads;
        auto sim = simulate_calibration(system, schedule, truth, delays, offsets, so);
        if (noisy) sim.run = add_noise(std::move(sim.run), o.noise_sigma, noise_stream++);
        return sim;
    };

    std::optional<SimulatedCalibration> long_run;
    std::optional<FitReport<LongTimeModel>> long_fit;
    std::optional<Waveform> short_input;
    std::vector<std::string> warnings;
    if (has_long) {
        long_run = sweep(Regime::Long, long_delays, std::nullopt, true);
        long_fit = fit_long_time(long_run->run);
        const CombinedResponse long_only{std::nullopt, long_fit->model, 1.0};
        short_input = reversed_convolution_o2(heaviside_step(v, short_len, o.dt_ns),
                                              channel_impulse(long_only, short_len, o.dt_ns), &warnings);
    }

    auto short_run = sweep(Regime::Short, short_delays, short_input, true);
    auto short_fit = fit_short_time(short_run.run, n_exp);

    CombinedResponse fitted{short_fit.model, std::nullopt, v};
    if (long_fit) fitted.long_time = long_fit->model;

    const Waveform target = heaviside_step(v, full_len, o.dt_ns);
    Waveform predistorted = full_pipeline(target, fitted, {}, &warnings);
    const ForwardCheck forward = forward_check(predistorted, target, truth);

    auto validation_short = sweep(Regime::Short, short_delays, predistorted, false);
    std::optional<SimulatedCalibration> validation_long;
    double residual = max_abs_relative(validation_short.run);
    if (has_long) {
        validation_long = sweep(Regime::Long, long_delays, predistorted, false);
        residual = std::max(residual, max_abs_relative(validation_long->run));
    }

    return RoundtripResult{
        .system = system,
        .truth = truth,
        .schedule = schedule,
        .rabi_at_t_max_mhz = rabi,
        .long_run = std::move(long_run),
        .short_run = std::move(short_run),
        .long_fit = std::move(long_fit),
        .short_fit = std::move(short_fit),
        .fitted = std::move(fitted),
        .predistorted = std::move(predistorted),
        .warnings = std::move(warnings),
        .forward = forward,
        .validation_short = std::move(validation_short),
        .validation_long = std::move(validation_long),
        .max_validation_residual = residual,
    };
}

}  // namespace fluxcal
