#pragma once

// Single-excitation qubit-coupler simulator used as an in-silico device.
//
// State space {|00>, |10>, |01>} (qubit first). Frequencies are GHz, i.e.
// cycles per ns, so a Hamiltonian H in GHz propagates as exp(-i 2 pi H dt).
// Couplings and Rabi rates are carried in MHz at the interfaces.
//
// The drive is written in the frame rotating at omega_d, where the RWA drive
// term -Omega(t)/2 (|00><10| + h.c.) is static apart from its envelope:
//
//   H = [ 0        -Omega/2     0          ]
//       [ -Omega/2  f_q - f_d   g          ]
//       [ 0         g           f_c(t)-f_d ]

#include "fluxcal/fitting.hpp"
#include "fluxcal/models.hpp"
#include "fluxcal/signal.hpp"

#include <array>
#include <optional>
#include <vector>

namespace fluxcal {

/// Coupler frequency versus its Z amplitude.
///
/// Transmon form: f = f_max sqrt|cos(pi phi)| (1 + d^2 tan^2(pi phi))^(1/4) with
/// phi = flux_idle + flux_per_zpa * zpa (flux quanta). A polynomial in zpa can
/// be used instead.
class CouplerMap {
public:
    static CouplerMap transmon(double f_max_ghz, double asymmetry, double flux_idle, double flux_per_zpa);
    static CouplerMap polynomial(std::vector<double> coefficients);

    [[nodiscard]] double frequency(double zpa) const;
    [[nodiscard]] bool is_polynomial() const noexcept { return !coefficients_.empty(); }

    [[nodiscard]] double f_max_ghz() const noexcept { return f_max_; }
    [[nodiscard]] double asymmetry() const noexcept { return asymmetry_; }
    [[nodiscard]] double flux_idle() const noexcept { return flux_idle_; }
    [[nodiscard]] double flux_per_zpa() const noexcept { return flux_per_zpa_; }
    [[nodiscard]] const std::vector<double>& coefficients() const noexcept { return coefficients_; }

    /// Transmon only: flux (in [0, 0.5)) at which the map reaches f_ghz.
    [[nodiscard]] double flux_for_frequency(double f_ghz) const;
    [[nodiscard]] CouplerMap with_flux(double flux_idle, double flux_per_zpa) const;

private:
    double f_max_ = 0.0;
    double asymmetry_ = 0.0;
    double flux_idle_ = 0.0;
    double flux_per_zpa_ = 0.0;
    std::vector<double> coefficients_;
};

struct SystemParams {
    double omega_q_ghz = 0.0;
    CouplerMap coupler;
    double g_mhz = 0.0;
    double coeff_zxtalk = 0.0;
    double k_q_ghz_per_zpa = 0.0;  ///< qubit slope on its own Z line, used with coeff_zxtalk

    [[nodiscard]] double g_ghz() const noexcept { return g_mhz * 1e-3; }
    [[nodiscard]] double qubit_frequency(double zpa_c) const noexcept {
        return omega_q_ghz + k_q_ghz_per_zpa * coeff_zxtalk * zpa_c;
    }

    /// Positive frequencies and coupling; coupler map monotone on [zpa_lo, zpa_hi].
    void validate(double zpa_lo, double zpa_hi) const;
};

struct DressedPair {
    double omega_minus = 0.0;
    double omega_plus = 0.0;
    /// Amplitudes on (|10>, |01>); real, each normalized.
    std::array<double, 2> minus{};
    std::array<double, 2> plus{};

    [[nodiscard]] double splitting() const noexcept { return omega_plus - omega_minus; }
};

/// Eigenpairs of [[w_q, g], [g, w_c]]; g in MHz, frequencies in GHz.
DressedPair dressed_energies(double omega_q_ghz, double omega_c_ghz, double g_mhz);

struct EffectiveRabi {
    double minus_mhz = 0.0;
    double plus_mhz = 0.0;
};

/// Drive matrix elements <00|H_d|phi+-> expressed as Rabi rates, signs as in
/// Omega(w_c - w_q +- Delta) / (2 A g).
EffectiveRabi effective_rabi(double omega_q_ghz, double omega_c_ghz, double g_mhz, double rabi_mhz);

struct RwaCheck {
    bool valid = true;
    double ratio = 0.0;  ///< (|Omega+|/2) / (omega+ - omega-)
    double margin_factor = 0.1;
};

RwaCheck check_rwa(double omega_minus_ghz, double omega_plus_ghz, double omega_plus_rabi_mhz,
                   double margin_factor = 0.1);

/// Square-pulse Rabi rate (MHz) that completes a pi rotation within t_pi.
double pi_pulse_rabi_mhz(double t_pi_ns);

struct DriveParams {
    double omega_d_ghz = 0.0;
    double rabi_mhz = 0.0;     ///< peak of the Gaussian envelope
    double t_pi_ns = 100.0;    ///< window length; the pulse occupies [center - t_pi/2, center + t_pi/2]
    double center_ns = 0.0;
    double sigma_fraction = 0.25;  ///< sigma / t_pi; the window is then +-2 sigma

    [[nodiscard]] double envelope(double t_ns) const noexcept;
    /// Integral of the truncated envelope over the window.
    [[nodiscard]] double envelope_area() const noexcept;
};

struct EvolutionOptions {
    double max_step_ns = 0.1;
    double norm_tolerance = 1e-8;
};

struct EvolutionResult {
    double p1 = 0.0;  ///< qubit |1> population, coupler traced out
    std::array<double, 3> populations{};  ///< |00>, |10>, |01>
    double norm_error = 0.0;
};

/// Drives |00> with the Gaussian pulse while the coupler follows the zpa trace
/// (plus `zpa_offset`). Piecewise-constant propagation with exact 3x3
/// exponentials at midpoint samples.
EvolutionResult evolve_excitation(const SystemParams& params, const DriveParams& drive, const Waveform& coupler_zpa,
                                  double zpa_offset = 0.0, const EvolutionOptions& options = {});

/// Same, for a coupler parked at a constant zpa.
EvolutionResult evolve_at_constant_bias(const SystemParams& params, const DriveParams& drive, double zpa,
                                        const EvolutionOptions& options = {});

struct WorkingPoint {
    double zpa = 0.0;
    double f_q_ghz = 0.0;
    double f_c_ghz = 0.0;
    DressedPair dressed;
    [[nodiscard]] double omega_d_ghz() const noexcept { return dressed.omega_minus; }
};

/// Step 1: dressed qubit frequency with the coupler held at `zpa`.
WorkingPoint working_point(const SystemParams& params, double zpa);

/// Step 2: peak Rabi rate (MHz) maximizing P1 for a pulse of length t_pi at the working point.
double calibrate_pi_amplitude(const SystemParams& params, const WorkingPoint& wp, double t_pi_ns,
                              double sigma_fraction = 0.25);

/// Drive frequency maximizing P1 at constant bias, searched within +-window_mhz of `guess_ghz`.
double resonance_scan(const SystemParams& params, double zpa, double t_pi_ns, double rabi_mhz, double guess_ghz,
                      double window_mhz = 20.0, double sigma_fraction = 0.25);

/// Pulse length as a function of delay: fixed t_max for long sweeps; for short
/// sweeps clamp(delay, t_min, t_max), so the window always starts after the step.
/// The amplitude follows A * t_pi = constant.
struct DriveSchedule {
    double t_pi_min_ns = 30.0;
    double t_pi_max_ns = 200.0;
    double sigma_fraction = 0.25;

    [[nodiscard]] double t_pi_for(double delay_ns, Regime regime) const;
};

struct SimulationOptions {
    double v_step = 1.0;
    double dt_ns = kDefaultDtNs;
    Regime regime = Regime::Short;
    /// Nominal input to the channel; defaults to the ideal step of height v_step.
    std::optional<Waveform> input_pulse;
    /// Peak Rabi rate at t_pi_max; calibrated (Step 2) when absent.
    std::optional<double> rabi_at_t_max_mhz;
    int threads = 1;
    /// Report offsets against a settled-bias sweep taken with the same pulse
    /// length. Bare-qubit readout pulls the maximum of short, spectrally broad
    /// pulses toward larger qubit weight; the baseline removes that pull.
    bool subtract_baseline = true;
    EvolutionOptions evolution;
};

struct CalibrationReport {
    WorkingPoint working_point;
    double rabi_at_t_max_mhz = 0.0;
    RwaCheck rwa_worst;  ///< at the shortest pulse of the sweep
    std::vector<double> t_pi_ns;          ///< per delay
    std::vector<double> baseline;         ///< settled-bias offset per delay, 0 when not subtracted
    std::vector<double> peak_population;  ///< P1 at the best grid offset, per delay
    std::vector<double> offsets;
    double max_norm_error = 0.0;
};

struct SimulatedCalibration {
    CalibrationRun run;
    CalibrationReport report;
};

/// Step 3: for each delay, sweep the offset grid on top of channel(input) and
/// record the offset maximizing P1 (3-point quadratic refinement). Throws
/// SweepRangeError when the maximum sits on the edge of the grid.
SimulatedCalibration simulate_calibration(const SystemParams& params, const DriveSchedule& schedule,
                                          const CombinedResponse& channel, const std::vector<double>& delays_ns,
                                          const std::vector<double>& offsets, const SimulationOptions& options);

/// count offsets uniformly spaced over [-span * v_step, +span * v_step].
std::vector<double> uniform_offsets(double v_step, double span_fraction, int count);

std::vector<double> log_spaced_delays(double start_ns, double stop_ns, int count);
std::vector<double> linear_delays(double start_ns, double stop_ns, int count);

}  // namespace fluxcal
