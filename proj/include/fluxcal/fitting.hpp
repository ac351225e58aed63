#pragma once

// Extraction of distortion models from compensation sweeps, and the
// anti-crossing fit with linear Z crosstalk.

#include "fluxcal/models.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fluxcal {

enum class Regime { Short, Long };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

/// Compensation offsets V_oft(t) that re-centred the qubit at each delay.
struct CalibrationRun {
    std::vector<double> delays_ns;
    std::vector<double> compensation;
    double v_step = 1.0;
    Regime regime = Regime::Short;

    /// Equal lengths, finite values, strictly increasing delays, non-zero v_step.
    void validate() const;
    [[nodiscard]] std::size_t size() const noexcept { return delays_ns.size(); }
};

/// CSV header `t_ns,v_oft`. v_step and the regime are not part of the file.
std::string calibration_run_to_csv(const CalibrationRun& run);
void write_calibration_run_csv(const std::filesystem::path& path, const CalibrationRun& run);
CalibrationRun read_calibration_run_csv(const std::filesystem::path& path, double v_step, Regime regime);

struct FitOptions {
    double rms_threshold = 2e-3;  ///< residual RMS (relative units) above which a fit is flagged
    int max_iterations = 300;
    /// Long-time only: seed for tau; when set, the delays must span at least 3x this value.
    std::optional<double> tau_guess_us;
};

template <class Model>
struct FitReport {
    Model model;
    double rms = 0.0;          ///< RMS residual against the normalized data
    bool flagged = false;      ///< rms above FitOptions::rms_threshold
    bool degenerate = false;   ///< parameters not identifiable from the data
    int iterations = 0;        ///< LM iterations of the selected start
    std::size_t starts = 0;    ///< number of multi-start candidates refined
    std::vector<double> cost_trace;  ///< sum of squares per accepted LM step of the selected start
};

/// Multi-exponential fit of -compensation / v_step. Throws DegenerateFit when two
/// relaxation times land within 5% of each other or a term carries no weight.
FitReport<ShortTimeModel> fit_short_time(const CalibrationRun& run, int n_exp, const FitOptions& options = {});

/// Fit of s_lt(t) = (B - A) exp(-t/tau) + A to 1 - compensation / v_step.
FitReport<LongTimeModel> fit_long_time(const CalibrationRun& run, const FitOptions& options = {});

// --- anti-crossing -----------------------------------------------------------

enum class Branch { Lower, Upper };

struct AnticrossingPoint {
    double zpa_c;
    double f_ghz;
    Branch branch;
};

struct AnticrossingData {
    std::vector<AnticrossingPoint> points;

    /// At least 8 finite points on each branch.
    void validate() const;
};

/// CSV header `zpa_c,f_ghz,branch` with branch `lower` or `upper`.
AnticrossingData read_anticrossing_csv(const std::filesystem::path& path);
std::string anticrossing_to_csv(const AnticrossingData& data);

struct LinearMap {
    double slope = 0.0;
    double intercept = 0.0;

    [[nodiscard]] double operator()(double x) const noexcept { return slope * x + intercept; }
};

struct CrosstalkModel {
    double k_q = 0.0;    ///< GHz per a.u. of the qubit's own Z line
    double b_q = 0.0;    ///< GHz
    double k_eff = 0.0;  ///< GHz per a.u. of the coupler Z line
    double b_eff = 0.0;  ///< GHz
    double coeff_zxtalk = 0.0;
};

struct AnticrossingFit {
    double g_mhz = 0.0;
    LinearMap coupler_map;  ///< zpa_c -> f_c in GHz
    CrosstalkModel crosstalk;
    double residual_std = 0.0;  ///< std of (f - f_q)(f - f_c), GHz^2
    bool degenerate = false;    ///< the product vanishes: no measurable coupling
    std::vector<double> cost_trace;
};

struct AnticrossingOptions {
    /// residual_std / g^2 above which the fit is rejected.
    double max_relative_std = 0.2;
    /// g below this (GHz) is reported as degenerate.
    double min_g_ghz = 1e-4;
};

/// Minimizes the spread of (f - f_q(zpa_c))(f - f_c(zpa_c)) with both maps linear;
/// g = sqrt of its mean. The objective does not depend on the branch labels.
AnticrossingFit fit_anticrossing(const AnticrossingData& data, double k_q_estimate,
                                 const AnticrossingOptions& options = {});

/// Two-point qubit slope estimate (f_q at max zpa_c - f_q at min zpa_c) / (coeff * span).
double estimate_kq(const std::vector<std::pair<double, double>>& spectroscopy, double coeff_zxtalk);

}  // namespace fluxcal
