#pragma once

// Unattended calibrate -> fit -> predistort -> re-measure loop on a preset device.
//
// With a long-time component in the channel the long sweep runs first on the
// bare step; its fit predistorts the input of the short sweep. The fitted
// pair then drives full_pipeline, and the same sweeps are repeated on the
// predistorted pulse, where the compensation should come back flat.

#include "fluxcal/fitting.hpp"
#include "fluxcal/predistort.hpp"
#include "fluxcal/scenario.hpp"
#include "fluxcal/simulator.hpp"

#include <cstdint>
#include <optional>

namespace fluxcal {

struct RoundtripOptions {
    Chip chip = Chip::Chip2;
    double v_step = kDefaultVStep;
    int n_exp = 0;  ///< short-time terms to fit; 0 takes the preset's count
    double noise_sigma = 0.0;  ///< relative to v_step
    std::uint64_t seed = 0;
    int threads = 1;
    int short_delays = 20;
    int long_delays = 20;
    double short_start_ns = 20.0;
    double short_stop_ns = 5000.0;
    double long_start_ns = 3000.0;
    double long_stop_ns = 40000.0;
    int offsets = 41;
    double offset_span = 0.06;
    double dt_ns = kDefaultDtNs;
};

struct RoundtripResult {
    SystemParams system;
    CombinedResponse truth;
    DriveSchedule schedule;
    double rabi_at_t_max_mhz = 0.0;
    std::optional<SimulatedCalibration> long_run;
    SimulatedCalibration short_run;
    std::optional<FitReport<LongTimeModel>> long_fit;
    FitReport<ShortTimeModel> short_fit;
    CombinedResponse fitted;
    Waveform predistorted;
    std::vector<std::string> warnings;
    ForwardCheck forward;  ///< channel(predistorted) against the ideal step, true channel
    SimulatedCalibration validation_short;
    std::optional<SimulatedCalibration> validation_long;
    double max_validation_residual = 0.0;  ///< max |V_oft| / v_step over the validation sweeps
};

RoundtripResult run_roundtrip(const RoundtripOptions& options);

}  // namespace fluxcal
