#pragma once

// Device presets and the scenario file that configures a simulated calibration.
//
// Scenario JSON (all fields optional except "system"):
//
//   {
//     "system": "chip2" | {"omega_q_ghz":.., "g_mhz":.., "coupler":{..}, "coeff_zxtalk":.., "k_q_ghz_per_zpa":..},
//     "repulsion_mhz": 50,            // presets only: dressed shift at zpa = v_step
//     "v_step": 0.5,
//     "regime": "short" | "long",
//     "drive": {"t_pi_min_ns":30, "t_pi_max_ns":200, "sigma_fraction":0.25, "rabi_at_t_max_mhz":.., "subtract_baseline":true},
//     "channel": "ideal" | "chip1" | "chip2" | "chip1-short" | "chip1-long" | <model json> | {"file": "model.json"},
//     "input": {"file": "pulse.csv"},
//     "delays_ns": [..] | {"start":.., "stop":.., "count":.., "spacing":"log" | "linear"},
//     "offsets": {"span_fraction":0.06, "count":41} | [..],
//     "dt_ns": 1, "noise_sigma": 0, "seed": 0, "threads": 1
//   }
//
// Coupler maps are {"f_max_ghz", "asymmetry", "flux_idle", "flux_per_zpa"} or
// {"polynomial": [c0, c1, ..]} (GHz, ascending powers of zpa).

#include "fluxcal/fitting.hpp"
#include "fluxcal/models.hpp"
#include "fluxcal/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fluxcal {

inline constexpr double kDefaultVStep = 0.5;
inline constexpr double kDefaultRepulsionMhz = 50.0;

enum class Chip { Chip1, Chip2 };

std::string to_string(Chip c);
Chip chip_from_string(const std::string& s);

/// Measured device numbers for the qubit-coupler pair of each chip.
struct ChipPreset {
    Chip chip;
    double omega_q_ghz;
    double g_mhz;
    double coupler_sweet_ghz;
    double coupler_idle_ghz;
    double asymmetry;
    CombinedResponse channel;  ///< fitted distortion of the coupler line, v_step = 1
    int short_terms;
};

const ChipPreset& chip_preset(Chip c);

/// Short-time and long-time parts of a preset channel, kept separate for tests.
CombinedResponse preset_short_channel(Chip c);
CombinedResponse preset_long_channel(Chip c);

/// Qubit-coupler detuning (GHz) at which the lower dressed level sits repulsion_mhz below the bare qubit.
double detuning_for_repulsion(double g_mhz, double repulsion_mhz);

/// Transmon coupler map through the idle point at zpa = 0 and the working point at zpa = v_step.
SystemParams preset_system(Chip c, double v_step = kDefaultVStep, double repulsion_mhz = kDefaultRepulsionMhz);

SystemParams system_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SystemParams& p);

struct Scenario {
    std::string system_label;  ///< preset name or "custom"
    SystemParams system;
    double v_step = kDefaultVStep;
    Regime regime = Regime::Short;
    DriveSchedule schedule;
    std::optional<double> rabi_at_t_max_mhz;
    bool subtract_baseline = true;
    CombinedResponse channel;
    std::optional<Waveform> input_pulse;
    std::vector<double> delays_ns;
    std::vector<double> offsets;
    double dt_ns = kDefaultDtNs;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<std::filesystem::path> referenced_files;  ///< resolved paths read while parsing
};

/// Relative file references resolve against base_dir.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Every resolved setting, for provenance.
nlohmann::json to_json(const Scenario& s);

SimulationOptions simulation_options(const Scenario& s);

/// Additive i.i.d. Gaussian noise on the compensation values, deterministic in the seed.
CalibrationRun add_noise(CalibrationRun run, double sigma, std::uint64_t seed);

/// Runs the sweep and applies the scenario's noise.
SimulatedCalibration run_scenario(const Scenario& s);

nlohmann::json to_json(const CalibrationReport& r, const DriveSchedule& schedule);

}  // namespace fluxcal
