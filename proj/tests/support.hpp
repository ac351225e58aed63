#pragma once

// Shared fixtures for the test binaries.

#include "fluxcal/fitting.hpp"
#include "fluxcal/models.hpp"
#include "fluxcal/scenario.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace fluxcal::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fluxcal_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline ShortTimeModel chip2_short() { return *chip_preset(Chip::Chip2).channel.short_time; }
inline ShortTimeModel chip1_short() { return *chip_preset(Chip::Chip1).channel.short_time; }
inline LongTimeModel chip1_long() { return *chip_preset(Chip::Chip1).channel.long_time; }

/// Compensation a perfect calibration would record for a short-time model.
inline CalibrationRun synthetic_short_run(const ShortTimeModel& m, const std::vector<double>& delays, double v_step) {
    CalibrationRun run;
    run.delays_ns = delays;
    run.v_step = v_step;
    run.regime = Regime::Short;
    for (double t : delays) run.compensation.push_back(-v_step * eval_short(m, t));
    return run;
}

inline CalibrationRun synthetic_long_run(const LongTimeModel& m, const std::vector<double>& delays, double v_step) {
    CalibrationRun run;
    run.delays_ns = delays;
    run.v_step = v_step;
    run.regime = Regime::Long;
    for (double t : delays) run.compensation.push_back(v_step * (1.0 - eval_long(m, t / kNsPerUs)));
    return run;
}

}  // namespace fluxcal::testing

namespace fluxcal::testing {

/// Branches of [[f_q(z), g], [g, f_c(z)]] with f_q = f_q0 + k_q coeff z and a linear coupler sweep.
inline AnticrossingData synthetic_anticrossing(double g_mhz, double coeff_zxtalk, double k_q, int per_branch = 40,
                                               double f_q0 = 4.578, double f_c0 = 4.978, double slope_c = -1.0) {
    AnticrossingData data;
    const double g = g_mhz * 1e-3;
    for (int i = 0; i < per_branch; ++i) {
        const double z = 0.8 * i / (per_branch - 1);
        const double fq = f_q0 + k_q * coeff_zxtalk * z;
        const double fc = f_c0 + slope_c * z;
        const double mean = 0.5 * (fq + fc), half = 0.5 * std::hypot(fq - fc, 2.0 * g);
        data.points.push_back({z, mean - half, Branch::Lower});
        data.points.push_back({z, mean + half, Branch::Upper});
    }
    return data;
}

}  // namespace fluxcal::testing
