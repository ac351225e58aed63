#pragma once

// Uniformly sampled waveforms and the causal convolution algebra used by the
// distortion models and the predistortion filters.
//
// Convolution convention: out[n] = dt * sum_k in[n-k] * kernel[k]. Kernels
// therefore carry a 1/dt normalization: the unit impulse is {1/dt, 0, 0, ...}
// and its dc gain (sum of kernel * dt) is 1 at every sample period.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fluxcal {

inline constexpr double kDefaultDtNs = 1.0;
inline constexpr double kNsPerUs = 1000.0;

/// Real-valued signal sampled every `dt` ns; sample n sits at t = n * dt.
class Waveform {
public:
    /// Throws InvalidArgument unless dt > 0 and the samples are non-empty and finite.
    Waveform(double dt_ns, std::vector<double> samples);

    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }
    [[nodiscard]] double operator[](std::size_t n) const { return samples_[n]; }
    [[nodiscard]] double time_at(std::size_t n) const noexcept { return static_cast<double>(n) * dt_; }
    [[nodiscard]] double duration() const noexcept { return static_cast<double>(size()) * dt_; }

    /// Linear interpolation; clamps to the first/last sample outside the grid.
    [[nodiscard]] double value_at(double t_ns) const noexcept;

    [[nodiscard]] double max_abs() const noexcept;

    [[nodiscard]] Waveform scaled(double factor) const;
    /// a + factor * b; throws IncompatibleSampling on dt or length mismatch.
    friend Waveform add_scaled(const Waveform& a, const Waveform& b, double factor);

    friend bool operator==(const Waveform&, const Waveform&) = default;

private:
    double dt_;
    std::vector<double> samples_;
};

Waveform operator+(const Waveform& a, const Waveform& b);
Waveform operator-(const Waveform& a, const Waveform& b);

/// Causal LTI kernel with the 1/dt normalization described at the top of this file.
class ImpulseResponse {
public:
    ImpulseResponse(double dt_ns, std::vector<double> kernel);

    /// {1/dt, 0, ..., 0}: the distortion-free channel.
    static ImpulseResponse unit(double dt_ns, std::size_t length = 1);
    /// Pure delay of `shift` samples.
    static ImpulseResponse delay(double dt_ns, std::size_t shift, std::size_t length);

    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] std::size_t size() const noexcept { return kernel_.size(); }
    [[nodiscard]] std::span<const double> kernel() const noexcept { return kernel_; }

    /// sum(kernel) * dt, the channel's response to a long constant input.
    [[nodiscard]] double dc_gain() const noexcept;

    /// dt * sum |kernel - unit impulse|, the l1 size of the distortion.
    [[nodiscard]] double distance_from_identity() const noexcept;

private:
    double dt_;
    std::vector<double> kernel_;
};

/// Constant `amplitude` for round(duration/dt) samples starting at t = 0.
Waveform heaviside_step(double amplitude, double duration_ns, double dt_ns = kDefaultDtNs);

/// Causal convolution truncated to the input length.
Waveform convolve(const Waveform& input, const ImpulseResponse& h);

/// Discrete derivative of a step response such that convolve(unit step, result) == step.
ImpulseResponse step_to_impulse(const Waveform& step);

/// Distortion implied by measured compensation offsets: -v / v_step.
Waveform negate_compensation(const Waveform& v_compensation, double v_step);

/// CSV with header `t_ns,amplitude`. The reader requires t to start at 0 and be
/// uniform within 1e-9 ns; dt is taken from the second row.
void write_waveform_csv(const std::filesystem::path& path, const Waveform& w);
std::string waveform_to_csv(const Waveform& w);
Waveform read_waveform_csv(const std::filesystem::path& path);
Waveform waveform_from_csv(const std::string& text);

}  // namespace fluxcal
