#pragma once

// Predistortion filters. The long-time correction is a second-order reversed
// convolution carried out entirely in the time domain; the short-time
// correction divides by the channel spectrum.

#include "fluxcal/models.hpp"
#include "fluxcal/signal.hpp"

#include <string>
#include <vector>

namespace fluxcal {

inline constexpr double kDefaultRegularization = 1e-6;

/// Perturbative deconvolution truncated after the R^2 term, R = 1 - H:
///   c1 = y - y*h,  c2 = c1 - c1*h,  x2 = y + c1 + c2  (= y (1 + R + R^2)).
/// The residual x2*h - y equals -R^3 y. Appends a warning when the kernel is
/// far from identity (dt * |h - delta|_1 >= 0.5), where the series converges poorly.
Waveform reversed_convolution_o2(const Waveform& target, const ImpulseResponse& h,
                                 std::vector<std::string>* warnings = nullptr);

/// Inverse transform of Y conj(H) / (|H|^2 + eps^2), eps = regularization * max|H|.
///
/// The target is padded to the next power of two >= 2x its length: the first
/// half of the padding holds the last sample, the second half is zero so the
/// causal past seen through the circular wrap is quiet. Throws
/// IllConditionedChannel when min|H| falls below eps (or vanishes with eps = 0).
Waveform spectral_predistort(const Waveform& target, const ImpulseResponse& h,
                             double regularization = kDefaultRegularization);

struct PipelineOptions {
    double regularization = kDefaultRegularization;
};

/// Long-time correction first (reversed convolution), then short-time (spectral).
Waveform full_pipeline(const Waveform& target, const CombinedResponse& resp, const PipelineOptions& options = {},
                       std::vector<std::string>* warnings = nullptr);

/// The modeled channel: convolve(input, impulse of the unit-step response of resp).
Waveform apply_channel(const Waveform& input, const CombinedResponse& resp);

struct ForwardCheck {
    double max_deviation = 0.0;   ///< max |channel(x) - target| over samples n >= skip
    std::size_t worst_index = 0;
    std::size_t skip = 2;
};

/// Compares channel(predistorted) against target, ignoring the first `skip` samples.
ForwardCheck forward_check(const Waveform& predistorted, const Waveform& target, const CombinedResponse& resp,
                           std::size_t skip = 2);

}  // namespace fluxcal
