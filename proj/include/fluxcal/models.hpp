#pragma once

// Parametric step-response models of the coupler flux line.
//
//   short-time:  s_st(t) = sum_i p_i exp(-t / tau_i)        tau_i in ns
//   long-time:   s_lt(t) = (B - A) exp(-t / tau) + A         tau in us
//
// A full channel composes the two additively, s(t) = s_lt(t) + s_st(t), with
// s_lt taken as 1 when the long-time component is absent. Time units stay as
// written above; conversion to ns happens only when a model is put on a grid.

#include "fluxcal/signal.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fluxcal {

struct ExpTerm {
    double p;       ///< relative amplitude
    double tau_ns;  ///< relaxation time

    friend bool operator==(const ExpTerm&, const ExpTerm&) = default;
};

class ShortTimeModel {
public:
    static constexpr std::size_t kMaxTerms = 6;

    /// Requires 1..6 terms, tau > 0 strictly increasing and |p| < 1.
    explicit ShortTimeModel(std::vector<ExpTerm> terms);

    [[nodiscard]] std::span<const ExpTerm> terms() const noexcept { return terms_; }
    [[nodiscard]] std::size_t size() const noexcept { return terms_.size(); }

    friend bool operator==(const ShortTimeModel&, const ShortTimeModel&) = default;

private:
    std::vector<ExpTerm> terms_;
};

/// Guard band on A and B; a fit that lands outside it has almost surely diverged.
struct SanityBand {
    double lo = 0.5;
    double hi = 1.5;
};

class LongTimeModel {
public:
    LongTimeModel(double A, double B, double tau_us, SanityBand band = {});

    [[nodiscard]] double A() const noexcept { return A_; }
    [[nodiscard]] double B() const noexcept { return B_; }
    [[nodiscard]] double tau_us() const noexcept { return tau_us_; }

    friend bool operator==(const LongTimeModel&, const LongTimeModel&) = default;

private:
    double A_;
    double B_;
    double tau_us_;
};

struct CombinedResponse {
    std::optional<ShortTimeModel> short_time;
    std::optional<LongTimeModel> long_time;
    double v_step = 1.0;

    [[nodiscard]] bool is_ideal() const noexcept { return !short_time && !long_time; }

    friend bool operator==(const CombinedResponse&, const CombinedResponse&) = default;
};

double eval_short(const ShortTimeModel& model, double t_ns);
double eval_long(const LongTimeModel& model, double t_us);

/// Unit-step response s(t) of the composed channel (v_step not applied).
double normalized_step(const CombinedResponse& resp, double t_ns);

/// v_step * s(n dt) for n in [0, round(duration/dt)).
Waveform step_response_grid(const CombinedResponse& resp, double duration_ns, double dt_ns = kDefaultDtNs);

/// Impulse response of the channel, derived from the unit-step response on the grid.
ImpulseResponse channel_impulse(const CombinedResponse& resp, double duration_ns, double dt_ns = kDefaultDtNs);

// Model JSON: {"short":[{"p":..,"tau_ns":..}], "long":{"A":..,"B":..,"tau_us":..}, "v_step":..}
// An absent (or empty "short") field means the component is absent.
nlohmann::json to_json(const CombinedResponse& resp);
CombinedResponse combined_response_from_json(const nlohmann::json& j);

}  // namespace fluxcal
