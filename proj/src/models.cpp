#include "fluxcal/models.hpp"

#include "fluxcal/errors.hpp"

#include <cmath>

namespace fluxcal {

ShortTimeModel::ShortTimeModel(std::vector<ExpTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty() || terms_.size() > kMaxTerms) {
        throw InvalidArgument("short-time model needs between 1 and 6 terms");
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        const auto& t = terms_[i];
        if (!std::isfinite(t.p) || !(std::abs(t.p) < 1.0)) throw InvalidArgument("|p_i| must be below 1");
        if (!std::isfinite(t.tau_ns) || !(t.tau_ns > 0.0)) throw InvalidArgument("tau_i must be positive");
        if (i > 0 && !(t.tau_ns > terms_[i - 1].tau_ns)) {
            throw InvalidArgument("tau_i must be strictly increasing");
        }
    }
}

LongTimeModel::LongTimeModel(double A, double B, double tau_us, SanityBand band) : A_(A), B_(B), tau_us_(tau_us) {
    if (!std::isfinite(tau_us) || !(tau_us > 0.0)) throw InvalidArgument("long-time tau must be positive");
    auto in_band = [&](double v) { return std::isfinite(v) && v > band.lo && v < band.hi; };
    if (!in_band(A) || !in_band(B)) throw InvalidArgument("long-time A or B outside the sanity band");
}

double eval_short(const ShortTimeModel& model, double t_ns) {
    if (!(t_ns >= 0.0)) throw InvalidArgument("time must be non-negative");
    double sum = 0.0;
    for (const auto& term : model.terms()) sum += term.p * std::exp(-t_ns / term.tau_ns);
    return sum;
}

double eval_long(const LongTimeModel& model, double t_us) {
    if (!(t_us >= 0.0)) throw InvalidArgument("time must be non-negative");
    return (model.B() - model.A()) * std::exp(-t_us / model.tau_us()) + model.A();
}

double normalized_step(const CombinedResponse& resp, double t_ns) {
    double s = resp.long_time ? eval_long(*resp.long_time, t_ns / kNsPerUs) : 1.0;
    if (resp.short_time) s += eval_short(*resp.short_time, t_ns);
    return s;
}

Waveform step_response_grid(const CombinedResponse& resp, double duration_ns, double dt_ns) {
    auto w = heaviside_step(resp.v_step, duration_ns, dt_ns);
    std::vector<double> samples(w.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = resp.v_step * normalized_step(resp, w.time_at(i));
    }
    return {dt_ns, std::move(samples)};
}

ImpulseResponse channel_impulse(const CombinedResponse& resp, double duration_ns, double dt_ns) {
    auto unit = resp;
    unit.v_step = 1.0;
    return step_to_impulse(step_response_grid(unit, duration_ns, dt_ns));
}

nlohmann::json to_json(const CombinedResponse& resp) {
    nlohmann::json j = nlohmann::json::object();
    if (resp.short_time) {
        auto terms = nlohmann::json::array();
        for (const auto& t : resp.short_time->terms()) terms.push_back({{"p", t.p}, {"tau_ns", t.tau_ns}});
        j["short"] = std::move(terms);
    }
    if (resp.long_time) {
        j["long"] = {{"A", resp.long_time->A()}, {"B", resp.long_time->B()}, {"tau_us", resp.long_time->tau_us()}};
    }
    j["v_step"] = resp.v_step;
    return j;
}

CombinedResponse combined_response_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidArgument("model json must be an object");
    CombinedResponse resp;
    try {
        if (j.contains("short") && !j.at("short").empty()) {
            std::vector<ExpTerm> terms;
            for (const auto& t : j.at("short")) {
                terms.push_back({t.at("p").get<double>(), t.at("tau_ns").get<double>()});
            }
            resp.short_time.emplace(std::move(terms));
        }
        if (j.contains("long")) {
            const auto& l = j.at("long");
            resp.long_time.emplace(l.at("A").get<double>(), l.at("B").get<double>(), l.at("tau_us").get<double>());
        }
        if (j.contains("v_step")) resp.v_step = j.at("v_step").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed model json: ") + e.what());
    }
    if (!std::isfinite(resp.v_step) || resp.v_step == 0.0) throw InvalidArgument("v_step must be non-zero");
    return resp;
}

}  // namespace fluxcal
