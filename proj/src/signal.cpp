#include "fluxcal/signal.hpp"

#include "fluxcal/csv.hpp"
#include "fluxcal/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluxcal {

namespace {

void check_dt(double dt_ns) {
    if (!(dt_ns > 0.0) || !std::isfinite(dt_ns)) {
        throw InvalidArgument("sample period must be positive and finite");
    }
}

void check_samples(std::span<const double> samples, const char* what) {
    if (samples.empty()) throw InvalidArgument(std::string(what) + " must be non-empty");
    for (double s : samples) {
        if (!std::isfinite(s)) throw InvalidArgument(std::string(what) + " contains non-finite values");
    }
}

}  // namespace

Waveform::Waveform(double dt_ns, std::vector<double> samples) : dt_(dt_ns), samples_(std::move(samples)) {
    check_dt(dt_);
    check_samples(samples_, "waveform");
}

double Waveform::value_at(double t_ns) const noexcept {
    const double x = t_ns / dt_;
    if (x <= 0.0) return samples_.front();
    const auto last = static_cast<double>(samples_.size() - 1);
    if (x >= last) return samples_.back();
    const auto i = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(i);
    return samples_[i] + frac * (samples_[i + 1] - samples_[i]);
}

double Waveform::max_abs() const noexcept {
    double m = 0.0;
    for (double s : samples_) m = std::max(m, std::abs(s));
    return m;
}

Waveform Waveform::scaled(double factor) const {
    auto out = samples_;
    for (auto& s : out) s *= factor;
    return {dt_, std::move(out)};
}

Waveform add_scaled(const Waveform& a, const Waveform& b, double factor) {
    if (a.dt_ != b.dt_) throw IncompatibleSampling("waveforms have different sample periods");
    if (a.size() != b.size()) throw IncompatibleSampling("waveforms have different lengths");
    auto out = a.samples_;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += factor * b.samples_[i];
    return {a.dt_, std::move(out)};
}

Waveform operator+(const Waveform& a, const Waveform& b) { return add_scaled(a, b, 1.0); }
Waveform operator-(const Waveform& a, const Waveform& b) { return add_scaled(a, b, -1.0); }

ImpulseResponse::ImpulseResponse(double dt_ns, std::vector<double> kernel) : dt_(dt_ns), kernel_(std::move(kernel)) {
    check_dt(dt_);
    check_samples(kernel_, "kernel");
}

ImpulseResponse ImpulseResponse::unit(double dt_ns, std::size_t length) {
    check_dt(dt_ns);
    std::vector<double> k(std::max<std::size_t>(length, 1), 0.0);
    k[0] = 1.0 / dt_ns;
    return {dt_ns, std::move(k)};
}

ImpulseResponse ImpulseResponse::delay(double dt_ns, std::size_t shift, std::size_t length) {
    check_dt(dt_ns);
    if (shift >= length) throw InvalidArgument("delay must be shorter than the kernel");
    std::vector<double> k(length, 0.0);
    k[shift] = 1.0 / dt_ns;
    return {dt_ns, std::move(k)};
}

double ImpulseResponse::dc_gain() const noexcept {
    double sum = 0.0;
    for (double k : kernel_) sum += k;
    return sum * dt_;
}

double ImpulseResponse::distance_from_identity() const noexcept {
    double sum = std::abs(kernel_[0] * dt_ - 1.0);
    for (std::size_t i = 1; i < kernel_.size(); ++i) sum += std::abs(kernel_[i] * dt_);
    return sum;
}

Waveform heaviside_step(double amplitude, double duration_ns, double dt_ns) {
    check_dt(dt_ns);
    if (!std::isfinite(amplitude)) throw InvalidArgument("step amplitude must be finite");
    if (!(duration_ns >= dt_ns) || !std::isfinite(duration_ns)) {
        throw InvalidArgument("step duration must be at least one sample period");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration_ns / dt_ns));
    return {dt_ns, std::vector<double>(n, amplitude)};
}

Waveform convolve(const Waveform& input, const ImpulseResponse& h) {
    if (input.dt() != h.dt()) throw IncompatibleSampling("input and kernel have different sample periods");
    const auto x = input.samples();
    const auto k = h.kernel();
    const std::size_t n = x.size();
    const std::size_t taps = std::min(n, k.size());
    std::vector<double> out(n, 0.0);
    // Tap-outer order keeps the inner loop a contiguous axpy.
    for (std::size_t j = 0; j < taps; ++j) {
        const double w = k[j] * h.dt();
        if (w == 0.0) continue;
        double* dst = out.data() + j;
        const double* src = x.data();
        const std::size_t count = n - j;
        for (std::size_t i = 0; i < count; ++i) dst[i] += w * src[i];
    }
    return {input.dt(), std::move(out)};
}

ImpulseResponse step_to_impulse(const Waveform& step) {
    if (step.size() < 2) throw InvalidArgument("step response needs at least two samples");
    const auto s = step.samples();
    std::vector<double> k(s.size());
    k[0] = s[0] / step.dt();
    for (std::size_t i = 1; i < s.size(); ++i) k[i] = (s[i] - s[i - 1]) / step.dt();
    return {step.dt(), std::move(k)};
}

Waveform negate_compensation(const Waveform& v_compensation, double v_step) {
    if (v_step == 0.0 || !std::isfinite(v_step)) throw InvalidArgument("v_step must be non-zero");
    return v_compensation.scaled(-1.0 / v_step);
}

std::string waveform_to_csv(const Waveform& w) {
    std::string out = "t_ns,amplitude\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
        out += csv::format_real(w.time_at(i));
        out += ',';
        out += csv::format_real(w[i]);
        out += '\n';
    }
    return out;
}

void write_waveform_csv(const std::filesystem::path& path, const Waveform& w) {
    csv::write_text(path, waveform_to_csv(w));
}

Waveform waveform_from_csv(const std::string& text) {
    const auto table = csv::parse(text);
    if (table.header != std::vector<std::string>{"t_ns", "amplitude"}) {
        throw IoError("waveform csv must have header 't_ns,amplitude'");
    }
    if (table.rows.size() < 2) throw IoError("waveform csv needs at least two rows");
    std::vector<double> t, v;
    t.reserve(table.rows.size());
    v.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        t.push_back(csv::parse_real(row[0]));
        v.push_back(csv::parse_real(row[1]));
    }
    const double dt = t[1] - t[0];
    if (!(dt > 0.0)) throw IoError("waveform times must be strictly increasing");
    if (std::abs(t[0]) > 1e-9) throw IoError("waveform times must start at 0");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(t[i] - static_cast<double>(i) * dt) > 1e-9) {
            throw IoError("waveform times are not uniform at row " + std::to_string(i + 1));
        }
    }
    return {dt, std::move(v)};
}

Waveform read_waveform_csv(const std::filesystem::path& path) { return waveform_from_csv(csv::read_text(path)); }

}  // namespace fluxcal
