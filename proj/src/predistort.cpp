#include "fluxcal/predistort.hpp"

#include "fluxcal/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>

namespace fluxcal {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (p == nullptr) throw std::bad_alloc();
    return FftwBuffer<T>(p);
}

class Plan {
public:
    explicit Plan(fftw_plan p) : plan_(p) {
        if (plan_ == nullptr) throw std::runtime_error("fftw plan creation failed");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

/// Forward and inverse real transforms of one length sharing a scratch pair.
class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n), real_(fftw_alloc<double>(n)), spec_(fftw_alloc<fftw_complex>(n / 2 + 1)),
          forward_(make(true)), inverse_(make(false)) {}

    std::vector<std::complex<double>> forward(const std::vector<double>& x) {
        std::copy(x.begin(), x.end(), real_.get());
        forward_.execute();
        std::vector<std::complex<double>> out(n_ / 2 + 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {spec_[i][0], spec_[i][1]};
        return out;
    }

    /// Unnormalized inverse divided by n.
    std::vector<double> inverse(const std::vector<std::complex<double>>& spectrum) {
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            spec_[i][0] = spectrum[i].real();
            spec_[i][1] = spectrum[i].imag();
        }
        inverse_.execute();
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = real_[i] / static_cast<double>(n_);
        return out;
    }

private:
    fftw_plan make(bool forward) {
        std::lock_guard lock(planner_mutex());
        const int n = static_cast<int>(n_);
        // FFTW_ESTIMATE keeps the algorithm choice, and hence the bits, reproducible.
        return forward ? fftw_plan_dft_r2c_1d(n, real_.get(), spec_.get(), FFTW_ESTIMATE)
                       : fftw_plan_dft_c2r_1d(n, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }

    std::size_t n_;
    FftwBuffer<double> real_;
    FftwBuffer<fftw_complex> spec_;
    Plan forward_;
    Plan inverse_;
};

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void check_sampling(const Waveform& target, const ImpulseResponse& h) {
    if (target.dt() != h.dt()) throw IncompatibleSampling("target and kernel have different sample periods");
}

}  // namespace

Waveform reversed_convolution_o2(const Waveform& target, const ImpulseResponse& h, std::vector<std::string>* warnings) {
    check_sampling(target, h);
    const double distance = h.distance_from_identity();
    if (distance >= 0.5 && warnings != nullptr) {
        warnings->push_back("reversed convolution: kernel is far from identity (dt*|h - delta|_1 = " +
                            std::to_string(distance) + "); the second-order series may not converge");
    }
    const Waveform c1 = target - convolve(target, h);
    const Waveform c2 = c1 - convolve(c1, h);
    return target + c1 + c2;
}

Waveform spectral_predistort(const Waveform& target, const ImpulseResponse& h, double regularization) {
    check_sampling(target, h);
    if (!(regularization >= 0.0) || !std::isfinite(regularization)) {
        throw InvalidArgument("regularization must be non-negative");
    }
    const std::size_t n = target.size();
    const std::size_t taps = std::min(n, h.size());
    const std::size_t m = next_pow2(std::max<std::size_t>(2 * n, n + taps));

    std::vector<double> y(m, 0.0);
    std::copy(target.samples().begin(), target.samples().end(), y.begin());
    const std::size_t hold_end = n + (m - n) / 2;
    std::fill(y.begin() + static_cast<std::ptrdiff_t>(n), y.begin() + static_cast<std::ptrdiff_t>(hold_end),
              target[n - 1]);

    std::vector<double> k(m, 0.0);
    for (std::size_t i = 0; i < taps; ++i) k[i] = h.kernel()[i] * h.dt();

    RealFft fft(m);
    auto Y = fft.forward(y);
    const auto H = fft.forward(k);

    double h_max = 0.0, h_min = std::numeric_limits<double>::infinity();
    for (const auto& v : H) {
        h_max = std::max(h_max, std::abs(v));
        h_min = std::min(h_min, std::abs(v));
    }
    const double eps = regularization * h_max;
    if (h_min == 0.0 || h_min < eps) {
        throw IllConditionedChannel("channel spectrum has near-zeros (min |H| = " + std::to_string(h_min) +
                                    ", floor = " + std::to_string(eps) + ")");
    }
    const double eps2 = eps * eps;
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = Y[i] * std::conj(H[i]) / (std::norm(H[i]) + eps2);

    auto x = fft.inverse(Y);
    x.resize(n);
    return {target.dt(), std::move(x)};
}

Waveform full_pipeline(const Waveform& target, const CombinedResponse& resp, const PipelineOptions& options,
                       std::vector<std::string>* warnings) {
    Waveform x = target;
    const double duration = target.duration();
    if (target.size() < 2) throw InvalidArgument("target needs at least two samples");
    if (resp.long_time) {
        const CombinedResponse long_only{std::nullopt, resp.long_time, 1.0};
        x = reversed_convolution_o2(x, channel_impulse(long_only, duration, target.dt()), warnings);
    }
    if (resp.short_time) {
        const CombinedResponse short_only{resp.short_time, std::nullopt, 1.0};
        x = spectral_predistort(x, channel_impulse(short_only, duration, target.dt()), options.regularization);
    }
    return x;
}

Waveform apply_channel(const Waveform& input, const CombinedResponse& resp) {
    if (resp.is_ideal()) return input;
    if (input.size() < 2) throw InvalidArgument("channel input needs at least two samples");
    return convolve(input, channel_impulse(resp, input.duration(), input.dt()));
}

ForwardCheck forward_check(const Waveform& predistorted, const Waveform& target, const CombinedResponse& resp,
                           std::size_t skip) {
    const Waveform out = apply_channel(predistorted, resp);
    if (out.size() != target.size() || out.dt() != target.dt()) {
        throw IncompatibleSampling("predistorted and target waveforms are on different grids");
    }
    ForwardCheck check;
    check.skip = skip;
    for (std::size_t i = skip; i < out.size(); ++i) {
        const double dev = std::abs(out[i] - target[i]);
        if (dev > check.max_deviation) {
            check.max_deviation = dev;
            check.worst_index = i;
        }
    }
    return check;
}

}  // namespace fluxcal
