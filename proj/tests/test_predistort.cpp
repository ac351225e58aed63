#include "fluxcal/errors.hpp"
#include "fluxcal/models.hpp"
#include "fluxcal/predistort.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

using namespace fluxcal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ImpulseResponse single_exp_kernel(double p, double tau_ns, double duration, double dt = 1.0) {
    return channel_impulse({ShortTimeModel({{p, tau_ns}}), std::nullopt, 1.0}, duration, dt);
}

double residual_sup(const Waveform& x, const ImpulseResponse& h, const Waveform& y) {
    const auto out = convolve(x, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(out[i] - y[i]));
    return worst;
}

Waveform gaussian_bump(std::size_t n, double centre, double width) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(-std::pow((i - centre) / width, 2));
    return {1.0, v};
}

}  // namespace

TEST_CASE("reversed convolution with the identity kernel returns the target", "[predistort]") {
    const Waveform y(1.0, {0.2, 1.0, -0.5, 3.0});
    CHECK(reversed_convolution_o2(y, ImpulseResponse::unit(1.0, 4)) == y);
}

TEST_CASE("reversed convolution leaves a cubic residual", "[predistort]") {
    const double p = 0.02;
    const auto y = heaviside_step(1.0, 2000);
    const auto h = single_exp_kernel(p, 100.0, 2000);
    const auto x = reversed_convolution_o2(y, h);
    const double r = residual_sup(x, h, y);
    // The -R^3 y remainder peaks at p^3 at t = 0; allow rounding only.
    CHECK(r <= 8e-6 * y.max_abs() * (1.0 + 1e-9));
    CHECK(r > 7e-6);
}

TEST_CASE("reversed convolution is linear in the target", "[predistort][property]") {
    const auto h = single_exp_kernel(-0.03, 50.0, 500);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n01;
    std::vector<double> v(500);
    for (auto& s : v) s = n01(rng);
    const Waveform y(1.0, v);
    for (double a : {-2.0, 0.3, 7.0}) {
        const auto lhs = reversed_convolution_o2(y.scaled(a), h);
        const auto rhs = reversed_convolution_o2(y, h).scaled(a);
        for (std::size_t i = 0; i < lhs.size(); ++i) CHECK_THAT(lhs[i], WithinAbs(rhs[i], 1e-12 * std::abs(a) * 50));
    }
}

TEST_CASE("reversed convolution residual scales as the cube of the distortion", "[predistort][property]") {
    const auto y = heaviside_step(1.0, 3000);
    std::vector<double> xs, ys;
    for (double s = 0.005; s <= 0.0501; s *= std::pow(10.0, 0.125)) {
        const auto h = channel_impulse({ShortTimeModel({{-s, 40.0}, {-s, 400.0}}), std::nullopt, 1.0}, 3000, 1.0);
        xs.push_back(std::log(s));
        ys.push_back(std::log(residual_sup(reversed_convolution_o2(y, h), h, y)));
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    CHECK_THAT(sxy / sxx, WithinAbs(3.0, 0.3));
}

TEST_CASE("reversed convolution warns far from identity", "[predistort]") {
    std::vector<std::string> warnings;
    const auto y = heaviside_step(1.0, 100);
    reversed_convolution_o2(y, single_exp_kernel(-0.02, 10.0, 100), &warnings);
    CHECK(warnings.empty());
    reversed_convolution_o2(y, ImpulseResponse::delay(1.0, 3, 100), &warnings);
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(reversed_convolution_o2(y, ImpulseResponse::unit(0.5)), IncompatibleSampling);
}

TEST_CASE("spectral inversion of the identity kernel is exact to round-off", "[predistort]") {
    const auto y = gaussian_bump(1000, 400.0, 60.0);
    const auto x = spectral_predistort(y, ImpulseResponse::unit(1.0, 1000));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK_THAT(x[i], WithinAbs(y[i], 1e-10));
}

TEST_CASE("spectral inversion corrects the two-term coupler model", "[predistort]") {
    const CombinedResponse chip2{testing::chip2_short(), std::nullopt, 1.0};
    const auto y = heaviside_step(1.0, 5000);
    const auto x = spectral_predistort(y, channel_impulse(chip2, 5000, 1.0));
    const auto check = forward_check(x, y, chip2);
    CHECK(check.max_deviation < 0.01);
    CHECK(check.skip == 2);
}

TEST_CASE("spectral inversion of a delay kernel advances the target", "[predistort]") {
    const auto y = gaussian_bump(1024, 600.0, 40.0);
    const std::size_t shift = 25;
    const auto x = spectral_predistort(y, ImpulseResponse::delay(1.0, shift, 1024), 0.0);
    for (std::size_t i = 0; i + shift < 900; ++i) CHECK_THAT(x[i], WithinAbs(y[i + shift], 1e-9));
}

TEST_CASE("spectral inversion converges as the floor vanishes", "[predistort][property]") {
    const auto h = single_exp_kernel(-0.04, 30.0, 2000);
    const auto y = heaviside_step(1.0, 2000);
    double prev = INFINITY;
    for (double reg : {1e-1, 1e-2, 1e-3}) {
        const double r = residual_sup(spectral_predistort(y, h, reg), h, y);
        CHECK(r < prev);
        prev = r;
    }
    CHECK(residual_sup(spectral_predistort(y, h, 0.0), h, y) < 1e-12);
}

TEST_CASE("spectral inversion rejects ill-conditioned channels", "[predistort][errors]") {
    const auto y = heaviside_step(1.0, 64);
    // First difference: the spectrum vanishes at dc.
    const ImpulseResponse diff(1.0, {1.0, -1.0});
    CHECK_THROWS_AS(spectral_predistort(y, diff), IllConditionedChannel);
    CHECK_THROWS_AS(spectral_predistort(y, diff, 0.0), IllConditionedChannel);
    CHECK_THROWS_AS(spectral_predistort(y, ImpulseResponse::unit(1.0), -1.0), InvalidArgument);
    CHECK_THROWS_AS(spectral_predistort(y, ImpulseResponse::unit(2.0)), IncompatibleSampling);
}

TEST_CASE("full pipeline is the identity without distortion", "[predistort]") {
    const auto y = heaviside_step(0.5, 300);
    CHECK(full_pipeline(y, CombinedResponse{}) == y);
    CHECK(apply_channel(y, CombinedResponse{}) == y);
}

TEST_CASE("full pipeline corrects the combined coupler model over 40 us", "[predistort]") {
    const auto resp = chip_preset(Chip::Chip1).channel;
    const auto y = heaviside_step(1.0, 40000);
    const auto x = full_pipeline(y, resp);
    const auto check = forward_check(x, y, resp);
    CHECK(check.max_deviation < 0.01);
}

TEST_CASE("forward check compares on the same grid", "[predistort][errors]") {
    const auto y = heaviside_step(1.0, 50);
    CHECK_THROWS_AS(forward_check(heaviside_step(1.0, 40), y, CombinedResponse{}), IncompatibleSampling);
    const auto c = forward_check(y, y, CombinedResponse{});
    CHECK(c.max_deviation == 0.0);
}

TEST_CASE("pipeline on sub-nanosecond grids", "[predistort]") {
    const CombinedResponse chip2{testing::chip2_short(), std::nullopt, 1.0};
    const auto y = heaviside_step(1.0, 2000, 0.5);
    const auto check = forward_check(full_pipeline(y, chip2), y, chip2);
    CHECK(check.max_deviation < 0.01);
}
