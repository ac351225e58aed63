#include "fluxcal/errors.hpp"
#include "fluxcal/models.hpp"
#include "fluxcal/signal.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace fluxcal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> as_vector(const Waveform& w) { return {w.samples().begin(), w.samples().end()}; }

}  // namespace

TEST_CASE("heaviside step has the requested amplitude and length", "[signal]") {
    CHECK(as_vector(heaviside_step(1.0, 4, 1)) == std::vector<double>{1, 1, 1, 1});
    CHECK(as_vector(heaviside_step(0.0, 3, 1)) == std::vector<double>{0, 0, 0});
    const auto w = heaviside_step(0.5, 2, 0.5);
    CHECK(as_vector(w) == std::vector<double>{0.5, 0.5, 0.5, 0.5});
    CHECK(w.dt() == 0.5);
}

TEST_CASE("heaviside step rejects non-positive dt and too-short durations", "[signal][errors]") {
    CHECK_THROWS_AS(heaviside_step(1.0, 4, 0.0), InvalidArgument);
    CHECK_THROWS_AS(heaviside_step(1.0, 4, -1.0), InvalidArgument);
    CHECK_THROWS_AS(heaviside_step(1.0, 0.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(heaviside_step(1.0, 0.5, 1.0), InvalidArgument);
}

TEST_CASE("waveform invariants are enforced", "[signal][errors]") {
    CHECK_THROWS_AS(Waveform(1.0, {}), InvalidArgument);
    CHECK_THROWS_AS(Waveform(0.0, {1.0}), InvalidArgument);
    CHECK_THROWS_AS(Waveform(1.0, {1.0, std::nan("")}), InvalidArgument);
    CHECK_THROWS_AS(Waveform(1.0, {INFINITY}), InvalidArgument);
    CHECK_THROWS_AS(ImpulseResponse(1.0, {}), InvalidArgument);
    const Waveform a(1.0, {1, 2}), b(0.5, {1, 2}), c(1.0, {1, 2, 3});
    CHECK_THROWS_AS(a + b, IncompatibleSampling);
    CHECK_THROWS_AS(a - c, IncompatibleSampling);
}

TEST_CASE("value_at interpolates linearly and clamps", "[signal]") {
    const Waveform w(2.0, {0.0, 1.0, 3.0});
    CHECK(w.value_at(-1.0) == 0.0);
    CHECK(w.value_at(1.0) == 0.5);
    CHECK(w.value_at(3.0) == 2.0);
    CHECK(w.value_at(100.0) == 3.0);
}

TEST_CASE("convolution with the unit impulse is the identity", "[signal]") {
    const Waveform w(0.5, {0.3, -1.0, 2.5, 4.0, 0.1});
    const auto out = convolve(w, ImpulseResponse::unit(0.5, 5));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK_THAT(out[i], WithinAbs(w[i], 1e-15));
    CHECK_THAT(ImpulseResponse::unit(0.25).dc_gain(), WithinAbs(1.0, 1e-12));
    CHECK(ImpulseResponse::unit(0.25).distance_from_identity() == 0.0);
}

TEST_CASE("convolution of the zero waveform is zero", "[signal]") {
    const Waveform zero(1.0, std::vector<double>(16, 0.0));
    const auto h = step_to_impulse(step_response_grid({testing::chip2_short(), std::nullopt, 1.0}, 16));
    const auto out = convolve(zero, h);
    for (double v : out.samples()) CHECK(v == 0.0);
}

TEST_CASE("convolution follows the dt-weighted Riemann sum", "[signal]") {
    const Waveform in(0.5, {1.0, 2.0, 3.0});
    const ImpulseResponse h(0.5, {2.0, 1.0});
    const auto out = convolve(in, h);
    // out[n] = 0.5 * sum in[n-k] h[k]
    CHECK_THAT(out[0], WithinAbs(0.5 * 2.0, 1e-15));
    CHECK_THAT(out[1], WithinAbs(0.5 * (2.0 * 2.0 + 1.0 * 1.0), 1e-15));
    CHECK_THAT(out[2], WithinAbs(0.5 * (3.0 * 2.0 + 2.0 * 1.0), 1e-15));
    CHECK_THROWS_AS(convolve(in, ImpulseResponse(1.0, {1.0})), IncompatibleSampling);
}

TEST_CASE("delay kernel shifts the input", "[signal]") {
    const Waveform w(1.0, {1, 2, 3, 4, 5});
    const auto out = convolve(w, ImpulseResponse::delay(1.0, 2, 5));
    CHECK(as_vector(out) == std::vector<double>{0, 0, 1, 2, 3});
}

TEST_CASE("step to impulse inverts convolution with the unit step", "[signal]") {
    SECTION("ideal unit step gives the unit impulse") {
        const auto h = step_to_impulse(heaviside_step(1.0, 8, 0.5));
        CHECK_THAT(h.kernel()[0], WithinAbs(2.0, 1e-15));
        for (std::size_t i = 1; i < h.size(); ++i) CHECK(h.kernel()[i] == 0.0);
    }
    SECTION("constant step c is an impulse of weight c") {
        const auto h = step_to_impulse(heaviside_step(0.7, 6, 1.0));
        CHECK_THAT(h.dc_gain(), WithinAbs(0.7, 1e-15));
        CHECK(h.kernel()[0] == 0.7);
    }
    SECTION("long-time model reconvolves to the continuous model") {
        const CombinedResponse lt{std::nullopt, testing::chip1_long(), 1.0};
        const double duration = 40000.0;
        const auto s = step_response_grid(lt, duration, 1.0);
        const auto back = convolve(heaviside_step(1.0, duration, 1.0), step_to_impulse(s));
        double worst = 0.0;
        for (std::size_t n = 0; n < back.size(); n += 7) {
            worst = std::max(worst, std::abs(back[n] - eval_long(testing::chip1_long(), n / kNsPerUs)));
        }
        CHECK(worst < 1e-6);
    }
    SECTION("stepping with amplitude v reproduces v * s") {
        const CombinedResponse st{testing::chip2_short(), std::nullopt, 1.0};
        const auto s = step_response_grid(st, 2000, 1.0);
        const auto out = convolve(heaviside_step(0.5, 2000, 1.0), step_to_impulse(s));
        for (std::size_t n = 0; n < out.size(); n += 13) {
            CHECK_THAT(out[n], WithinAbs(0.5 * normalized_step(st, static_cast<double>(n)), 1e-12));
        }
    }
    CHECK_THROWS_AS(step_to_impulse(Waveform(1.0, {1.0})), InvalidArgument);
}

TEST_CASE("negate_compensation flips sign and normalizes", "[signal]") {
    const Waveform zero(1.0, {0.0, 0.0});
    const auto negated = negate_compensation(zero, 0.5);
    for (double v : negated.samples()) CHECK(v == 0.0);
    const double v_step = 0.5;
    const double s0 = eval_short(testing::chip2_short(), 0.0);
    const Waveform comp(1.0, {-s0 * v_step});
    CHECK_THAT(negate_compensation(comp, v_step)[0], WithinAbs(-0.040, 1e-15));
    const Waveform comp2(1.0, {-0.040 * v_step});
    CHECK_THAT(negate_compensation(comp2, v_step)[0], WithinAbs(0.040, 1e-15));
    // Negating twice with v_step = -1 restores the input.
    const Waveform w(1.0, {0.1, -0.2, 0.3});
    CHECK(negate_compensation(negate_compensation(w, -1.0), -1.0) == w);
    CHECK_THROWS_AS(negate_compensation(w, 0.0), InvalidArgument);
}

TEST_CASE("convolution is linear", "[signal][property]") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(64), b(64), k(24);
        for (auto& v : a) v = n01(rng);
        for (auto& v : b) v = n01(rng);
        for (auto& v : k) v = n01(rng);
        const double alpha = n01(rng), beta = n01(rng);
        const Waveform w1(0.5, a), w2(0.5, b);
        const ImpulseResponse h(0.5, k);
        const auto lhs = convolve(add_scaled(w1.scaled(alpha), w2, beta), h);
        const auto rhs = add_scaled(convolve(w1, h).scaled(alpha), convolve(w2, h), beta);
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            CHECK_THAT(lhs[i], WithinAbs(rhs[i], 1e-9 * std::max(1.0, std::abs(rhs[i]))));
        }
    }
}

TEST_CASE("long constant input converges to the dc gain", "[signal][property]") {
    const auto s = step_response_grid({testing::chip2_short(), std::nullopt, 1.0}, 8000, 1.0);
    const auto h = step_to_impulse(s);
    const auto out = convolve(heaviside_step(2.0, 8000, 1.0), h);
    CHECK_THAT(out[out.size() - 1], WithinRel(2.0 * h.dc_gain(), 1e-9));
}

TEST_CASE("impulse recovery error shrinks at first order with dt", "[signal][property]") {
    // Continuous h(t) of the step model is s'(t); the grid kernel approximates it.
    const ShortTimeModel m({{-0.03, 20.0}});
    auto error_at = [&](double dt) {
        const auto s = step_response_grid({m, std::nullopt, 1.0}, 200.0, dt);
        const auto h = step_to_impulse(s);
        double worst = 0.0;
        for (std::size_t n = 1; n < h.size(); ++n) {
            const double t = n * dt;
            const double exact = 0.03 / 20.0 * std::exp(-t / 20.0);
            worst = std::max(worst, std::abs(h.kernel()[n] - exact));
        }
        return worst;
    };
    const double e1 = error_at(1.0), e2 = error_at(0.5), e3 = error_at(0.25);
    CHECK_THAT(e1 / e2, WithinAbs(2.0, 0.1));
    CHECK_THAT(e2 / e3, WithinAbs(2.0, 0.1));
}

TEST_CASE("waveform csv round trip and validation", "[signal][io]") {
    const Waveform w(0.5, {0.1, 1.0 / 3.0, -2.0, 1e-300});
    CHECK(waveform_from_csv(waveform_to_csv(w)) == w);
    testing::TempDir dir("signal");
    write_waveform_csv(dir / "w.csv", w);
    CHECK(read_waveform_csv(dir / "w.csv") == w);

    CHECK_THROWS_AS(waveform_from_csv("t_ns,amplitude\n0,1\n"), IoError);
    CHECK_THROWS_AS(waveform_from_csv("t,amplitude\n0,1\n1,2\n"), IoError);
    CHECK_THROWS_AS(waveform_from_csv("t_ns,amplitude\n0,1\n1,2\n2.5,3\n"), IoError);
    CHECK_THROWS_AS(waveform_from_csv("t_ns,amplitude\n1,1\n2,2\n"), IoError);
    CHECK_THROWS_AS(waveform_from_csv("t_ns,amplitude\n0,1\n1,x\n"), IoError);
    CHECK_THROWS_AS(read_waveform_csv(dir / "missing.csv"), IoError);
    const auto w2 = waveform_from_csv("t_ns,amplitude\n0,1\n1.0000000000001,2\n2,3\n");
    CHECK(w2.size() == 3);
}
