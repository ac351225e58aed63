#include "fluxcal/analysis.hpp"
#include "fluxcal/errors.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <random>

using namespace fluxcal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DecayFit decay(double p, double sigma) {
    DecayFit f;
    f.p = p;
    f.sigma_p = sigma;
    return f;
}

std::vector<int> lengths(int count, int step) {
    std::vector<int> ns;
    for (int i = 1; i <= count; ++i) ns.push_back(i * step);
    return ns;
}

// First-order propagation by central differences in both depolarization parameters.
double propagated_sigma(const auto& f, const DecayFit& a, const DecayFit& b) {
    const double h = 1e-6;
    const double da = (f(a.p + h, b.p) - f(a.p - h, b.p)) / (2.0 * h);
    const double db = (f(a.p, b.p + h) - f(a.p, b.p - h)) / (2.0 * h);
    return std::hypot(da * a.sigma_p, db * b.sigma_p);
}

}  // namespace

TEST_CASE("noiseless decay recovers p", "[analysis]") {
    const auto ns = lengths(30, 10);
    std::vector<double> F;
    for (int n : ns) F.push_back(0.75 * std::pow(0.99, n) + 0.25);
    const auto fit = fit_decay(ns, F);
    CHECK_THAT(fit.p, WithinAbs(0.99, 1e-6));
    CHECK_THAT(fit.A, WithinAbs(0.75, 1e-6));
    CHECK_THAT(fit.B, WithinAbs(0.25, 1e-6));
    CHECK(fit.sigma_p < 1e-8);
    CHECK_FALSE(fit.degenerate);
}

TEST_CASE("flat decay data is degenerate", "[analysis]") {
    const auto fit = fit_decay(lengths(10, 5), std::vector<double>(10, 0.6));
    CHECK(fit.degenerate);
    CHECK_THAT(fit.B, WithinAbs(0.6, 1e-15));
}

TEST_CASE("decay fit input checks", "[analysis][errors]") {
    CHECK_THROWS_AS(fit_decay({1, 2, 3, 4}, {0.9, 0.8, 0.7, 0.6}), InvalidArgument);
    CHECK_THROWS_AS(fit_decay({1, 1, 2, 2, 3, 3}, {0.9, 0.9, 0.8, 0.8, 0.7, 0.7}), InvalidArgument);
    CHECK_THROWS_AS(fit_decay({1, 2, 3, 4, 5}, {0.9, 0.8, 1.2, 0.6, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(fit_decay({1, 2, 3, 4, 5}, {0.9, 0.8}), InvalidArgument);
}

TEST_CASE("decay uncertainty is calibrated", "[analysis][property]") {
    const auto ns = lengths(25, 8);
    int covered = 0;
    const int seeds = 200;
    for (int seed = 0; seed < seeds; ++seed) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
        std::normal_distribution<double> noise(0.0, 0.01);
        std::vector<double> F;
        for (int n : ns) F.push_back(0.7 * std::pow(0.99, n) + 0.25 + noise(rng));
        const auto fit = fit_decay(ns, F);
        if (std::abs(fit.p - 0.99) <= 3.0 * fit.sigma_p) ++covered;
    }
    CHECK(covered >= 0.95 * seeds);
}

TEST_CASE("RB fidelity", "[analysis]") {
    const auto same = rb_fidelity(decay(0.98, 0.001), decay(0.98, 0.002));
    CHECK(same.fidelity == 1.0);
    CHECK_THAT(same.sigma, WithinRel(0.75 * std::hypot(0.001 / 0.98, 0.002 / 0.98), 1e-14));

    const auto est = rb_fidelity(decay(0.99, 0.0), decay(0.995, 0.0), 4);
    CHECK_THAT(est.fidelity, WithinAbs(1.0 - (1.0 - 0.99 / 0.995) * 0.75, 1e-15));
    CHECK_THAT(est.fidelity, WithinAbs(0.996231, 1e-6));
    CHECK(est.scheme == Scheme::RB);
    CHECK(est.dimension == 4);

    CHECK_THROWS_AS(rb_fidelity(decay(0.99, 0.0), decay(0.0, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(rb_fidelity(decay(1.2, 0.0), decay(0.99, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(rb_fidelity(decay(0.9, 0.0), decay(0.99, 0.0), 1), InvalidArgument);
}

TEST_CASE("fidelity uncertainty matches finite differences", "[analysis][property]") {
    const auto gate = decay(0.9871, 0.0007), ref = decay(0.9952, 0.0004);
    for (int D : {2, 4, 8}) {
        const double c = (D - 1.0) / D;
        auto F = [c](double pg, double pr) { return 1.0 - (1.0 - pg / pr) * c; };
        CHECK_THAT(rb_fidelity(gate, ref, D).sigma, WithinAbs(propagated_sigma(F, gate, ref), 1e-8));
        CHECK_THAT(xeb_fidelity(gate, ref, D).sigma, WithinAbs(propagated_sigma(F, gate, ref), 1e-8));
    }
}

TEST_CASE("parallel single-qubit combination", "[analysis]") {
    CHECK(xeb_parallel_combine(decay(1.0, 0.0), decay(1.0, 0.0)).p == 1.0);
    for (double p : {0.9, 0.97, 0.999}) {
        CHECK_THAT(xeb_parallel_combine(decay(1.0, 0.0), decay(p, 0.0)).p, WithinAbs((1.0 + 4.0 * p) / 5.0, 1e-15));
    }
    const auto q1 = decay(0.9962, 0.0003), q2 = decay(0.9948, 0.0005);
    const auto sq = xeb_parallel_combine(q1, q2);
    auto combine = [](double a, double b) { return (a + b + 3.0 * a * b) / 5.0; };
    CHECK_THAT(sq.sigma_p, WithinAbs(propagated_sigma(combine, q1, q2), 1e-8));
    CHECK(sq.derived);
    CHECK_FALSE(to_json(sq).contains("A"));
}

TEST_CASE("XEB fidelity at the diabatic CZ scale", "[analysis]") {
    const auto sq = decay(0.99, 0.0002);
    const auto gate = decay(0.99 * (1.0 - 0.0039 / 0.75), 0.0003);
    const auto est = xeb_fidelity(gate, sq);
    CHECK_THAT(est.fidelity, WithinAbs(0.9961, 1e-12));
    CHECK(est.scheme == Scheme::XEB);
    CHECK(xeb_fidelity(sq, sq).fidelity == 1.0);
    CHECK_THROWS_AS(xeb_fidelity(gate, decay(0.0, 0.0)), InvalidArgument);
}

TEST_CASE("fidelity is monotone in both depolarization parameters", "[analysis][property]") {
    double previous = -1.0;
    for (double pg = 0.90; pg <= 1.0; pg += 0.01) {
        const double f = rb_fidelity(decay(pg, 0.0), decay(0.995, 0.0)).fidelity;
        CHECK(f > previous);
        previous = f;
    }
    previous = 2.0;
    for (double pr = 0.95; pr <= 1.0; pr += 0.005) {
        const double f = xeb_fidelity(decay(0.95, 0.0), decay(pr, 0.0)).fidelity;
        CHECK(f < previous);
        previous = f;
    }
}

TEST_CASE("dimension enters only through (D-1)/D", "[analysis]") {
    const auto gate = decay(0.98, 0.0), ref = decay(0.99, 0.0);
    const double r = 0.98 / 0.99;
    CHECK_THAT(rb_fidelity(gate, ref, 2).fidelity, WithinAbs(1.0 - 0.5 * (1.0 - r), 1e-15));
    CHECK_THAT(rb_fidelity(gate, ref, 1 << 20).fidelity, WithinAbs(r, 1e-6));
}

TEST_CASE("decay CSV and JSON", "[analysis]") {
    testing::TempDir dir("analysis");
    const DecayData data{{1, 5, 10, 20, 50}, {0.99, 0.96, 0.93, 0.87, 0.71}};
    const auto path = dir / "decay.csv";
    std::ofstream(path) << decay_to_csv(data);
    const auto back = read_decay_csv(path);
    CHECK(back.ns == data.ns);
    CHECK(back.fidelities == data.fidelities);

    std::ofstream(dir / "bad.csv") << "n,fidelity\n1,0.9\n2.5,0.8\n";
    CHECK_THROWS_AS(read_decay_csv(dir / "bad.csv"), IoError);
    std::ofstream(dir / "cols.csv") << "n,F\n1,0.9\n";
    CHECK_THROWS_AS(read_decay_csv(dir / "cols.csv"), IoError);

    const auto j = to_json(rb_fidelity(decay(0.99, 0.001), decay(0.995, 0.001)));
    CHECK(j.at("scheme") == "RB");
    CHECK(j.at("D") == 4);
    CHECK(scheme_from_string("xeb") == Scheme::XEB);
    CHECK_THROWS_AS(scheme_from_string("irb"), InvalidArgument);
}
