#include "fluxcal/errors.hpp"
#include "fluxcal/roundtrip.hpp"
#include "fluxcal/scenario.hpp"
#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace fluxcal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using nlohmann::json;

TEST_CASE("chip presets carry the tabulated numbers", "[scenario]") {
    const auto& c1 = chip_preset(Chip::Chip1);
    CHECK(c1.omega_q_ghz == 4.5780);
    CHECK(c1.g_mhz == 78.9);
    CHECK(c1.short_terms == 3);
    REQUIRE(c1.channel.long_time);
    CHECK(c1.channel.long_time->A() == 1.0127);
    CHECK(c1.channel.long_time->B() == 0.9935);
    CHECK(c1.channel.long_time->tau_us() == 18.684);
    const auto& c2 = chip_preset(Chip::Chip2);
    CHECK(c2.omega_q_ghz == 4.9030);
    CHECK(c2.g_mhz == 83.4);
    CHECK_FALSE(c2.channel.long_time);
    REQUIRE(c2.channel.short_time);
    CHECK(c2.channel.short_time->terms().size() == 2);
    CHECK_THAT(eval_short(*c2.channel.short_time, 0.0), WithinAbs(-0.040, 1e-15));

    CHECK_FALSE(preset_short_channel(Chip::Chip1).long_time);
    CHECK_FALSE(preset_long_channel(Chip::Chip1).short_time);
    CHECK(chip_from_string(to_string(Chip::Chip1)) == Chip::Chip1);
    CHECK_THROWS_AS(chip_from_string("chip3"), InvalidArgument);
}

TEST_CASE("preset systems reach the requested repulsion at v_step", "[scenario]") {
    for (Chip c : {Chip::Chip1, Chip::Chip2}) {
        const auto& preset = chip_preset(c);
        for (double r : {30.0, 50.0}) {
            const auto p = preset_system(c, 0.5, r);
            CHECK_THAT(p.coupler.frequency(0.0), WithinAbs(preset.coupler_idle_ghz, 1e-9));
            const auto wp = working_point(p, 0.5);
            CHECK_THAT(wp.dressed.omega_minus, WithinAbs(preset.omega_q_ghz - r * 1e-3, 1e-9));
            CHECK(wp.f_c_ghz > wp.f_q_ghz);
            CHECK_NOTHROW(p.validate(-0.1, 0.6));
        }
    }
    CHECK_THAT(detuning_for_repulsion(80.0, 40.0), WithinAbs(0.120, 1e-12));
    CHECK_THROWS_AS(detuning_for_repulsion(80.0, 80.0), InvalidArgument);
    CHECK_THROWS_AS(preset_system(Chip::Chip1, 0.0), InvalidArgument);
}

TEST_CASE("system json round-trips", "[scenario]") {
    auto p = preset_system(Chip::Chip2);
    p.coeff_zxtalk = 0.01;
    p.k_q_ghz_per_zpa = -0.2;
    const auto back = system_from_json(to_json(p));
    CHECK(back.omega_q_ghz == p.omega_q_ghz);
    CHECK(back.coeff_zxtalk == 0.01);
    for (double z : {-0.1, 0.2, 0.5}) CHECK(back.coupler.frequency(z) == p.coupler.frequency(z));
    const auto poly = system_from_json(json::parse(R"({"omega_q_ghz":4.9,"g_mhz":20,"coupler":{"polynomial":[6,-0.2]}})"));
    CHECK(poly.coupler.is_polynomial());
    CHECK_THROWS_AS(system_from_json(json::parse(R"({"omega_q_ghz":4.9})")), InvalidArgument);
}

TEST_CASE("scenario defaults", "[scenario]") {
    const auto s = scenario_from_json(json::parse(R"({"system":"chip2"})"));
    CHECK(s.system_label == "chip2");
    CHECK(s.v_step == kDefaultVStep);
    CHECK(s.regime == Regime::Short);
    CHECK(s.delays_ns.size() == 20);
    CHECK(s.delays_ns.front() == 20.0);
    CHECK(s.delays_ns.back() == 5000.0);
    CHECK(s.offsets.size() == 41);
    CHECK_THAT(s.offsets.back(), WithinAbs(0.03 * kDefaultVStep * 2.0, 1e-15));
    CHECK_FALSE(s.channel.short_time);
    CHECK(s.subtract_baseline);
    const auto lt = scenario_from_json(json::parse(R"({"system":"chip1","regime":"long"})"));
    CHECK(lt.delays_ns.back() == 40000.0);
}

TEST_CASE("scenario grids and channels", "[scenario]") {
    testing::TempDir dir("scenario");
    std::ofstream(dir / "model.json") << to_json(preset_short_channel(Chip::Chip1)).dump();
    const auto s = scenario_from_json(json::parse(R"({
        "system": "chip1",
        "channel": {"file": "model.json"},
        "delays_ns": {"start": 100, "stop": 1000, "count": 10, "spacing": "linear"},
        "offsets": [-0.01, 0.0, 0.01],
        "drive": {"t_pi_min_ns": 40, "subtract_baseline": false},
        "noise_sigma": 0.001, "seed": 7, "threads": 2
    })"), dir.path());
    CHECK(s.delays_ns[1] == 200.0);
    CHECK(s.offsets.size() == 3);
    CHECK(s.schedule.t_pi_min_ns == 40.0);
    CHECK_FALSE(s.subtract_baseline);
    REQUIRE(s.channel.short_time);
    CHECK(s.channel.short_time->terms().size() == 3);
    REQUIRE(s.referenced_files.size() == 1);
    CHECK(s.referenced_files[0] == dir / "model.json");
    CHECK(s.seed == 7);
    const auto o = simulation_options(s);
    CHECK(o.threads == 2);
    CHECK_FALSE(o.subtract_baseline);
    const auto j = to_json(s);
    CHECK(j.at("drive").at("envelope") == "gaussian");
    CHECK(j.at("drive").at("truncation_sigmas") == 2.0);

    for (const char* name : {"ideal", "chip1", "chip2", "chip1-short", "chip1-long"}) {
        json sc{{"system", "chip2"}, {"channel", name}};
        CHECK_NOTHROW(scenario_from_json(sc));
    }
}

TEST_CASE("scenario errors", "[scenario][errors]") {
    const char* bad[] = {
        R"([1, 2])",
        R"({"regime":"short"})",
        R"({"system":"chip9"})",
        R"({"system":"chip2","channel":"chip7"})",
        R"({"system":"chip2","regime":"medium"})",
        R"({"system":"chip2","dt_ns":0})",
        R"({"system":"chip2","noise_sigma":-1})",
        R"({"system":"chip2","threads":0})",
        R"({"system":"chip2","drive":{"t_pi_min_ns":300}})",
        R"({"system":"chip2","delays_ns":{"start":1,"stop":10,"count":5,"spacing":"cubic"}})",
        R"({"system":"chip2","delays_ns":{"start":1}})",
        R"({"system":"chip2","v_step":"big"})",
    };
    for (const char* text : bad) {
        INFO(text);
        CHECK_THROWS_AS(scenario_from_json(json::parse(text)), InvalidArgument);
    }
    CHECK_THROWS_AS(scenario_from_json(json::parse(R"({"system":"chip2","channel":{"file":"/nonexistent/m.json"}})")),
                    IoError);
}

TEST_CASE("noise is deterministic in the seed and scaled by v_step", "[scenario][property]") {
    CalibrationRun run;
    run.v_step = 0.5;
    run.delays_ns = log_spaced_delays(20, 5000, 500);
    run.compensation.assign(500, 0.0);
    const auto a = add_noise(run, 0.01, 3), b = add_noise(run, 0.01, 3), c = add_noise(run, 0.01, 4);
    CHECK(a.compensation == b.compensation);
    CHECK(a.compensation != c.compensation);
    double ss = 0.0;
    for (double v : a.compensation) ss += v * v;
    CHECK_THAT(std::sqrt(ss / 500.0), WithinRel(0.005, 0.1));
    CHECK(add_noise(run, 0.0, 3).compensation == run.compensation);
    CHECK_THROWS_AS(add_noise(run, -0.1, 3), InvalidArgument);
}

TEST_CASE("scenario run applies noise on top of the sweep", "[scenario]") {
    auto s = scenario_from_json(json::parse(R"({"system":"chip2","channel":"chip2",
        "delays_ns":{"start":50,"stop":2000,"count":4},"offsets":{"count":21}})"));
    const auto clean = run_scenario(s);
    s.noise_sigma = 0.002;
    s.seed = 11;
    const auto noisy = run_scenario(s);
    CHECK(noisy.run.compensation == add_noise(clean.run, 0.002, 11).compensation);
    const auto report = to_json(noisy.report, s.schedule);
    CHECK(report.at("rwa").at("valid") == true);
    CHECK(report.at("offset_grid").at("count") == 21);
    CHECK(report.at("baseline_offsets").size() == 4);
}

TEST_CASE("roundtrip on chip2 comes back flat", "[scenario][roundtrip]") {
    RoundtripOptions o;
    o.chip = Chip::Chip2;
    o.short_delays = 10;
    o.offsets = 31;
    const auto r = run_roundtrip(o);
    CHECK_FALSE(r.long_run);
    CHECK(r.short_fit.model.terms().size() == 2);
    CHECK(r.max_validation_residual < 0.01);
    CHECK(r.forward.max_deviation < 0.01 * o.v_step);
}
