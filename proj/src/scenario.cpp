#include "fluxcal/scenario.hpp"

#include "fluxcal/errors.hpp"
#include "fluxcal/csv.hpp"

#include <cmath>
#include <random>

namespace fluxcal {

namespace {

using nlohmann::json;

CombinedResponse chip1_channel() {
    return {ShortTimeModel({{-0.024, 17.61}, {-0.011, 132.07}, {-0.006, 1305.15}}),
            LongTimeModel(1.0127, 0.9935, 18.684), 1.0};
}

CombinedResponse chip2_channel() {
    return {ShortTimeModel({{-0.019, 47.83}, {-0.021, 528.10}}), std::nullopt, 1.0};
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

CouplerMap coupler_from_json(const json& j) {
    if (j.contains("polynomial")) return CouplerMap::polynomial(j.at("polynomial").get<std::vector<double>>());
    return CouplerMap::transmon(j.at("f_max_ghz").get<double>(), get_or(j, "asymmetry", 0.0),
                                j.at("flux_idle").get<double>(), j.at("flux_per_zpa").get<double>());
}

json coupler_to_json(const CouplerMap& m) {
    if (m.is_polynomial()) return {{"polynomial", m.coefficients()}};
    return {{"f_max_ghz", m.f_max_ghz()},
            {"asymmetry", m.asymmetry()},
            {"flux_idle", m.flux_idle()},
            {"flux_per_zpa", m.flux_per_zpa()}};
}

CombinedResponse channel_from_json(const json& j, const std::filesystem::path& base,
                                   std::vector<std::filesystem::path>& files) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "ideal") return {};
        if (name == "chip1") return chip1_channel();
        if (name == "chip2") return chip2_channel();
        if (name == "chip1-short") return preset_short_channel(Chip::Chip1);
        if (name == "chip1-long") return preset_long_channel(Chip::Chip1);
        throw InvalidArgument("unknown channel preset '" + name + "'");
    }
    if (j.is_object() && j.contains("file")) {
        const auto path = resolve(base, j.at("file").get<std::string>());
        files.push_back(path);
        json model;
        try {
            model = json::parse(csv::read_text(path));
        } catch (const json::parse_error& e) {
            throw InvalidArgument("model file " + path.string() + " is not valid json: " + e.what());
        }
        return combined_response_from_json(model);
    }
    return combined_response_from_json(j);
}

std::vector<double> delays_from_json(const json& j, Regime regime) {
    if (j.is_null()) {
        return regime == Regime::Long ? log_spaced_delays(2000.0, 40000.0, 20) : log_spaced_delays(20.0, 5000.0, 20);
    }
    if (j.is_array()) return j.get<std::vector<double>>();
    const double start = j.at("start").get<double>();
    const double stop = j.at("stop").get<double>();
    const int count = j.at("count").get<int>();
    const auto spacing = get_or<std::string>(j, "spacing", "log");
    if (spacing == "log") return log_spaced_delays(start, stop, count);
    if (spacing == "linear") return linear_delays(start, stop, count);
    throw InvalidArgument("delay spacing must be 'log' or 'linear'");
}

}  // namespace

std::string to_string(Chip c) { return c == Chip::Chip1 ? "chip1" : "chip2"; }

Chip chip_from_string(const std::string& s) {
    if (s == "chip1") return Chip::Chip1;
    if (s == "chip2") return Chip::Chip2;
    throw InvalidArgument("unknown chip '" + s + "' (expected chip1 or chip2)");
}

const ChipPreset& chip_preset(Chip c) {
    // Asymmetry is not tabulated for either device; symmetric junctions are assumed.
    static const ChipPreset chip1{Chip::Chip1, 4.5780, 78.9, 6.3031, 5.7405, 0.0, chip1_channel(), 3};
    static const ChipPreset chip2{Chip::Chip2, 4.9030, 83.4, 8.3157, 7.6635, 0.0, chip2_channel(), 2};
    return c == Chip::Chip1 ? chip1 : chip2;
}

CombinedResponse preset_short_channel(Chip c) {
    auto r = chip_preset(c).channel;
    r.long_time.reset();
    return r;
}

CombinedResponse preset_long_channel(Chip c) {
    auto r = chip_preset(c).channel;
    r.short_time.reset();
    return r;
}

double detuning_for_repulsion(double g_mhz, double repulsion_mhz) {
    if (!(g_mhz > 0.0) || !(repulsion_mhz > 0.0) || !(repulsion_mhz < g_mhz)) {
        throw InvalidArgument("repulsion must lie in (0, g)");
    }
    // (sqrt(D^2 + 4 g^2) - D) / 2 = r  =>  D = (g^2 - r^2) / r
    const double g = g_mhz * 1e-3, r = repulsion_mhz * 1e-3;
    return (g * g - r * r) / r;
}

SystemParams preset_system(Chip c, double v_step, double repulsion_mhz) {
    if (!std::isfinite(v_step) || v_step == 0.0) throw InvalidArgument("v_step must be non-zero");
    const auto& preset = chip_preset(c);
    const auto unit = CouplerMap::transmon(preset.coupler_sweet_ghz, preset.asymmetry, 0.0, 1.0);
    const double flux_idle = unit.flux_for_frequency(preset.coupler_idle_ghz);
    const double f_work = preset.omega_q_ghz + detuning_for_repulsion(preset.g_mhz, repulsion_mhz);
    const double flux_work = unit.flux_for_frequency(f_work);
    SystemParams p;
    p.omega_q_ghz = preset.omega_q_ghz;
    p.g_mhz = preset.g_mhz;
    p.coupler = unit.with_flux(flux_idle, (flux_work - flux_idle) / v_step);
    return p;
}

SystemParams system_from_json(const json& j) {
    try {
        SystemParams p;
        p.omega_q_ghz = j.at("omega_q_ghz").get<double>();
        p.g_mhz = j.at("g_mhz").get<double>();
        p.coupler = coupler_from_json(j.at("coupler"));
        p.coeff_zxtalk = get_or(j, "coeff_zxtalk", 0.0);
        p.k_q_ghz_per_zpa = get_or(j, "k_q_ghz_per_zpa", 0.0);
        return p;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed system parameters: ") + e.what());
    }
}

json to_json(const SystemParams& p) {
    return {{"omega_q_ghz", p.omega_q_ghz},
            {"g_mhz", p.g_mhz},
            {"coupler", coupler_to_json(p.coupler)},
            {"coeff_zxtalk", p.coeff_zxtalk},
            {"k_q_ghz_per_zpa", p.k_q_ghz_per_zpa}};
}

Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw InvalidArgument("scenario must be a json object");
    Scenario s;
    try {
        s.v_step = get_or(j, "v_step", kDefaultVStep);
        s.regime = regime_from_string(get_or<std::string>(j, "regime", "short"));
        if (!j.contains("system")) throw InvalidArgument("scenario needs a \"system\"");
        const auto& sys = j.at("system");
        if (sys.is_string()) {
            s.system_label = sys.get<std::string>();
            s.system = preset_system(chip_from_string(s.system_label), s.v_step,
                                     get_or(j, "repulsion_mhz", kDefaultRepulsionMhz));
        } else {
            s.system_label = "custom";
            s.system = system_from_json(sys);
        }
        if (j.contains("drive")) {
            const auto& d = j.at("drive");
            s.schedule.t_pi_min_ns = get_or(d, "t_pi_min_ns", s.schedule.t_pi_min_ns);
            s.schedule.t_pi_max_ns = get_or(d, "t_pi_max_ns", s.schedule.t_pi_max_ns);
            s.schedule.sigma_fraction = get_or(d, "sigma_fraction", s.schedule.sigma_fraction);
            if (d.contains("rabi_at_t_max_mhz")) s.rabi_at_t_max_mhz = d.at("rabi_at_t_max_mhz").get<double>();
            s.subtract_baseline = get_or(d, "subtract_baseline", s.subtract_baseline);
        }
        if (!(s.schedule.t_pi_min_ns > 0.0 && s.schedule.t_pi_max_ns >= s.schedule.t_pi_min_ns)) {
            throw InvalidArgument("drive schedule needs 0 < t_pi_min <= t_pi_max");
        }
        if (!(s.schedule.sigma_fraction > 0.0)) throw InvalidArgument("sigma_fraction must be positive");
        if (j.contains("channel")) s.channel = channel_from_json(j.at("channel"), base_dir, s.referenced_files);
        s.dt_ns = get_or(j, "dt_ns", kDefaultDtNs);
        if (!(s.dt_ns > 0.0)) throw InvalidArgument("dt_ns must be positive");
        if (j.contains("input")) {
            const auto path = resolve(base_dir, j.at("input").at("file").get<std::string>());
            s.referenced_files.push_back(path);
            s.input_pulse = read_waveform_csv(path);
        }
        s.delays_ns = delays_from_json(j.contains("delays_ns") ? j.at("delays_ns") : json(), s.regime);
        const json offsets = j.contains("offsets") ? j.at("offsets") : json::object();
        if (offsets.is_array()) {
            s.offsets = offsets.get<std::vector<double>>();
        } else {
            s.offsets = uniform_offsets(s.v_step, get_or(offsets, "span_fraction", 0.06), get_or(offsets, "count", 41));
        }
        s.noise_sigma = get_or(j, "noise_sigma", 0.0);
        if (!(s.noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
        s.seed = get_or<std::uint64_t>(j, "seed", 0);
        s.threads = get_or(j, "threads", 1);
        if (s.threads < 1) throw InvalidArgument("threads must be at least 1");
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

json to_json(const Scenario& s) {
    json j{{"system_label", s.system_label},
           {"system", to_json(s.system)},
           {"v_step", s.v_step},
           {"regime", to_string(s.regime)},
           {"drive",
            {{"t_pi_min_ns", s.schedule.t_pi_min_ns},
             {"t_pi_max_ns", s.schedule.t_pi_max_ns},
             {"sigma_fraction", s.schedule.sigma_fraction},
             {"envelope", "gaussian"},
             {"truncation_sigmas", 0.5 / s.schedule.sigma_fraction}}},
           {"channel", to_json(s.channel)},
           {"delays_ns", s.delays_ns},
           {"offsets", s.offsets},
           {"dt_ns", s.dt_ns},
           {"noise_sigma", s.noise_sigma},
           {"seed", s.seed},
           {"threads", s.threads},
           {"input_pulse", s.input_pulse ? json("file") : json("ideal step")}};
    if (s.rabi_at_t_max_mhz) j["drive"]["rabi_at_t_max_mhz"] = *s.rabi_at_t_max_mhz;
    j["drive"]["subtract_baseline"] = s.subtract_baseline;
    return j;
}

SimulationOptions simulation_options(const Scenario& s) {
    SimulationOptions o;
    o.v_step = s.v_step;
    o.dt_ns = s.dt_ns;
    o.regime = s.regime;
    o.input_pulse = s.input_pulse;
    o.rabi_at_t_max_mhz = s.rabi_at_t_max_mhz;
    o.threads = s.threads;
    o.subtract_baseline = s.subtract_baseline;
    return o;
}

CalibrationRun add_noise(CalibrationRun run, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
    if (sigma == 0.0) return run;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma * std::abs(run.v_step));
    for (double& v : run.compensation) v += noise(rng);
    return run;
}

SimulatedCalibration run_scenario(const Scenario& s) {
    auto sim = simulate_calibration(s.system, s.schedule, s.channel, s.delays_ns, s.offsets, simulation_options(s));
    sim.run = add_noise(std::move(sim.run), s.noise_sigma, s.seed);
    return sim;
}

json to_json(const CalibrationReport& r, const DriveSchedule& schedule) {
    const auto& wp = r.working_point;
    const double spacing = r.offsets.size() > 1
                               ? (r.offsets.back() - r.offsets.front()) / static_cast<double>(r.offsets.size() - 1)
                               : 0.0;
    return {{"working_point",
             {{"zpa", wp.zpa},
              {"f_q_ghz", wp.f_q_ghz},
              {"f_c_ghz", wp.f_c_ghz},
              {"omega_minus_ghz", wp.dressed.omega_minus},
              {"omega_plus_ghz", wp.dressed.omega_plus},
              {"splitting_mhz", wp.dressed.splitting() * 1e3},
              {"qubit_weight_minus", wp.dressed.minus[0] * wp.dressed.minus[0]}}},
            {"drive_frequency_ghz", wp.omega_d_ghz()},
            {"baseline_offsets", r.baseline},
            {"rabi_at_t_max_mhz", r.rabi_at_t_max_mhz},
            {"rwa",
             {{"valid", r.rwa_worst.valid}, {"ratio", r.rwa_worst.ratio}, {"margin_factor", r.rwa_worst.margin_factor}}},
            {"envelope",
             {{"shape", "gaussian"},
              {"sigma_fraction", schedule.sigma_fraction},
              {"truncation_sigmas", 0.5 / schedule.sigma_fraction}}},
            {"t_pi_ns", r.t_pi_ns},
            {"peak_population", r.peak_population},
            {"offset_grid",
             {{"count", r.offsets.size()},
              {"min", r.offsets.empty() ? 0.0 : r.offsets.front()},
              {"max", r.offsets.empty() ? 0.0 : r.offsets.back()},
              {"spacing", spacing}}},
            {"max_norm_error", r.max_norm_error}};
}

}  // namespace fluxcal
