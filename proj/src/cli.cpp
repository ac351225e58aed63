#include "fluxcal/cli.hpp"

#include "fluxcal/analysis.hpp"
#include "fluxcal/csv.hpp"
#include "fluxcal/errors.hpp"
#include "fluxcal/fitting.hpp"
#include "fluxcal/predistort.hpp"
#include "fluxcal/provenance.hpp"
#include "fluxcal/roundtrip.hpp"
#include "fluxcal/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <optional>

namespace fluxcal::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
    const auto text = csv::read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": invalid json: " + e.what());
    }
}

/// FLUXCAL_SEED wins over the flag, which wins over the fallback.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (const char* env = std::getenv("FLUXCAL_SEED"); env != nullptr && *env != '\0') {
        std::uint64_t v = 0;
        const char* end = env + std::char_traits<char>::length(env);
        const auto [ptr, ec] = std::from_chars(env, end, v);
        if (ec != std::errc() || ptr != end) throw InvalidArgument("FLUXCAL_SEED must be a non-negative integer");
        return v;
    }
    return flag.value_or(fallback);
}

void write_or_print(const std::optional<fs::path>& path, const std::string& text, std::ostream& out) {
    if (path) {
        csv::write_text(*path, text);
    } else {
        out << text;
    }
}

json run_summary(const CalibrationRun& run) {
    return {{"points", run.size()}, {"v_step", run.v_step}, {"regime", to_string(run.regime)}};
}

template <class Model>
json fit_summary(const FitReport<Model>& r) {
    return {{"rms", r.rms},
            {"flagged", r.flagged},
            {"degenerate", r.degenerate},
            {"iterations", r.iterations},
            {"starts", r.starts}};
}

// --- fit -------------------------------------------------------------------------

struct FitArgs {
    fs::path input;
    std::optional<fs::path> output;
    std::string regime = "short";
    int n_exp = 2;
    double v_step = kDefaultVStep;
    std::optional<double> k_q;
    double rms_threshold = FitOptions{}.rms_threshold;
    std::optional<double> tau_guess_us;
    int max_iterations = FitOptions{}.max_iterations;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
    const auto text = csv::read_text(a.input);
    if (csv::parse(text).rows.empty()) throw FitFailed(a.input.string() + " contains no data points");

    json settings{{"regime", a.regime}, {"input", a.input.generic_string()}};
    json result;
    if (a.regime == "anticrossing") {
        if (!a.k_q) throw InvalidArgument("--kq is required for the anti-crossing fit");
        const auto data = read_anticrossing_csv(a.input);
        const auto fit = fit_anticrossing(data, *a.k_q);
        settings["k_q_estimate"] = *a.k_q;
        result = {{"g_mhz", fit.g_mhz},
                  {"coupler_map", {{"slope", fit.coupler_map.slope}, {"intercept", fit.coupler_map.intercept}}},
                  {"crosstalk",
                   {{"k_q", fit.crosstalk.k_q},
                    {"b_q", fit.crosstalk.b_q},
                    {"k_eff", fit.crosstalk.k_eff},
                    {"b_eff", fit.crosstalk.b_eff},
                    {"coeff_zxtalk", fit.crosstalk.coeff_zxtalk}}},
                  {"residual_std", fit.residual_std},
                  {"degenerate", fit.degenerate},
                  {"points", data.points.size()}};
        if (fit.degenerate) err << "fluxcal: warning: no measurable coupling; g is unidentifiable\n";
        out << "anti-crossing fit: g = " << csv::format_real(fit.g_mhz) << " MHz, coeff_zxtalk = "
            << csv::format_real(fit.crosstalk.coeff_zxtalk) << '\n';
    } else {
        const Regime regime = regime_from_string(a.regime);
        const auto run = read_calibration_run_csv(a.input, a.v_step, regime);
        FitOptions opts;
        opts.rms_threshold = a.rms_threshold;
        opts.max_iterations = a.max_iterations;
        opts.tau_guess_us = a.tau_guess_us;
        settings["v_step"] = a.v_step;
        settings["rms_threshold"] = a.rms_threshold;
        settings["max_iterations"] = a.max_iterations;
        if (a.tau_guess_us) settings["tau_guess_us"] = *a.tau_guess_us;
        json fit_info;
        if (regime == Regime::Short) {
            settings["n_exp"] = a.n_exp;
            const auto fit = fit_short_time(run, a.n_exp, opts);
            result = to_json(CombinedResponse{fit.model, std::nullopt, a.v_step});
            fit_info = fit_summary(fit);
            if (fit.degenerate) err << "fluxcal: warning: data carry no distortion; relaxation times are arbitrary\n";
            out << "short-time fit: " << fit.model.size() << " terms, rms " << csv::format_real(fit.rms) << '\n';
        } else {
            const auto fit = fit_long_time(run, opts);
            result = to_json(CombinedResponse{std::nullopt, fit.model, a.v_step});
            fit_info = fit_summary(fit);
            if (fit.degenerate) err << "fluxcal: warning: constant data; tau is unidentifiable\n";
            out << "long-time fit: A " << csv::format_real(fit.model.A()) << ", B " << csv::format_real(fit.model.B())
                << ", tau " << csv::format_real(fit.model.tau_us()) << " us\n";
        }
        fit_info["data"] = run_summary(run);
        result["fit"] = fit_info;
        if (fit_info.at("flagged").get<bool>()) err << "fluxcal: warning: residual rms above threshold\n";
    }
    result["provenance"] = provenance("fit", {a.input}, settings);
    write_or_print(a.output, dump_json(result), out);
    return kExitOk;
}

// --- predistort --------------------------------------------------------------------

struct PredistortArgs {
    fs::path target;
    fs::path model;
    fs::path output;
    std::optional<fs::path> sidecar;
    double regularization = kDefaultRegularization;
};

int cmd_predistort(const PredistortArgs& a, std::ostream& out, std::ostream& err) {
    const auto model_json = read_json_file(a.model);
    const auto resp = combined_response_from_json(model_json);
    const auto target = read_waveform_csv(a.target);

    std::vector<std::string> warnings;
    const auto x = full_pipeline(target, resp, {a.regularization}, &warnings);
    for (const auto& w : warnings) err << "fluxcal: warning: " << w << '\n';
    write_waveform_csv(a.output, x);

    const auto check = forward_check(x, target, resp);
    const double scale = std::max(target.max_abs(), std::numeric_limits<double>::min());
    json sidecar{{"model", to_json(resp)},
                 {"output", a.output.generic_string()},
                 {"samples", x.size()},
                 {"dt_ns", x.dt()},
                 {"forward_check",
                  {{"max_deviation", check.max_deviation},
                   {"relative_to_peak", check.max_deviation / scale},
                   {"worst_index", check.worst_index},
                   {"skip_samples", check.skip}}},
                 {"warnings", warnings}};
    const json settings{{"regularization", a.regularization},
                        {"long_time_method", "second-order reversed convolution"},
                        {"short_time_method", "regularized spectral inversion"},
                        {"order", {"long", "short"}}};
    sidecar["provenance"] = provenance("predistort", {a.target, a.model}, settings);
    const fs::path sidecar_path = a.sidecar.value_or(fs::path(a.output).concat(".json"));
    csv::write_text(sidecar_path, dump_json(sidecar));
    out << "predistorted " << x.size() << " samples; forward-check max deviation "
        << csv::format_real(check.max_deviation / scale) << " of peak\n";
    return kExitOk;
}

// --- simulate ------------------------------------------------------------------------

struct SimulateArgs {
    fs::path scenario;
    fs::path output;
    std::optional<fs::path> report;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    const auto j = read_json_file(a.scenario);
    auto scenario = scenario_from_json(j, a.scenario.parent_path());
    if (a.threads) {
        if (*a.threads < 1) throw InvalidArgument("--threads must be at least 1");
        scenario.threads = *a.threads;
    }
    scenario.seed = resolve_seed(a.seed, scenario.seed);

    const auto sim = run_scenario(scenario);
    if (!sim.report.rwa_worst.valid) {
        err << "fluxcal: warning: rotating-wave margin exceeded (ratio " << csv::format_real(sim.report.rwa_worst.ratio)
            << ")\n";
    }
    write_calibration_run_csv(a.output, sim.run);

    json report{{"output", a.output.generic_string()},
                {"calibration", to_json(sim.report, scenario.schedule)},
                {"run", run_summary(sim.run)}};
    std::vector<fs::path> inputs{a.scenario};
    inputs.insert(inputs.end(), scenario.referenced_files.begin(), scenario.referenced_files.end());
    report["provenance"] = provenance("simulate", inputs, to_json(scenario));
    const fs::path report_path = a.report.value_or(fs::path(a.output).replace_extension(".json"));
    csv::write_text(report_path, dump_json(report));
    out << "simulated " << sim.run.size() << " delays x " << scenario.offsets.size() << " offsets\n";
    return kExitOk;
}

// --- analyze ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string scheme = "RB";
    int dimension = 4;
    fs::path gate;
    std::optional<fs::path> reference;
    std::optional<fs::path> sq;
    std::optional<fs::path> q1;
    std::optional<fs::path> q2;
    std::optional<fs::path> output;
};

DecayFit fit_file(const fs::path& path, const char* label, std::ostream& err) {
    const auto data = read_decay_csv(path);
    const auto fit = fit_decay(data.ns, data.fidelities);
    if (fit.degenerate) err << "fluxcal: warning: " << label << " decay is flat; p is unidentifiable\n";
    if (!fit.degenerate && (fit.A < 0.0 || fit.A > 1.0 || fit.B < 0.0 || fit.B > 1.0)) {
        err << "fluxcal: warning: " << label << " SPAM constants fall outside [0, 1]\n";
    }
    return fit;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
    const Scheme scheme = scheme_from_string(a.scheme);
    std::vector<fs::path> inputs{a.gate};
    const auto gate = fit_file(a.gate, "gate", err);
    json fits{{"gate", to_json(gate)}};
    json report{{"scheme", to_string(scheme)}, {"D", a.dimension}, {"p_gate", gate.p}, {"sigma_p_gate", gate.sigma_p}};

    FidelityEstimate est;
    if (scheme == Scheme::RB) {
        if (!a.reference) throw InvalidArgument("RB needs --reference");
        inputs.push_back(*a.reference);
        const auto ref = fit_file(*a.reference, "reference", err);
        fits["reference"] = to_json(ref);
        report["p_ref"] = ref.p;
        report["sigma_p_ref"] = ref.sigma_p;
        est = rb_fidelity(gate, ref, a.dimension);
    } else {
        DecayFit sq;
        if (a.sq) {
            if (a.q1 || a.q2) throw InvalidArgument("give either --sq or --q1/--q2, not both");
            inputs.push_back(*a.sq);
            sq = fit_file(*a.sq, "single-qubit", err);
            fits["sq"] = to_json(sq);
        } else {
            if (!a.q1 || !a.q2) throw InvalidArgument("XEB needs --sq or both --q1 and --q2");
            inputs.push_back(*a.q1);
            inputs.push_back(*a.q2);
            const auto f1 = fit_file(*a.q1, "q1", err);
            const auto f2 = fit_file(*a.q2, "q2", err);
            fits["q1"] = to_json(f1);
            fits["q2"] = to_json(f2);
            sq = xeb_parallel_combine(f1, f2);
        }
        report["p_sq"] = sq.p;
        report["sigma_p_sq"] = sq.sigma_p;
        est = xeb_fidelity(gate, sq, a.dimension);
    }
    report["fidelity"] = est.fidelity;
    report["sigma"] = est.sigma;
    report["fits"] = fits;
    report["provenance"] = provenance("analyze", inputs, {{"scheme", to_string(scheme)}, {"D", a.dimension}});
    if (a.output) out << to_string(scheme) << " fidelity " << csv::format_real(est.fidelity) << " +- "
                      << csv::format_real(est.sigma) << '\n';
    write_or_print(a.output, dump_json(report), out);
    return kExitOk;
}

// --- roundtrip ---------------------------------------------------------------------------

struct RoundtripArgs {
    std::string chip = "chip2";
    fs::path out_dir;
    RoundtripOptions options;
    std::optional<std::uint64_t> seed;
};

json sweep_json(const SimulatedCalibration& s, const DriveSchedule& schedule) {
    json j = to_json(s.report, schedule);
    j["run"] = run_summary(s.run);
    j["delays_ns"] = s.run.delays_ns;
    return j;
}

int cmd_roundtrip(RoundtripArgs a, std::ostream& out, std::ostream& err) {
    a.options.chip = chip_from_string(a.chip);
    a.options.seed = resolve_seed(a.seed, 0);
    if (a.options.threads < 1) throw InvalidArgument("--threads must be at least 1");
    const auto r = run_roundtrip(a.options);
    for (const auto& w : r.warnings) err << "fluxcal: warning: " << w << '\n';

    fs::create_directories(a.out_dir);
    auto path = [&](const char* name) { return a.out_dir / name; };
    if (r.long_run) write_calibration_run_csv(path("long_run.csv"), r.long_run->run);
    write_calibration_run_csv(path("short_run.csv"), r.short_run.run);
    write_waveform_csv(path("predistorted.csv"), r.predistorted);
    write_calibration_run_csv(path("validation_short.csv"), r.validation_short.run);
    if (r.validation_long) write_calibration_run_csv(path("validation_long.csv"), r.validation_long->run);

    json model = to_json(r.fitted);
    model["fit"] = {{"short", fit_summary(r.short_fit)}};
    if (r.long_fit) model["fit"]["long"] = fit_summary(*r.long_fit);
    csv::write_text(path("model.json"), dump_json(model));

    const auto& o = a.options;
    const json settings{{"chip", a.chip},
                        {"v_step", o.v_step},
                        {"n_exp", o.n_exp > 0 ? o.n_exp : chip_preset(o.chip).short_terms},
                        {"noise_sigma", o.noise_sigma},
                        {"seed", o.seed},
                        {"threads", o.threads},
                        {"short_delays", {{"start_ns", o.short_start_ns}, {"stop_ns", o.short_stop_ns}, {"count", o.short_delays}}},
                        {"long_delays", {{"start_ns", o.long_start_ns}, {"stop_ns", o.long_stop_ns}, {"count", o.long_delays}}},
                        {"offsets", {{"span_fraction", o.offset_span}, {"count", o.offsets}}},
                        {"dt_ns", o.dt_ns},
                        {"regularization", kDefaultRegularization},
                        {"system", to_json(r.system)},
                        {"drive",
                         {{"t_pi_min_ns", r.schedule.t_pi_min_ns},
                          {"t_pi_max_ns", r.schedule.t_pi_max_ns},
                          {"sigma_fraction", r.schedule.sigma_fraction},
                          {"subtract_baseline", true}}}};
    const double flat_tolerance = 0.01;
    json report{{"truth", to_json(r.truth)},
                {"fitted", to_json(r.fitted)},
                {"rabi_at_t_max_mhz", r.rabi_at_t_max_mhz},
                {"short_sweep", sweep_json(r.short_run, r.schedule)},
                {"validation_short", sweep_json(r.validation_short, r.schedule)},
                {"forward_check",
                 {{"max_deviation_relative", r.forward.max_deviation / std::abs(o.v_step)},
                  {"worst_index", r.forward.worst_index},
                  {"skip_samples", r.forward.skip}}},
                {"max_validation_residual", r.max_validation_residual},
                {"flat_tolerance", flat_tolerance},
                {"flat", r.max_validation_residual < flat_tolerance},
                {"warnings", r.warnings}};
    if (r.long_run) report["long_sweep"] = sweep_json(*r.long_run, r.schedule);
    if (r.validation_long) report["validation_long"] = sweep_json(*r.validation_long, r.schedule);
    report["provenance"] = provenance("roundtrip", {}, settings);
    csv::write_text(path("report.json"), dump_json(report));

    out << "roundtrip " << a.chip << ": max validation residual " << csv::format_real(r.max_validation_residual)
        << " of v_step (" << (r.max_validation_residual < flat_tolerance ? "flat" : "NOT flat") << ")\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Calibration and predistortion of coupler flux pulses."};
    app.name(kToolName);
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 1 usage or I/O error, 2 numerical failure.\n"
               "FLUXCAL_SEED, when set, overrides every seed.");

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Fit a distortion model (or an anti-crossing) to measured points.");
    fit->add_option("-i,--input", fa.input, "CSV: t_ns,v_oft (or zpa_c,f_ghz,branch for anticrossing)")->required();
    fit->add_option("-o,--out", fa.output, "model JSON (default: stdout)");
    fit->add_option("--regime", fa.regime, "short | long | anticrossing")
        ->check(CLI::IsMember({"short", "long", "anticrossing"}));
    fit->add_option("--n-exp", fa.n_exp, "number of exponentials for the short-time fit")->check(CLI::Range(1, 4));
    fit->add_option("--v-step", fa.v_step, "step amplitude used in the calibration");
    fit->add_option("--kq", fa.k_q, "qubit Z-line slope estimate (GHz per a.u.), anticrossing only");
    fit->add_option("--rms-threshold", fa.rms_threshold, "flag fits whose residual rms exceeds this");
    fit->add_option("--tau-guess-us", fa.tau_guess_us, "long-time tau seed; delays must span 3x it");
    fit->add_option("--max-iterations", fa.max_iterations, "Levenberg-Marquardt iteration cap");

    PredistortArgs pa;
    auto* pre = app.add_subcommand("predistort", "Predistort a target waveform through a fitted model.");
    pre->add_option("-t,--target", pa.target, "target waveform CSV (t_ns,amplitude)")->required();
    pre->add_option("-m,--model", pa.model, "model JSON")->required();
    pre->add_option("-o,--out", pa.output, "predistorted waveform CSV")->required();
    pre->add_option("--sidecar", pa.sidecar, "settings/forward-check JSON (default: <out>.json)");
    pre->add_option("--regularization", pa.regularization, "spectral floor relative to max|H|");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Replay the calibration sweep on the qubit-coupler simulator.");
    sim->add_option("-s,--scenario", sa.scenario, "scenario JSON")->required();
    sim->add_option("-o,--out", sa.output, "calibration run CSV (t_ns,v_oft)")->required();
    sim->add_option("--report", sa.report, "report JSON (default: <out> with .json)");
    sim->add_option("--threads", sa.threads, "worker threads for the sweep");
    sim->add_option("--seed", sa.seed, "noise seed (overrides the scenario)");

    AnalyzeArgs aa;
    auto* ana = app.add_subcommand("analyze", "Gate fidelity from RB or XEB decay data.");
    ana->add_option("--scheme", aa.scheme, "RB | XEB")->check(CLI::IsMember({"RB", "XEB", "rb", "xeb"}));
    ana->add_option("-D,--dimension", aa.dimension, "Hilbert-space dimension")->check(CLI::Range(2, 1 << 20));
    ana->add_option("-g,--gate", aa.gate, "decay CSV (n,fidelity) of the interleaved / gate sequence")->required();
    ana->add_option("-r,--reference", aa.reference, "RB reference decay CSV");
    ana->add_option("--sq", aa.sq, "XEB single-qubit layer decay CSV");
    ana->add_option("--q1", aa.q1, "XEB decay CSV of qubit 1 alone");
    ana->add_option("--q2", aa.q2, "XEB decay CSV of qubit 2 alone");
    ana->add_option("-o,--out", aa.output, "report JSON (default: stdout)");

    RoundtripArgs ra;
    auto* rt = app.add_subcommand("roundtrip", "Simulate, fit, predistort and re-simulate a preset device.");
    rt->add_option("--chip", ra.chip, "chip1 | chip2")->check(CLI::IsMember({"chip1", "chip2"}));
    rt->add_option("-o,--out", ra.out_dir, "output directory")->required();
    rt->add_option("--n-exp", ra.options.n_exp, "short-time terms to fit (default: the preset's)");
    rt->add_option("--v-step", ra.options.v_step, "probing step amplitude");
    rt->add_option("--noise-sigma", ra.options.noise_sigma, "Gaussian noise on V_oft, relative to v_step");
    rt->add_option("--seed", ra.seed, "noise seed");
    rt->add_option("--threads", ra.options.threads, "worker threads for the sweeps");
    rt->add_option("--short-delays", ra.options.short_delays, "delay points of the short sweep");
    rt->add_option("--long-delays", ra.options.long_delays, "delay points of the long sweep");
    rt->add_option("--offsets", ra.options.offsets, "offset points per delay");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (fit->parsed()) return cmd_fit(fa, out, err);
        if (pre->parsed()) return cmd_predistort(pa, out, err);
        if (sim->parsed()) return cmd_simulate(sa, out, err);
        if (ana->parsed()) return cmd_analyze(aa, out, err);
        if (rt->parsed()) return cmd_roundtrip(ra, out, err);
    } catch (const Error& e) {
        err << "fluxcal: error: " << e.what() << '\n';
        return e.is_numerical() ? kExitNumerical : kExitUsage;
    } catch (const std::exception& e) {
        err << "fluxcal: error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace fluxcal::cli
