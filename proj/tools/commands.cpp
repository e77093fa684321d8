#include "commands.hpp"

#include <filesystem>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "camsim/awareness_model.hpp"
#include "camsim/csv.hpp"
#include "camsim/error.hpp"
#include "camsim/experiments.hpp"
#include "manifest.hpp"
#include "scenario_config.hpp"

namespace camsim::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string out = "runs";
};

struct Paths {
    std::string scenario;
    std::string channel;
    std::string beacon;
    std::string spec;
    std::string log;
    std::string pdr;
    std::string nar;
    std::string model;
};

struct AnalyzeFlags {
    double pdr_bin = 25.0;
    double nar_bin = 50.0;
    double window = 1.0;
    std::uint64_t min_samples = 40;
    std::optional<double> rnar_r;
    std::optional<double> max_distance;
    std::vector<double> windows;
    int rate = 10;
    double equipped = 1.0;
};

struct FitFlags {
    std::string weights = "samples";
    double z_min = 0.5;
    double z_max = 20.0;
    double z_low = 2.0;
    double z_high = 8.0;
};

void add_input(RunManifest& m, const fs::path& p)
{
    auto digest = file_sha256(p);  // may throw; keep it out of the braced init
    m.inputs.push_back({p.string(), std::move(digest)});
}

ChannelConfig load_channel(const std::string& path, RunManifest& m)
{
    if (path.empty()) return {};
    add_input(m, path);
    return channel_config_from_json(read_json(path));
}

BeaconConfig load_beacon(const std::string& path, RunManifest& m)
{
    if (path.empty()) return {};
    add_input(m, path);
    return beacon_config_from_json(read_json(path));
}

ScenarioConfig load_scenario(const std::string& path, RunManifest& m)
{
    add_input(m, path);
    auto cfg = load_scenario_config(path);
    for (const auto& p : cfg.inputs()) add_input(m, p);
    m.config["scenario"] = cfg.doc;
    return cfg;
}

fs::path make_run_dir(const Common& c, const RunManifest& m)
{
    const fs::path dir = fs::path(c.out) / m.run_name();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create run directory {}: {}", dir.string(), ec.message()));
    return dir;
}

void finish(const fs::path& dir, RunManifest& m, const std::vector<fs::path>& outputs, std::ostream& out)
{
    write_manifest(dir, m, outputs);
    out << dir.string() << "\n";
}

std::string number_tag(double x) { return fmt::format("{:g}", x); }

// ---------------------------------------------------------------------------

void cmd_gen_scenario(const Common& c, const Paths& p, std::ostream& out)
{
    RunManifest m{"gen-scenario", nlohmann::json::object(), {c.seed}, {}, {}};
    const auto cfg = load_scenario(p.scenario, m);
    const Scenario scn = build_scenario(cfg, c.seed);
    const fs::path dir = make_run_dir(c, m);
    std::vector<fs::path> outputs{dir / "trace.csv"};
    save_trace(outputs[0], scn);
    if (!scn.obstacles().empty()) {
        outputs.push_back(dir / "obstacles.csv");
        save_obstacles(outputs.back(), scn.obstacles());
    }
    finish(dir, m, outputs, out);
}

void cmd_simulate(const Common& c, const Paths& p, std::ostream& out)
{
    RunManifest m{"simulate", nlohmann::json::object(), {c.seed}, {}, {}};
    const auto scfg = load_scenario(p.scenario, m);
    const ChannelConfig channel = load_channel(p.channel, m);
    const BeaconConfig beacon = load_beacon(p.beacon, m);
    validate(channel);
    m.config["channel"] = to_json(channel);
    m.config["beacon"] = to_json(beacon);
    const Scenario scn = build_scenario(scfg, c.seed);
    validate(beacon, scn.ticks_per_second());

    const fs::path dir = make_run_dir(c, m);
    const fs::path log_path = dir / "simlog.csv";
    LogWriter writer(log_path);
    const RunStats stats = run(scn, beacon, channel, c.seed, [&](std::span<const LinkSample> s) { writer.write(s); },
                               c.workers);
    writer.close();

    std::uint64_t emissions = 0;
    auto per_node = nlohmann::json::array();
    for (const auto& [id, n] : stats.emissions) {
        emissions += n;
        per_node.push_back({id, n});
    }
    const nlohmann::json sidecar = {
        {"seed", c.seed},
        {"environment", to_string(scn.environment())},
        {"duration_s", scn.duration_s()},
        {"tick_s", scn.tick_s()},
        {"nodes", scn.node_ids().size()},
        {"emissions", emissions},
        {"emissions_per_node", per_node},
        {"samples", stats.samples},
        {"received", stats.received},
        {"beacon", to_json(beacon)},
        {"channel", to_json(channel)},
    };
    const fs::path side = dir / "simlog.json";
    csv::write_atomic(side, sidecar.dump(2) + "\n");
    finish(dir, m, {log_path, side}, out);
}

void cmd_analyze(const Common& c, const Paths& p, const AnalyzeFlags& f, std::ostream& out)
{
    if (!(f.pdr_bin > 0.0) || !(f.nar_bin > 0.0) || !(f.window > 0.0))
        throw ConfigError("bin widths and window must be > 0");
    RunManifest m{"analyze", nlohmann::json::object(), {c.seed}, {}, {}};
    add_input(m, p.log);
    const auto scfg = load_scenario(p.scenario, m);
    m.config["metrics"] = {
        {"pdr_bin_m", f.pdr_bin}, {"nar_bin_m", f.nar_bin},   {"window_s", f.window},
        {"min_samples", f.min_samples}, {"rnar_r_m", nullptr}, {"max_distance_m", nullptr},
        {"windows_s", f.windows},       {"rate_hz", f.rate},       {"equipped_fraction", f.equipped},
    };
    if (f.rnar_r) m.config["metrics"]["rnar_r_m"] = *f.rnar_r;
    if (f.max_distance) m.config["metrics"]["max_distance_m"] = *f.max_distance;
    const Scenario scn = build_scenario(scfg, c.seed);
    const double max_d = f.max_distance.value_or(std::numeric_limits<double>::infinity());

    // One streaming pass feeds every accumulator.
    PdrAccumulator pdr(f.pdr_bin);
    PdrAccumulator pdr_coarse(f.nar_bin);
    const NeighborTruth truth(scn, f.nar_bin, f.window, max_d, f.equipped, c.seed);
    NarAccumulator nar(truth, scn);
    BurstAccumulator burst;
    IrtAccumulator irt;
    std::optional<RnarAccumulator> rnar;
    if (f.rnar_r) rnar.emplace(f.window, scn.duration_s());
    std::vector<NeighborTruth> wtruth;
    std::vector<NarAccumulator> wnar;
    wtruth.reserve(f.windows.size());
    wnar.reserve(f.windows.size());
    for (double w : f.windows) {
        if (!(w > 0.0)) throw ConfigError("window lengths must be > 0");
        wtruth.emplace_back(scn, f.nar_bin, w, max_d, f.equipped, c.seed);
    }
    for (const auto& t : wtruth) wnar.emplace_back(t, scn);

    read_log_csv(p.log, [&](std::span<const LinkSample> batch) {
        pdr.add(batch);
        pdr_coarse.add(batch);
        nar.add(batch);
        burst.add(batch);
        irt.add(batch);
        if (rnar) rnar->add(batch);
        for (auto& a : wnar) a.add(batch);
    });

    const fs::path dir = make_run_dir(c, m);
    std::vector<fs::path> outputs;
    auto series = [&](const std::string& name, const BinnedSeries& s) {
        outputs.push_back(dir / name);
        write_series_csv(outputs.back(), s);
    };
    const BinnedSeries pdr_s = pdr.finish(f.min_samples);
    const BinnedSeries nar_s = nar.finish(f.min_samples);
    series("pdr.csv", pdr_s);
    series("pdr_nar_bins.csv", pdr_coarse.finish(f.min_samples));
    series("nar.csv", nar_s);

    const std::vector<PlotCurve> pdr_plot{{"pdr.csv", "PDR"}};
    outputs.push_back(dir / "pdr.gp");
    write_series_plot(outputs.back(), pdr_plot, "PDR", "pdr.png");
    const std::vector<PlotCurve> nar_plot{{"nar.csv", fmt::format("NAR, t = {} s", number_tag(f.window))}};
    outputs.push_back(dir / "nar.gp");
    write_series_plot(outputs.back(), nar_plot, "NAR", "nar.png");

    if (rnar) {
        outputs.push_back(dir / "rnar.csv");
        write_rnar_csv(outputs.back(), rnar->finish(*f.rnar_r));
    }

    if (!f.windows.empty()) {
        std::vector<PlotCurve> curves;
        auto flagged = nlohmann::json::array();
        for (std::size_t i = 0; i < f.windows.size(); ++i) {
            const auto name = fmt::format("nar_window_{}s.csv", number_tag(f.windows[i]));
            series(name, wnar[i].finish(f.min_samples));
            curves.push_back({name, fmt::format("t = {} s", number_tag(f.windows[i]))});
            if (f.windows[i] * f.rate < 1.0 - 1e-9) flagged.push_back(f.windows[i]);
        }
        outputs.push_back(dir / "nar_windows.gp");
        write_series_plot(outputs.back(), curves, "NAR", "nar_windows.png");
        m.config["metrics"]["flagged_windows_s"] = flagged;
    }

    const BurstStats b = burst.finish();
    auto hist = nlohmann::json::array();
    for (const auto& [k, n] : irt.histogram()) hist.push_back({k, n});
    auto range = [](const RangeResult& r) { return nlohmann::json{{"meters", r.meters}, {"flagged", r.flagged}}; };
    const nlohmann::json summary = {
        {"effective_range_m", range(effective_range(pdr_s))},
        {"max_range_m", range(max_range(pdr_s))},
        {"nar90_distance_m", range(nar_threshold_distance(nar_s))},
        {"burst",
         {{"p_success", b.p_success},
          {"p_success_after_success", b.p_success_after_success},
          {"links", b.links},
          {"transitions", b.transitions}}},
        {"irt_histogram", hist},
    };
    outputs.push_back(dir / "summary.json");
    csv::write_atomic(outputs.back(), summary.dump(2) + "\n");
    finish(dir, m, outputs, out);
}

void cmd_fit(const Common& c, const Paths& p, const FitFlags& f, std::ostream& out)
{
    RunManifest m{"fit-z", nlohmann::json::object(), {}, {}, {}};
    add_input(m, p.pdr);
    add_input(m, p.nar);
    m.config["fit"] = {{"weights", f.weights}, {"z_min", f.z_min}, {"z_max", f.z_max},
                       {"z_low", f.z_low},     {"z_high", f.z_high}};
    const BinnedSeries pdr = read_series_csv(p.pdr);
    const BinnedSeries nar = read_series_csv(p.nar);
    const auto pairs = fit_pairs(pdr, nar, f.weights);
    FitOptions opt;
    opt.z_min = f.z_min;
    opt.z_max = f.z_max;
    AwarenessModel model = fit_z(pairs, opt);
    model.weights_mode = f.weights;
    model.z_low = f.z_low;
    model.z_high = f.z_high;

    const BinnedSeries pdr_nar = pdr.bin_width_m < nar.bin_width_m ? rebin(pdr, nar.bin_width_m) : pdr;
    const NarBounds bounds = nar_bounds(pdr_nar, f.z_low, f.z_high);
    const BinnedSeries fitted = model_series(pdr_nar, model.z);

    const fs::path dir = make_run_dir(c, m);
    const fs::path model_path = dir / "model.json";
    csv::write_atomic(model_path, to_json(model).dump(2) + "\n");
    std::string text = "bin_center_m,pdr,nar_low,nar_high,nar_model\n";
    for (std::size_t i = 0; i < pdr_nar.bins.size(); ++i) {
        const auto& b = pdr_nar.bins[i];
        if (b.excluded) continue;
        text += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", b.center_m, b.mean, bounds.lower.bins[i].mean,
                            bounds.upper.bins[i].mean, fitted.bins[i].mean);
    }
    const fs::path bounds_path = dir / "bounds.csv";
    csv::write_atomic(bounds_path, text);
    finish(dir, m, {model_path, bounds_path}, out);
}

void cmd_validate(const Common& c, const Paths& p, std::ostream& out)
{
    RunManifest m{"validate", nlohmann::json::object(), {}, {}, {}};
    add_input(m, p.nar);
    add_input(m, p.pdr);
    add_input(m, p.model);
    const BinnedSeries measured = read_series_csv(p.nar);
    const BinnedSeries pdr = read_series_csv(p.pdr);
    const auto model_doc = read_json(p.model);
    if (!model_doc.is_object() || !model_doc.contains("Z") || !model_doc.at("Z").is_number())
        throw ConfigError(fmt::format("{}: model needs a numeric 'Z'", p.model));
    const double z = model_doc.at("Z").get<double>();
    m.config["Z"] = z;

    const BinnedSeries pdr_nar = pdr.bin_width_m < measured.bin_width_m ? rebin(pdr, measured.bin_width_m) : pdr;
    BinnedSeries model = model_series(pdr_nar, z);
    // Compare on the bins both series include.
    BinnedSeries meas_common = measured;
    meas_common.bins.clear();
    BinnedSeries model_common = model;
    model_common.bins.clear();
    for (const auto& b : measured.bins) {
        if (b.excluded) continue;
        const Bin* mb = model.find(b.center_m);
        if (!mb || mb->excluded) continue;
        meas_common.bins.push_back(b);
        model_common.bins.push_back(*mb);
    }
    const ValidationReport report = validate_model(meas_common, model_common);
    nlohmann::json j = to_json(report);
    j["Z"] = z;

    const fs::path dir = make_run_dir(c, m);
    const fs::path path = dir / "report.json";
    csv::write_atomic(path, j.dump(2) + "\n");
    finish(dir, m, {path}, out);
}

void cmd_sweep(const Common& c, const Paths& p, std::ostream& out, std::ostream& err, bool quiet)
{
    RunManifest m{"sweep", nlohmann::json::object(), {}, {}, {}};
    const auto scfg = load_scenario(p.scenario, m);
    const ChannelConfig channel = load_channel(p.channel, m);
    const BeaconConfig beacon = load_beacon(p.beacon, m);
    validate(channel);
    add_input(m, p.spec);
    const auto spec_doc = read_json(p.spec);
    SweepSpec spec = sweep_spec_from_json(spec_doc);
    if (!spec_doc.contains("seeds")) spec.seeds = {c.seed};
    m.seeds = {c.seed};
    m.seeds.insert(m.seeds.end(), spec.seeds.begin(), spec.seeds.end());
    m.config["channel"] = to_json(channel);
    m.config["beacon"] = to_json(beacon);
    m.config["sweep"] = to_json(spec);

    const Scenario scn = build_scenario(scfg, c.seed);
    validate(spec, scn.ticks_per_second());
    std::function<void(std::size_t, std::size_t)> progress;
    if (!quiet) progress = [&](std::size_t done, std::size_t total) { err << fmt::format("tick {}/{}\r", done, total); };
    const Surface surface = run_sweep(scn, spec, beacon, channel, c.workers, progress);
    if (!quiet) err << "\n";

    const fs::path dir = make_run_dir(c, m);
    finish(dir, m, write_surfaces(dir, surface), out);
}

int report(std::ostream& err, std::string_view kind, std::string_view what, int code)
{
    std::string msg(what);
    for (char& ch : msg)
        if (ch == '\n' || ch == '\r') ch = ' ';
    err << "error: " << kind << ": " << msg << "\n";
    return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Cooperative awareness simulation and analysis toolkit", "camsim"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    Common common;
    Paths paths;
    AnalyzeFlags af;
    FitFlags ff;
    bool quiet = false;

    auto seed_opt = [&](CLI::App* s) { s->add_option("--seed", common.seed, "Seed for every random draw")->required(); };
    auto out_opt = [&](CLI::App* s) {
        s->add_option("--out", common.out, "Base directory; outputs go to <out>/<config digest>")
            ->capture_default_str();
    };
    auto workers_opt = [&](CLI::App* s) {
        s->add_option("--workers", common.workers, "Worker threads (output does not depend on it)")
            ->capture_default_str()
            ->check(CLI::Range(1, 1024));
    };

    auto* gen = app.add_subcommand("gen-scenario", "Generate or ingest a scenario and write it as trace CSV");
    gen->add_option("--scenario", paths.scenario, "Scenario config JSON")->required();
    seed_opt(gen);
    out_opt(gen);

    auto* sim = app.add_subcommand("simulate", "Simulate beaconing and write the reception log");
    sim->add_option("--scenario", paths.scenario, "Scenario config JSON")->required();
    sim->add_option("--channel", paths.channel, "Channel config JSON (defaults when omitted)");
    sim->add_option("--beacon", paths.beacon, "Beacon config JSON (defaults when omitted)");
    seed_opt(sim);
    out_opt(sim);
    workers_opt(sim);

    auto* ana = app.add_subcommand("analyze", "PDR, NAR, RNAR and burst statistics of a reception log");
    ana->add_option("--log", paths.log, "Reception log CSV")->required();
    ana->add_option("--scenario", paths.scenario, "Scenario config the log was simulated on")->required();
    seed_opt(ana);
    out_opt(ana);
    ana->add_option("--pdr-bin", af.pdr_bin, "PDR bin width [m]")->capture_default_str();
    ana->add_option("--nar-bin", af.nar_bin, "NAR bin width [m]")->capture_default_str();
    ana->add_option("--window", af.window, "NAR window t [s]")->capture_default_str();
    ana->add_option("--min-samples", af.min_samples, "Bins with fewer samples are excluded")->capture_default_str();
    ana->add_option("--rnar-R", af.rnar_r, "Relevance radius R for RNAR [m]");
    ana->add_option("--max-distance", af.max_distance, "Ignore neighbors beyond this distance [m]");
    ana->add_option("--windows", af.windows, "Extra NAR windows [s], e.g. 0.1,0.2,0.5,1,2")->delimiter(',');
    ana->add_option("--rate", af.rate, "Beacon rate of the log, for flagging short windows")->capture_default_str();
    ana->add_option("--equipped", af.equipped, "Share of nodes that take part in V2X; the rest only count as neighbors")
        ->capture_default_str();

    auto* fit = app.add_subcommand("fit-z", "Fit the awareness model parameter Z");
    fit->add_option("--pdr", paths.pdr, "PDR series CSV")->required();
    fit->add_option("--nar", paths.nar, "NAR series CSV")->required();
    fit->add_option("--weights", ff.weights, "samples or uniform")
        ->capture_default_str()
        ->check(CLI::IsMember({"samples", "uniform"}));
    fit->add_option("--z-min", ff.z_min, "Lower end of the Z search")->capture_default_str();
    fit->add_option("--z-max", ff.z_max, "Upper end of the Z search")->capture_default_str();
    fit->add_option("--z-low", ff.z_low, "Lower bound curve Z")->capture_default_str();
    fit->add_option("--z-high", ff.z_high, "Upper bound curve Z")->capture_default_str();
    out_opt(fit);

    auto* swp = app.add_subcommand("sweep", "Power x rate NAR surfaces");
    swp->add_option("--scenario", paths.scenario, "Scenario config JSON")->required();
    swp->add_option("--spec", paths.spec, "Sweep spec JSON")->required();
    swp->add_option("--channel", paths.channel, "Channel config JSON (defaults when omitted)");
    swp->add_option("--beacon", paths.beacon, "Base beacon config JSON (defaults when omitted)");
    swp->add_flag("--quiet", quiet, "No progress output");
    seed_opt(swp);
    out_opt(swp);
    workers_opt(swp);

    auto* val = app.add_subcommand("validate", "Measured NAR against the fitted model");
    val->add_option("--measured", paths.nar, "Measured NAR series CSV")->required();
    val->add_option("--pdr", paths.pdr, "PDR series CSV")->required();
    val->add_option("--model", paths.model, "Model JSON from fit-z")->required();
    out_opt(val);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        return report(err, "usage", e.what(), 2);
    }

    try {
        if (gen->parsed()) cmd_gen_scenario(common, paths, out);
        else if (sim->parsed()) cmd_simulate(common, paths, out);
        else if (ana->parsed()) cmd_analyze(common, paths, af, out);
        else if (fit->parsed()) cmd_fit(common, paths, ff, out);
        else if (swp->parsed()) cmd_sweep(common, paths, out, err, quiet);
        else if (val->parsed()) cmd_validate(common, paths, out);
    } catch (const Error& e) {
        return report(err, e.kind(), e.what(), 1);
    } catch (const nlohmann::json::exception& e) {
        return report(err, "config", e.what(), 1);
    } catch (const std::exception& e) {
        return report(err, "internal", e.what(), 1);
    }
    return 0;
}

}  // namespace camsim::cli
