// qdas: command-line front end for code generation, layout planning,
// simulation, decoding and the end-to-end reproduction runs.
//
// Exit codes: 0 success, 2 infeasible plan, 3 decode failure, 4 config error.

#include "qdas/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace qdas;

constexpr int kExitInfeasible = 2;
constexpr int kExitDecode = 3;
constexpr int kExitConfig = 4;

std::vector<Excitation> parse_tones(const std::vector<std::string>& specs) {
    std::vector<Excitation> out;
    for (const auto& spec : specs) {
        std::vector<double> parts;
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ':')) {
            try {
                parts.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ConfigError("--tone '" + spec + "': expected sensor:freq_hz:amp_rad[:phase_rad]");
            }
        }
        if (parts.size() < 3 || parts.size() > 4)
            throw ConfigError("--tone '" + spec + "': expected sensor:freq_hz:amp_rad[:phase_rad]");
        out.push_back({static_cast<int>(parts[0]), parts[1], parts[2], parts.size() == 4 ? parts[3] : 0.0});
    }
    return out;
}

void print_feasibility(const FeasibilityReport& rep, const ResidueSet& res) {
    std::printf("%-8s %-6s %14s %14s\n", "sensor", "peak", "delay_us", "residue_us");
    for (const auto& p : res.peaks)
        std::printf("%-8d %-6d %14.4f %14.4f\n", p.ref.sensor_id, p.ref.peak_id, p.delay * 1e6, p.residue * 1e6);
    std::printf("period_us           %.4f\n", res.period * 1e6);
    std::printf("delta_ns            %.1f\n", rep.delta * 1e9);
    std::printf("min_circular_gap_ns %.1f\n", rep.min_circular_gap * 1e9);
    std::printf("feasible            %s\n", rep.feasible ? "yes" : "no");
    if (rep.violating_pair)
        std::printf("violating_pair      %s <-> %s\n", to_string(rep.violating_pair->first).c_str(),
                    to_string(rep.violating_pair->second).c_str());
}

void print_report(const RunReport& r) {
    std::printf("periods %zu, scan rate %.2f Hz, min circular gap %.1f ns\n", r.periods, r.scan_rate,
                r.plan.min_circular_gap * 1e9);
    for (const auto& s : r.sensors) {
        if (s.dominant_tone)
            std::printf("sensor %d: tone %.1f Hz, SNR %.1f dB, amplitude %.4f rad\n", s.sensor_id, *s.dominant_tone,
                        s.snr_db, s.tone_amplitude);
        else
            std::printf("sensor %d: no tone (flat phase)\n", s.sensor_id);
    }
    std::printf("timing: simulate %.3f s, correlate %.3f s, demod %.3f s\n", r.simulate_s, r.correlate_s, r.demod_s);
}

RawCapture load_capture(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open capture " + path);
    return read_capture(in);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Code-multiplexed quasi-distributed fiber sensing toolkit"};
    app.require_subcommand(1);

    // gen-code
    auto* gen = app.add_subcommand("gen-code", "Generate a Legendre code (or its zero-sidelobe reference)");
    int gen_n = 0;
    bool gen_ref = false;
    std::string gen_format = "text", gen_out;
    gen->add_option("--n", gen_n, "Code length (prime, 3 mod 4)")->required();
    gen->add_flag("--reference", gen_ref, "Emit the {0,2} reference instead of the chips");
    gen->add_option("--format", gen_format, "text | binary")->check(CLI::IsMember({"text", "binary"}));
    gen->add_option("--out", gen_out, "Output file (text defaults to stdout)");

    // plan
    auto* plan = app.add_subcommand("plan", "Layout planning");
    plan->require_subcommand(1);
    std::string plan_scenario, plan_json;
    double plan_delta = 250e-9;
    bool plan_primary = false;
    auto* check = plan->add_subcommand("check", "Check the circular non-overlap constraint");
    check->add_option("--scenario", plan_scenario, "Scenario file")->required();
    check->add_option("--delta", plan_delta, "Minimum peak separation, s");
    check->add_option("--json", plan_json, "Also write the report as JSON");
    check->add_flag("--primary-only", plan_primary, "One peak per sensor");

    auto* search = plan->add_subcommand("search", "Search feasible code lengths");
    int search_min = 3, search_max = 10007;
    double search_chip = 0.0;
    search->add_option("--scenario", plan_scenario, "Scenario file")->required();
    search->add_option("--min", search_min, "Smallest code length");
    search->add_option("--max", search_max, "Largest code length");
    search->add_option("--chip", search_chip, "Chip duration, s (default: scenario)");
    search->add_option("--delta", plan_delta, "Minimum peak separation, s");
    search->add_flag("--primary-only", plan_primary, "One peak per sensor");

    auto* couplers = plan->add_subcommand("couplers", "Equalized coupler tap ratios");
    int couplers_n = 0;
    std::string couplers_scenario;
    couplers->add_option("--n", couplers_n, "Number of sensors (lossless bus)");
    couplers->add_option("--scenario", couplers_scenario, "Equalize including the scenario's bus losses");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate a coherent capture");
    std::string sim_scenario, sim_config, sim_out, sim_csv;
    double sim_duration = 0.0, sim_sigma = -1.0, sim_linewidth = 0.0;
    std::uint64_t sim_seed = 1;
    std::int64_t sim_start = 0;
    std::vector<std::string> sim_tones;
    sim->add_option("--config", sim_config, "Run config (supplies scenario, noise, excitations)");
    sim->add_option("--scenario", sim_scenario, "Scenario file");
    sim->add_option("--duration", sim_duration, "Capture duration, s");
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "Noise seed");
    sim->add_option("--out", sim_out, "Binary capture output")->required();
    sim->add_option("--csv", sim_csv, "Also write the capture as CSV");
    sim->add_option("--sigma", sim_sigma, "Receiver noise sigma (default: 30 dB peak SNR)");
    sim->add_option("--linewidth", sim_linewidth, "Laser linewidth, Hz");
    sim->add_option("--tone", sim_tones, "Excitation sensor:freq_hz:amp_rad[:phase_rad]");
    sim->add_option("--start-sample", sim_start, "Capture start offset, samples");

    // demod / spectrum
    std::string dm_capture, dm_scenario, dm_out = "out", dm_mode = "perfect", dm_window = "none";
    bool dm_sync = false;
    int dm_tol = 2;
    auto* demod = app.add_subcommand("demod", "Correlate a capture and extract per-sensor phase");
    auto* spec = app.add_subcommand("spectrum", "Demodulate and report per-sensor spectra");
    for (auto* sc : {demod, spec}) {
        sc->add_option("--capture", dm_capture, "Binary capture file")->required();
        sc->add_option("--scenario", dm_scenario, "Scenario file")->required();
        sc->add_option("--out", dm_out, "Output directory");
        sc->add_option("--mode", dm_mode, "perfect | matched")->check(CLI::IsMember({"perfect", "matched"}));
        sc->add_flag("--sync", dm_sync, "Align the period start to the expected residues");
        sc->add_option("--tolerance", dm_tol, "Peak search half-width, bins");
    }
    spec->add_option("--window", dm_window, "none | hann")->check(CLI::IsMember({"none", "hann"}));

    // e2e
    auto* e2e = app.add_subcommand("e2e", "Plan check, simulate, decode and analyze from a run config");
    std::string e2e_config, e2e_out, e2e_mode;
    std::uint64_t e2e_seed = 0;
    bool e2e_sync = false;
    auto* seed_opt = e2e->add_option("--seed", e2e_seed, "Override the config seed");
    e2e->add_option("--config", e2e_config, "Run config")->required();
    e2e->add_option("--out", e2e_out, "Output directory (default: config output_dir)");
    e2e->add_option("--mode", e2e_mode, "perfect | matched")->check(CLI::IsMember({"perfect", "matched"}));
    e2e->add_flag("--sync", e2e_sync, "Enable period synchronization");

    // bench
    auto* bench = app.add_subcommand("bench", "Correlator throughput");
    int bench_n = 4003, bench_os = 4;
    std::size_t bench_periods = 187;
    unsigned bench_threads = 0;
    bench->add_option("--n", bench_n, "Code length");
    bench->add_option("--oversampling", bench_os, "Samples per chip");
    bench->add_option("--periods", bench_periods, "Periods to correlate");
    bench->add_option("--threads", bench_threads, "Worker threads (0: hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) {
            const auto code = legendre_sequence(gen_n);
            const auto values = gen_ref ? perfect_reference(code).taps : code.chips;
            if (gen_format == "binary") {
                if (gen_out.empty()) throw ConfigError("--format binary requires --out");
                std::ofstream os(gen_out, std::ios::binary);
                write_chips_binary(os, values);
            } else if (gen_out.empty()) {
                write_chips_text(std::cout, values);
            } else {
                std::ofstream os(gen_out);
                write_chips_text(os, values);
            }
            return 0;
        }

        if (*check) {
            const auto s = load_scenario(plan_scenario);
            const auto res = roundtrip_delays(s, plan_primary ? PeakSelection::primary_only : PeakSelection::all);
            const auto rep = check_separation(res, plan_delta);
            print_feasibility(rep, res);
            if (!plan_json.empty()) detail::open_out(plan_json) << feasibility_to_json(rep, res).dump(2) << '\n';
            return rep.feasible ? 0 : kExitInfeasible;
        }

        if (*search) {
            const auto s = load_scenario(plan_scenario);
            const double chip = search_chip > 0.0 ? search_chip : s.code->chip_duration;
            const auto ns = search_code_length(s, chip, plan_delta, search_min, search_max,
                                               plan_primary ? PeakSelection::primary_only : PeakSelection::all);
            std::printf("%zu feasible code lengths in [%d, %d]\n", ns.size(), search_min, search_max);
            for (int n : ns) std::printf("%d\n", n);
            return 0;
        }

        if (*couplers) {
            std::vector<double> k;
            if (!couplers_scenario.empty()) {
                const auto losses = bus_losses_db(load_scenario(couplers_scenario));
                k = equalize_couplers(std::span<const double>(losses));
            } else {
                k = equalize_couplers(couplers_n);
            }
            const auto drive = drive_fractions(k);
            std::printf("%-8s %-14s %-14s\n", "sensor", "tap_ratio", "drive_fraction");
            for (std::size_t i = 0; i < k.size(); ++i) std::printf("%-8zu %-14.10g %-14.10g\n", i + 1, k[i], drive[i]);
            return 0;
        }

        if (*sim) {
            LadderScenario s;
            NoiseModel noise;
            std::vector<Excitation> tones;
            double duration = sim_duration;
            std::int64_t start = sim_start;
            if (!sim_config.empty()) {
                const auto cfg = load_run_config(sim_config);
                s = cfg.scenario;
                noise = cfg.noise;
                tones = cfg.excitations;
                if (duration <= 0.0) duration = cfg.duration;
                if (start == 0) start = cfg.start_sample;
            } else {
                if (sim_scenario.empty()) throw ConfigError("simulate needs --scenario or --config");
                s = load_scenario(sim_scenario);
                noise.laser_linewidth = sim_linewidth;
                noise.receiver_noise_sigma = sim_sigma >= 0.0 ? sim_sigma : default_noise_sigma(s);
            }
            if (!sim_scenario.empty() && !sim_config.empty()) s = load_scenario(sim_scenario);
            if (sim_config.empty() || sim_seed_opt->count() > 0) noise.seed = sim_seed;
            const auto extra = parse_tones(sim_tones);
            tones.insert(tones.end(), extra.begin(), extra.end());
            if (duration <= 0.0) throw ConfigError("simulate needs --duration");
            const auto cap = simulate_scenario(s, tones, noise, duration, start);
            {
                auto os = detail::open_out(sim_out);
                write_capture(os, cap);
            }
            if (!sim_csv.empty()) {
                auto os = detail::open_out(sim_csv);
                write_capture_csv(os, cap);
            }
            std::printf("wrote %zu samples at %.6g S/s (%zu whole periods)\n", cap.samples.size(), cap.sample_rate,
                        cap.samples.size() / (static_cast<std::size_t>(s.code->n) * s.oversampling));
            return 0;
        }

        if (*demod || *spec) {
            const auto s = load_scenario(dm_scenario);
            const auto cap = load_capture(dm_capture);
            if (cap.scenario_hash != 0 && cap.scenario_hash != scenario_fingerprint(s))
                std::fprintf(stderr, "warning: capture was simulated from a different scenario\n");
            DemodOptions opt;
            opt.mode = parse_mode(dm_mode);
            opt.sync = dm_sync;
            opt.tolerance_bins = dm_tol;
            const auto res = demodulate(cap, s, opt);
            const std::filesystem::path dir(dm_out);
            {
                auto os = detail::open_out(dir / "profile.csv");
                write_profile_csv(os, average_power_profile(res.profile));
            }
            for (const auto& ph : res.phases) {
                auto os = detail::open_out(dir / ("phase_sensor" + std::to_string(ph.sensor_id) + ".csv"));
                write_phase_csv(os, ph);
            }
            std::printf("%zu periods, %zu peaks", res.profile.periods(), res.tracks.size());
            if (dm_sync) std::printf(", sync shift %zu bins", res.sync_shift);
            std::printf("\n");
            for (const auto& t : res.tracks)
                std::printf("%s: bin %zu (%.1f m)\n", to_string(t.ref).c_str(), t.bin,
                            static_cast<double>(t.bin) * res.profile.meters_per_bin);
            if (*spec) {
                const auto window = parse_window(dm_window);
                for (const auto& ph : res.phases) {
                    const auto rep = spectrum(ph, window);
                    auto os = detail::open_out(dir / ("spectrum_sensor" + std::to_string(ph.sensor_id) + ".csv"));
                    write_spectrum_csv(os, rep);
                    if (rep.dominant_tone)
                        std::printf("sensor %d: tone %.1f Hz, SNR %.1f dB\n", ph.sensor_id, *rep.dominant_tone,
                                    rep.snr_db);
                    else
                        std::printf("sensor %d: no tone (flat phase)\n", ph.sensor_id);
                }
            }
            return 0;
        }

        if (*e2e) {
            auto cfg = load_run_config(e2e_config);
            if (seed_opt->count() > 0) cfg.noise.seed = e2e_seed;
            if (!e2e_mode.empty()) cfg.mode = parse_mode(e2e_mode);
            if (e2e_sync) cfg.sync = true;
            const std::filesystem::path out = e2e_out.empty() ? cfg.output_dir : std::filesystem::path(e2e_out);
            const auto rep = run_e2e(cfg, out);
            print_report(rep);
            std::printf("artifacts in %s\n", out.string().c_str());
            return 0;
        }

        if (*bench) {
            const auto r = bench_correlator(bench_n, bench_os, bench_periods, 20e-9, bench_threads);
            std::printf("n %d, oversampling %d, periods %zu\n", r.n, r.oversampling, r.periods);
            std::printf("oracle check: %s (max rel error %.3g)\n", r.oracle_ok ? "pass" : "FAIL", r.oracle_rel_error);
            std::printf("elapsed %.4f s, %.1f periods/s, %.4g samples/s\n", r.seconds, r.periods_per_s, r.samples_per_s);
            std::printf("real-time capable (>= 12490 periods/s): %s\n", r.realtime ? "true" : "false");
            return r.oracle_ok ? 0 : kExitDecode;
        }
    } catch (const InfeasiblePlanError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInfeasible;
    } catch (const DecodeError& e) {
        std::fprintf(stderr, "decode error: %s\n", e.what());
        return kExitDecode;
    } catch (const Error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return 0;
}
