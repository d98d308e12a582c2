#include "qkdco/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qkdco/calibration.hpp"
#include "qkdco/optimize.hpp"
#include "qkdco/photon_mc.hpp"
#include "qkdco/pipeline.hpp"
#include "qkdco/sweep.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
    auto parse_one = [&](const std::string& tok) {
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size() || !std::isfinite(v))
                throw ValidationError(flag, "not a number: " + tok, 0.0);
            return v;
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError(flag, "not a number: " + tok, 0.0);
        }
    };

    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts = split(text, ':');
        if (parts.size() != 3)
            throw ValidationError(flag, "range must be first:last:step, got " + text, 0.0);
        double a = parse_one(parts[0]);
        double b = parse_one(parts[1]);
        double step = parse_one(parts[2]);
        if (!(step > 0)) throw ValidationError(flag, "step must be > 0", step);
        if (b < a) throw ValidationError(flag, "range end below start", b);
        double span = b - a;
        std::uint64_t count = static_cast<std::uint64_t>(span / step + 1e-9) + 1;
        if (count > 1000000) throw ValidationError(flag, "range too large", double(count));
        for (std::uint64_t i = 0; i < count; ++i) out.push_back(a + double(i) * step);
    } else {
        for (const std::string& tok : split(text, ','))
            out.push_back(parse_one(tok));
    }
    if (out.empty()) throw ValidationError(flag, "no values", 0.0);
    return out;
}

namespace {

using nlohmann::json;

json key_result_json(const FiniteKeyResult& key) {
    json doc;
    doc["skr_bps"] = key.skr;
    doc["ell_bits"] = key.ell;
    doc["s0_low"] = key.s0_low;
    doc["s1_low"] = key.s1_low;
    doc["s1x_low"] = key.s1x_low;
    doc["v1x_up"] = key.v1x_up;
    doc["phi1_up"] = key.phi1_up;
    doc["lambda_ec"] = key.lambda_ec;
    doc["tau0"] = key.tau0;
    doc["tau1"] = key.tau1;
    doc["phase_bound_pessimistic"] = key.phase_bound_pessimistic;
    doc["no_key"] = !(key.ell > 0);
    return doc;
}

int cmd_skr(const std::string& config_path, const std::string& counts_path) {
    Scenario s = load_scenario(config_path);
    json doc;
    if (!counts_path.empty()) {
        ObservedCounts counts = ObservedCounts::from_json(read_file(counts_path));
        doc = key_result_json(secret_key_length(counts, s.security));
        double n_z = counts.n.basis_total(Basis::Z);
        double n_x = counts.n.basis_total(Basis::X);
        doc["qber_z"] = n_z > 0 ? counts.m.basis_total(Basis::Z) / n_z : 0.5;
        doc["qber_x"] = n_x > 0 ? counts.m.basis_total(Basis::X) / n_x : 0.5;
        doc["t_acq_s"] = counts.t_acq;
    } else {
        PipelineResult res = evaluate(s);
        doc = key_result_json(res.key);
        doc["qber_z"] = click_weighted_qber(s, res.prediction, Basis::Z);
        doc["qber_x"] = click_weighted_qber(s, res.prediction, Basis::X);
        doc["t_acq_s"] = res.prediction.t_acq;
        doc["r_sifted_z_hz"] = res.prediction.r_sifted_z;
        doc["r_sifted_x_hz"] = res.prediction.r_sifted_x;
    }
    std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::vector<std::string>& config_paths, const std::string& loss_spec,
              const std::string& power_spec, const std::string& out_path) {
    std::vector<std::pair<std::string, Scenario>> configs;
    configs.reserve(config_paths.size());
    for (const std::string& path : config_paths)
        configs.emplace_back(std::filesystem::path(path).stem().string(),
                             load_scenario(path));
    std::vector<double> losses = parse_grid(loss_spec, "--loss");
    std::vector<double> powers = parse_grid(power_spec, "--power");
    SweepResult result = run_sweep(configs, losses, powers);
    write_sweep_csv(result, out_path);
    json doc;
    doc["rows"] = result.rows.size();
    doc["out"] = out_path;
    std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_optimize(const std::string& config_path, const std::string& spec_path) {
    Scenario s = load_scenario(config_path);
    OptimizationSpec spec;
    if (!spec_path.empty()) spec = OptimizationSpec::from_json(read_file(spec_path));
    OptimizationResult result = optimize(s, spec);
    std::cout << result.to_json() << "\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, std::uint64_t pulses, std::uint64_t seed,
                 const std::string& records_path, bool live_stats, int threads) {
    Scenario s = load_scenario(config_path);
    SimOptions opts;
    opts.live_stats = live_stats;
    opts.threads = threads;
    std::vector<ClickRecord> records;
    McSummary summary =
        simulate(s, pulses, seed, opts, records_path.empty() ? nullptr : &records);
    if (!records_path.empty()) write_click_records_csv(records, records_path);
    std::cout << summary.to_json() << "\n";
    return 0;
}

int cmd_calibrate(const std::string& input_path, double dark_rate) {
    NoiseFit fit = fit_noise_coefficient(read_power_counts_csv(input_path), dark_rate);
    std::cout << fit.to_json() << "\n";
    return 0;
}

int cmd_scan_noise(const std::string& input_path, double dark_rate) {
    NoiseScan scan = scan_noise(read_channel_counts_csv(input_path), dark_rate);
    std::cout << scan.to_json() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"three-state time-bin QKD with co-propagating classical DWDM channels"};
    app.require_subcommand(1);

    std::string config_path;
    std::string counts_path;
    CLI::App* skr = app.add_subcommand("skr", "finite-key rate for one scenario");
    skr->add_option("--config", config_path, "scenario JSON")->required();
    skr->add_option("--counts", counts_path, "replay observed counts JSON");

    std::vector<std::string> sweep_configs;
    std::string loss_spec;
    std::string power_spec;
    std::string sweep_out;
    CLI::App* sweep = app.add_subcommand("sweep", "loss x power grid to CSV");
    sweep->add_option("--config", sweep_configs, "scenario JSON, repeatable")->required();
    sweep->add_option("--loss", loss_spec, "dB values, a:b:step or comma list")->required();
    sweep->add_option("--power", power_spec, "dBm values, a:b:step or comma list")
        ->required();
    sweep->add_option("--out", sweep_out, "output CSV path")->required();

    std::string opt_config;
    std::string opt_spec;
    CLI::App* optimize = app.add_subcommand("optimize", "source parameter optimization");
    optimize->add_option("--config", opt_config, "scenario JSON")->required();
    optimize->add_option("--spec", opt_spec, "optimization spec JSON");

    std::string sim_config;
    std::uint64_t sim_pulses = 0;
    std::uint64_t sim_seed = 0;
    std::string sim_records;
    bool sim_live = false;
    int sim_threads = 0;
    CLI::App* simulate = app.add_subcommand("simulate", "pulse-by-pulse Monte Carlo");
    simulate->add_option("--config", sim_config, "scenario JSON")->required();
    simulate->add_option("--pulses", sim_pulses, "number of source periods")->required();
    simulate->add_option("--seed", sim_seed, "RNG seed")->required();
    simulate->add_option("--records", sim_records, "write per-click CSV here");
    simulate->add_flag("--live-stats", sim_live, "tally dead-time-free subsample");
    simulate->add_option("--threads", sim_threads, "worker cap, 0 = auto");

    std::string cal_input;
    double cal_dark = 0.0;
    CLI::App* calibrate = app.add_subcommand("calibrate", "fit noise coefficient");
    calibrate->add_option("--input", cal_input, "CSV power_mw,counts_per_s")->required();
    calibrate->add_option("--dark", cal_dark, "dark count rate, counts/s");

    std::string scan_input;
    double scan_dark = 0.0;
    CLI::App* scan = app.add_subcommand("scan-noise", "rank DWDM channels by noise");
    scan->add_option("--input", scan_input, "CSV channel,counts_per_s")->required();
    scan->add_option("--dark", scan_dark, "dark count rate, counts/s");

    try {
        app.parse(argc, argv);
        if (app.got_subcommand(skr)) return cmd_skr(config_path, counts_path);
        if (app.got_subcommand(sweep))
            return cmd_sweep(sweep_configs, loss_spec, power_spec, sweep_out);
        if (app.got_subcommand(optimize)) return cmd_optimize(opt_config, opt_spec);
        if (app.got_subcommand(simulate))
            return cmd_simulate(sim_config, sim_pulses, sim_seed, sim_records, sim_live,
                                sim_threads);
        if (app.got_subcommand(calibrate)) return cmd_calibrate(cal_input, cal_dark);
        if (app.got_subcommand(scan)) return cmd_scan_noise(scan_input, scan_dark);
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace qkdco
