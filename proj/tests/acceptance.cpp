// Release gate: nine numbered checks against the reference receiver
// configurations. One PASS/FAIL line per check; the exit code is the
// number of failures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "qkdco/calibration.hpp"
#include "qkdco/finite_key.hpp"
#include "qkdco/link_rates.hpp"
#include "qkdco/optimize.hpp"
#include "qkdco/photon_mc.hpp"
#include "qkdco/pipeline.hpp"
#include "qkdco/sweep.hpp"
#include "test_util.hpp"

namespace {

using namespace qkdco;

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

const char* const kReference[6] = {
    "b2b_upconv.json",  "upconv_15km.json", "upconv_25km.json",
    "ingaas_15km.json", "ingaas_25km.json", "ingaas_40km.json",
};

// 1. Additive penalty of the key-length bound at the default security
// levels (eps_sec = eps_corr = 1e-9).
bool check_penalty(std::string& out) {
    const double expected = 235.769035;  // 6 log2(19e9) + log2(2e9)
    double got = penalty_bits(SecurityParams{});
    out = fmt("penalty(1e-9, 1e-9) = %.6f bits, expected %.6f +/- 0.01", got, expected);
    return std::abs(got - expected) <= 0.01;
}

// 2. Quadrature pulse/jitter widths against the measured arrival FWHMs.
bool check_pulse_width(std::string& out) {
    Scenario in = testutil::load_ref("ingaas_25km.json");
    Scenario up = testutil::load_ref("upconv_25km.json");
    double f_in = combined_arrival_fwhm(in.source.pulse_fwhm, in.receiver.jitter_fwhm);
    double f_up = combined_arrival_fwhm(up.source.pulse_fwhm, up.receiver.jitter_fwhm);
    double r_in = std::abs(f_in - 250e-12) / 250e-12;
    double r_up = std::abs(f_up - 130e-12) / 130e-12;
    out = fmt("combined FWHM %.1f ps vs 250 ps (%.1f%%), %.1f ps vs 130 ps (%.1f%%), limit 25%%",
              f_in * 1e12, r_in * 100.0, f_up * 1e12, r_up * 100.0);
    return r_in <= 0.25 && r_up <= 0.25;
}

// 3. Shared noise coefficient fitted so the InGaAs receiver dies at
// -12 dBm input; the up-conversion receiver must then tolerate >= -10 dBm.
bool check_tolerance_gap(std::string& out) {
    Scenario in = testutil::load_ref("ingaas_25km.json");
    double kappa = fit_kappa_to_threshold(in, -12.0);
    in.channel.noise_spectral_density = kappa;
    double thr_in = input_power_threshold(in, -40.0, 10.0);
    Scenario up = testutil::load_ref("upconv_25km.json");
    up.channel.noise_spectral_density = kappa;
    double thr_up = input_power_threshold(up, -40.0, 10.0);
    out = fmt("kappa = %.6e, thresholds %.3f / %.3f dBm, gap %.2f dB (need >= 2)",
              kappa, thr_in, thr_up, thr_up - thr_in);
    return std::abs(thr_in + 12.0) <= 1e-3 && thr_up >= -10.0;
}

// 4. With a shared extra-loss offset calibrated so the up-conversion
// receiver fills a 1e7-bit Z block in 180 s, the InGaAs receiver must
// need at least twice as long.
bool check_acquisition_ordering(std::string& out) {
    Scenario up = testutil::load_ref("upconv_25km.json");
    Scenario in = testutil::load_ref("ingaas_25km.json");
    up.security.block_size = 1e7;
    in.security.block_size = 1e7;
    auto t_up = [&](double d) {
        Scenario s = up;
        s.receiver.extra_loss_db += d;
        return predict(s).t_acq;
    };
    double lo = 0.0, hi = 20.0;
    if (!(t_up(lo) < 180.0 && t_up(hi) > 180.0)) {
        out = "calibration bracket [0, 20] dB does not straddle 180 s";
        return false;
    }
    for (int i = 0; i < 80; ++i) {
        double mid = 0.5 * (lo + hi);
        (t_up(mid) < 180.0 ? lo : hi) = mid;
    }
    double delta = 0.5 * (lo + hi);
    double t_u = t_up(delta);
    in.receiver.extra_loss_db += delta;
    double t_i = predict(in).t_acq;
    out = fmt("offset %.4f dB: t_acq %.2f s vs %.2f s, ratio %.2f (need >= 2)",
              delta, t_u, t_i, t_i / t_u);
    return std::abs(t_u - 180.0) <= 18.0 && t_i >= 2.0 * t_u;
}

// Exact two-sided binomial tail: probability of a count at least as far
// from n*q as obs. Switches to the normal form once both expected counts
// are large enough for it to hold.
double deviation_pvalue(double n, double obs, double q) {
    double mean = n * q;
    if (mean > 25.0 && n - mean > 25.0) {
        double z = std::abs(obs - mean) / std::sqrt(n * q * (1.0 - q));
        return std::erfc(z / std::sqrt(2.0));
    }
    double d = std::abs(obs - mean);
    if (d < 0.5) return 1.0;
    auto log_pmf = [&](double j) {
        return std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) +
               j * std::log(q) + (n - j) * std::log1p(-q);
    };
    double p = 0.0;
    for (double j = std::ceil(mean + d); j <= n; ++j) {
        double term = std::exp(log_pmf(j));
        p += term;
        if (term < p * 1e-15 && j > mean + 1.0) break;
    }
    for (double j = std::floor(mean - d); j >= 0.0; --j) p += std::exp(log_pmf(j));
    return std::min(p, 1.0);
}

double sigma_equivalent(double pvalue) {
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 100; ++i) {
        double mid = 0.5 * (lo + hi);
        (std::erfc(mid / std::sqrt(2.0)) > pvalue ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// 5. A 1e7-pulse run per reference scenario: live-subsample p_click and
// QBER within 4 binomial sigma of the analytic rates for every
// (basis, intensity) cell, at most one cell in twenty beyond 3 sigma.
bool check_mc_agreement(std::string& out) {
    const double tail4 = std::erfc(4.0 / std::sqrt(2.0));
    const double tail3 = std::erfc(3.0 / std::sqrt(2.0));
    int cells = 0, over3 = 0;
    double min_pvalue = 1.0;
    for (const char* name : kReference) {
        Scenario s = testutil::load_ref(name);
        RatePrediction pred = predict(s);
        SimOptions opts;
        opts.live_stats = true;
        McSummary sim = simulate(s, 10000000, 17, opts);
        for (int b = 0; b < 2; ++b) {
            for (int k = 0; k < 2; ++k) {
                Basis basis = static_cast<Basis>(b);
                Intensity inten = static_cast<Intensity>(k);
                double states = sim.live_states(basis, inten);
                double clicks = sim.live_clicks(basis, inten);
                if (states <= 0.0) {
                    out = fmt("%s has an empty (%s, %s) cell", name, to_string(basis),
                              to_string(inten));
                    return false;
                }
                ++cells;
                double pv = deviation_pvalue(states, clicks, pred.p_click(basis, inten));
                if (clicks > 0.0)
                    pv = std::min(pv, deviation_pvalue(clicks, sim.live_errors(basis, inten),
                                                       pred.qber(basis, inten)));
                min_pvalue = std::min(min_pvalue, pv);
                if (pv < tail3) ++over3;
                if (pv < tail4) {
                    out = fmt("%s (%s, %s): deviation %.2f sigma exceeds 4", name,
                              to_string(basis), to_string(inten), sigma_equivalent(pv));
                    return false;
                }
            }
        }
    }
    int allowed = std::max(1, cells / 20);
    out = fmt("%d cells, worst deviation %.2f sigma, %d beyond 3 sigma (allowed %d)",
              cells, sigma_equivalent(min_pvalue), over3, allowed);
    return over3 <= allowed;
}

// 6. 500 seeded scaled blocks of 1e4 sifted Z bits: the vacuum and
// single-photon lower bounds and the phase-error upper bound must each
// bracket the tagged ground truth in at least 99% of blocks.
bool check_bound_validity(std::string& out) {
    Scenario s = testutil::load_ref("bound_check.json");
    const int blocks = 500;
    int ok_s0 = 0, ok_s1 = 0, ok_phi = 0;
    BlockOptions opts;
    opts.mode = BlockMode::Scaled;
    for (int i = 0; i < blocks; ++i) {
        BlockResult block = run_block(s, 1000 + i, opts);
        FiniteKeyResult key = secret_key_length(block.summary.counts, s.security);
        const TagTally& z = block.summary.tags[static_cast<int>(Basis::Z)];
        const TagTally& x = block.summary.tags[static_cast<int>(Basis::X)];
        double slack = 1e-9;
        if (key.s0_low <= z.vacuum_clicks * (1.0 + slack) + slack) ++ok_s0;
        if (key.s1_low <= z.single_clicks * (1.0 + slack) + slack) ++ok_s1;
        double true_phi = x.single_clicks > 0.0 ? x.single_errors / x.single_clicks : 0.0;
        if (key.phi1_up >= true_phi * (1.0 - slack)) ++ok_phi;
    }
    int need = (blocks * 99 + 99) / 100;
    out = fmt("s0 %d/%d, s1 %d/%d, phi1 %d/%d valid (need >= %d each)", ok_s0, blocks,
              ok_s1, blocks, ok_phi, blocks, need);
    return ok_s0 >= need && ok_s1 >= need && ok_phi >= need;
}

// 7. Optimizer beats both a 0.01-resolution dense grid over the free
// variables and the reference source settings, on every scenario.
bool check_optimizer(std::string& out) {
    double worst_margin = 1e300;
    for (const char* name : kReference) {
        Scenario s = testutil::load_ref(name);
        OptimizationSpec spec;
        OptimizationResult res = optimize(s, spec);

        auto score = [&](double m1, double m2, double pm) {
            Scenario t = s;
            t.source.mu1 = m1;
            t.source.mu2 = m2;
            t.source.p_mu1 = pm;
            try {
                return evaluate(t).key.skr;
            } catch (const Error&) {
                return 0.0;
            }
        };
        auto axis = [](double lo, double hi) {
            std::vector<double> v;
            for (double x = lo; x <= hi + 1e-9; x += 0.01) v.push_back(x);
            if (v.back() < hi - 1e-9) v.push_back(hi);
            return v;
        };
        double grid_best = 0.0;
        for (double m1 : axis(spec.lower[0], spec.upper[0]))
            for (double m2 : axis(spec.lower[1], spec.upper[1])) {
                if (m2 >= m1) continue;
                for (double pm : axis(spec.lower[2], spec.upper[2]))
                    grid_best = std::max(grid_best, score(m1, m2, pm));
            }
        double file_skr = evaluate(s).key.skr;
        double floor_skr = std::max(grid_best * (1.0 - 1e-9), file_skr);
        if (res.best.skr < floor_skr) {
            out = fmt("%s: optimize %.6e < max(grid %.6e, reference %.6e)", name,
                      res.best.skr, grid_best, file_skr);
            return false;
        }
        if (grid_best > 0.0)
            worst_margin = std::min(worst_margin, res.best.skr / grid_best - 1.0);
    }
    out = fmt("6 scenarios, optimum >= dense grid and reference settings, min margin %.3e",
              worst_margin);
    return true;
}

bool records_equal(const std::vector<ClickRecord>& a, const std::vector<ClickRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const ClickRecord &r = a[i], &s = b[i];
        if (r.pulse_index != s.pulse_index || r.basis_tx != s.basis_tx ||
            r.basis_rx != s.basis_rx || r.intensity != s.intensity || r.bin != s.bin ||
            r.arrival_offset != s.arrival_offset || r.cause != s.cause ||
            r.photon_number != s.photon_number || r.is_error != s.is_error)
            return false;
    }
    return true;
}

// 8. Bit-identical output for one seed at worker counts {1, 2, 3, 7}, and
// a saturated detector never counts faster than 1/dead_time.
bool check_determinism(std::string& out) {
    Scenario s = testutil::load_ref("upconv_25km.json");
    s.receiver.afterpulse_prob = 0.05;
    SimOptions base;
    base.live_stats = true;
    std::vector<ClickRecord> ref_records;
    McSummary ref = simulate_serial(s, 2000000, 99, base, &ref_records);
    std::string ref_json = ref.to_json();
    for (int threads : {1, 2, 3, 7}) {
        SimOptions opts = base;
        opts.threads = threads;
        std::vector<ClickRecord> records;
        McSummary run = simulate(s, 2000000, 99, opts, &records);
        if (run.to_json() != ref_json || !records_equal(records, ref_records)) {
            out = fmt("output differs from the serial reference at %d workers", threads);
            return false;
        }
    }
    Scenario sat = testutil::load_ref("ingaas_25km.json");
    sat.channel.quantum_loss_db = 0.0;
    sat.receiver.extra_loss_db = 0.0;
    McSummary cap = simulate(sat, 20000000, 7);
    double rate = static_cast<double>(cap.raw_accepted) / cap.duration;
    double ceiling = 1.0 / sat.receiver.dead_time;
    bool capped = static_cast<double>(cap.raw_accepted) <=
                  cap.duration / sat.receiver.dead_time + 1.0;
    out = fmt("4 worker counts bit-identical; saturated rate %.1f Hz <= %.0f Hz", rate,
              ceiling);
    return capped;
}

// 9. 3x7x2 sweep: skr non-increasing in loss and in power per receiver;
// the up-conversion receiver keeps no key at 8 dB for powers >= -14 dBm.
bool check_sweep(std::string& out) {
    std::vector<std::pair<std::string, Scenario>> configs = {
        {"ingaas", testutil::load_ref("ingaas_25km.json")},
        {"upconv", testutil::load_ref("upconv_25km.json")},
    };
    std::vector<double> losses = {3.0, 5.0, 8.0};
    std::vector<double> powers;
    for (double p = -20.0; p <= -8.0 + 1e-9; p += 2.0) powers.push_back(p);
    SweepResult res = run_sweep(configs, losses, powers);

    std::map<std::tuple<std::string, double, double>, double> skr;
    for (const SweepRow& row : res.rows)
        skr[{row.receiver_id, row.quantum_loss_db, row.classical_input_dbm}] = row.skr_bps;
    auto at = [&](const std::string& id, double l, double p) { return skr.at({id, l, p}); };

    for (const auto& cfg : configs) {
        const std::string& id = cfg.first;
        for (double p : powers)
            for (size_t i = 1; i < losses.size(); ++i)
                if (at(id, losses[i], p) > at(id, losses[i - 1], p) * (1.0 + 1e-12)) {
                    out = fmt("%s: skr grows from %.0f to %.0f dB loss at %.0f dBm", id.c_str(),
                              losses[i - 1], losses[i], p);
                    return false;
                }
        for (double l : losses)
            for (size_t i = 1; i < powers.size(); ++i)
                if (at(id, l, powers[i]) > at(id, l, powers[i - 1]) * (1.0 + 1e-12)) {
                    out = fmt("%s: skr grows from %.0f to %.0f dBm at %.0f dB", id.c_str(),
                              powers[i - 1], powers[i], l);
                    return false;
                }
    }
    std::string residual;
    for (double p : powers) {
        double v = at("upconv", 8.0, p);
        if (p >= -14.0 && v != 0.0) {
            out = fmt("upconv at 8 dB, %.0f dBm still yields %.3e bps", p, v);
            return false;
        }
        if (p < -14.0 && v > 0.0) residual += fmt(" %.2e@%.0fdBm", v, p);
    }
    out = "monotone in loss and power; upconv 8 dB dead for >= -14 dBm, residual:" +
          (residual.empty() ? std::string(" none") : residual);
    return true;
}

struct Criterion {
    const char* name;
    bool (*fn)(std::string&);
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {"key-length penalty constant", check_penalty},
        {"arrival-width quadrature model", check_pulse_width},
        {"classical-noise tolerance gap", check_tolerance_gap},
        {"acquisition-time ordering", check_acquisition_ordering},
        {"simulator vs analytic rates", check_mc_agreement},
        {"decoy bound validity", check_bound_validity},
        {"optimizer vs dense grid", check_optimizer},
        {"determinism and saturation", check_determinism},
        {"sweep monotonicity", check_sweep},
    };
    int failures = 0;
    int index = 0;
    for (const Criterion& c : criteria) {
        ++index;
        std::string detail;
        bool pass = false;
        try {
            pass = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("unexpected exception: ") + e.what();
        }
        std::printf("[%d/9] %s  %s: %s\n", index, pass ? "PASS" : "FAIL", c.name,
                    detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    std::printf("%d/9 criteria passed\n", 9 - failures);
    return failures;
}
