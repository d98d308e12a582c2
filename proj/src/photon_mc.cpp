#include "qkdco/photon_mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>

#include "json.hpp"
#include "qkdco/link_rates.hpp"
#include "qkdco/rng.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

const char* to_string(ClickCause c) {
    switch (c) {
        case ClickCause::Signal: return "signal";
        case ClickCause::Dark: return "dark";
        case ClickCause::ClassicalNoise: return "classical_noise";
        case ClickCause::Afterpulse: return "afterpulse";
    }
    return "?";
}

namespace {

// Salt constants keep the derived coin flips (afterpulse, double-click
// resolution, background error assignment) independent of the draw streams.
constexpr std::uint64_t kSaltSignal = 0xd6e8feb86659fd93ull;
constexpr std::uint64_t kSaltBackground = 0xa0761d6478bd642full;
constexpr std::uint64_t kSaltApDecision = 0xe7037ed1a0b428dbull;
constexpr std::uint64_t kSaltApDelay = 0x8ebc6af09c88c6e3ull;
constexpr std::uint64_t kSaltApChild = 0x589965cc75374cc3ull;
constexpr std::uint64_t kSaltDouble = 0x1d8e4e27c47d124full;
constexpr std::uint64_t kSaltBgError = 0xeb44accab455d165ull;
constexpr std::uint64_t kSaltScale = 0x2545f4914f6cdd1dull;

struct RawEvent {
    double t = 0.0;        // absolute seconds
    std::uint64_t pulse = 0;
    std::uint64_t salt = 0;
    std::uint8_t cause = 0;
    std::uint8_t tag = 0;  // photon number of the origin period, saturated
};

bool event_less(const RawEvent& a, const RawEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.pulse != b.pulse) return a.pulse < b.pulse;
    if (a.salt != b.salt) return a.salt < b.salt;
    return a.cause < b.cause;
}

// Cumulative Poisson thresholds scaled to the u64 range so a single raw draw
// inverts the distribution exactly.
std::vector<std::uint64_t> poisson_thresholds(double mean) {
    std::vector<std::uint64_t> out;
    if (mean <= 0.0) {
        out.push_back(~0ull);
        return out;
    }
    long double p = std::exp(-static_cast<long double>(mean));
    long double cum = p;
    int i = 0;
    while (true) {
        out.push_back(cum >= 1.0L ? ~0ull : prob_threshold_u64(static_cast<double>(cum)));
        if (cum >= 1.0L - 1e-22L || i > 400) break;
        ++i;
        p *= mean / i;
        cum += p;
    }
    out.back() = ~0ull;
    return out;
}

int poisson_lookup(const std::vector<std::uint64_t>& cdf, std::uint64_t u) {
    for (std::size_t i = 0; i < cdf.size(); ++i)
        if (u < cdf[i]) return static_cast<int>(i);
    return static_cast<int>(cdf.size()) - 1;
}

struct SimParams {
    double T = 0.0;
    double center[2] = {0.0, 0.0};  // early/late bin centers within the period
    double half_gate = 0.0;
    double sigma = 0.0;
    double tau = 0.0;
    std::uint64_t th_surv[2] = {0, 0};  // per rx basis: channel+receiver path * efficiency
    std::uint32_t th_ztx = 0, th_zrx = 0, th_mu1 = 0;
    std::uint32_t th_ez = 0, th_ex = 0;
    std::vector<std::uint64_t> pn_cdf[2];  // photon number per intensity
    std::vector<std::uint64_t> bg_cdf[2];  // background count per rx basis
    bool any_bg[2] = {false, false};
    std::uint32_t th_dark[2] = {0, 0};     // dark fraction of the background rate
    double ap_prob = 0.0;
    double ap_scale = 0.0;
    std::uint64_t th_ap = 0;
};

SimParams make_params(const Scenario& s) {
    SimParams p;
    p.T = 1.0 / s.source.rep_rate;
    p.center[0] = 0.25 * p.T;
    p.center[1] = 0.75 * p.T;
    p.half_gate = 0.5 * s.receiver.gate_window;
    p.sigma = combined_arrival_sigma(s.source.pulse_fwhm, s.receiver.jitter_fwhm);
    p.tau = s.receiver.dead_time;
    double noise = noise_rate_at_detector(s.channel, s.receiver);
    double x_path_t = db_to_linear(s.receiver.x_path_extra_loss_db);
    for (int rx = 0; rx < 2; ++rx) {
        double loss_db = s.channel.quantum_loss_db + s.receiver.extra_loss_db +
                         (rx == 1 ? s.receiver.x_path_extra_loss_db : 0.0);
        p.th_surv[rx] =
            prob_threshold_u64(db_to_linear(loss_db) * s.receiver.efficiency);
        double dark = s.receiver.dark_rate;
        double classical = noise * (rx == 1 ? x_path_t : 1.0);
        double lambda = dark + classical;
        p.any_bg[rx] = lambda > 0.0;
        if (p.any_bg[rx]) {
            p.bg_cdf[rx] = poisson_thresholds(lambda * p.T);
            p.th_dark[rx] = prob_threshold_u32(dark / lambda);
        }
    }
    p.th_ztx = prob_threshold_u32(s.source.p_z_tx);
    p.th_zrx = prob_threshold_u32(s.receiver.p_z_rx);
    p.th_mu1 = prob_threshold_u32(s.source.p_mu1);
    p.th_ez = prob_threshold_u32(s.source.intrinsic_error_z);
    p.th_ex = prob_threshold_u32((1.0 - s.source.visibility_x) / 2.0);
    p.pn_cdf[0] = poisson_thresholds(s.source.mu1);
    p.pn_cdf[1] = poisson_thresholds(s.source.mu2);
    p.ap_prob = s.receiver.afterpulse_prob;
    p.ap_scale = p.tau > 0.0 ? p.tau : p.T;
    p.th_ap = prob_threshold_u64(p.ap_prob);
    return p;
}

struct StateDraw {
    int tx, bit, k, rx;
};

StateDraw decode_state(const SimParams& p, std::uint64_t a, std::uint64_t b) {
    StateDraw d;
    d.tx = static_cast<std::uint32_t>(a) < p.th_ztx ? 0 : 1;
    d.bit = d.tx == 0 ? (static_cast<std::uint32_t>(a >> 32) < 0x80000000u ? 0 : 1) : 0;
    d.k = static_cast<std::uint32_t>(b) < p.th_mu1 ? 0 : 1;
    d.rx = static_cast<std::uint32_t>(b >> 32) < p.th_zrx ? 0 : 1;
    return d;
}

// Draw everything one prepared state produces at the detector input: raw
// avalanche candidates, before dead time and gating.
void generate_pulse(const SimParams& p, std::uint64_t seed, std::uint64_t pulse,
                    std::vector<RawEvent>& out, CellTable& states) {
    PulseRng rng(seed, pulse);
    std::uint64_t a = rng.next();
    std::uint64_t b = rng.next();
    StateDraw d = decode_state(p, a, b);
    if (d.tx == d.rx)
        states(static_cast<Basis>(d.tx), static_cast<Intensity>(d.k)) += 1.0;

    std::uint64_t u = rng.next();
    int n_photons = poisson_lookup(p.pn_cdf[d.k], u);
    double base = static_cast<double>(pulse) * p.T;
    std::uint8_t tag = static_cast<std::uint8_t>(std::min(n_photons, 250));

    for (int j = 0; j < n_photons; ++j) {
        if (rng.next() >= p.th_surv[d.rx]) continue;
        std::uint64_t f = rng.next();
        std::uint64_t g1 = rng.next();
        std::uint64_t g2 = rng.next();
        std::uint32_t f_lo = static_cast<std::uint32_t>(f);
        std::uint32_t f_hi = static_cast<std::uint32_t>(f >> 32);
        int target;
        if (d.tx == 0 && d.rx == 0) {
            target = d.bit ^ (f_lo < p.th_ez ? 1 : 0);
        } else if (d.tx == 1 && d.rx == 1) {
            target = f_lo < p.th_ex ? 1 : 0;  // wrong interferometer output
        } else {
            target = f_hi < 0x80000000u ? 0 : 1;  // basis mismatch: collapse
        }
        double t = base + p.center[target] + p.sigma * PulseRng::to_gauss(g1, g2);
        out.push_back({t, pulse, mix64(f ^ kSaltSignal), 0, tag});
    }

    if (p.any_bg[d.rx]) {
        std::uint64_t ub = rng.next();
        if (ub >= p.bg_cdf[d.rx][0]) {
            int n_bg = poisson_lookup(p.bg_cdf[d.rx], ub);
            for (int e = 0; e < n_bg; ++e) {
                std::uint64_t ua = rng.next();
                std::uint64_t uc = rng.next();
                double t = base + PulseRng::to_unit(ua) * p.T;
                std::uint8_t cause =
                    static_cast<std::uint32_t>(uc) < p.th_dark[d.rx] ? 1 : 2;
                out.push_back({t, pulse, mix64(uc ^ kSaltBackground), cause, tag});
            }
        }
    }
}

double exp_delay(std::uint64_t u, double scale) {
    double unit = (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    return -scale * std::log(unit);
}

struct CountedClick {
    std::uint64_t pulse;
    int tx, k, bin;
    bool err;
};

struct MergeOutput {
    McSummary summary;
    std::vector<RawEvent> accepted;       // post-dead-time avalanches, time order
    std::vector<CountedClick> counted;    // sifted clicks in period order
    bool cut = false;                     // z_stop reached
    std::uint64_t cut_pulse = 0;          // last period included when cut
};

// Serial pass: dead time over the global timeline, afterpulse injection,
// gating, per-period double-click resolution, sifting and tallies.
void merge_events(const SimParams& p, std::uint64_t seed, std::uint64_t n_pulses,
                  std::vector<RawEvent>& events, const SimOptions& opts,
                  std::vector<ClickRecord>* records, MergeOutput& out) {
    std::sort(events.begin(), events.end(), event_less);

    auto ap_cmp = [](const RawEvent& a, const RawEvent& b) { return b.t < a.t; };
    std::priority_queue<RawEvent, std::vector<RawEvent>, decltype(ap_cmp)> pending(ap_cmp);

    McSummary& sum = out.summary;
    double end_time = static_cast<double>(n_pulses) * p.T;

    // Group in-gate accepted clicks by landing period; flush resolves doubles.
    std::uint64_t group_q = 0;
    std::uint64_t z_counted = 0;
    std::vector<RawEvent> group;
    std::vector<double> group_dist;

    auto flush_group = [&]() {
        if (group.empty()) return;
        std::uint64_t q = group_q;
        PulseRng rq(seed, q);
        StateDraw d = decode_state(p, rq.at(0), rq.at(1));

        bool hit[2] = {false, false};
        int first_in_bin[2] = {-1, -1};
        for (std::size_t i = 0; i < group.size(); ++i) {
            double rel = group[i].t - static_cast<double>(q) * p.T;
            int bin = rel < 0.5 * p.T ? 0 : 1;
            if (!hit[bin]) {
                hit[bin] = true;
                first_in_bin[bin] = static_cast<int>(i);
            }
        }
        int bin;
        if (hit[0] && hit[1]) {
            bin = (mix64(group[0].salt ^ kSaltDouble) >> 63) ? 1 : 0;
        } else {
            bin = hit[0] ? 0 : 1;
        }
        const RawEvent& rep = group[static_cast<std::size_t>(first_in_bin[bin])];
        double dist = group_dist[static_cast<std::size_t>(first_in_bin[bin])];

        int tag = rep.cause == 3 ? poisson_lookup(p.pn_cdf[d.k], rq.at(2)) : rep.tag;

        if (d.tx == d.rx) {
            Basis basis = static_cast<Basis>(d.tx);
            Intensity inten = static_cast<Intensity>(d.k);
            bool err;
            if (d.tx == 0) {
                err = bin != d.bit;
            } else if (rep.cause == 0) {
                err = bin != 0;
            } else {
                err = (mix64(rep.salt ^ kSaltBgError) >> 63) != 0;
            }
            sum.counts.n(basis, inten) += 1.0;
            if (err) sum.counts.m(basis, inten) += 1.0;

            TagTally& tt = sum.tags[d.tx];
            if (tag == 0) {
                tt.vacuum_clicks += 1.0;
            } else if (tag == 1) {
                tt.single_clicks += 1.0;
                if (err) tt.single_errors += 1.0;
            } else {
                tt.multi_clicks += 1.0;
            }
            switch (rep.cause) {
                case 0: tt.signal_clicks += 1.0; break;
                case 1: tt.dark_clicks += 1.0; break;
                case 2: tt.classical_clicks += 1.0; break;
                default: tt.afterpulse_clicks += 1.0; break;
            }
            out.counted.push_back({q, d.tx, d.k, bin, err});
            if (d.tx == 0) ++z_counted;
            if (records) {
                if (records->size() >= opts.record_cap)
                    throw Error("record stream exceeds the configured cap of " +
                                std::to_string(opts.record_cap));
                records->push_back({q, basis, static_cast<Basis>(d.rx), inten, bin, dist,
                                    static_cast<ClickCause>(rep.cause), tag, err});
            }
        }
        group.clear();
        group_dist.clear();
    };

    double dead_until = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < events.size() || !pending.empty()) {
        RawEvent ev;
        if (!pending.empty() &&
            (i >= events.size() || pending.top().t < events[i].t)) {
            ev = pending.top();
            pending.pop();
        } else {
            ev = events[i++];
        }
        if (ev.t >= end_time || ev.t < 0.0) continue;

        // Events arrive in time order, so a new period means the previous
        // group is complete. Resolving it here, before this event touches the
        // dead-time chain, lets a block cut stop the timeline exactly at a
        // period boundary.
        std::uint64_t q = static_cast<std::uint64_t>(ev.t / p.T);
        if (!group.empty() && q != group_q) flush_group();
        if (opts.z_stop > 0 && z_counted >= opts.z_stop) {
            out.cut = true;
            out.cut_pulse = group_q;
            return;
        }

        if (ev.t < dead_until) continue;
        dead_until = ev.t + p.tau;
        sum.raw_accepted += 1;
        out.accepted.push_back(ev);

        if (p.th_ap > 0 && mix64(ev.salt ^ kSaltApDecision) < p.th_ap) {
            RawEvent ap;
            ap.t = ev.t + exp_delay(mix64(ev.salt ^ kSaltApDelay), p.ap_scale);
            ap.salt = mix64(ev.salt ^ kSaltApChild);
            ap.cause = 3;
            ap.tag = 0;
            if (ap.t < end_time) {
                ap.pulse = static_cast<std::uint64_t>(ap.t / p.T);
                pending.push(ap);
            }
        }

        double rel = ev.t - static_cast<double>(q) * p.T;
        int bin = rel < 0.5 * p.T ? 0 : 1;
        double dist = rel - p.center[bin];
        if (std::fabs(dist) > p.half_gate) continue;

        group_q = q;
        group.push_back(ev);
        group_dist.push_back(dist);
    }
    flush_group();
    if (opts.z_stop > 0 && z_counted >= opts.z_stop) {
        out.cut = true;
        out.cut_pulse = group_q;
    }
}

// Unbiased per-cell click statistics: a state counts as live when no dead
// interval opened before its early gate reaches into its gates, so the
// subsample's outcome distribution matches an undisturbed detector.
void live_pass(const SimParams& p, std::uint64_t seed, std::uint64_t n_pulses,
               const MergeOutput& merged, McSummary& sum) {
    double early_start = p.center[0] - p.half_gate;
    const std::vector<RawEvent>& acc = merged.accepted;
    const std::vector<CountedClick>& counted = merged.counted;
    std::size_t ei = 0, ci = 0;
    double dead_until = -std::numeric_limits<double>::infinity();
    for (std::uint64_t q = 0; q < n_pulses; ++q) {
        double gate_open = static_cast<double>(q) * p.T + early_start;
        while (ei < acc.size() && acc[ei].t < gate_open) {
            dead_until = std::max(dead_until, acc[ei].t + p.tau);
            ++ei;
        }
        while (ci < counted.size() && counted[ci].pulse < q) ++ci;
        if (dead_until > gate_open) continue;
        PulseRng rq(seed, q);
        StateDraw d = decode_state(p, rq.at(0), rq.at(1));
        if (d.tx != d.rx) continue;
        Basis basis = static_cast<Basis>(d.tx);
        Intensity inten = static_cast<Intensity>(d.k);
        sum.live_states(basis, inten) += 1.0;
        if (ci < counted.size() && counted[ci].pulse == q) {
            sum.live_clicks(basis, inten) += 1.0;
            if (counted[ci].err) sum.live_errors(basis, inten) += 1.0;
        }
    }
    sum.live_stats = true;
}

McSummary run_simulation(const Scenario& s, std::uint64_t n_pulses, std::uint64_t seed,
                         const SimOptions& opts, std::vector<ClickRecord>* records,
                         bool parallel) {
    ensure_valid(s);
    if (n_pulses < 1)
        throw ValidationError("n_pulses", "must be >= 1", static_cast<double>(n_pulses));
    SimParams p = make_params(s);

    constexpr std::uint64_t kChunk = 1 << 16;
    std::uint64_t n_chunks = (n_pulses + kChunk - 1) / kChunk;
    std::vector<RawEvent> events;
    std::vector<CellTable> chunk_states(n_chunks);

    if (parallel) {
        std::vector<std::vector<RawEvent>> chunk_events(n_chunks);
        int threads = opts.threads > 0 ? opts.threads : worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(n_chunks); ++c) {
            std::uint64_t lo = static_cast<std::uint64_t>(c) * kChunk;
            std::uint64_t hi = std::min(n_pulses, lo + kChunk);
            auto& ev = chunk_events[static_cast<std::size_t>(c)];
            auto& st = chunk_states[static_cast<std::size_t>(c)];
            for (std::uint64_t pulse = lo; pulse < hi; ++pulse)
                generate_pulse(p, seed, pulse, ev, st);
        }
        std::size_t total = 0;
        for (const auto& ev : chunk_events) total += ev.size();
        events.reserve(total);
        for (auto& ev : chunk_events) {
            events.insert(events.end(), ev.begin(), ev.end());
            ev.clear();
            ev.shrink_to_fit();
        }
    } else {
        for (std::uint64_t c = 0; c < n_chunks; ++c) {
            std::uint64_t lo = c * kChunk;
            std::uint64_t hi = std::min(n_pulses, lo + kChunk);
            for (std::uint64_t pulse = lo; pulse < hi; ++pulse)
                generate_pulse(p, seed, pulse, events, chunk_states[c]);
        }
    }

    MergeOutput merged;
    merged.summary.seed = seed;
    merge_events(p, seed, n_pulses, events, opts, records, merged);

    // The prepared-state tally covers the full generation range; when a block
    // cut truncated the timeline, whole chunks below the cut are kept and the
    // boundary chunk is re-walked so every summary field describes the same
    // pulse range.
    std::uint64_t tallied = merged.cut ? merged.cut_pulse + 1 : n_pulses;
    merged.summary.pulses = tallied;
    merged.summary.duration = static_cast<double>(tallied) * p.T;
    CellTable states;
    std::uint64_t whole = tallied / kChunk;
    for (std::uint64_t c = 0; c < whole; ++c)
        for (int b = 0; b < 2; ++b)
            for (int k = 0; k < 2; ++k)
                states.v[b][k] += chunk_states[c].v[b][k];
    for (std::uint64_t pulse = whole * kChunk; pulse < tallied; ++pulse) {
        PulseRng rq(seed, pulse);
        StateDraw d = decode_state(p, rq.at(0), rq.at(1));
        if (d.tx == d.rx) states.v[d.tx][d.k] += 1.0;
    }
    merged.summary.states = states;

    if (opts.live_stats) live_pass(p, seed, tallied, merged, merged.summary);

    McSummary sum = std::move(merged.summary);
    sum.counts.t_acq = sum.duration;
    sum.counts.mu1 = s.source.mu1;
    sum.counts.mu2 = s.source.mu2;
    sum.counts.p_mu1 = s.source.p_mu1;
    return sum;
}

}  // namespace

McSummary simulate(const Scenario& s, std::uint64_t n_pulses, std::uint64_t seed,
                   const SimOptions& opts, std::vector<ClickRecord>* records) {
    return run_simulation(s, n_pulses, seed, opts, records, true);
}

McSummary simulate_serial(const Scenario& s, std::uint64_t n_pulses, std::uint64_t seed,
                          const SimOptions& opts, std::vector<ClickRecord>* records) {
    return run_simulation(s, n_pulses, seed, opts, records, false);
}

EmpiricalStats empirical_stats(const McSummary& summary) {
    EmpiricalStats out;
    out.counts = summary.counts;
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            Basis basis = static_cast<Basis>(b);
            Intensity inten = static_cast<Intensity>(k);
            double n_states = summary.live_stats ? summary.live_states(basis, inten)
                                                 : summary.states(basis, inten);
            double n_clicks = summary.live_stats ? summary.live_clicks(basis, inten)
                                                 : summary.counts.n(basis, inten);
            double n_errors = summary.live_stats ? summary.live_errors(basis, inten)
                                                 : summary.counts.m(basis, inten);
            if (n_states > 0.0) out.p_click[b][k] = n_clicks / n_states;
            if (n_clicks > 0.0) out.qber[b][k] = n_errors / n_clicks;
        }
    }
    return out;
}

void write_click_records_csv(const std::vector<ClickRecord>& records,
                             const std::filesystem::path& path) {
    std::string body =
        "pulse_index,basis_tx,basis_rx,intensity,bin,arrival_offset_s,cause,"
        "photon_number,is_error\n";
    for (const auto& r : records) {
        body += std::to_string(r.pulse_index);
        body += ',';
        body += to_string(r.basis_tx);
        body += ',';
        body += to_string(r.basis_rx);
        body += ',';
        body += to_string(r.intensity);
        body += ',';
        body += r.bin == 0 ? "early" : "late";
        body += ',';
        body += fmt_g9(r.arrival_offset);
        body += ',';
        body += to_string(r.cause);
        body += ',';
        body += std::to_string(r.photon_number);
        body += ',';
        body += r.is_error ? '1' : '0';
        body += '\n';
    }
    atomic_write_file(path, body);
}

namespace {

// Pre-gate avalanche rate per pulse, used to anticipate dead-time load when
// sizing a block run. Counts every conversion, in or out of gate.
double avalanche_rate_per_pulse(const Scenario& s) {
    double noise = noise_rate_at_detector(s.channel, s.receiver);
    double x_path_t = db_to_linear(s.receiver.x_path_extra_loss_db);
    double T = 1.0 / s.source.rep_rate;
    double mu[2] = {s.source.mu1, s.source.mu2};
    double p_mu[2] = {s.source.p_mu1, 1.0 - s.source.p_mu1};
    double p_rx[2] = {s.receiver.p_z_rx, 1.0 - s.receiver.p_z_rx};
    double total = 0.0;
    for (int rx = 0; rx < 2; ++rx) {
        double loss_db = s.channel.quantum_loss_db + s.receiver.extra_loss_db +
                         (rx == 1 ? s.receiver.x_path_extra_loss_db : 0.0);
        double eta = db_to_linear(loss_db) * s.receiver.efficiency;
        double sig = 0.0;
        for (int k = 0; k < 2; ++k) sig += p_mu[k] * (1.0 - std::exp(-mu[k] * eta));
        double bg = (s.receiver.dark_rate + noise * (rx == 1 ? x_path_t : 1.0)) * T;
        total += p_rx[rx] * (sig + bg);
    }
    return total;
}

double expected_z_bits_per_pulse(const Scenario& s) {
    RatePrediction pred = predict(s);
    double load = avalanche_rate_per_pulse(s) * s.source.rep_rate * s.receiver.dead_time;
    double live = 1.0 / (1.0 + load);
    double z_click = 0.0;
    double p_mu[2] = {s.source.p_mu1, 1.0 - s.source.p_mu1};
    for (int k = 0; k < 2; ++k)
        z_click += p_mu[k] * pred.p_click(Basis::Z, static_cast<Intensity>(k));
    return s.source.p_z_tx * s.receiver.p_z_rx * z_click * live;
}

std::uint64_t draw_binomial(PulseRng& rng, std::uint64_t n, double prob) {
    std::uint64_t th = prob_threshold_u64(prob);
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n; ++i)
        if (rng.next() < th) ++hits;
    return hits;
}

}  // namespace

BlockResult run_block(const Scenario& s, std::uint64_t seed, const BlockOptions& opts) {
    ensure_valid(s);
    double block = s.security.block_size;
    double z_pp = expected_z_bits_per_pulse(s);
    if (!(z_pp > 0.0)) throw PartialBlockError(0.0, block, 0);
    double needed = block / z_pp;

    BlockMode mode = opts.mode;
    if (mode == BlockMode::Auto)
        mode = needed * 1.1 <= static_cast<double>(opts.pulse_cap) ? BlockMode::Direct
                                                                   : BlockMode::Scaled;

    if (mode == BlockMode::Direct) {
        std::uint64_t n = static_cast<std::uint64_t>(
            std::min(needed * 1.08 + 1000.0, static_cast<double>(opts.pulse_cap)));
        SimOptions sim_opts;
        sim_opts.z_stop = static_cast<std::uint64_t>(std::ceil(block));
        while (true) {
            McSummary sum = simulate(s, n, seed, sim_opts);
            if (sum.counts.n.basis_total(Basis::Z) >= block)
                return {std::move(sum), "direct"};
            if (n >= opts.pulse_cap)
                throw PartialBlockError(sum.counts.n.basis_total(Basis::Z), block, n);
            n = static_cast<std::uint64_t>(
                std::min(static_cast<double>(n) * 1.5 + 1000.0,
                         static_cast<double>(opts.pulse_cap)));
        }
    }

    // Scaled mode: short run, then multinomial rescale to the block size.
    // The sizing applies the same detector-load correction as direct mode so
    // that at scale_divisor = 1 both modes process the same pulse range.
    double divisor = std::max(1.0, opts.scale_divisor);
    std::uint64_t n_sim = static_cast<std::uint64_t>(
        std::min(std::max((needed * 1.08 + 1000.0) / divisor, 100000.0),
                 static_cast<double>(opts.pulse_cap)));
    McSummary sum = simulate(s, n_sim, seed);
    double nz = sum.counts.n.basis_total(Basis::Z);
    if (nz <= 0.0) throw PartialBlockError(0.0, block, n_sim);
    double factor = block / nz;

    McSummary scaled = sum;
    scaled.counts.n = CellTable{};
    scaled.counts.m = CellTable{};
    PulseRng rng(seed ^ kSaltScale, 0);
    for (int b = 0; b < 2; ++b) {
        Basis basis = static_cast<Basis>(b);
        double cell_n[2], cell_m[2];
        double total = 0.0;
        for (int k = 0; k < 2; ++k) {
            cell_n[k] = sum.counts.n(basis, static_cast<Intensity>(k));
            cell_m[k] = sum.counts.m(basis, static_cast<Intensity>(k));
            total += cell_n[k];
        }
        if (total <= 0.0) continue;
        std::uint64_t target = static_cast<std::uint64_t>(
            b == 0 ? std::ceil(block) : std::llround(sum.counts.n.basis_total(Basis::X) * factor));
        // Sequential conditional binomials over (intensity, error) categories.
        double cat_p[4] = {cell_n[0] - cell_m[0], cell_m[0], cell_n[1] - cell_m[1],
                           cell_m[1]};
        double remaining_p = total;
        std::uint64_t remaining_n = target;
        std::uint64_t cat_out[4] = {0, 0, 0, 0};
        for (int c = 0; c < 4 && remaining_n > 0; ++c) {
            double pr = remaining_p > 0.0 ? std::clamp(cat_p[c] / remaining_p, 0.0, 1.0)
                                          : 0.0;
            std::uint64_t draw = c == 3 ? remaining_n : draw_binomial(rng, remaining_n, pr);
            cat_out[c] = draw;
            remaining_n -= draw;
            remaining_p -= cat_p[c];
        }
        for (int k = 0; k < 2; ++k) {
            Intensity inten = static_cast<Intensity>(k);
            scaled.counts.n(basis, inten) =
                static_cast<double>(cat_out[2 * k] + cat_out[2 * k + 1]);
            scaled.counts.m(basis, inten) = static_cast<double>(cat_out[2 * k + 1]);
        }
    }
    scaled.counts.t_acq = sum.duration * factor;
    scaled.duration = sum.duration * factor;
    for (int b = 0; b < 2; ++b) {
        TagTally& tt = scaled.tags[b];
        tt.vacuum_clicks *= factor;
        tt.single_clicks *= factor;
        tt.multi_clicks *= factor;
        tt.single_errors *= factor;
        tt.signal_clicks *= factor;
        tt.dark_clicks *= factor;
        tt.classical_clicks *= factor;
        tt.afterpulse_clicks *= factor;
    }
    return {std::move(scaled), "scaled"};
}

namespace {

nlohmann::json cells_json(const CellTable& t) {
    return {{"z_mu1", t.v[0][0]},
            {"z_mu2", t.v[0][1]},
            {"x_mu1", t.v[1][0]},
            {"x_mu2", t.v[1][1]}};
}

nlohmann::json tags_json(const TagTally& t) {
    return {{"vacuum_clicks", t.vacuum_clicks},
            {"single_clicks", t.single_clicks},
            {"multi_clicks", t.multi_clicks},
            {"single_errors", t.single_errors},
            {"signal_clicks", t.signal_clicks},
            {"dark_clicks", t.dark_clicks},
            {"classical_clicks", t.classical_clicks},
            {"afterpulse_clicks", t.afterpulse_clicks}};
}

}  // namespace

std::string McSummary::to_json() const {
    nlohmann::json doc;
    doc["n"] = cells_json(counts.n);
    doc["m"] = cells_json(counts.m);
    doc["states"] = cells_json(states);
    doc["t_acq"] = counts.t_acq;
    doc["source"] = {{"mu1", counts.mu1}, {"mu2", counts.mu2}, {"p_mu1", counts.p_mu1}};
    doc["tags_z"] = tags_json(tags[0]);
    doc["tags_x"] = tags_json(tags[1]);
    doc["pulses"] = pulses;
    doc["seed"] = seed;
    doc["raw_accepted"] = raw_accepted;
    doc["duration_s"] = duration;
    if (live_stats) {
        doc["live_states"] = cells_json(live_states);
        doc["live_clicks"] = cells_json(live_clicks);
        doc["live_errors"] = cells_json(live_errors);
    }
    return doc.dump(2);
}

}  // namespace qkdco
