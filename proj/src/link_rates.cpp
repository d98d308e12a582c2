#include "qkdco/link_rates.hpp"

#include <cmath>
#include <limits>

namespace qkdco {

double combined_arrival_sigma(double pulse_fwhm, double jitter_fwhm) {
    return std::sqrt(pulse_fwhm * pulse_fwhm + jitter_fwhm * jitter_fwhm) /
           std::sqrt(8.0 * std::log(2.0));
}

double combined_arrival_fwhm(double pulse_fwhm, double jitter_fwhm) {
    return std::sqrt(pulse_fwhm * pulse_fwhm + jitter_fwhm * jitter_fwhm);
}

double default_gate_window(double pulse_fwhm, double jitter_fwhm) {
    return 3.0 * combined_arrival_sigma(pulse_fwhm, jitter_fwhm);
}

double gate_acceptance(double pulse_fwhm, double jitter_fwhm, double gate_window) {
    if (gate_window < 0)
        throw ValidationError("gate_window", "must be >= 0", gate_window);
    if (pulse_fwhm < 0)
        throw ValidationError("pulse_fwhm", "must be >= 0", pulse_fwhm);
    if (jitter_fwhm < 0)
        throw ValidationError("jitter_fwhm", "must be >= 0", jitter_fwhm);
    double sigma = combined_arrival_sigma(pulse_fwhm, jitter_fwhm);
    if (sigma == 0.0) return gate_window > 0 ? 1.0 : 0.0;
    return std::erf(gate_window / (2.0 * std::sqrt(2.0) * sigma));
}

double dead_time_throughput(double true_rate, double dead_time) {
    if (true_rate < 0)
        throw ValidationError("true_rate", "must be >= 0", true_rate);
    if (dead_time < 0)
        throw ValidationError("dead_time", "must be >= 0", dead_time);
    return true_rate / (1.0 + true_rate * dead_time);
}

double noise_rate_at_detector(const ChannelConfig& channel, const ReceiverConfig& receiver) {
    if (channel.noise_spectral_density == 0.0) return 0.0;
    double launch_mw = dbm_to_mw(classical_launch_dbm(channel));
    return channel.noise_spectral_density * launch_mw *
           db_to_linear(receiver.optical_rejection_db);
}

RatePrediction predict(const Scenario& s) {
    ensure_valid(s);
    RatePrediction out;
    out.gate_accept =
        gate_acceptance(s.source.pulse_fwhm, s.receiver.jitter_fwhm, s.receiver.gate_window);

    double noise = noise_rate_at_detector(s.channel, s.receiver);
    // Dark counts originate in the detector; classical noise reaching the X
    // detector has passed the interferometer and is attenuated with it.
    double x_path_t = db_to_linear(s.receiver.x_path_extra_loss_db);
    double bg_rate[2] = {s.receiver.dark_rate + noise,
                         s.receiver.dark_rate + noise * x_path_t};
    double two_gates = 2.0 * s.receiver.gate_window;
    out.p_bg_z = bg_rate[0] * two_gates;
    out.p_bg_x = bg_rate[1] * two_gates;

    double e_opt[2] = {s.source.intrinsic_error_z, (1.0 - s.source.visibility_x) / 2.0};
    double mu[2] = {s.source.mu1, s.source.mu2};
    double p_mu[2] = {s.source.p_mu1, 1.0 - s.source.p_mu1};
    double p_tx[2] = {s.source.p_z_tx, 1.0 - s.source.p_z_tx};
    double p_rx[2] = {s.receiver.p_z_rx, 1.0 - s.receiver.p_z_rx};

    double sift_rate[2] = {0.0, 0.0};  // pre-dead-time, per basis
    for (int b = 0; b < 2; ++b) {
        Basis basis = static_cast<Basis>(b);
        double loss_db = s.channel.quantum_loss_db + s.receiver.extra_loss_db +
                         (basis == Basis::X ? s.receiver.x_path_extra_loss_db : 0.0);
        double eta = db_to_linear(loss_db) * s.receiver.efficiency * out.gate_accept;
        double p_bg = b == 0 ? out.p_bg_z : out.p_bg_x;
        for (int k = 0; k < 2; ++k) {
            Intensity inten = static_cast<Intensity>(k);
            double p_sig = 1.0 - std::exp(-mu[k] * eta);
            double p_click = 1.0 - (1.0 - p_sig) * (1.0 - p_bg);
            out.p_sig(basis, inten) = p_sig;
            out.p_click(basis, inten) = p_click;
            out.qber(basis, inten) =
                p_click > 0.0
                    ? (e_opt[b] * p_sig + 0.5 * (p_click - p_sig)) / p_click
                    : 0.5;
            sift_rate[b] += s.source.rep_rate * p_tx[b] * p_rx[b] * p_mu[k] * p_click;
        }
    }

    out.r_raw = sift_rate[0] + sift_rate[1];
    double measured = dead_time_throughput(out.r_raw, s.receiver.dead_time);
    if (out.r_raw > 0.0) {
        out.r_sifted_z = measured * (sift_rate[0] / out.r_raw);
        out.r_sifted_x = measured * (sift_rate[1] / out.r_raw);
    }
    out.t_acq = out.r_sifted_z > 0.0
                    ? s.security.block_size / out.r_sifted_z
                    : std::numeric_limits<double>::infinity();
    return out;
}

double click_weighted_qber(const Scenario& s, const RatePrediction& pred, Basis b) {
    double p_mu[2] = {s.source.p_mu1, 1.0 - s.source.p_mu1};
    double clicks = 0.0;
    double errors = 0.0;
    for (Intensity k : {Intensity::Signal, Intensity::Decoy}) {
        double w = p_mu[static_cast<int>(k)] * pred.p_click(b, k);
        clicks += w;
        errors += w * pred.qber(b, k);
    }
    return clicks > 0.0 ? errors / clicks : 0.5;
}

}  // namespace qkdco
