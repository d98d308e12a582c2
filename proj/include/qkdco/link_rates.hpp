#pragma once

#include "qkdco/model.hpp"

namespace qkdco {

// Analytic rate prediction for one scenario. Click and error probabilities
// are per prepared state, conditioned on matching basis choices; rates fold
// in basis/intensity selection and detector recovery.
struct RatePrediction {
    CellTable p_sig;    // signal-only detection probability
    CellTable p_click;  // signal or background
    CellTable qber;
    double p_bg_z = 0.0;  // background click probability per state, Z path
    double p_bg_x = 0.0;
    double gate_accept = 0.0;  // fraction of the arrival distribution inside the gate
    double r_raw = 0.0;        // pre-dead-time sifted click rate, clicks/second
    double r_sifted_z = 0.0;   // post-dead-time sifted rates
    double r_sifted_x = 0.0;
    double t_acq = 0.0;  // seconds to accumulate block_size Z bits
};

// Probability mass of a centered Gaussian arrival distribution inside a gate
// of the given width. sigma^2 = (pulse_fwhm^2 + jitter_fwhm^2) / (8 ln 2).
double gate_acceptance(double pulse_fwhm, double jitter_fwhm, double gate_window);

// Non-paralyzable detector: measured rate true/(1 + true*dead_time).
double dead_time_throughput(double true_rate, double dead_time);

// Classical-noise click rate at the detector, counts/second, before gating.
double noise_rate_at_detector(const ChannelConfig& channel, const ReceiverConfig& receiver);

double combined_arrival_fwhm(double pulse_fwhm, double jitter_fwhm);
double combined_arrival_sigma(double pulse_fwhm, double jitter_fwhm);

// Default temporal gate used when a scenario does not set one: 3 sigma.
double default_gate_window(double pulse_fwhm, double jitter_fwhm);

RatePrediction predict(const Scenario& s);

// Error rate among all clicks of one basis, intensities weighted by their
// click flux. A basis with no clicks carries no information: 0.5.
double click_weighted_qber(const Scenario& s, const RatePrediction& pred, Basis b);

}  // namespace qkdco
