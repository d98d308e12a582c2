#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qkdco/model.hpp"

namespace qkdco {

struct NoiseFit {
    double kappa = 0.0;           // counts / (s * mW) at the quantum channel entry
    double residual_norm = 0.0;   // L2 norm of counts residuals after the fit

    std::string to_json() const;
};

struct NoiseScanChannel {
    int channel = 0;
    double raw = 0.0;             // counts/s as measured
    double dark_subtracted = 0.0; // max(0, raw - dark)
    double normalized = 0.0;      // dark_subtracted / max over channels, 0 if all dark
};

struct NoiseScan {
    std::vector<NoiseScanChannel> channels;  // sorted by channel id
    bool has_argmax = false;
    int argmax_channel = 0;

    std::string to_json() const;
};

// Least-squares slope through the origin of (launch power mW, counts - dark),
// negative residual counts clamped at 0 before fitting.
NoiseFit fit_noise_coefficient(const std::vector<std::pair<double, double>>& measurements,
                               double dark_rate);

// Dark-subtract, clamp, normalize to the maximum; argmax ties go to the
// lowest channel id. All channels at or below dark: zeros, no argmax.
NoiseScan scan_noise(const std::map<int, double>& per_channel_counts, double dark_rate);

// CSV inputs for the two procedures. An optional header line is skipped.
std::vector<std::pair<double, double>> read_power_counts_csv(const std::string& path);
std::map<int, double> read_channel_counts_csv(const std::string& path);

// Largest classical input power in [lo_dbm, hi_dbm] with a positive secret
// key rate. Returns -inf when even lo_dbm kills the key, +inf when hi_dbm
// still leaves one.
double input_power_threshold(const Scenario& s, double lo_dbm, double hi_dbm);

// Noise coefficient at which the key rate vanishes exactly at power_dbm:
// the scenario tolerates any power below power_dbm and nothing above it.
double fit_kappa_to_threshold(const Scenario& s, double power_dbm);

}  // namespace qkdco
