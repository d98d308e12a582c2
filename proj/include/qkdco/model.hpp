#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qkdco/errors.hpp"

namespace qkdco {

enum class Basis : std::uint8_t { Z = 0, X = 1 };
enum class Intensity : std::uint8_t { Signal = 0, Decoy = 1 };  // mu1, mu2

inline const char* to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }
inline const char* to_string(Intensity k) { return k == Intensity::Signal ? "mu1" : "mu2"; }

// One value per (basis, intensity) cell.
struct CellTable {
    double v[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    double& operator()(Basis b, Intensity k) {
        return v[static_cast<int>(b)][static_cast<int>(k)];
    }
    double operator()(Basis b, Intensity k) const {
        return v[static_cast<int>(b)][static_cast<int>(k)];
    }
    double basis_total(Basis b) const {
        return v[static_cast<int>(b)][0] + v[static_cast<int>(b)][1];
    }
};

struct SourceConfig {
    double rep_rate = 0.0;           // states prepared per second
    double mu1 = 0.0;                // mean photons per signal pulse
    double mu2 = 0.0;                // mean photons per decoy pulse
    double p_mu1 = 0.0;              // probability of choosing the signal intensity
    double p_z_tx = 0.0;             // probability of preparing the Z basis
    double pulse_fwhm = 0.0;         // optical pulse FWHM, seconds
    double intrinsic_error_z = 0.0;  // misalignment error probability in Z
    double visibility_x = 1.0;       // interferometer visibility; e_X = (1-V)/2
};

struct ChannelConfig {
    double quantum_loss_db = 0.0;       // one-way quantum channel attenuation
    double total_loop_loss_db = 21.0;   // full fiber generating classical noise
    double classical_input_dbm = -300.0;  // classical power at the DWDM input
    double noise_spectral_density = 0.0;  // counts/(s*mW), launch-power referenced
};

struct ReceiverConfig {
    double efficiency = 0.0;            // overall detector efficiency
    double dark_rate = 0.0;             // counts/second
    double dead_time = 0.0;             // seconds, non-paralyzable
    double jitter_fwhm = 0.0;           // seconds
    double gate_window = 0.0;           // temporal post-selection window per bin
    double optical_rejection_db = 0.0;  // suppression of classical noise at the detector
    double extra_loss_db = 0.0;         // receiver insertion loss outside efficiency
    double x_path_extra_loss_db = 0.0;  // interferometer loss, X path only
    double p_z_rx = 0.5;                // probability of measuring Z
    double afterpulse_prob = 0.0;       // afterpulse probability per click
};

struct SecurityParams {
    double eps_sec = 1e-9;
    double eps_corr = 1e-9;
    double block_size = 1e7;  // sifted Z bits per privacy-amplification block
    double f_ec = 1.16;       // error-correction inefficiency
};

struct Scenario {
    SourceConfig source;
    ChannelConfig channel;
    ReceiverConfig receiver;
    SecurityParams security;
};

// 10^(-x/10). Throws ValidationError on non-finite input.
double db_to_linear(double x);

// 10^(p/10) milliwatts. Throws ValidationError on non-finite input.
double dbm_to_mw(double p);

// Classical power entering the quantum channel segment:
// input power minus the loop loss that is not part of the quantum channel.
double classical_launch_dbm(const ChannelConfig& channel);

// Collects every violated invariant; empty result means the scenario is valid.
std::vector<ValidationIssue> validate(const Scenario& s);

// Throws ValidationError carrying all violations; returns its argument otherwise.
const Scenario& ensure_valid(const Scenario& s);

// Strict JSON deserialization: snake_case field names, unknown fields rejected.
// Fields with documented defaults may be omitted; gate_window defaults to
// 3x the combined arrival-time sigma of pulse width and jitter.
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace qkdco
