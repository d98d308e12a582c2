#pragma once

#include <string>

#include "qkdco/model.hpp"

namespace qkdco {

// Click and error tallies for one key block, with the source settings they
// were produced under. Counts are real-valued so analytic expectations can be
// fed through the same path as recorded integers.
struct ObservedCounts {
    CellTable n;  // clicks per (basis, intensity)
    CellTable m;  // errors per (basis, intensity)
    double t_acq = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double p_mu1 = 0.0;

    std::string to_json() const;
    static ObservedCounts from_json(const std::string& text);
};

struct AdjustedCounts {
    double n_plus[2], n_minus[2];  // per intensity, rescaled by e^mu/p
    double m_plus[2], m_minus[2];
    double delta_n = 0.0;  // deviation on the basis click total
    double delta_m = 0.0;
};

struct DecoyBounds {
    double s0_low = 0.0;
    double s0_up = 0.0;
    double s1_low = 0.0;
};

struct PhaseErrorBound {
    double v1x_up = 0.0;
    double s1x_low = 0.0;
    double phi1_up = 0.0;
    bool pessimistic = false;  // clamped to 1/2 because the estimate degenerated
};

struct FiniteKeyResult {
    double tau0 = 0.0;
    double tau1 = 0.0;
    double s0_low = 0.0;
    double s0_up = 0.0;
    double s1_low = 0.0;
    double s1x_low = 0.0;
    double v1x_up = 0.0;
    double phi1_up = 0.0;
    double lambda_ec = 0.0;
    double ell = 0.0;  // floored, clamped at 0
    double skr = 0.0;  // ell / t_acq
    bool phase_bound_pessimistic = false;
};

// -x log2 x - (1-x) log2(1-x); 0 at both endpoints.
double binary_entropy(double x);

// Poisson mixture probability of emitting n photons (n in {0,1}).
double tau_n(int n, const SourceConfig& source);

// Additive penalty of the key-length bound: 6 log2(19/eps_sec) + log2(2/eps_corr).
double penalty_bits(const SecurityParams& security);

// Hoeffding-adjusted per-intensity counts for one basis.
AdjustedCounts adjusted_counts(const ObservedCounts& counts, Basis basis, double eps_prime);

// One-decoy vacuum/single-photon bounds for one basis.
DecoyBounds decoy_bounds(const ObservedCounts& counts, Basis basis,
                         const SecurityParams& security);

// Upper bound on the single-photon phase error rate from X-basis statistics.
PhaseErrorBound phase_error_upper(const ObservedCounts& counts,
                                  const SecurityParams& security);

FiniteKeyResult secret_key_length(const ObservedCounts& counts,
                                  const SecurityParams& security);

}  // namespace qkdco
