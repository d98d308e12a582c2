#pragma once

#include "qkdco/finite_key.hpp"
#include "qkdco/link_rates.hpp"
#include "qkdco/model.hpp"

namespace qkdco {

// Expected tallies for one block under the analytic rate model: block_size
// sifted Z bits split across intensities by click flux, X counts from the
// X/Z rate ratio over the same acquisition time. Throws NoKeyError when the
// sifted Z rate vanishes.
ObservedCounts expected_counts(const Scenario& s, const RatePrediction& pred);

struct PipelineOptions {
    // Rate semantics without detector recovery: click probabilities are
    // unchanged but rates scale linearly with the source clock. Used for
    // objective functions where exact clock scaling must hold.
    bool asymptotic_rate = false;
};

struct PipelineResult {
    RatePrediction prediction;
    ObservedCounts counts;
    FiniteKeyResult key;
};

// predict -> expected_counts -> secret_key_length. A scenario with no
// extractable key yields skr = 0 instead of an error.
PipelineResult evaluate(const Scenario& s, const PipelineOptions& opts = {});

}  // namespace qkdco
