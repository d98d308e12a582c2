#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qkdco/finite_key.hpp"
#include "qkdco/model.hpp"

namespace qkdco {

enum class ClickCause : std::uint8_t { Signal = 0, Dark = 1, ClassicalNoise = 2, Afterpulse = 3 };
const char* to_string(ClickCause c);

// One counted (gated, sifted, double-resolved) detection.
struct ClickRecord {
    std::uint64_t pulse_index = 0;
    Basis basis_tx = Basis::Z;
    Basis basis_rx = Basis::Z;
    Intensity intensity = Intensity::Signal;
    int bin = 0;                  // 0 = early, 1 = late
    double arrival_offset = 0.0;  // seconds from the resolved bin center
    ClickCause cause = ClickCause::Signal;
    int photon_number = 0;  // source Poisson draw of the landing period
    bool is_error = false;
};

// Ground-truth tallies per basis, resolved from per-pulse tags. These are
// what the experiment cannot observe and the bound-validity suite checks.
struct TagTally {
    double vacuum_clicks = 0.0;  // clicks on periods that emitted 0 photons
    double single_clicks = 0.0;
    double multi_clicks = 0.0;
    double single_errors = 0.0;  // errors among single-photon clicks
    double signal_clicks = 0.0;  // partition by cause
    double dark_clicks = 0.0;
    double classical_clicks = 0.0;
    double afterpulse_clicks = 0.0;
};

struct McSummary {
    ObservedCounts counts;  // sifted clicks/errors per (basis, intensity)
    TagTally tags[2];       // indexed by basis
    CellTable states;       // matched-basis prepared states per cell

    // Filled when SimOptions::live_stats is set: per-cell tallies over states
    // whose gates were unobstructed by earlier dead time. Click probabilities
    // estimated on this subsample are free of dead-time suppression.
    bool live_stats = false;
    CellTable live_states;
    CellTable live_clicks;
    CellTable live_errors;

    std::uint64_t pulses = 0;
    std::uint64_t seed = 0;
    std::uint64_t raw_accepted = 0;  // avalanches after dead time, before gating
    double duration = 0.0;           // simulated wall time, seconds

    std::string to_json() const;
};

struct SimOptions {
    bool live_stats = false;
    std::uint64_t record_cap = 5000000;  // refuse record streams larger than this
    int threads = 0;                     // 0 = QKDCO_THREADS or OpenMP default

    // When set, tallying stops at the end of the period containing the
    // z_stop-th sifted Z click; the summary then reports the truncated pulse
    // count and duration, exactly as if only those pulses had been simulated.
    // Used by run_block to cut an acquisition at the block boundary.
    std::uint64_t z_stop = 0;
};

// Pulse-by-pulse simulation of the full link. Deterministic in
// (scenario, n_pulses, seed) for any worker count.
McSummary simulate(const Scenario& s, std::uint64_t n_pulses, std::uint64_t seed,
                   const SimOptions& opts = {},
                   std::vector<ClickRecord>* records = nullptr);

// Single-pass reference implementation used to validate the sharded one.
McSummary simulate_serial(const Scenario& s, std::uint64_t n_pulses, std::uint64_t seed,
                          const SimOptions& opts = {},
                          std::vector<ClickRecord>* records = nullptr);

// Per-cell rates; cells with no data stay empty instead of reporting 0/0.
// With live stats present the click probabilities and error rates are taken
// from the live subsample, otherwise from raw (dead-time-suppressed) tallies.
struct EmpiricalStats {
    ObservedCounts counts;
    std::optional<double> p_click[2][2];
    std::optional<double> qber[2][2];
};
EmpiricalStats empirical_stats(const McSummary& summary);

void write_click_records_csv(const std::vector<ClickRecord>& records,
                             const std::filesystem::path& path);

enum class BlockMode { Auto, Direct, Scaled };

struct BlockOptions {
    BlockMode mode = BlockMode::Auto;
    std::uint64_t pulse_cap = 2000000000ull;
    // Scaled mode simulates roughly needed/scale_divisor pulses and
    // multinomially rescales the tallies to the block size.
    double scale_divisor = 8.0;
};

struct BlockResult {
    McSummary summary;  // summary.counts is the block-sized record
    std::string mode;   // "direct" or "scaled"
};

// Collect a full privacy-amplification block of sifted Z bits.
BlockResult run_block(const Scenario& s, std::uint64_t seed, const BlockOptions& opts = {});

}  // namespace qkdco
