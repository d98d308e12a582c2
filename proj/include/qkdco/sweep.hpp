#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qkdco/model.hpp"

namespace qkdco {

struct SweepRow {
    double quantum_loss_db = 0.0;
    double classical_input_dbm = 0.0;
    std::string receiver_id;
    double qber_z = 0.0;
    double qber_x = 0.0;
    double skr_bps = 0.0;
    double ell_bits = 0.0;
    double t_acq_s = 0.0;
    double r_sifted_z_hz = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by (loss, power, receiver_id)
};

// Evaluates every (config, loss, power) cell of the grid in parallel. Each
// config carries the receiver id used in the output rows; duplicates are
// rejected. Cells with no extractable key keep skr_bps = 0 and an infinite
// acquisition time.
SweepResult run_sweep(const std::vector<std::pair<std::string, Scenario>>& configs,
                      const std::vector<double>& losses,
                      const std::vector<double>& powers);

// Fixed column order, 9 significant digits, write-to-temp then rename.
void write_sweep_csv(const SweepResult& result, const std::string& path);

extern const char* const kSweepCsvHeader;

}  // namespace qkdco
