#include "qkdco/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <sstream>

#include "qkdco/pipeline.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

const char* const kSweepCsvHeader =
    "quantum_loss_db,classical_input_dbm,receiver_id,qber_z,qber_x,skr_bps,"
    "ell_bits,t_acq_s,r_sifted_z_hz";

namespace {

SweepRow eval_cell(const std::string& receiver_id, const Scenario& base,
                   double loss, double power) {
    Scenario s = base;
    s.channel.quantum_loss_db = loss;
    s.channel.classical_input_dbm = power;
    PipelineResult res = evaluate(s);

    SweepRow row;
    row.quantum_loss_db = loss;
    row.classical_input_dbm = power;
    row.receiver_id = receiver_id;
    row.qber_z = click_weighted_qber(s, res.prediction, Basis::Z);
    row.qber_x = click_weighted_qber(s, res.prediction, Basis::X);
    row.skr_bps = res.key.skr;
    row.ell_bits = res.key.ell;
    row.t_acq_s = res.prediction.t_acq;
    row.r_sifted_z_hz = res.prediction.r_sifted_z;
    return row;
}

}  // namespace

SweepResult run_sweep(const std::vector<std::pair<std::string, Scenario>>& configs,
                      const std::vector<double>& losses,
                      const std::vector<double>& powers) {
    if (configs.empty())
        throw ValidationError("configs", "at least one scenario required", 0.0);
    if (losses.empty())
        throw ValidationError("loss", "at least one loss value required", 0.0);
    if (powers.empty())
        throw ValidationError("power", "at least one power value required", 0.0);

    std::set<std::string> seen;
    for (const auto& [id, scenario] : configs) {
        if (!seen.insert(id).second)
            throw ValidationError("receiver_id", "duplicate receiver id: " + id, 0.0);
        // Surface bad grid values before the parallel region.
        for (double loss : losses)
            for (double power : powers) {
                Scenario s = scenario;
                s.channel.quantum_loss_db = loss;
                s.channel.classical_input_dbm = power;
                ensure_valid(s);
            }
    }

    std::size_t n_cells = configs.size() * losses.size() * powers.size();
    SweepResult out;
    out.rows.resize(n_cells);

    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(n_cells); ++idx) {
        std::size_t i = static_cast<std::size_t>(idx);
        std::size_t ci = i % configs.size();
        std::size_t pi = (i / configs.size()) % powers.size();
        std::size_t li = i / (configs.size() * powers.size());
        try {
            out.rows[i] = eval_cell(configs[ci].first, configs[ci].second,
                                    losses[li], powers[pi]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::stable_sort(out.rows.begin(), out.rows.end(),
                     [](const SweepRow& a, const SweepRow& b) {
                         if (a.quantum_loss_db != b.quantum_loss_db)
                             return a.quantum_loss_db < b.quantum_loss_db;
                         if (a.classical_input_dbm != b.classical_input_dbm)
                             return a.classical_input_dbm < b.classical_input_dbm;
                         return a.receiver_id < b.receiver_id;
                     });
    return out;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
    std::ostringstream out;
    out << kSweepCsvHeader << '\n';
    for (const SweepRow& r : result.rows) {
        out << fmt_g9(r.quantum_loss_db) << ',' << fmt_g9(r.classical_input_dbm) << ','
            << r.receiver_id << ',' << fmt_g9(r.qber_z) << ',' << fmt_g9(r.qber_x) << ','
            << fmt_g9(r.skr_bps) << ',' << fmt_g9(r.ell_bits) << ','
            << fmt_g9(r.t_acq_s) << ',' << fmt_g9(r.r_sifted_z_hz) << '\n';
    }
    atomic_write_file(path, out.str());
}

}  // namespace qkdco
