#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qkdco/pipeline.hpp"

namespace qkdco {

// Variable order everywhere: mu1, mu2, p_mu1, p_z_tx.
inline constexpr int kOptVars = 4;
inline constexpr const char* kOptVarNames[kOptVars] = {"mu1", "mu2", "p_mu1", "p_z_tx"};

struct OptimizationSpec {
    std::array<bool, kOptVars> free_vars = {true, true, true, false};
    std::array<double, kOptVars> lower = {0.01, 0.001, 0.01, 0.05};
    std::array<double, kOptVars> upper = {1.0, 0.5, 0.99, 0.95};
    int grid_points = 12;       // coarse stage, per free dimension
    double tol = 1e-9;          // relative objective spread for simplex stop
    std::uint64_t max_evals = 400000;
    bool asymptotic_rate = false;
    bool keep_trace = false;
    bool mc_verify = false;  // re-score the optimum with the pulse simulator

    std::string to_json() const;
    static OptimizationSpec from_json(const std::string& text);
};

struct OptimizationResult {
    std::array<double, kOptVars> params = {0, 0, 0, 0};
    FiniteKeyResult best;
    std::uint64_t evaluations = 0;
    bool no_positive_key = false;
    std::vector<std::pair<std::array<double, kOptVars>, double>> trace;
    double mc_skr = -1.0;  // filled when mc_verify is set

    std::string to_json() const;
};

// Coarse constraint-filtered grid, then Nelder-Mead refinement from the best
// grid points. Deterministic, ties broken by lexicographic parameter order.
OptimizationResult optimize(const Scenario& base, const OptimizationSpec& spec);

}  // namespace qkdco
