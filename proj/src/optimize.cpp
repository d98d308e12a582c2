#include "qkdco/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "qkdco/photon_mc.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

namespace {

using Params = std::array<double, kOptVars>;

constexpr double kMuGap = 1e-6;  // enforced mu1 - mu2 separation

Params base_params(const Scenario& s) {
    return {s.source.mu1, s.source.mu2, s.source.p_mu1, s.source.p_z_tx};
}

Scenario apply_params(const Scenario& base, const Params& x) {
    Scenario s = base;
    s.source.mu1 = x[0];
    s.source.mu2 = x[1];
    s.source.p_mu1 = x[2];
    s.source.p_z_tx = x[3];
    return s;
}

void check_spec(const OptimizationSpec& spec) {
    std::vector<ValidationIssue> issues;
    for (int v = 0; v < kOptVars; ++v) {
        if (!(spec.lower[v] <= spec.upper[v]))
            issues.push_back({std::string("spec.bounds.") + kOptVarNames[v],
                              "lower bound above upper bound", spec.lower[v]});
    }
    if (spec.grid_points < 1)
        issues.push_back({"spec.grid_points", "must be >= 1",
                          static_cast<double>(spec.grid_points)});
    if (!(spec.tol > 0))
        issues.push_back({"spec.tol", "must be > 0", spec.tol});
    if (spec.max_evals < 1)
        issues.push_back({"spec.max_evals", "must be >= 1",
                          static_cast<double>(spec.max_evals)});
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

// Clamp into the box, then restore mu2 < mu1. Probabilities stay inside the
// open unit interval via the box bounds themselves.
Params project(const OptimizationSpec& spec, Params x) {
    for (int v = 0; v < kOptVars; ++v)
        x[v] = std::clamp(x[v], spec.lower[v], spec.upper[v]);
    if (x[1] > x[0] - kMuGap) x[1] = std::max(spec.lower[1], x[0] - kMuGap);
    return x;
}

bool feasible(const OptimizationSpec& spec, const Params& x) {
    for (int v = 0; v < kOptVars; ++v)
        if (x[v] < spec.lower[v] || x[v] > spec.upper[v]) return false;
    if (!(x[1] < x[0])) return false;
    if (!(x[0] <= 1.0) || !(x[1] >= 0.0)) return false;
    if (!(x[2] > 0.0 && x[2] < 1.0)) return false;
    if (!(x[3] > 0.0 && x[3] < 1.0)) return false;
    return true;
}

bool lex_less(const Params& a, const Params& b) {
    for (int v = 0; v < kOptVars; ++v) {
        if (a[v] != b[v]) return a[v] < b[v];
    }
    return false;
}

struct Objective {
    Objective(const Scenario& b, const OptimizationSpec& sp) : base(b), spec(sp) {}

    const Scenario& base;
    const OptimizationSpec& spec;
    std::uint64_t evals = 0;
    Params best_x{};
    double best_f = -1.0;
    std::vector<std::pair<Params, double>> trace;

    double eval(const Params& raw) {
        Params x = project(spec, raw);
        ++evals;
        double f = feasible(spec, x) ? score(x) : 0.0;
        if (f > best_f || (f == best_f && best_f >= 0.0 && lex_less(x, best_x))) {
            best_f = f;
            best_x = x;
        }
        if (spec.keep_trace) trace.emplace_back(x, f);
        return f;
    }

    double score(const Params& x) const {
        Scenario s = apply_params(base, x);
        PipelineOptions opts;
        opts.asymptotic_rate = spec.asymptotic_rate;
        return evaluate(s, opts).key.skr;
    }
};

std::vector<double> axis_values(const OptimizationSpec& spec, int v, double fixed) {
    if (!spec.free_vars[v]) return {fixed};
    int n = spec.grid_points;
    if (n == 1) return {0.5 * (spec.lower[v] + spec.upper[v])};
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(spec.lower[v] +
                      (spec.upper[v] - spec.lower[v]) * i / (n - 1));
    return out;
}

// Nelder-Mead on the free coordinates, maximizing; fixed coordinates ride
// along untouched. Everything is deterministic: no restarts with random
// perturbations, stable ordering with lexicographic tie-breaks.
void nelder_mead(Objective& obj, const OptimizationSpec& spec, const Params& start) {
    std::vector<int> dims;
    for (int v = 0; v < kOptVars; ++v)
        if (spec.free_vars[v]) dims.push_back(v);
    if (dims.empty()) {
        obj.eval(start);
        return;
    }
    std::size_t n = dims.size();

    struct Vertex {
        Params x;
        double f;
    };
    std::vector<Vertex> simplex;
    simplex.push_back({project(spec, start), 0.0});
    for (std::size_t i = 0; i < n; ++i) {
        Params x = start;
        int v = dims[i];
        double step = 0.08 * (spec.upper[v] - spec.lower[v]);
        x[v] += x[v] + step <= spec.upper[v] ? step : -step;
        simplex.push_back({project(spec, x), 0.0});
    }
    for (auto& vert : simplex) vert.f = obj.eval(vert.x);

    auto sort_simplex = [&]() {
        std::stable_sort(simplex.begin(), simplex.end(),
                         [](const Vertex& a, const Vertex& b) {
                             if (a.f != b.f) return a.f > b.f;
                             return lex_less(a.x, b.x);
                         });
    };

    int max_iter = 400 * static_cast<int>(n);
    for (int iter = 0; iter < max_iter; ++iter) {
        if (obj.evals >= obj.spec.max_evals) return;
        sort_simplex();
        double f_best = simplex.front().f;
        double f_worst = simplex.back().f;
        if (f_best - f_worst <= obj.spec.tol * std::max(1e-300, std::fabs(f_best)) &&
            iter > 0)
            return;

        Params centroid = simplex[0].x;  // fixed coords copied from a vertex
        for (int v : dims) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += simplex[i].x[v];
            centroid[v] = sum / static_cast<double>(n);
        }
        auto blend = [&](double coef) {
            Params x = centroid;
            for (int v : dims)
                x[v] = centroid[v] + coef * (simplex.back().x[v] - centroid[v]);
            return x;
        };

        Params refl = blend(-1.0);
        double f_refl = obj.eval(refl);
        if (f_refl > f_best) {
            Params expd = blend(-2.0);
            double f_expd = obj.eval(expd);
            if (f_expd > f_refl) {
                simplex.back() = {expd, f_expd};
            } else {
                simplex.back() = {refl, f_refl};
            }
            continue;
        }
        if (f_refl > simplex[n - 1].f) {
            simplex.back() = {refl, f_refl};
            continue;
        }
        Params contr = blend(0.5);
        double f_contr = obj.eval(contr);
        if (f_contr > f_worst) {
            simplex.back() = {contr, f_contr};
            continue;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            Params x = simplex[i].x;
            for (int v : dims) x[v] = 0.5 * (simplex[0].x[v] + x[v]);
            simplex[i] = {x, obj.eval(x)};
        }
    }
}

}  // namespace

OptimizationResult optimize(const Scenario& base, const OptimizationSpec& spec) {
    ensure_valid(base);
    check_spec(spec);

    Objective obj(base, spec);
    Params fixed = base_params(base);

    std::vector<double> axes[kOptVars];
    for (int v = 0; v < kOptVars; ++v) axes[v] = axis_values(spec, v, fixed[v]);

    std::vector<Params> grid;
    for (double mu1 : axes[0])
        for (double mu2 : axes[1])
            for (double p_mu1 : axes[2])
                for (double p_z_tx : axes[3]) {
                    Params x = {mu1, mu2, p_mu1, p_z_tx};
                    if (feasible(spec, x)) grid.push_back(x);
                }
    if (grid.empty())
        throw ValidationError("spec", "no feasible grid point under the constraints", 0.0);

    std::vector<double> scores(grid.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(grid.size()); ++i)
        scores[static_cast<std::size_t>(i)] = obj.score(grid[static_cast<std::size_t>(i)]);

    // Fold the grid into the trace/best bookkeeping serially so evaluation
    // counts and tie-breaks never depend on thread scheduling.
    obj.evals += grid.size();
    std::vector<std::size_t> order(grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return lex_less(grid[a], grid[b]);
    });
    obj.best_f = scores[order[0]];
    obj.best_x = grid[order[0]];
    if (spec.keep_trace)
        for (std::size_t i = 0; i < grid.size(); ++i)
            obj.trace.emplace_back(grid[i], scores[i]);

    std::size_t restarts = std::min<std::size_t>(3, order.size());
    for (std::size_t r = 0; r < restarts; ++r) nelder_mead(obj, spec, grid[order[r]]);

    OptimizationResult out;
    out.params = obj.best_x;
    out.evaluations = obj.evals;
    out.no_positive_key = !(obj.best_f > 0.0);
    if (spec.keep_trace) out.trace = std::move(obj.trace);

    Scenario best_scenario = apply_params(base, obj.best_x);
    PipelineOptions popts;
    popts.asymptotic_rate = spec.asymptotic_rate;
    out.best = evaluate(best_scenario, popts).key;

    if (spec.mc_verify) {
        BlockOptions bopts;
        bopts.mode = BlockMode::Scaled;
        try {
            BlockResult block = run_block(best_scenario, 1, bopts);
            out.mc_skr = secret_key_length(block.summary.counts, best_scenario.security).skr;
        } catch (const PartialBlockError&) {
            out.mc_skr = 0.0;
        } catch (const EmptyBlockError&) {
            out.mc_skr = 0.0;
        }
    }
    return out;
}

namespace {

using nlohmann::json;

}  // namespace

std::string OptimizationSpec::to_json() const {
    json doc;
    json free = json::array();
    for (int v = 0; v < kOptVars; ++v)
        if (free_vars[v]) free.push_back(kOptVarNames[v]);
    doc["free"] = free;
    json bounds = json::object();
    for (int v = 0; v < kOptVars; ++v)
        bounds[kOptVarNames[v]] = {lower[v], upper[v]};
    doc["bounds"] = bounds;
    doc["grid_points"] = grid_points;
    doc["tol"] = tol;
    doc["max_evals"] = max_evals;
    doc["asymptotic_rate"] = asymptotic_rate;
    doc["keep_trace"] = keep_trace;
    doc["mc_verify"] = mc_verify;
    return doc.dump(2);
}

OptimizationSpec OptimizationSpec::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("spec", std::string("JSON parse error: ") + e.what(), 0.0);
    }
    if (!doc.is_object()) throw ValidationError("spec", "must be a JSON object", 0.0);

    OptimizationSpec spec;
    auto var_index = [](const std::string& name) {
        for (int v = 0; v < kOptVars; ++v)
            if (name == kOptVarNames[v]) return v;
        throw ValidationError("spec.var", "unknown variable " + name, 0.0);
    };
    for (const auto& item : doc.items()) {
        const std::string& key = item.key();
        const json& val = item.value();
        if (key == "free") {
            if (!val.is_array())
                throw ValidationError("spec.free", "must be an array of names", 0.0);
            spec.free_vars = {false, false, false, false};
            for (const auto& name : val) {
                if (!name.is_string())
                    throw ValidationError("spec.free", "entries must be strings", 0.0);
                spec.free_vars[static_cast<std::size_t>(
                    var_index(name.get<std::string>()))] = true;
            }
        } else if (key == "bounds") {
            if (!val.is_object())
                throw ValidationError("spec.bounds", "must be an object", 0.0);
            for (const auto& b : val.items()) {
                int v = var_index(b.key());
                if (!b.value().is_array() || b.value().size() != 2 ||
                    !b.value()[0].is_number() || !b.value()[1].is_number())
                    throw ValidationError("spec.bounds." + b.key(),
                                          "must be [lower, upper]", 0.0);
                spec.lower[static_cast<std::size_t>(v)] = b.value()[0].get<double>();
                spec.upper[static_cast<std::size_t>(v)] = b.value()[1].get<double>();
            }
        } else if (key == "grid_points") {
            if (!val.is_number_integer())
                throw ValidationError("spec.grid_points", "must be an integer", 0.0);
            spec.grid_points = val.get<int>();
        } else if (key == "tol") {
            if (!val.is_number()) throw ValidationError("spec.tol", "must be a number", 0.0);
            spec.tol = val.get<double>();
        } else if (key == "max_evals") {
            if (!val.is_number_integer())
                throw ValidationError("spec.max_evals", "must be an integer", 0.0);
            spec.max_evals = val.get<std::uint64_t>();
        } else if (key == "asymptotic_rate" || key == "keep_trace" || key == "mc_verify") {
            if (!val.is_boolean())
                throw ValidationError("spec." + key, "must be a boolean", 0.0);
            if (key == "asymptotic_rate") spec.asymptotic_rate = val.get<bool>();
            if (key == "keep_trace") spec.keep_trace = val.get<bool>();
            if (key == "mc_verify") spec.mc_verify = val.get<bool>();
        } else {
            throw ValidationError("spec." + key, "unknown field", 0.0);
        }
    }
    return spec;
}

std::string OptimizationResult::to_json() const {
    json doc;
    json params_obj = json::object();
    for (int v = 0; v < kOptVars; ++v) params_obj[kOptVarNames[v]] = params[v];
    doc["params"] = params_obj;
    doc["skr_bps"] = best.skr;
    doc["ell_bits"] = best.ell;
    doc["phi1_up"] = best.phi1_up;
    doc["lambda_ec"] = best.lambda_ec;
    doc["s0_low"] = best.s0_low;
    doc["s1_low"] = best.s1_low;
    doc["evaluations"] = evaluations;
    doc["no_positive_key"] = no_positive_key;
    if (mc_skr >= 0.0) doc["mc_skr_bps"] = mc_skr;
    if (!trace.empty()) {
        json tr = json::array();
        for (const auto& [x, f] : trace) {
            json row = json::object();
            for (int v = 0; v < kOptVars; ++v) row[kOptVarNames[v]] = x[v];
            row["skr_bps"] = f;
            tr.push_back(row);
        }
        doc["trace"] = tr;
    }
    return doc.dump(2);
}

}  // namespace qkdco
