#include "qkdco/finite_key.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace qkdco {

double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw ValidationError("binary_entropy", "argument must be in [0,1]", x);
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double tau_n(int n, const SourceConfig& source) {
    if (n != 0 && n != 1)
        throw ValidationError("tau_n", "only photon numbers 0 and 1 are supported",
                              static_cast<double>(n));
    double mu[2] = {source.mu1, source.mu2};
    double p[2] = {source.p_mu1, 1.0 - source.p_mu1};
    double sum = 0.0;
    for (int k = 0; k < 2; ++k)
        sum += p[k] * std::exp(-mu[k]) * (n == 0 ? 1.0 : mu[k]);
    return sum;
}

double penalty_bits(const SecurityParams& security) {
    return 6.0 * std::log2(19.0 / security.eps_sec) + std::log2(2.0 / security.eps_corr);
}

namespace {

double hoeffding_delta(double total, double eps_prime) {
    if (total <= 0.0) return 0.0;
    return std::sqrt(0.5 * total * std::log(1.0 / eps_prime));
}

void check_counts(const ObservedCounts& c) {
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            Basis basis = static_cast<Basis>(b);
            Intensity inten = static_cast<Intensity>(k);
            double n = c.n(basis, inten);
            double m = c.m(basis, inten);
            if (!(n >= 0.0) || !std::isfinite(n))
                throw ValidationError("counts.n", "must be finite and >= 0", n);
            if (!(m >= 0.0) || !(m <= n))
                throw ValidationError("counts.m", "must satisfy 0 <= m <= n", m);
        }
    }
    if (!(c.mu2 >= 0.0) || !(c.mu2 < c.mu1))
        throw ValidationError("counts.mu2", "must satisfy 0 <= mu2 < mu1", c.mu2);
    if (!(c.p_mu1 > 0.0 && c.p_mu1 < 1.0))
        throw ValidationError("counts.p_mu1", "must be in (0,1)", c.p_mu1);
}

}  // namespace

AdjustedCounts adjusted_counts(const ObservedCounts& counts, Basis basis,
                               double eps_prime) {
    if (!(eps_prime > 0.0 && eps_prime <= 1.0))
        throw ValidationError("eps_prime", "must be in (0,1]", eps_prime);
    check_counts(counts);
    double mu[2] = {counts.mu1, counts.mu2};
    double p[2] = {counts.p_mu1, 1.0 - counts.p_mu1};
    double n_total = counts.n.basis_total(basis);
    double m_total = counts.m.basis_total(basis);

    AdjustedCounts out;
    out.delta_n = hoeffding_delta(n_total, eps_prime);
    out.delta_m = hoeffding_delta(m_total, eps_prime);
    for (int k = 0; k < 2; ++k) {
        double scale = std::exp(mu[k]) / p[k];
        double n = counts.n(basis, static_cast<Intensity>(k));
        double m = counts.m(basis, static_cast<Intensity>(k));
        out.n_plus[k] = scale * (n + out.delta_n);
        out.n_minus[k] = std::max(0.0, scale * (n - out.delta_n));
        out.m_plus[k] = scale * (m + out.delta_m);
        out.m_minus[k] = std::max(0.0, scale * (m - out.delta_m));
    }
    return out;
}

DecoyBounds decoy_bounds(const ObservedCounts& counts, Basis basis,
                         const SecurityParams& security) {
    check_counts(counts);
    if (!(counts.mu2 > 0.0))
        throw ValidationError("counts.mu2",
                              "one-decoy bounds need a non-vacuum decoy intensity",
                              counts.mu2);
    double eps_prime = security.eps_sec / 19.0;
    AdjustedCounts adj = adjusted_counts(counts, basis, eps_prime);
    double mu1 = counts.mu1, mu2 = counts.mu2;

    SourceConfig src;
    src.mu1 = counts.mu1;
    src.mu2 = counts.mu2;
    src.p_mu1 = counts.p_mu1;
    double tau0 = tau_n(0, src);
    double tau1 = tau_n(1, src);

    DecoyBounds out;
    out.s0_low = std::max(
        0.0, tau0 * (mu1 * adj.n_minus[1] - mu2 * adj.n_plus[0]) / (mu1 - mu2));
    out.s0_up = 2.0 * (tau0 * std::min(adj.m_plus[0], adj.m_plus[1]) + adj.delta_n);
    double mu1sq = mu1 * mu1, mu2sq = mu2 * mu2;
    out.s1_low = std::max(
        0.0, tau1 * mu1 *
                 (adj.n_minus[1] - (mu2sq / mu1sq) * adj.n_plus[0] -
                  ((mu1sq - mu2sq) / mu1sq) * (out.s0_up / tau0)) /
                 (mu2 * (mu1 - mu2)));
    return out;
}

namespace {

// Finite-size correction on the phase error rate carried from the X sample
// (size d) to the Z single-photon population (size c).
double gamma_correction(double a, double b, double c, double d) {
    if (b <= 0.0 || b >= 1.0 || c <= 0.0 || d <= 0.0) return 0.0;
    double front = (c + d) * (1.0 - b) * b / (c * d * std::log(2.0));
    double inside = (c + d) / (c * d * (1.0 - b) * b) * (441.0 / (a * a));
    if (inside <= 1.0) return 0.0;
    double arg = front * std::log2(inside);
    return arg > 0.0 ? std::sqrt(arg) : 0.0;
}

}  // namespace

PhaseErrorBound phase_error_upper(const ObservedCounts& counts,
                                  const SecurityParams& security) {
    check_counts(counts);
    double eps_prime = security.eps_sec / 19.0;
    PhaseErrorBound out;
    out.s1x_low = decoy_bounds(counts, Basis::X, security).s1_low;
    if (out.s1x_low <= 0.0) {
        out.phi1_up = 0.5;
        out.pessimistic = true;
        return out;
    }
    AdjustedCounts adj = adjusted_counts(counts, Basis::X, eps_prime);
    double tau1 = tau_n(1, SourceConfig{.mu1 = counts.mu1, .mu2 = counts.mu2,
                                        .p_mu1 = counts.p_mu1});
    double v1x = tau1 * (adj.m_plus[0] - adj.m_minus[1]) / (counts.mu1 - counts.mu2);
    out.v1x_up = std::clamp(v1x, 0.0, out.s1x_low);

    double ratio = out.v1x_up / out.s1x_low;
    double s1z_low = decoy_bounds(counts, Basis::Z, security).s1_low;
    double phi = ratio + gamma_correction(eps_prime, ratio, s1z_low, out.s1x_low);
    if (s1z_low <= 0.0) {
        phi = 0.5;
        out.pessimistic = true;
    }
    out.phi1_up = std::clamp(phi, 0.0, 0.5);
    if (out.phi1_up >= 0.5 && ratio < 0.5) out.pessimistic = true;
    return out;
}

FiniteKeyResult secret_key_length(const ObservedCounts& counts,
                                  const SecurityParams& security) {
    check_counts(counts);
    if (!(counts.t_acq > 0.0))
        throw ValidationError("counts.t_acq", "must be > 0", counts.t_acq);
    double n_z = counts.n.basis_total(Basis::Z);
    if (n_z <= 0.0) throw EmptyBlockError("no Z-basis clicks in block");

    SourceConfig src;
    src.mu1 = counts.mu1;
    src.mu2 = counts.mu2;
    src.p_mu1 = counts.p_mu1;

    FiniteKeyResult out;
    out.tau0 = tau_n(0, src);
    out.tau1 = tau_n(1, src);

    DecoyBounds z = decoy_bounds(counts, Basis::Z, security);
    out.s0_low = z.s0_low;
    out.s0_up = z.s0_up;
    out.s1_low = z.s1_low;

    PhaseErrorBound ph = phase_error_upper(counts, security);
    out.s1x_low = ph.s1x_low;
    out.v1x_up = ph.v1x_up;
    out.phi1_up = ph.phi1_up;
    out.phase_bound_pessimistic = ph.pessimistic;

    double m_z = counts.m.basis_total(Basis::Z);
    out.lambda_ec = security.f_ec * n_z * binary_entropy(m_z / n_z);

    double raw = out.s0_low + out.s1_low * (1.0 - binary_entropy(out.phi1_up)) -
                 out.lambda_ec - penalty_bits(security);
    out.ell = std::max(0.0, std::floor(raw));
    out.skr = out.ell / counts.t_acq;
    return out;
}

namespace {

using nlohmann::json;

const char* cell_key(int b, int k) {
    static const char* keys[2][2] = {{"z_mu1", "z_mu2"}, {"x_mu1", "x_mu2"}};
    return keys[b][k];
}

json cells_to_json(const CellTable& t) {
    json out = json::object();
    for (int b = 0; b < 2; ++b)
        for (int k = 0; k < 2; ++k)
            out[cell_key(b, k)] = t(static_cast<Basis>(b), static_cast<Intensity>(k));
    return out;
}

CellTable cells_from_json(const json& node, const std::string& name) {
    if (!node.is_object())
        throw ValidationError(name, "must be a JSON object", 0.0);
    CellTable out;
    std::set<std::string> known;
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            const char* key = cell_key(b, k);
            known.insert(key);
            auto it = node.find(key);
            if (it == node.end())
                throw ValidationError(name + "." + key, "missing required field", 0.0);
            if (!it->is_number())
                throw ValidationError(name + "." + key, "must be a number", 0.0);
            out(static_cast<Basis>(b), static_cast<Intensity>(k)) = it->get<double>();
        }
    }
    for (const auto& item : node.items())
        if (!known.count(item.key()))
            throw ValidationError(name + "." + item.key(), "unknown field", 0.0);
    return out;
}

double require_number(const json& node, const char* key, const std::string& name) {
    auto it = node.find(key);
    if (it == node.end())
        throw ValidationError(name + "." + key, "missing required field", 0.0);
    if (!it->is_number())
        throw ValidationError(name + "." + key, "must be a number", 0.0);
    return it->get<double>();
}

}  // namespace

std::string ObservedCounts::to_json() const {
    json doc;
    doc["n"] = cells_to_json(n);
    doc["m"] = cells_to_json(m);
    doc["t_acq"] = t_acq;
    doc["source"] = {{"mu1", mu1}, {"mu2", mu2}, {"p_mu1", p_mu1}};
    return doc.dump(2);
}

ObservedCounts ObservedCounts::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("counts", std::string("JSON parse error: ") + e.what(), 0.0);
    }
    if (!doc.is_object()) throw ValidationError("counts", "must be a JSON object", 0.0);
    for (const auto& item : doc.items()) {
        std::string k = item.key();
        if (k != "n" && k != "m" && k != "t_acq" && k != "source")
            throw ValidationError("counts." + k, "unknown field", 0.0);
    }
    if (!doc.contains("n") || !doc.contains("m") || !doc.contains("source"))
        throw ValidationError("counts", "needs n, m and source sections", 0.0);

    ObservedCounts out;
    out.n = cells_from_json(doc["n"], "counts.n");
    out.m = cells_from_json(doc["m"], "counts.m");
    out.t_acq = require_number(doc, "t_acq", "counts");
    const json& src = doc["source"];
    if (!src.is_object())
        throw ValidationError("counts.source", "must be a JSON object", 0.0);
    for (const auto& item : src.items()) {
        std::string k = item.key();
        if (k != "mu1" && k != "mu2" && k != "p_mu1")
            throw ValidationError("counts.source." + k, "unknown field", 0.0);
    }
    out.mu1 = require_number(src, "mu1", "counts.source");
    out.mu2 = require_number(src, "mu2", "counts.source");
    out.p_mu1 = require_number(src, "p_mu1", "counts.source");
    check_counts(out);
    return out;
}

}  // namespace qkdco
