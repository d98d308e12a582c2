#include "qkdco/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "qkdco/pipeline.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

NoiseFit fit_noise_coefficient(const std::vector<std::pair<double, double>>& measurements,
                               double dark_rate) {
    if (measurements.empty())
        throw ValidationError("measurements", "at least one measurement required", 0.0);
    if (!std::isfinite(dark_rate) || dark_rate < 0)
        throw ValidationError("dark_rate", "must be finite and >= 0", dark_rate);

    double sxx = 0.0;
    double sxy = 0.0;
    std::vector<std::pair<double, double>> cleaned;
    cleaned.reserve(measurements.size());
    for (const auto& [power, counts] : measurements) {
        if (!std::isfinite(power) || power < 0)
            throw ValidationError("power_mw", "must be finite and >= 0", power);
        if (!std::isfinite(counts))
            throw ValidationError("counts_per_s", "must be finite", counts);
        double y = std::max(0.0, counts - dark_rate);
        cleaned.emplace_back(power, y);
        sxx += power * power;
        sxy += power * y;
    }
    if (sxx <= 0)
        throw ValidationError("power_mw", "at least one positive power required", 0.0);

    NoiseFit fit;
    fit.kappa = sxy / sxx;
    double ss = 0.0;
    for (const auto& [x, y] : cleaned) {
        double r = y - fit.kappa * x;
        ss += r * r;
    }
    fit.residual_norm = std::sqrt(ss);
    return fit;
}

NoiseScan scan_noise(const std::map<int, double>& per_channel_counts, double dark_rate) {
    if (per_channel_counts.empty())
        throw ValidationError("per_channel_counts", "at least one channel required", 0.0);
    if (!std::isfinite(dark_rate) || dark_rate < 0)
        throw ValidationError("dark_rate", "must be finite and >= 0", dark_rate);

    NoiseScan scan;
    scan.channels.reserve(per_channel_counts.size());
    double peak = 0.0;
    for (const auto& [channel, counts] : per_channel_counts) {
        if (!std::isfinite(counts))
            throw ValidationError("counts_per_s", "must be finite", counts);
        NoiseScanChannel row;
        row.channel = channel;
        row.raw = counts;
        row.dark_subtracted = std::max(0.0, counts - dark_rate);
        scan.channels.push_back(row);
        if (row.dark_subtracted > peak) {
            peak = row.dark_subtracted;
            scan.has_argmax = true;
            scan.argmax_channel = channel;  // map order makes ties pick the lowest id
        }
    }
    if (peak > 0)
        for (auto& row : scan.channels) row.normalized = row.dark_subtracted / peak;
    return scan;
}

namespace {

// Splits one CSV line, trims spaces, returns false for blank lines.
bool csv_fields(const std::string& line, std::vector<std::string>& out) {
    out = split(line, ',');
    for (auto& f : out) {
        std::size_t a = f.find_first_not_of(" \t\r");
        std::size_t b = f.find_last_not_of(" \t\r");
        f = a == std::string::npos ? std::string() : f.substr(a, b - a + 1);
    }
    return !(out.size() == 1 && out[0].empty());
}

bool parse_double(const std::string& text, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(text, &used);
        return used == text.size();
    } catch (const std::exception&) {
        return false;
    }
}

template <typename RowFn>
void for_each_csv_row(const std::string& path, std::size_t n_fields, RowFn fn) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> fields;
        if (!csv_fields(line, fields)) continue;
        if (first) {
            first = false;
            double probe;
            if (!parse_double(fields[0], probe)) continue;  // header line
        }
        if (fields.size() != n_fields)
            throw ValidationError(path, "line " + std::to_string(lineno) +
                                            ": expected " + std::to_string(n_fields) +
                                            " fields",
                                  static_cast<double>(fields.size()));
        fn(lineno, fields);
    }
}

double field_double(const std::string& path, std::size_t lineno, const std::string& text) {
    double value;
    if (!parse_double(text, value))
        throw ValidationError(path, "line " + std::to_string(lineno) +
                                        ": not a number: " + text,
                              0.0);
    return value;
}

}  // namespace

std::vector<std::pair<double, double>> read_power_counts_csv(const std::string& path) {
    std::vector<std::pair<double, double>> rows;
    for_each_csv_row(path, 2, [&](std::size_t lineno, const std::vector<std::string>& f) {
        rows.emplace_back(field_double(path, lineno, f[0]),
                          field_double(path, lineno, f[1]));
    });
    return rows;
}

std::map<int, double> read_channel_counts_csv(const std::string& path) {
    std::map<int, double> rows;
    for_each_csv_row(path, 2, [&](std::size_t lineno, const std::vector<std::string>& f) {
        double id = field_double(path, lineno, f[0]);
        if (id != std::floor(id))
            throw ValidationError(path, "line " + std::to_string(lineno) +
                                            ": channel must be an integer",
                                  id);
        if (!rows.emplace(static_cast<int>(id), field_double(path, lineno, f[1])).second)
            throw ValidationError(path, "line " + std::to_string(lineno) +
                                            ": duplicate channel",
                                  id);
    });
    return rows;
}

namespace {

double skr_at_power(const Scenario& base, double power_dbm) {
    Scenario s = base;
    s.channel.classical_input_dbm = power_dbm;
    return evaluate(s).key.skr;
}

}  // namespace

double input_power_threshold(const Scenario& s, double lo_dbm, double hi_dbm) {
    if (!(lo_dbm < hi_dbm))
        throw ValidationError("power_range", "lo must be below hi", lo_dbm);
    if (!(skr_at_power(s, lo_dbm) > 0))
        return -std::numeric_limits<double>::infinity();
    if (skr_at_power(s, hi_dbm) > 0)
        return std::numeric_limits<double>::infinity();
    double lo = lo_dbm;
    double hi = hi_dbm;
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
        double mid = 0.5 * (lo + hi);
        (skr_at_power(s, mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double fit_kappa_to_threshold(const Scenario& s, double power_dbm) {
    Scenario probe = s;
    probe.channel.classical_input_dbm = power_dbm;

    auto skr_at_kappa = [&](double kappa) {
        Scenario t = probe;
        t.channel.noise_spectral_density = kappa;
        return evaluate(t).key.skr;
    };
    if (!(skr_at_kappa(0.0) > 0))
        throw ValidationError("power_dbm", "no key at this power even without noise",
                              power_dbm);
    double hi = 1.0;
    while (skr_at_kappa(hi) > 0) {
        hi *= 2.0;
        if (hi > 1e30)
            throw ValidationError("power_dbm", "key survives unbounded noise", power_dbm);
    }
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
        double mid = 0.5 * (lo + hi);
        (skr_at_kappa(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string NoiseFit::to_json() const {
    nlohmann::json doc;
    doc["kappa_counts_per_s_mw"] = kappa;
    doc["residual_norm"] = residual_norm;
    return doc.dump(2);
}

std::string NoiseScan::to_json() const {
    nlohmann::json doc;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : channels) {
        nlohmann::json r;
        r["channel"] = row.channel;
        r["raw_counts_per_s"] = row.raw;
        r["dark_subtracted_counts_per_s"] = row.dark_subtracted;
        r["normalized"] = row.normalized;
        rows.push_back(r);
    }
    doc["channels"] = rows;
    if (has_argmax)
        doc["argmax_channel"] = argmax_channel;
    else
        doc["argmax_channel"] = nullptr;
    return doc.dump(2);
}

}  // namespace qkdco
