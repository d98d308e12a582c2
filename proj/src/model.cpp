#include "qkdco/model.hpp"

#include <cmath>
#include <set>
#include <string>

#include "json.hpp"
#include "qkdco/util.hpp"

namespace qkdco {

double db_to_linear(double x) {
    if (!std::isfinite(x)) throw ValidationError("db", "must be finite", x);
    return std::pow(10.0, -x / 10.0);
}

double dbm_to_mw(double p) {
    if (!std::isfinite(p)) throw ValidationError("dbm", "must be finite", p);
    return std::pow(10.0, p / 10.0);
}

double classical_launch_dbm(const ChannelConfig& channel) {
    return channel.classical_input_dbm -
           (channel.total_loop_loss_db - channel.quantum_loss_db);
}

namespace {

struct Checker {
    std::vector<ValidationIssue> issues;

    void require(bool ok, const char* field, const char* message, double actual) {
        if (!ok) issues.push_back({field, message, actual});
    }
    // Non-finite values get one issue and suppress the range checks, which
    // would otherwise fire confusingly on NaN.
    bool finite(const char* field, double v) {
        if (!std::isfinite(v)) {
            issues.push_back({field, "must be finite", v});
            return false;
        }
        return true;
    }
};

}  // namespace

std::vector<ValidationIssue> validate(const Scenario& s) {
    Checker c;
    const SourceConfig& src = s.source;
    if (c.finite("source.rep_rate", src.rep_rate))
        c.require(src.rep_rate > 0, "source.rep_rate", "must be > 0", src.rep_rate);
    bool mu_ok = c.finite("source.mu1", src.mu1) & c.finite("source.mu2", src.mu2);
    if (mu_ok) {
        c.require(src.mu2 >= 0, "source.mu2", "must be >= 0", src.mu2);
        c.require(src.mu2 < src.mu1, "source.mu2", "must be < mu1", src.mu2);
        c.require(src.mu1 <= 1.0, "source.mu1", "must be <= 1", src.mu1);
    }
    if (c.finite("source.p_mu1", src.p_mu1))
        c.require(src.p_mu1 > 0 && src.p_mu1 < 1, "source.p_mu1", "must be in (0,1)",
                  src.p_mu1);
    if (c.finite("source.p_z_tx", src.p_z_tx))
        c.require(src.p_z_tx > 0 && src.p_z_tx < 1, "source.p_z_tx", "must be in (0,1)",
                  src.p_z_tx);
    if (c.finite("source.pulse_fwhm", src.pulse_fwhm))
        c.require(src.pulse_fwhm > 0, "source.pulse_fwhm", "must be > 0", src.pulse_fwhm);
    if (c.finite("source.intrinsic_error_z", src.intrinsic_error_z))
        c.require(src.intrinsic_error_z >= 0 && src.intrinsic_error_z <= 0.5,
                  "source.intrinsic_error_z", "must be in [0,0.5]", src.intrinsic_error_z);
    if (c.finite("source.visibility_x", src.visibility_x))
        c.require(src.visibility_x >= 0 && src.visibility_x <= 1, "source.visibility_x",
                  "must be in [0,1]", src.visibility_x);

    const ChannelConfig& ch = s.channel;
    bool loss_ok = c.finite("channel.quantum_loss_db", ch.quantum_loss_db) &
                   c.finite("channel.total_loop_loss_db", ch.total_loop_loss_db);
    if (loss_ok) {
        c.require(ch.quantum_loss_db >= 0, "channel.quantum_loss_db", "must be >= 0",
                  ch.quantum_loss_db);
        c.require(ch.total_loop_loss_db >= ch.quantum_loss_db, "channel.total_loop_loss_db",
                  "must be >= quantum_loss_db", ch.total_loop_loss_db);
    }
    c.finite("channel.classical_input_dbm", ch.classical_input_dbm);
    if (c.finite("channel.noise_spectral_density", ch.noise_spectral_density))
        c.require(ch.noise_spectral_density >= 0, "channel.noise_spectral_density",
                  "must be >= 0", ch.noise_spectral_density);

    const ReceiverConfig& rx = s.receiver;
    if (c.finite("receiver.efficiency", rx.efficiency))
        c.require(rx.efficiency > 0 && rx.efficiency <= 1, "receiver.efficiency",
                  "must be in (0,1]", rx.efficiency);
    if (c.finite("receiver.dark_rate", rx.dark_rate))
        c.require(rx.dark_rate >= 0, "receiver.dark_rate", "must be >= 0", rx.dark_rate);
    if (c.finite("receiver.dead_time", rx.dead_time))
        c.require(rx.dead_time >= 0, "receiver.dead_time", "must be >= 0", rx.dead_time);
    if (c.finite("receiver.jitter_fwhm", rx.jitter_fwhm))
        c.require(rx.jitter_fwhm >= 0, "receiver.jitter_fwhm", "must be >= 0",
                  rx.jitter_fwhm);
    bool gate_ok = c.finite("receiver.gate_window", rx.gate_window);
    if (gate_ok)
        c.require(rx.gate_window > 0, "receiver.gate_window", "must be > 0", rx.gate_window);
    if (c.finite("receiver.optical_rejection_db", rx.optical_rejection_db))
        c.require(rx.optical_rejection_db >= 0, "receiver.optical_rejection_db",
                  "must be >= 0", rx.optical_rejection_db);
    if (c.finite("receiver.extra_loss_db", rx.extra_loss_db))
        c.require(rx.extra_loss_db >= 0, "receiver.extra_loss_db", "must be >= 0",
                  rx.extra_loss_db);
    if (c.finite("receiver.x_path_extra_loss_db", rx.x_path_extra_loss_db))
        c.require(rx.x_path_extra_loss_db >= 0, "receiver.x_path_extra_loss_db",
                  "must be >= 0", rx.x_path_extra_loss_db);
    if (c.finite("receiver.p_z_rx", rx.p_z_rx))
        c.require(rx.p_z_rx > 0 && rx.p_z_rx < 1, "receiver.p_z_rx", "must be in (0,1)",
                  rx.p_z_rx);
    if (c.finite("receiver.afterpulse_prob", rx.afterpulse_prob))
        c.require(rx.afterpulse_prob >= 0 && rx.afterpulse_prob < 1,
                  "receiver.afterpulse_prob", "must be in [0,1)", rx.afterpulse_prob);

    const SecurityParams& sec = s.security;
    if (c.finite("security.eps_sec", sec.eps_sec))
        c.require(sec.eps_sec > 0 && sec.eps_sec < 1, "security.eps_sec",
                  "must be in (0,1)", sec.eps_sec);
    if (c.finite("security.eps_corr", sec.eps_corr))
        c.require(sec.eps_corr > 0 && sec.eps_corr < 1, "security.eps_corr",
                  "must be in (0,1)", sec.eps_corr);
    if (c.finite("security.block_size", sec.block_size))
        c.require(sec.block_size >= 1e3, "security.block_size", "must be >= 1e3",
                  sec.block_size);
    if (c.finite("security.f_ec", sec.f_ec))
        c.require(sec.f_ec >= 1, "security.f_ec", "must be >= 1", sec.f_ec);

    // Two time bins per state: each gate must fit inside its half-period.
    if (gate_ok && std::isfinite(src.rep_rate) && src.rep_rate > 0)
        c.require(rx.gate_window <= 0.5 / src.rep_rate, "receiver.gate_window",
                  "must be <= half the clock period", rx.gate_window);

    return c.issues;
}

const Scenario& ensure_valid(const Scenario& s) {
    auto issues = validate(s);
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return s;
}

namespace {

using nlohmann::json;

class Section {
  public:
    Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
        if (!node_.is_object())
            throw ValidationError(name_, "must be a JSON object", 0.0);
    }

    double require(const char* key) {
        seen_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end())
            throw ValidationError(name_ + "." + key, "missing required field", 0.0);
        return as_number(it, key);
    }

    double optional(const char* key, double fallback) {
        seen_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end()) return fallback;
        return as_number(it, key);
    }

    bool has(const char* key) const { return node_.contains(key); }

    void finish() const {
        std::vector<ValidationIssue> unknown;
        for (const auto& item : node_.items()) {
            if (!seen_.count(item.key()))
                unknown.push_back({name_ + "." + item.key(), "unknown field", 0.0});
        }
        if (!unknown.empty()) throw ValidationError(std::move(unknown));
    }

  private:
    double as_number(json::const_iterator it, const char* key) const {
        if (!it->is_number())
            throw ValidationError(name_ + "." + key, "must be a number", 0.0);
        return it->get<double>();
    }

    const json& node_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

Scenario scenario_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("scenario", std::string("JSON parse error: ") + e.what(), 0.0);
    }
    if (!doc.is_object()) throw ValidationError("scenario", "must be a JSON object", 0.0);

    static const std::set<std::string> kSections = {"source", "channel", "receiver",
                                                    "security"};
    {
        std::vector<ValidationIssue> unknown;
        for (const auto& item : doc.items()) {
            if (!kSections.count(item.key()))
                unknown.push_back({item.key(), "unknown section", 0.0});
        }
        if (!unknown.empty()) throw ValidationError(std::move(unknown));
    }
    for (const char* required : {"source", "channel", "receiver"}) {
        if (!doc.contains(required))
            throw ValidationError(required, "missing required section", 0.0);
    }

    Scenario s;

    Section src(doc["source"], "source");
    s.source.rep_rate = src.require("rep_rate");
    s.source.mu1 = src.require("mu1");
    s.source.mu2 = src.require("mu2");
    s.source.p_mu1 = src.require("p_mu1");
    s.source.p_z_tx = src.require("p_z_tx");
    s.source.pulse_fwhm = src.require("pulse_fwhm");
    s.source.intrinsic_error_z = src.optional("intrinsic_error_z", 0.0);
    s.source.visibility_x = src.optional("visibility_x", 1.0);
    src.finish();

    Section ch(doc["channel"], "channel");
    s.channel.quantum_loss_db = ch.require("quantum_loss_db");
    s.channel.total_loop_loss_db = ch.optional("total_loop_loss_db", 21.0);
    // Default input power is low enough that any fitted noise coefficient
    // contributes nothing; set it explicitly to model coexistence.
    s.channel.classical_input_dbm = ch.optional("classical_input_dbm", -300.0);
    s.channel.noise_spectral_density = ch.optional("noise_spectral_density", 0.0);
    ch.finish();

    Section rx(doc["receiver"], "receiver");
    s.receiver.efficiency = rx.require("efficiency");
    s.receiver.dark_rate = rx.require("dark_rate");
    s.receiver.dead_time = rx.require("dead_time");
    s.receiver.jitter_fwhm = rx.require("jitter_fwhm");
    s.receiver.optical_rejection_db = rx.optional("optical_rejection_db", 0.0);
    s.receiver.extra_loss_db = rx.optional("extra_loss_db", 0.0);
    s.receiver.x_path_extra_loss_db = rx.optional("x_path_extra_loss_db", 0.0);
    s.receiver.p_z_rx = rx.optional("p_z_rx", 0.5);
    s.receiver.afterpulse_prob = rx.optional("afterpulse_prob", 0.0);
    if (rx.has("gate_window")) {
        s.receiver.gate_window = rx.optional("gate_window", 0.0);
    } else {
        rx.optional("gate_window", 0.0);  // mark as consumed
        double sigma = std::sqrt(s.source.pulse_fwhm * s.source.pulse_fwhm +
                                 s.receiver.jitter_fwhm * s.receiver.jitter_fwhm) /
                       std::sqrt(8.0 * std::log(2.0));
        s.receiver.gate_window = 3.0 * sigma;
    }
    rx.finish();

    if (doc.contains("security")) {
        Section sec(doc["security"], "security");
        s.security.eps_sec = sec.optional("eps_sec", 1e-9);
        s.security.eps_corr = sec.optional("eps_corr", 1e-9);
        s.security.block_size = sec.optional("block_size", 1e7);
        s.security.f_ec = sec.optional("f_ec", 1.16);
        sec.finish();
    }

    ensure_valid(s);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    return scenario_from_json(read_file(path));
}

}  // namespace qkdco
