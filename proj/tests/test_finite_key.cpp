#include "doctest.h"

#include <cmath>
#include <string>

#include "json.hpp"
#include "qkdco/errors.hpp"
#include "qkdco/finite_key.hpp"
#include "test_util.hpp"

using namespace qkdco;

namespace {

ObservedCounts flat_counts(double n, double m, double mu1 = 0.5, double mu2 = 0.1,
                           double p_mu1 = 0.5) {
    ObservedCounts c;
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            c.n(static_cast<Basis>(b), static_cast<Intensity>(k)) = n;
            c.m(static_cast<Basis>(b), static_cast<Intensity>(k)) = m;
        }
    }
    c.t_acq = 1.0;
    c.mu1 = mu1;
    c.mu2 = mu2;
    c.p_mu1 = p_mu1;
    return c;
}

// Expected counts for a toy channel: Poisson source, background yield y0,
// transmission eta, a detector error fraction on signal clicks, background
// clicks half wrong. A heavy background (y0 = 5e-3) keeps the vacuum bound
// away from its clamp; a light one (y0 = 1e-5) leaves a positive key.
constexpr double kHeavyBackground = 5e-3;
constexpr double kLightBackground = 1e-5;

ObservedCounts toy_channel_counts(double n_states, double y0) {
    const double eta = 0.05, e_det = 0.01;
    ObservedCounts c;
    c.mu1 = 0.5;
    c.mu2 = 0.1;
    c.p_mu1 = 0.7;
    c.t_acq = 100.0;
    double mu[2] = {c.mu1, c.mu2};
    double p[2] = {c.p_mu1, 1.0 - c.p_mu1};
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            double p_sig = 1.0 - std::exp(-eta * mu[k]);
            c.n(static_cast<Basis>(b), static_cast<Intensity>(k)) =
                n_states * p[k] * (p_sig + y0 * (1.0 - p_sig));
            c.m(static_cast<Basis>(b), static_cast<Intensity>(k)) =
                n_states * p[k] * (e_det * p_sig + 0.5 * y0 * (1.0 - p_sig));
        }
    }
    return c;
}

}  // namespace

TEST_CASE("binary entropy endpoints and known values") {
    CHECK(binary_entropy(0.5) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.11) == doctest::Approx(0.499915958).epsilon(1e-9));
    for (double x : {0.02, 0.13, 0.27, 0.41}) {
        CHECK(binary_entropy(x) == doctest::Approx(binary_entropy(1.0 - x)).epsilon(1e-13));
        CHECK(binary_entropy(x) > 0.0);
        CHECK(binary_entropy(x) < 1.0);
    }
    CHECK_THROWS_AS(binary_entropy(-0.01), ValidationError);
    CHECK_THROWS_AS(binary_entropy(1.01), ValidationError);
    CHECK_THROWS_AS(binary_entropy(std::nan("")), ValidationError);
}

TEST_CASE("vacuum and single-photon fractions") {
    SourceConfig src;
    src.mu1 = 0.35;
    src.mu2 = 0.1;
    src.p_mu1 = 0.25;
    CHECK(tau_n(0, src) == doctest::Approx(0.854800086).epsilon(1e-9));
    CHECK(tau_n(1, src) == doctest::Approx(0.129523014).epsilon(1e-9));

    src.mu1 = 0.21;
    src.mu2 = 0.068;
    src.p_mu1 = 0.9;
    CHECK(tau_n(0, src) == doctest::Approx(0.822951869).epsilon(1e-9));
    CHECK(tau_n(1, src) == doctest::Approx(0.159553394).epsilon(1e-9));

    CHECK_THROWS_AS(tau_n(2, src), ValidationError);
    CHECK_THROWS_AS(tau_n(-1, src), ValidationError);
}

TEST_CASE("penalty bits against direct evaluation") {
    SecurityParams sec;  // defaults eps_sec = eps_corr = 1e-9
    CHECK(penalty_bits(sec) == doctest::Approx(235.769035059).epsilon(1e-9));

    sec.eps_sec = 1e-6;
    sec.eps_corr = 1e-12;
    CHECK(penalty_bits(sec) == doctest::Approx(185.940113635).epsilon(1e-9));
}

TEST_CASE("key length formula with perfect phase knowledge") {
    // floor(1e6 * (1 - h(0)) - penalty) with default epsilons.
    SecurityParams sec;
    double raw = 1e6 * (1.0 - binary_entropy(0.0)) - penalty_bits(sec);
    CHECK(std::floor(raw) == 999764.0);
}

TEST_CASE("adjusted counts at eps_prime = 1 have zero deltas") {
    ObservedCounts c = flat_counts(1e6, 1e4);
    AdjustedCounts adj = adjusted_counts(c, Basis::Z, 1.0);
    CHECK(adj.delta_n == 0.0);
    CHECK(adj.delta_m == 0.0);
    double scale0 = std::exp(c.mu1) / c.p_mu1;
    double scale1 = std::exp(c.mu2) / (1.0 - c.p_mu1);
    CHECK(adj.n_plus[0] == doctest::Approx(scale0 * 1e6).epsilon(1e-13));
    CHECK(adj.n_minus[0] == doctest::Approx(scale0 * 1e6).epsilon(1e-13));
    CHECK(adj.n_plus[1] == doctest::Approx(scale1 * 1e6).epsilon(1e-13));
    CHECK(adj.m_plus[0] == doctest::Approx(scale0 * 1e4).epsilon(1e-13));
}

TEST_CASE("adjusted counts apply Hoeffding deltas per intensity") {
    ObservedCounts c = flat_counts(1e6, 0.0);
    double eps_prime = 1e-9 / 19.0;
    AdjustedCounts adj = adjusted_counts(c, Basis::Z, eps_prime);
    CHECK(adj.delta_n == doctest::Approx(4864.946537847).epsilon(1e-10));
    CHECK(adj.delta_m == 0.0);
    CHECK(adj.n_plus[0] == doctest::Approx(3313484.423076).epsilon(1e-10));
    CHECK(adj.n_minus[1] == doctest::Approx(2199588.641288).epsilon(1e-10));
    CHECK(adj.n_plus[0] > adj.n_minus[0]);
    CHECK(adj.n_plus[1] > adj.n_minus[1]);
}

TEST_CASE("adjusted counts clamp at zero and validate eps_prime") {
    ObservedCounts c = flat_counts(1.0, 0.0);
    AdjustedCounts adj = adjusted_counts(c, Basis::Z, 1e-9 / 19.0);
    CHECK(adj.n_minus[0] == 0.0);
    CHECK(adj.n_minus[1] == 0.0);
    CHECK(adj.n_plus[0] > 0.0);

    CHECK_THROWS_AS(adjusted_counts(c, Basis::Z, 0.0), ValidationError);
    CHECK_THROWS_AS(adjusted_counts(c, Basis::Z, 1.5), ValidationError);
    CHECK_THROWS_AS(adjusted_counts(c, Basis::Z, -0.1), ValidationError);
}

TEST_CASE("decoy bounds reject malformed counts") {
    ObservedCounts c = flat_counts(1e6, 1e4);
    SecurityParams sec;

    ObservedCounts vac = c;
    vac.mu2 = 0.0;
    CHECK_THROWS_AS(decoy_bounds(vac, Basis::Z, sec), ValidationError);

    ObservedCounts swapped = c;
    swapped.mu2 = c.mu1;
    CHECK_THROWS_AS(decoy_bounds(swapped, Basis::Z, sec), ValidationError);

    ObservedCounts bad = c;
    bad.m(Basis::Z, Intensity::Signal) = bad.n(Basis::Z, Intensity::Signal) + 1.0;
    CHECK_THROWS_AS(decoy_bounds(bad, Basis::Z, sec), ValidationError);

    ObservedCounts neg = c;
    neg.n(Basis::X, Intensity::Decoy) = -1.0;
    CHECK_THROWS_AS(decoy_bounds(neg, Basis::X, sec), ValidationError);
}

TEST_CASE("decoy bounds vanish on an empty block") {
    ObservedCounts c = flat_counts(0.0, 0.0);
    SecurityParams sec;
    DecoyBounds out = decoy_bounds(c, Basis::Z, sec);
    CHECK(out.s0_low == 0.0);
    CHECK(out.s0_up == 0.0);
    CHECK(out.s1_low == 0.0);
}

TEST_CASE("decoy bounds match the zero-delta closed form at huge statistics") {
    // At 1e21 states the Hoeffding deltas are relatively ~1e-7, so the
    // statistical bounds must converge to the asymptotic decoy formulas.
    ObservedCounts c = toy_channel_counts(1e21, kHeavyBackground);
    SecurityParams sec;
    DecoyBounds out = decoy_bounds(c, Basis::Z, sec);

    double mu1 = c.mu1, mu2 = c.mu2;
    SourceConfig src;
    src.mu1 = mu1;
    src.mu2 = mu2;
    src.p_mu1 = c.p_mu1;
    double tau0 = tau_n(0, src), tau1 = tau_n(1, src);
    double p[2] = {c.p_mu1, 1.0 - c.p_mu1};
    double nn[2], mm[2];
    for (int k = 0; k < 2; ++k) {
        double mu = k == 0 ? mu1 : mu2;
        nn[k] = std::exp(mu) / p[k] * c.n(Basis::Z, static_cast<Intensity>(k));
        mm[k] = std::exp(mu) / p[k] * c.m(Basis::Z, static_cast<Intensity>(k));
    }
    double s0 = tau0 * (mu1 * nn[1] - mu2 * nn[0]) / (mu1 - mu2);
    double s0_up = 2.0 * tau0 * std::min(mm[0], mm[1]);
    double s1 = tau1 * mu1 *
                (nn[1] - (mu2 * mu2) / (mu1 * mu1) * nn[0] -
                 (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * (s0_up / tau0)) /
                (mu2 * (mu1 - mu2));
    REQUIRE(s0 > 0.0);
    REQUIRE(s1 > 0.0);
    CHECK(out.s0_low == doctest::Approx(s0).epsilon(1e-6));
    CHECK(out.s0_up == doctest::Approx(s0_up).epsilon(1e-6));
    CHECK(out.s1_low == doctest::Approx(s1).epsilon(1e-6));
    CHECK(out.s0_low + out.s1_low <= c.n.basis_total(Basis::Z) * 1.0000001);
}

TEST_CASE("phase error bound is pessimistic without X statistics") {
    ObservedCounts c = flat_counts(1e6, 1e3);
    c.n(Basis::X, Intensity::Signal) = 0.0;
    c.n(Basis::X, Intensity::Decoy) = 0.0;
    c.m(Basis::X, Intensity::Signal) = 0.0;
    c.m(Basis::X, Intensity::Decoy) = 0.0;
    SecurityParams sec;
    PhaseErrorBound out = phase_error_upper(c, sec);
    CHECK(out.s1x_low == 0.0);
    CHECK(out.phi1_up == 0.5);
    CHECK(out.pessimistic);
}

TEST_CASE("phase error bound on healthy statistics") {
    ObservedCounts c = toy_channel_counts(1e20, kLightBackground);
    SecurityParams sec;
    PhaseErrorBound out = phase_error_upper(c, sec);
    CHECK(out.s1x_low > 0.0);
    CHECK(out.v1x_up >= 0.0);
    CHECK(out.v1x_up <= out.s1x_low);
    CHECK(out.phi1_up > 0.0);
    CHECK(out.phi1_up < 0.5);
    CHECK_FALSE(out.pessimistic);
}

TEST_CASE("phase error ratio clamps at one half for error-saturated data") {
    ObservedCounts c = toy_channel_counts(1e20, kLightBackground);
    c.m(Basis::X, Intensity::Signal) = c.n(Basis::X, Intensity::Signal);
    SecurityParams sec;
    PhaseErrorBound out = phase_error_upper(c, sec);
    CHECK(out.v1x_up == doctest::Approx(out.s1x_low).epsilon(1e-12));
    CHECK(out.phi1_up == 0.5);
    CHECK_FALSE(out.pessimistic);
}

TEST_CASE("secret key length rejects empty or timeless blocks") {
    ObservedCounts c = flat_counts(1e6, 1e3);
    SecurityParams sec;

    ObservedCounts empty = c;
    empty.n(Basis::Z, Intensity::Signal) = 0.0;
    empty.n(Basis::Z, Intensity::Decoy) = 0.0;
    empty.m(Basis::Z, Intensity::Signal) = 0.0;
    empty.m(Basis::Z, Intensity::Decoy) = 0.0;
    CHECK_THROWS_AS(secret_key_length(empty, sec), EmptyBlockError);

    ObservedCounts frozen = c;
    frozen.t_acq = 0.0;
    CHECK_THROWS_AS(secret_key_length(frozen, sec), ValidationError);
    frozen.t_acq = -2.0;
    CHECK_THROWS_AS(secret_key_length(frozen, sec), ValidationError);
}

TEST_CASE("secret key length assembles its own intermediates") {
    ObservedCounts c = toy_channel_counts(1e20, kLightBackground);
    SecurityParams sec;
    FiniteKeyResult out = secret_key_length(c, sec);

    SourceConfig src;
    src.mu1 = c.mu1;
    src.mu2 = c.mu2;
    src.p_mu1 = c.p_mu1;
    CHECK(out.tau0 == doctest::Approx(tau_n(0, src)).epsilon(1e-13));
    CHECK(out.tau1 == doctest::Approx(tau_n(1, src)).epsilon(1e-13));

    DecoyBounds z = decoy_bounds(c, Basis::Z, sec);
    CHECK(out.s0_low == doctest::Approx(z.s0_low).epsilon(1e-13));
    CHECK(out.s1_low == doctest::Approx(z.s1_low).epsilon(1e-13));

    double n_z = c.n.basis_total(Basis::Z);
    double m_z = c.m.basis_total(Basis::Z);
    CHECK(out.lambda_ec ==
          doctest::Approx(sec.f_ec * n_z * binary_entropy(m_z / n_z)).epsilon(1e-13));

    double raw = out.s0_low + out.s1_low * (1.0 - binary_entropy(out.phi1_up)) -
                 out.lambda_ec - penalty_bits(sec);
    CHECK(out.ell == std::max(0.0, std::floor(raw)));
    CHECK(out.ell > 0.0);
    CHECK(out.skr == doctest::Approx(out.ell / c.t_acq).epsilon(1e-13));
    CHECK_FALSE(out.phase_bound_pessimistic);
}

TEST_CASE("more errors never lengthen the key") {
    ObservedCounts base = toy_channel_counts(1e12, kLightBackground);
    SecurityParams sec;
    double prev = secret_key_length(base, sec).ell;
    for (double factor : {2.0, 4.0, 8.0}) {
        ObservedCounts c = base;
        for (int k = 0; k < 2; ++k) {
            c.m(Basis::Z, static_cast<Intensity>(k)) *= factor;
            c.m(Basis::X, static_cast<Intensity>(k)) *= factor;
        }
        double ell = secret_key_length(c, sec).ell;
        CHECK(ell <= prev);
        prev = ell;
    }
}

TEST_CASE("longer blocks do not hurt the rate") {
    SecurityParams sec;
    double prev = 0.0;
    for (double n_states : {1e11, 1e12, 1e13, 1e14}) {
        ObservedCounts c = toy_channel_counts(n_states, kLightBackground);
        c.t_acq = n_states * 1e-9;
        double skr = secret_key_length(c, sec).skr;
        CHECK(skr >= prev - 1e-6);
        CHECK(std::isfinite(skr));
        prev = skr;
    }
}

TEST_CASE("pessimistic phase bound flows through to the key length") {
    ObservedCounts c = toy_channel_counts(1e12, kLightBackground);
    c.n(Basis::X, Intensity::Signal) = 0.0;
    c.n(Basis::X, Intensity::Decoy) = 0.0;
    c.m(Basis::X, Intensity::Signal) = 0.0;
    c.m(Basis::X, Intensity::Decoy) = 0.0;
    SecurityParams sec;
    FiniteKeyResult out = secret_key_length(c, sec);
    CHECK(out.phase_bound_pessimistic);
    CHECK(out.phi1_up == 0.5);
    CHECK(out.skr == doctest::Approx(out.ell / c.t_acq).epsilon(1e-13));
}

TEST_CASE("observed counts survive a JSON round trip") {
    ObservedCounts c = toy_channel_counts(1e9, kHeavyBackground);
    c.t_acq = 12.75;
    ObservedCounts back = ObservedCounts::from_json(c.to_json());
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            Basis basis = static_cast<Basis>(b);
            Intensity inten = static_cast<Intensity>(k);
            CHECK(back.n(basis, inten) == doctest::Approx(c.n(basis, inten)).epsilon(1e-12));
            CHECK(back.m(basis, inten) == doctest::Approx(c.m(basis, inten)).epsilon(1e-12));
        }
    }
    CHECK(back.t_acq == c.t_acq);
    CHECK(back.mu1 == c.mu1);
    CHECK(back.mu2 == c.mu2);
    CHECK(back.p_mu1 == c.p_mu1);
}

TEST_CASE("observed counts JSON is strict") {
    ObservedCounts c = flat_counts(100.0, 1.0);
    nlohmann::json doc = nlohmann::json::parse(c.to_json());

    CHECK_THROWS_AS(ObservedCounts::from_json("{"), ValidationError);
    CHECK_THROWS_AS(ObservedCounts::from_json("3"), ValidationError);
    CHECK_THROWS_AS(ObservedCounts::from_json("{}"), ValidationError);

    nlohmann::json extra = doc;
    extra["comment"] = "hello";
    CHECK_THROWS_AS(ObservedCounts::from_json(extra.dump()), ValidationError);

    nlohmann::json cell = doc;
    cell["n"]["z_mu3"] = 1.0;
    CHECK_THROWS_AS(ObservedCounts::from_json(cell.dump()), ValidationError);

    nlohmann::json srcx = doc;
    srcx["source"]["mu3"] = 0.01;
    CHECK_THROWS_AS(ObservedCounts::from_json(srcx.dump()), ValidationError);

    nlohmann::json missing = doc;
    missing.erase("m");
    CHECK_THROWS_AS(ObservedCounts::from_json(missing.dump()), ValidationError);

    nlohmann::json no_time = doc;
    no_time.erase("t_acq");
    CHECK_THROWS_AS(ObservedCounts::from_json(no_time.dump()), ValidationError);

    nlohmann::json text = doc;
    text["n"]["z_mu1"] = "lots";
    CHECK_THROWS_AS(ObservedCounts::from_json(text.dump()), ValidationError);

    nlohmann::json inverted = doc;
    inverted["m"]["z_mu1"] = inverted["n"]["z_mu1"].get<double>() + 1.0;
    CHECK_THROWS_AS(ObservedCounts::from_json(inverted.dump()), ValidationError);
}
