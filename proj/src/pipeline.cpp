#include "qkdco/pipeline.hpp"

#include <cmath>

namespace qkdco {

ObservedCounts expected_counts(const Scenario& s, const RatePrediction& pred) {
    if (!(pred.r_sifted_z > 0.0) || !std::isfinite(pred.t_acq))
        throw NoKeyError("r_sifted_z", "sifted Z rate is zero; no block can be filled");

    ObservedCounts out;
    out.mu1 = s.source.mu1;
    out.mu2 = s.source.mu2;
    out.p_mu1 = s.source.p_mu1;
    out.t_acq = pred.t_acq;

    double p_mu[2] = {s.source.p_mu1, 1.0 - s.source.p_mu1};
    double totals[2] = {s.security.block_size, pred.r_sifted_x * pred.t_acq};
    for (int b = 0; b < 2; ++b) {
        Basis basis = static_cast<Basis>(b);
        double w[2], w_sum = 0.0;
        for (int k = 0; k < 2; ++k) {
            w[k] = p_mu[k] * pred.p_click(basis, static_cast<Intensity>(k));
            w_sum += w[k];
        }
        if (w_sum <= 0.0) continue;
        for (int k = 0; k < 2; ++k) {
            Intensity inten = static_cast<Intensity>(k);
            double n = totals[b] * w[k] / w_sum;
            out.n(basis, inten) = n;
            out.m(basis, inten) = n * pred.qber(basis, inten);
        }
    }
    return out;
}

PipelineResult evaluate(const Scenario& s, const PipelineOptions& opts) {
    PipelineResult out;
    if (opts.asymptotic_rate) {
        Scenario ideal = s;
        ideal.receiver.dead_time = 0.0;
        out.prediction = predict(ideal);
    } else {
        out.prediction = predict(s);
    }
    try {
        out.counts = expected_counts(s, out.prediction);
        out.key = secret_key_length(out.counts, s.security);
    } catch (const NoKeyError&) {
        out.key = FiniteKeyResult{};
    } catch (const EmptyBlockError&) {
        out.key = FiniteKeyResult{};
    }
    return out;
}

}  // namespace qkdco
