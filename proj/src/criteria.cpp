#include "drtt/criteria.hpp"

#include "drtt/metrics.hpp"

namespace drtt {

namespace {

std::optional<double> relative_drop(double base, double perturbed, double epsilon) {
    if (base < epsilon)
        return std::nullopt;
    return (base - perturbed) / base;
}

} // namespace

std::optional<double> d_src(double sim_x_xhat, double sim_xd_xdhat, double epsilon) {
    return relative_drop(sim_x_xhat, sim_xd_xdhat, epsilon);
}

std::optional<double> d_tgt(double sim_y_yhat, double sim_yd_ydhat, double epsilon) {
    return relative_drop(sim_y_yhat, sim_yd_ydhat, epsilon);
}

bool drtt_accept(const RttScores &scores, const CriterionConfig &cfg) {
    return scores.d_src > cfg.beta && scores.d_tgt < cfg.gamma;
}

bool rtt_accept(const RttScores &scores, const CriterionConfig &cfg) {
    return scores.d_src > cfg.beta;
}

bool mp_accept(double sim_x_xd, double sim_y_yprime, double sim_y_ydprime,
               const CriterionConfig &cfg) {
    return sim_x_xd > cfg.eta && (sim_y_yprime - sim_y_ydprime) > cfg.alpha;
}

double similarity(const Tokens &reconstruction, const Tokens &original) {
    if (original.empty())
        return reconstruction.empty() ? 1.0 : 0.0;
    return sentence_bleu(reconstruction, original).value;
}

ScoreOutcome score_pair(const Tokens &x, const Tokens &y, const Tokens &x_delta,
                        const BackendHandle &fwd, const BackendHandle &bwd, double epsilon) {
    // f(x), f(x_delta) = y'_delta
    const auto forward = translate_all(fwd, {x, x_delta});
    const Tokens &y_prime_delta = forward[1];
    // g(f(x)), g(y'_delta), g(y)
    const auto backward = translate_all(bwd, {forward[0], y_prime_delta, y});
    // f(g(y)), f(g(y'_delta))
    const auto target_trip = translate_all(fwd, {backward[2], backward[1]});

    ScoreOutcome out;
    RttScores &s = out.scores;
    s.sim_x_xhat = similarity(backward[0], x);
    s.sim_xd_xdhat = similarity(backward[1], x_delta);
    s.sim_y_yhat = similarity(target_trip[0], y);
    s.sim_yd_ydhat = similarity(target_trip[1], y_prime_delta);
    const auto src = d_src(s.sim_x_xhat, s.sim_xd_xdhat, epsilon);
    const auto tgt = d_tgt(s.sim_y_yhat, s.sim_yd_ydhat, epsilon);
    if (!src || !tgt) {
        out.status = ScoreStatus::unusable;
        return out;
    }
    s.d_src = *src;
    s.d_tgt = *tgt;
    return out;
}

} // namespace drtt
