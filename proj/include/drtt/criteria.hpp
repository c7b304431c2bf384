#pragma once

#include <optional>
#include <string>

#include "drtt/backends.hpp"
#include "drtt/corpus.hpp"

namespace drtt {

/// Reconstruction similarities of both round trips and the derived
/// adversarial-effect scores.
struct RttScores {
    double sim_x_xhat = 0.0;     ///< sim(x, g(f(x)))
    double sim_xd_xdhat = 0.0;   ///< sim(x_delta, g(f(x_delta)))
    double sim_y_yhat = 0.0;     ///< sim(y, f(g(y)))
    double sim_yd_ydhat = 0.0;   ///< sim(y'_delta, f(g(y'_delta))), y'_delta = f(x_delta)
    double d_src = 0.0;
    double d_tgt = 0.0;
};

struct CriterionConfig {
    double beta = 0.5;
    double gamma = 0.5;
    double eta = 0.7;
    double alpha = 0.0;
    double epsilon_denominator = 1e-6;
};

inline constexpr double kDefaultEpsilon = 1e-6;

/// Relative drop of source-side reconstruction similarity. nullopt when the
/// unperturbed reconstruction itself is below `epsilon` (unusable sample).
std::optional<double> d_src(double sim_x_xhat, double sim_xd_xdhat,
                            double epsilon = kDefaultEpsilon);

/// Same contract as d_src for the target-source-target round trip.
std::optional<double> d_tgt(double sim_y_yhat, double sim_yd_ydhat,
                            double epsilon = kDefaultEpsilon);

/// d_src > beta and d_tgt < gamma.
bool drtt_accept(const RttScores &scores, const CriterionConfig &cfg);
/// d_src > beta.
bool rtt_accept(const RttScores &scores, const CriterionConfig &cfg);
/// sim(x, x_delta) > eta and sim(y, y') - sim(y, y'_delta) > alpha.
bool mp_accept(double sim_x_xd, double sim_y_yprime, double sim_y_ydprime,
               const CriterionConfig &cfg);

/// Sentence BLEU of a reconstruction against its original. An empty
/// original scores 1 against an empty reconstruction and 0 otherwise.
double similarity(const Tokens &reconstruction, const Tokens &original);

enum class ScoreStatus { ok, unusable };

struct ScoreOutcome {
    ScoreStatus status = ScoreStatus::ok;
    RttScores scores;
};

/// Runs both round trips for (x, y) and the perturbed source x_delta.
/// y'_delta = f(x_delta) is computed once and feeds the target-side trip.
/// Throws BackendError when a backend call fails.
ScoreOutcome score_pair(const Tokens &x, const Tokens &y, const Tokens &x_delta,
                        const BackendHandle &fwd, const BackendHandle &bwd,
                        double epsilon = kDefaultEpsilon);

} // namespace drtt
