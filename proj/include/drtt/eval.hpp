#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drtt/advgen.hpp"
#include "drtt/backends.hpp"
#include "drtt/metrics.hpp"
#include "drtt/noise.hpp"

namespace drtt {

/// One corpus-BLEU measurement. Hypotheses and references are kept so two
/// reports can be compared sentence by sentence.
struct EvalCell {
    double ratio = 0.0;
    std::optional<double> bleu;
    std::string error;
    std::vector<Tokens> hyps;
    std::vector<Tokens> refs;
};

struct EvalRow {
    NoiseKind kind = NoiseKind::deletion;
    std::vector<EvalCell> cells; ///< ascending ratio
    std::optional<double> avg;   ///< mean over cells; null if any cell failed
};

struct EvalReport {
    std::string metric; ///< "forward_bleu" or "rtt_bleu"
    EvalCell clean;
    std::vector<EvalRow> rows;
    nlohmann::json metadata = nlohmann::json::object();

    nlohmann::json to_json() const;
    /// Aligned plain-text table, BLEU shown in percent.
    std::string to_table() const;
};

/// BLEU of fwd(perturbed source) against the target (the perturbed target
/// for rep_both). Specs with ratio 0 are folded into the clean column.
EvalReport forward_eval(const Corpus &test, const std::vector<NoiseSpec> &noise,
                        const BackendHandle &fwd, const NoiseResources &resources);

/// BLEU of g(f(x_delta)) against x_delta itself.
EvalReport rtt_eval(const Corpus &test, const std::vector<NoiseSpec> &noise,
                    const BackendHandle &fwd, const BackendHandle &bwd,
                    const NoiseResources &resources);

struct SweepRow {
    double gamma = 0.0;
    std::size_t n_accepted = 0;
    std::optional<double> bleu;
};

/// Re-filters candidates at each gamma (beta fixed), translates accepted
/// x_delta with the victim and scores against y_delta. Rows sorted by gamma.
std::vector<SweepRow> attack_eval(const std::vector<Candidate> &candidates,
                                  const BackendHandle &victim, std::vector<double> gamma_grid,
                                  double beta);

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows);

struct SignificanceAnnotation {
    std::optional<NoiseKind> kind; ///< nullopt for the clean column
    double ratio = 0.0;
    SignificanceResult result;
    std::string stars; ///< "**" at p < 0.01, "*" at p < 0.05, else ""
};

std::string significance_stars(double p_value);

/// Paired bootstrap of A over B for every cell present in both reports.
/// Throws InputError when matching cells were scored against different references.
std::vector<SignificanceAnnotation> compare_systems(const EvalReport &a, const EvalReport &b,
                                                    std::uint64_t seed,
                                                    std::size_t n_resamples = 1000);

} // namespace drtt
