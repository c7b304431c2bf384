#include "drtt/eval.hpp"

#include <algorithm>
#include <functional>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "drtt/criteria.hpp"
#include "drtt/error.hpp"

namespace drtt {

namespace {

using SystemOutput = std::function<std::vector<Tokens>(const std::vector<Tokens> &)>;

/// Scores one cell; backend failures mark the cell instead of propagating.
EvalCell run_cell(double ratio, const std::vector<Tokens> &inputs, std::vector<Tokens> refs,
                  const SystemOutput &system) {
    EvalCell cell;
    cell.ratio = ratio;
    try {
        cell.hyps = system(inputs);
        cell.refs = std::move(refs);
        cell.bleu = corpus_bleu(cell.hyps, cell.refs).value;
    } catch (const Error &e) {
        cell.error = e.what();
        cell.bleu.reset();
    }
    return cell;
}

std::vector<Tokens> sources(const Corpus &corpus) {
    std::vector<Tokens> out;
    for (const auto &p : corpus.pairs)
        out.push_back(p.src.tokens);
    return out;
}

std::vector<Tokens> targets(const Corpus &corpus) {
    std::vector<Tokens> out;
    for (const auto &p : corpus.pairs)
        out.push_back(p.tgt.tokens);
    return out;
}

/// `refs_of` picks the reference side from the (perturbed) corpus.
EvalReport evaluate(const std::string &metric, const Corpus &test,
                    const std::vector<NoiseSpec> &noise, const NoiseResources &resources,
                    const SystemOutput &system,
                    const std::function<std::vector<Tokens>(const Corpus &)> &refs_of) {
    if (test.empty())
        throw InputError(metric + ": empty test corpus");
    EvalReport report;
    report.metric = metric;
    report.clean = run_cell(0.0, sources(test), refs_of(test), system);

    std::vector<NoiseKind> order;
    std::map<NoiseKind, std::vector<EvalCell>> cells;
    for (const auto &spec : noise) {
        spec.validate();
        if (spec.ratio == 0.0)
            continue;
        if (!cells.count(spec.kind))
            order.push_back(spec.kind);
        EvalCell cell;
        try {
            const auto perturbed = perturb_corpus(test, spec, resources);
            cell = run_cell(spec.ratio, sources(perturbed.corpus), refs_of(perturbed.corpus),
                            system);
        } catch (const BackendError &e) {
            cell.ratio = spec.ratio;
            cell.error = e.what();
        }
        cells[spec.kind].push_back(std::move(cell));
    }
    for (auto kind : order) {
        EvalRow row;
        row.kind = kind;
        row.cells = std::move(cells[kind]);
        std::stable_sort(row.cells.begin(), row.cells.end(),
                         [](const auto &a, const auto &b) { return a.ratio < b.ratio; });
        double sum = 0.0;
        bool complete = !row.cells.empty();
        for (const auto &cell : row.cells) {
            complete = complete && cell.bleu.has_value();
            sum += cell.bleu.value_or(0.0);
        }
        if (complete)
            row.avg = sum / static_cast<double>(row.cells.size());
        report.rows.push_back(std::move(row));
    }
    return report;
}

nlohmann::json cell_json(const EvalCell &cell) {
    nlohmann::json j = {{"ratio", cell.ratio}};
    j["bleu"] = cell.bleu ? nlohmann::json(*cell.bleu) : nlohmann::json(nullptr);
    if (!cell.error.empty())
        j["error"] = cell.error;
    return j;
}

std::string percent(const std::optional<double> &value) {
    if (!value)
        return "failed";
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2f", 100.0 * *value);
    return buffer;
}

} // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto &row : rows) {
        nlohmann::json cells_json = nlohmann::json::array();
        for (const auto &cell : row.cells)
            cells_json.push_back(cell_json(cell));
        rows_json.push_back({{"kind", to_string(row.kind)},
                             {"cells", cells_json},
                             {"avg", row.avg ? nlohmann::json(*row.avg) : nlohmann::json(nullptr)}});
    }
    return {{"metric", metric}, {"clean", cell_json(clean)}, {"rows", rows_json},
            {"metadata", metadata}};
}

std::string EvalReport::to_table() const {
    std::vector<double> ratios;
    for (const auto &row : rows)
        for (const auto &cell : row.cells)
            if (std::find(ratios.begin(), ratios.end(), cell.ratio) == ratios.end())
                ratios.push_back(cell.ratio);
    std::sort(ratios.begin(), ratios.end());

    std::ostringstream out;
    char buffer[64];
    auto column = [&](const std::string &text) {
        std::snprintf(buffer, sizeof buffer, "%9s", text.c_str());
        out << buffer;
    };
    std::snprintf(buffer, sizeof buffer, "%-12s", metric.c_str());
    out << buffer;
    column("clean");
    for (double r : ratios) {
        std::snprintf(buffer, sizeof buffer, "%.2g", r);
        column(buffer);
    }
    column("AVG");
    out << '\n';
    for (const auto &row : rows) {
        std::snprintf(buffer, sizeof buffer, "%-12s", std::string(to_string(row.kind)).c_str());
        out << buffer;
        column(percent(clean.bleu));
        for (double r : ratios) {
            auto it = std::find_if(row.cells.begin(), row.cells.end(),
                                   [&](const auto &c) { return c.ratio == r; });
            column(it == row.cells.end() ? "-" : percent(it->bleu));
        }
        column(percent(row.avg));
        out << '\n';
    }
    if (rows.empty()) {
        std::snprintf(buffer, sizeof buffer, "%-12s", "clean");
        out << buffer;
        column(percent(clean.bleu));
        out << '\n';
    }
    return out.str();
}

EvalReport forward_eval(const Corpus &test, const std::vector<NoiseSpec> &noise,
                        const BackendHandle &fwd, const NoiseResources &resources) {
    auto report = evaluate(
        "forward_bleu", test, noise, resources,
        [&](const std::vector<Tokens> &inputs) { return translate_all(fwd, inputs); }, targets);
    report.metadata["fwd"] = fwd.endpoint();
    return report;
}

EvalReport rtt_eval(const Corpus &test, const std::vector<NoiseSpec> &noise,
                    const BackendHandle &fwd, const BackendHandle &bwd,
                    const NoiseResources &resources) {
    auto report = evaluate(
        "rtt_bleu", test, noise, resources,
        [&](const std::vector<Tokens> &inputs) {
            return translate_all(bwd, translate_all(fwd, inputs));
        },
        sources);
    report.metadata["fwd"] = fwd.endpoint();
    report.metadata["bwd"] = bwd.endpoint();
    return report;
}

std::vector<SweepRow> attack_eval(const std::vector<Candidate> &candidates,
                                  const BackendHandle &victim, std::vector<double> gamma_grid,
                                  double beta) {
    std::sort(gamma_grid.begin(), gamma_grid.end());
    std::vector<SweepRow> rows;
    CriterionConfig cfg;
    cfg.beta = beta;
    for (double gamma : gamma_grid) {
        cfg.gamma = gamma;
        std::vector<Tokens> inputs, refs;
        for (const auto &c : candidates)
            if (drtt_accept(c.scores, cfg) && !c.y_delta.empty()) {
                inputs.push_back(c.x_delta);
                refs.push_back(c.y_delta);
            }
        SweepRow row{gamma, inputs.size(), std::nullopt};
        if (!inputs.empty())
            row.bleu = corpus_bleu(translate_all(victim, inputs), refs).value;
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows) {
    out << "gamma,n_accepted,bleu\n";
    char buffer[64];
    for (const auto &row : rows) {
        std::snprintf(buffer, sizeof buffer, "%.17g", row.gamma);
        out << buffer << ',' << row.n_accepted << ',';
        if (row.bleu) {
            std::snprintf(buffer, sizeof buffer, "%.4f", 100.0 * *row.bleu);
            out << buffer;
        }
        out << '\n';
    }
}

std::string significance_stars(double p_value) {
    if (p_value < 0.01)
        return "**";
    if (p_value < 0.05)
        return "*";
    return "";
}

std::vector<SignificanceAnnotation> compare_systems(const EvalReport &a, const EvalReport &b,
                                                    std::uint64_t seed, std::size_t n_resamples) {
    std::vector<SignificanceAnnotation> out;
    auto compare = [&](std::optional<NoiseKind> kind, const EvalCell &ca, const EvalCell &cb) {
        if (!ca.bleu || !cb.bleu)
            return;
        if (ca.refs != cb.refs)
            throw InputError("compare_systems: cells at ratio " + std::to_string(ca.ratio) +
                             " use different references");
        SignificanceAnnotation note;
        note.kind = kind;
        note.ratio = ca.ratio;
        note.result = paired_bootstrap(ca.hyps, cb.hyps, ca.refs, n_resamples, seed);
        note.stars = significance_stars(note.result.p_value);
        out.push_back(std::move(note));
    };
    compare(std::nullopt, a.clean, b.clean);
    for (const auto &row_a : a.rows) {
        auto row_b = std::find_if(b.rows.begin(), b.rows.end(),
                                  [&](const auto &r) { return r.kind == row_a.kind; });
        if (row_b == b.rows.end())
            continue;
        for (const auto &cell_a : row_a.cells)
            for (const auto &cell_b : row_b->cells)
                if (cell_a.ratio == cell_b.ratio)
                    compare(row_a.kind, cell_a, cell_b);
    }
    return out;
}

} // namespace drtt
