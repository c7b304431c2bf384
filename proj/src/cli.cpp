#include "drtt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "drtt/advgen.hpp"
#include "drtt/align.hpp"
#include "drtt/backends.hpp"
#include "drtt/config.hpp"
#include "drtt/corpus.hpp"
#include "drtt/error.hpp"
#include "drtt/eval.hpp"
#include "drtt/metrics.hpp"
#include "drtt/noise.hpp"
#include "drtt/phrases.hpp"

namespace drtt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
    PipelineConfig cfg;
    std::ostream &out;
    std::vector<std::string> outputs; ///< files written, relative to out_dir

    fs::path path(const std::string &name) {
        if (std::find(outputs.begin(), outputs.end(), name) == outputs.end())
            outputs.push_back(name);
        return fs::path(cfg.out_dir) / name;
    }
};

/// Command-specific file arguments that are not config keys.
struct FileArgs {
    std::string hyp, ref, hyp_a, hyp_b, candidates;
};

std::ofstream open_output(const fs::path &path) {
    std::ofstream file(path, std::ios::binary);
    if (!file)
        throw Error("cannot write " + path.string());
    return file;
}

void write_json(const fs::path &path, const json &doc) {
    auto file = open_output(path);
    file << doc.dump(2) << '\n';
}

std::string fixed2(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2f", value);
    return buffer;
}

std::string ratio_label(double ratio) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%g", ratio);
    return buffer;
}

/// Throws one InputError naming every role without an endpoint.
void require_backends(const PipelineConfig &cfg, std::initializer_list<std::string_view> roles) {
    std::vector<std::string> missing;
    for (auto role : roles) {
        try {
            cfg.endpoint(role);
        } catch (const InputError &) {
            missing.emplace_back(role);
        }
    }
    if (missing.empty())
        return;
    std::string names;
    for (const auto &m : missing)
        names += (names.empty() ? "" : ", ") + m;
    throw InputError("missing backend endpoint for: " + names +
                     " (set backend_<role>, DRTT_BACKEND_<ROLE>, or pass --mock-backends)");
}

BackendHandle open_role(const PipelineConfig &cfg, std::string_view role) {
    const std::chrono::milliseconds timeout(cfg.timeout_ms);
    const std::string endpoint = cfg.endpoint(role);
    if (role == "mmlm")
        return open_backend(BackendKind::mmlm, std::nullopt, endpoint, timeout);
    if (role == "tmlm")
        return open_backend(BackendKind::tmlm, std::nullopt, endpoint, timeout);
    const auto dir = role == "bwd" ? Direction::tgt2src : Direction::src2tgt;
    return open_backend(BackendKind::translator, dir, endpoint, timeout);
}

Corpus load_input(const PipelineConfig &cfg) {
    if (cfg.src.empty() || cfg.tgt.empty())
        throw InputError("this command needs an input corpus (src and tgt)");
    return load_parallel(cfg.src, cfg.tgt, cfg.src_lang, cfg.tgt_lang, cfg.tokenize);
}

BidirectionalAligner load_or_train_aligner(const PipelineConfig &cfg, const Corpus &corpus) {
    BidirectionalAligner aligner;
    if (!cfg.lexicon_fwd.empty() || !cfg.lexicon_rev.empty()) {
        if (cfg.lexicon_fwd.empty() || cfg.lexicon_rev.empty())
            throw InputError("lexicon_fwd and lexicon_rev must be given together");
        aligner.fwd = LexiconTable::read_tsv(cfg.lexicon_fwd);
        aligner.rev = LexiconTable::read_tsv(cfg.lexicon_rev);
        aligner.config = cfg.align;
        aligner.heuristic = cfg.heuristic;
    } else {
        aligner = train_aligner(corpus, cfg.align, cfg.heuristic);
    }
    aligner.symmetrized = cfg.symmetrize;
    return aligner;
}

std::vector<NoiseSpec> noise_specs(const PipelineConfig &cfg) {
    std::vector<NoiseSpec> specs;
    for (auto kind : cfg.noise_kinds)
        for (double ratio : cfg.noise_ratios)
            specs.push_back({kind, ratio, cfg.seed});
    return specs;
}

/// Opens only what the configured noise kinds need.
struct NoiseSetup {
    std::optional<EmbeddingTable> embeddings;
    std::optional<BackendHandle> mmlm;
    std::optional<BackendHandle> tmlm;
    std::optional<BidirectionalAligner> aligner;
    NoiseResources resources;
};

void prepare_noise(NoiseSetup &setup, const PipelineConfig &cfg, const Corpus &corpus) {
    auto wants = [&](NoiseKind kind) {
        return std::find(cfg.noise_kinds.begin(), cfg.noise_kinds.end(), kind) !=
               cfg.noise_kinds.end();
    };
    if (wants(NoiseKind::rep_src)) {
        if (cfg.embeddings.empty())
            throw InputError("rep_src noise needs embeddings");
        setup.embeddings = load_embeddings(cfg.embeddings);
        setup.resources.embeddings = &*setup.embeddings;
    }
    if (wants(NoiseKind::rep_both)) {
        require_backends(cfg, {"mmlm", "tmlm"});
        setup.mmlm = open_role(cfg, "mmlm");
        setup.tmlm = open_role(cfg, "tmlm");
        setup.aligner = load_or_train_aligner(cfg, corpus);
        setup.resources.mmlm = &*setup.mmlm;
        setup.resources.tmlm = &*setup.tmlm;
        const BidirectionalAligner *aligner = &*setup.aligner;
        setup.resources.aligner = [aligner](const ParallelPair &pair) {
            return aligner->align(pair);
        };
    }
}

// ----------------------------------------------------------------- commands --

json cmd_align_train(Context &ctx) {
    const Corpus corpus = load_input(ctx.cfg);
    const auto fwd = train_ibm1(corpus, ctx.cfg.align);
    const auto rev = train_ibm1(reversed(corpus), ctx.cfg.align);
    fwd.lexicon.write_tsv(ctx.path("lexicon.fwd.tsv"));
    rev.lexicon.write_tsv(ctx.path("lexicon.rev.tsv"));
    ctx.out << "trained on " << corpus.size() << " pairs\n";
    return {{"pairs", corpus.size()},
            {"dropped", corpus.dropped},
            {"log_likelihood", {{"fwd", fwd.log_likelihood}, {"rev", rev.log_likelihood}}}};
}

json cmd_align_apply(Context &ctx) {
    const Corpus corpus = load_input(ctx.cfg);
    const auto aligner = load_or_train_aligner(ctx.cfg, corpus);
    auto file = open_output(ctx.path("alignments.txt"));
    std::size_t links = 0;
    for (const auto &pair : corpus.pairs) {
        const auto align = aligner.align(pair);
        links += align.links().size();
        file << write_pharaoh(align) << '\n';
    }
    return {{"pairs", corpus.size()}, {"links", links}};
}

json cmd_phrases(Context &ctx) {
    const Corpus corpus = load_input(ctx.cfg);
    const auto aligner = load_or_train_aligner(ctx.cfg, corpus);
    auto file = open_output(ctx.path("phrases.tsv"));
    std::size_t total = 0;
    for (const auto &pair : corpus.pairs) {
        const auto phrases = extract_phrases(pair, aligner.align(pair), ctx.cfg.gen.max_len);
        total += phrases.size();
        file << "# sentence " << pair.id << '\n';
        write_phrase_table(file, phrases);
    }
    return {{"pairs", corpus.size()}, {"phrases", total}};
}

json cmd_generate(Context &ctx) {
    const auto &cfg = ctx.cfg;
    require_backends(cfg, {"fwd", "bwd", "mmlm", "tmlm"});
    const Corpus corpus = load_input(cfg);
    const Backends backends{open_role(cfg, "fwd"), open_role(cfg, "bwd"), open_role(cfg, "mmlm"),
                            open_role(cfg, "tmlm")};
    const auto mapper =
        make_mapper(load_or_train_aligner(cfg, corpus), cfg.gen.max_len, cfg.gen.strategy);
    const auto result = generate_corpus(corpus, mapper, backends, cfg.gen, cfg.workers);

    {
        auto file = open_output(ctx.path("candidates.jsonl"));
        write_candidates_jsonl(file, result.all);
    }
    std::vector<Tokens> adv_src, adv_tgt;
    for (const auto &c : result.accepted) {
        adv_src.push_back(c.x_delta);
        adv_tgt.push_back(c.y_delta);
    }
    write_lines(ctx.path("adversarial.src"), adv_src);
    write_lines(ctx.path("adversarial.tgt"), adv_tgt);
    ctx.out << "accepted " << result.stats.accepted << " of " << corpus.size() << " pairs\n";
    return {{"pairs", corpus.size()},
            {"accepted", result.stats.accepted},
            {"rejected", result.stats.rejected},
            {"unusable", result.stats.unusable},
            {"errored", result.stats.errored},
            {"beta", cfg.gen.beta},
            {"gamma", cfg.gen.gamma}};
}

json cmd_perturb(Context &ctx) {
    const Corpus corpus = load_input(ctx.cfg);
    NoiseSetup setup;
    prepare_noise(setup, ctx.cfg, corpus);
    json sets = json::array();
    for (const auto &spec : noise_specs(ctx.cfg)) {
        const auto perturbed = perturb_corpus(corpus, spec, setup.resources);
        const std::string stem = std::string(to_string(spec.kind)) + "." + ratio_label(spec.ratio);
        std::vector<Tokens> src, tgt;
        for (const auto &pair : perturbed.corpus.pairs) {
            src.push_back(pair.src.tokens);
            tgt.push_back(pair.tgt.tokens);
        }
        write_lines(ctx.path(stem + ".src"), src);
        write_lines(ctx.path(stem + ".tgt"), tgt);
        auto manifest = open_output(ctx.path(stem + ".positions.jsonl"));
        write_noise_manifest(manifest, perturbed.manifest);
        sets.push_back({{"kind", to_string(spec.kind)},
                        {"ratio", spec.ratio},
                        {"stem", stem},
                        {"warnings", perturbed.warnings}});
    }
    return {{"pairs", corpus.size()}, {"sets", sets}};
}

json finish_report(Context &ctx, EvalReport report) {
    report.metadata["seed"] = ctx.cfg.seed;
    report.metadata["config_hash"] = config_hash(ctx.cfg);
    const std::string table = report.to_table();
    auto file = open_output(ctx.path("report.txt"));
    file << table;
    ctx.out << table;
    return report.to_json();
}

json cmd_eval(Context &ctx, bool round_trip) {
    const auto &cfg = ctx.cfg;
    if (round_trip)
        require_backends(cfg, {"fwd", "bwd"});
    else
        require_backends(cfg, {"fwd"});
    const Corpus corpus = load_input(cfg);
    NoiseSetup setup;
    prepare_noise(setup, cfg, corpus);
    const auto fwd = open_role(cfg, "fwd");
    if (round_trip)
        return finish_report(
            ctx, rtt_eval(corpus, noise_specs(cfg), fwd, open_role(cfg, "bwd"), setup.resources));
    return finish_report(ctx, forward_eval(corpus, noise_specs(cfg), fwd, setup.resources));
}

json cmd_attack_sweep(Context &ctx, const FileArgs &files) {
    require_backends(ctx.cfg, {"victim"});
    std::ifstream in(files.candidates, std::ios::binary);
    if (!in)
        throw InputError("cannot open candidates " + files.candidates);
    const auto candidates = read_candidates_jsonl(in);
    const auto rows = attack_eval(candidates, open_role(ctx.cfg, "victim"), ctx.cfg.gamma_grid,
                                  ctx.cfg.gen.beta);
    {
        auto csv = open_output(ctx.path("sweep.csv"));
        write_sweep_csv(csv, rows);
    }
    write_sweep_csv(ctx.out, rows);
    json rows_json = json::array();
    for (const auto &row : rows)
        rows_json.push_back({{"gamma", row.gamma},
                             {"n_accepted", row.n_accepted},
                             {"bleu", row.bleu ? json(*row.bleu) : json(nullptr)}});
    return {{"beta", ctx.cfg.gen.beta}, {"candidates", candidates.size()}, {"rows", rows_json}};
}

std::vector<Tokens> read_aligned(const std::string &path, const char *what) {
    if (path.empty())
        throw InputError(std::string("missing --") + what);
    return read_lines(path, TokenizeMode::whitespace);
}

json cmd_score_bleu(Context &ctx, const FileArgs &files) {
    const auto hyps = read_aligned(files.hyp, "hyp");
    const auto refs = read_aligned(files.ref, "ref");
    if (hyps.size() != refs.size())
        throw InputError("hypothesis and reference line counts differ (" +
                         std::to_string(hyps.size()) + " vs " + std::to_string(refs.size()) + ")");
    const auto score = corpus_bleu(hyps, refs);
    ctx.out << fixed2(100.0 * score.value) << '\n';
    return {{"bleu", score.value},
            {"precisions", score.precisions},
            {"brevity_penalty", score.brevity_penalty},
            {"hyp_len", score.hyp_len},
            {"ref_len", score.ref_len}};
}

json cmd_significance(Context &ctx, const FileArgs &files) {
    const auto a = read_aligned(files.hyp_a, "hyp-a");
    const auto b = read_aligned(files.hyp_b, "hyp-b");
    const auto refs = read_aligned(files.ref, "ref");
    if (a.size() != refs.size() || b.size() != refs.size())
        throw InputError("system outputs and references must have the same line count");
    const auto result = paired_bootstrap(a, b, refs, ctx.cfg.bootstrap_samples, ctx.cfg.seed);
    const auto stars = significance_stars(result.p_value);
    char line[128];
    std::snprintf(line, sizeof line, "delta %+.2f  p %.4f %s\n", 100.0 * result.delta,
                  result.p_value, stars.c_str());
    ctx.out << line;
    return {{"p_value", result.p_value},
            {"delta", result.delta},
            {"n_resamples", result.n_resamples},
            {"seed", result.seed},
            {"stars", stars}};
}

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Doubly round-trip adversarial pair generation and MT robustness evaluation",
                 "drtt"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"align-train", "train lexical models in both directions"},
        {"align-apply", "write symmetrized word alignments"},
        {"phrases", "extract consistent phrase pairs"},
        {"generate", "generate adversarial pairs (candidates.jsonl)"},
        {"perturb", "write synthetic-noise test sets"},
        {"eval-forward", "forward BLEU on noisy test sets"},
        {"eval-rtt", "round-trip BLEU on noisy test sets"},
        {"attack-sweep", "victim BLEU on candidates re-filtered over a gamma grid"},
        {"score-bleu", "corpus BLEU of a hypothesis file"},
        {"significance", "paired bootstrap test between two systems"},
    };

    std::string config_path;
    bool mock_flag = false;
    FileArgs files;
    std::map<std::string, std::string> flag_text;
    std::map<std::string, CLI::Option *> flag_opts;
    std::map<std::string, CLI::App *> subs;

    for (const auto &[name, help] : commands) {
        auto *sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key = value config file or a manifest.json");
        for (const auto &key : config_schema()) {
            if (key.name == "mock_backends")
                continue;
            // Options are registered per subcommand; CLI11 keeps a pointer per (sub, key).
            auto *opt = sub->add_option("--" + dashed(key.name), flag_text[key.name], key.help);
            flag_opts[name + "/" + key.name] = opt;
        }
        sub->add_flag("--mock-backends", mock_flag, "use mocks for unset backends");
        if (name == "score-bleu" || name == "significance")
            sub->add_option("--ref", files.ref, "reference file")->required();
        if (name == "score-bleu")
            sub->add_option("--hyp", files.hyp, "hypothesis file")->required();
        if (name == "significance") {
            sub->add_option("--hyp-a", files.hyp_a, "system A output")->required();
            sub->add_option("--hyp-b", files.hyp_b, "system B output")->required();
        }
        if (name == "attack-sweep")
            sub->add_option("--candidates", files.candidates, "candidates.jsonl from generate")
                ->required();
        subs[name] = sub;
    }

    try {
        std::vector<std::string> reversed_args(args.rbegin(), args.rend());
        app.parse(reversed_args);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    std::string command;
    for (const auto &[name, sub] : subs)
        if (sub->parsed())
            command = name;

    std::optional<Context> ctx;
    try {
        ConfigValues flags;
        for (const auto &key : config_schema()) {
            auto it = flag_opts.find(command + "/" + key.name);
            if (it != flag_opts.end() && it->second->count() > 0)
                flags[key.name] = flag_text[key.name];
        }
        if (mock_flag)
            flags["mock_backends"] = true;
        const ConfigValues file = config_path.empty() ? ConfigValues{} : load_config_file(config_path);
        const ConfigValues env = environment_overrides([](const char *n) { return std::getenv(n); });
        ctx.emplace(Context{resolve_config(file, env, flags), out, {}});
        fs::create_directories(ctx->cfg.out_dir);
    } catch (const InputError &e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }

    json report;
    int code = kExitOk;
    std::string failure;
    try {
        if (command == "align-train")
            report = cmd_align_train(*ctx);
        else if (command == "align-apply")
            report = cmd_align_apply(*ctx);
        else if (command == "phrases")
            report = cmd_phrases(*ctx);
        else if (command == "generate")
            report = cmd_generate(*ctx);
        else if (command == "perturb")
            report = cmd_perturb(*ctx);
        else if (command == "eval-forward")
            report = cmd_eval(*ctx, false);
        else if (command == "eval-rtt")
            report = cmd_eval(*ctx, true);
        else if (command == "attack-sweep")
            report = cmd_attack_sweep(*ctx, files);
        else if (command == "score-bleu")
            report = cmd_score_bleu(*ctx, files);
        else if (command == "significance")
            report = cmd_significance(*ctx, files);
        write_json(ctx->path("report.json"), report);
    } catch (const InputError &e) {
        code = kExitInvalid;
        failure = e.what();
    } catch (const std::exception &e) {
        code = kExitRuntime;
        failure = e.what();
    }
    if (code != kExitOk)
        err << "error: " << failure << '\n';

    try {
        json manifest = {{"command", command},
                         {"status", code == kExitOk ? "ok" : "failed"},
                         {"config", config_to_json(ctx->cfg)},
                         {"config_hash", config_hash(ctx->cfg)},
                         {"seeds", {{"seed", ctx->cfg.seed}}},
                         {"outputs", ctx->outputs}};
        if (code != kExitOk)
            manifest["error"] = failure;
        write_json(fs::path(ctx->cfg.out_dir) / "manifest.json", manifest);
    } catch (const std::exception &e) {
        err << "error: cannot write manifest: " << e.what() << '\n';
        if (code == kExitOk)
            code = kExitRuntime;
    }
    return code;
}

} // namespace drtt
