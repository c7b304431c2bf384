#include "drtt/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "drtt/error.hpp"

namespace drtt {

using nlohmann::json;

const std::vector<ConfigKey> &config_schema() {
    static const std::vector<ConfigKey> schema = {
        {"src_lang", ValueType::string, "source language tag"},
        {"tgt_lang", ValueType::string, "target language tag"},
        {"tokenize", ValueType::string, "whitespace | character"},
        {"src", ValueType::string, "input corpus, source side"},
        {"tgt", ValueType::string, "input corpus, target side"},
        {"lexicon_fwd", ValueType::string, "trained source->target lexicon (TSV)"},
        {"lexicon_rev", ValueType::string, "trained target->source lexicon (TSV)"},
        {"embeddings", ValueType::string, "word vectors for rep_src noise"},
        {"align_iterations", ValueType::integer, "EM iterations"},
        {"diagonal_tension", ValueType::real, "alignment prior sharpness"},
        {"p_null", ValueType::real, "null-alignment probability"},
        {"heuristic", ValueType::string, "intersection | union | grow-diag-final-and"},
        {"symmetrize", ValueType::boolean, "combine both alignment directions"},
        {"beta", ValueType::real, "source-side threshold (default per language pair)"},
        {"gamma", ValueType::real, "target-side threshold (default per language pair)"},
        {"c", ValueType::real, "replacement ratio"},
        {"k", ValueType::integer, "M-MLM candidates per segment"},
        {"max_len", ValueType::integer, "maximum phrase length"},
        {"strategy", ValueType::string, "segmentation: shortest | longest"},
        {"budget_unit", ValueType::string, "segments | tokens"},
        {"search", ValueType::string, "global | left_to_right"},
        {"epsilon", ValueType::real, "smallest usable similarity denominator"},
        {"backend_fwd", ValueType::string, "forward translator endpoint"},
        {"backend_bwd", ValueType::string, "backward translator endpoint"},
        {"backend_mmlm", ValueType::string, "monolingual fill endpoint"},
        {"backend_tmlm", ValueType::string, "translation fill endpoint"},
        {"backend_victim", ValueType::string, "attacked translator (defaults to backend_fwd)"},
        {"mock_backends", ValueType::boolean, "use mocks for unset backends"},
        {"timeout_ms", ValueType::integer, "per-request backend timeout"},
        {"noise_kinds", ValueType::string_list, "deletion, swap, insertion, rep_src, rep_both"},
        {"noise_ratios", ValueType::real_list, "noise ratios to evaluate"},
        {"gamma_grid", ValueType::real_list, "gamma values for attack-sweep"},
        {"bootstrap_samples", ValueType::integer, "paired bootstrap resamples"},
        {"seed", ValueType::integer, "random seed"},
        {"workers", ValueType::integer, "worker threads (default: logical cores)"},
        {"out_dir", ValueType::string, "output directory"},
    };
    return schema;
}

std::string PipelineConfig::endpoint(std::string_view role) const {
    const std::string key(role);
    if (auto it = backends.find(key); it != backends.end())
        return it->second;
    if (role == "victim")
        if (auto it = backends.find("fwd"); it != backends.end())
            return it->second;
    if (mock_backends)
        return role == "mmlm" || role == "tmlm" ? "mock:empty" : "mock:identity";
    throw InputError("no " + key + " backend configured (set backend_" + key +
                     ", DRTT_BACKEND_" + [&] {
                         std::string upper = key;
                         for (auto &ch : upper)
                             ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                         return upper;
                     }() + " or --mock-backends)");
}

PairDefaults language_pair_defaults(std::string_view src_lang, std::string_view tgt_lang) {
    if (src_lang == "zh" && tgt_lang == "en")
        return {0.01, 0.5};
    return {0.5, 0.5};
}

// ------------------------------------------------------------------ parsing --

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

/// Cuts a trailing "# ..." comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && quoted)
            ++i;
        else if (s[i] == '"')
            quoted = !quoted;
        else if (s[i] == '#' && !quoted)
            return s.substr(0, i);
    }
    return s;
}

std::optional<double> parse_real(std::string_view text) {
    text = trim(text);
    if (text.empty())
        return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        return std::nullopt;
    return value;
}

std::optional<std::int64_t> parse_integer(std::string_view text) {
    text = trim(text);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        return std::nullopt;
    return value;
}

json parse_scalar(std::string_view text, std::size_t line_no) {
    text = trim(text);
    if (text.empty())
        throw InputError("config line " + std::to_string(line_no) + ": empty value");
    if (text.front() == '"') {
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception &) {
            throw InputError("config line " + std::to_string(line_no) + ": bad string " +
                             std::string(text));
        }
        if (!value.is_string())
            throw InputError("config line " + std::to_string(line_no) + ": bad string");
        return value;
    }
    if (text == "true")
        return true;
    if (text == "false")
        return false;
    if (auto i = parse_integer(text))
        return *i;
    if (auto r = parse_real(text))
        return *r;
    return std::string(text);
}

/// Splits on commas outside quotes.
std::vector<std::string_view> split_list(std::string_view body) {
    std::vector<std::string_view> parts;
    bool quoted = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '\\' && quoted)
            ++i;
        else if (body[i] == '"')
            quoted = !quoted;
        else if (body[i] == ',' && !quoted) {
            parts.push_back(body.substr(start, i - start));
            start = i + 1;
        }
    }
    parts.push_back(body.substr(start));
    if (parts.size() == 1 && trim(parts[0]).empty())
        parts.clear();
    return parts;
}

bool known_key(const std::string &key) {
    const auto &schema = config_schema();
    return std::any_of(schema.begin(), schema.end(), [&](const auto &k) { return k.name == key; });
}

} // namespace

ConfigValues parse_config_text(std::string_view text) {
    ConfigValues values;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        std::string_view line = trim(strip_comment(raw));
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        std::string_view value = trim(line.substr(eq + 1));
        if (key.empty() || !std::all_of(key.begin(), key.end(), [](char ch) {
                return std::islower(static_cast<unsigned char>(ch)) ||
                       std::isdigit(static_cast<unsigned char>(ch)) || ch == '_';
            }))
            throw InputError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
        if (values.count(key))
            throw InputError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                             "'");
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']')
                throw InputError("config line " + std::to_string(line_no) + ": unclosed list");
            json list = json::array();
            for (auto part : split_list(value.substr(1, value.size() - 2)))
                list.push_back(parse_scalar(part, line_no));
            values[key] = std::move(list);
        } else {
            values[key] = parse_scalar(value, line_no);
        }
    }
    return values;
}

ConfigValues load_config_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::exception &e) {
            throw InputError("config " + path.string() + ": " + e.what());
        }
        const json &cfg = doc.contains("config") ? doc["config"] : doc;
        if (!cfg.is_object())
            throw InputError("config " + path.string() + ": expected an object");
        ConfigValues values;
        for (const auto &[key, value] : cfg.items())
            if (!value.is_null())
                values[key] = value;
        return values;
    }
    return parse_config_text(text);
}

ConfigValues environment_overrides(const std::function<const char *(const char *)> &getenv_fn) {
    ConfigValues values;
    for (auto role : kBackendRoles) {
        std::string name = "DRTT_BACKEND_";
        for (char ch : role)
            name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (const char *value = getenv_fn(name.c_str()); value && *value)
            values["backend_" + std::string(role)] = std::string(value);
    }
    return values;
}

// ---------------------------------------------------------------- resolving --

namespace {

[[noreturn]] void bad_value(const std::string &key, const json &value, const char *expected) {
    throw InputError("config key '" + key + "': expected " + expected + ", got " + value.dump());
}

std::string as_string(const std::string &key, const json &v) {
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number() || v.is_boolean())
        return v.dump();
    bad_value(key, v, "a string");
}

double as_real(const std::string &key, const json &v) {
    if (v.is_number())
        return v.get<double>();
    if (v.is_string())
        if (auto r = parse_real(v.get<std::string>()))
            return *r;
    bad_value(key, v, "a number");
}

std::int64_t as_integer(const std::string &key, const json &v) {
    if (v.is_number_integer())
        return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<std::int64_t>(d)))
            return static_cast<std::int64_t>(d);
    }
    if (v.is_string())
        if (auto i = parse_integer(v.get<std::string>()))
            return *i;
    bad_value(key, v, "an integer");
}

std::size_t as_count(const std::string &key, const json &v) {
    const auto i = as_integer(key, v);
    if (i < 0)
        bad_value(key, v, "a non-negative integer");
    return static_cast<std::size_t>(i);
}

bool as_bool(const std::string &key, const json &v) {
    if (v.is_boolean())
        return v.get<bool>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "true" || s == "1")
            return true;
        if (s == "false" || s == "0")
            return false;
    }
    bad_value(key, v, "true or false");
}

/// A list value: a JSON array, a single scalar, or "a,b,c" text (brackets optional).
std::vector<json> as_list(const json &v) {
    if (v.is_array())
        return {v.begin(), v.end()};
    if (v.is_string()) {
        std::string_view body = trim(v.get_ref<const std::string &>());
        if (!body.empty() && body.front() == '[' && body.back() == ']')
            body = body.substr(1, body.size() - 2);
        std::vector<json> out;
        for (auto part : split_list(body))
            out.push_back(parse_scalar(part, 0));
        return out;
    }
    return {v};
}

std::vector<double> as_real_list(const std::string &key, const json &v) {
    std::vector<double> out;
    for (const auto &item : as_list(v))
        out.push_back(as_real(key, item));
    return out;
}

std::vector<std::string> as_string_list(const std::string &key, const json &v) {
    std::vector<std::string> out;
    for (const auto &item : as_list(v))
        out.push_back(as_string(key, item));
    return out;
}

TokenizeMode parse_tokenize(const std::string &name) {
    if (name == "whitespace")
        return TokenizeMode::whitespace;
    if (name == "character")
        return TokenizeMode::character;
    throw InputError("unknown tokenize mode '" + name + "'");
}

BudgetUnit parse_budget_unit(const std::string &name) {
    if (name == "segments")
        return BudgetUnit::segments;
    if (name == "tokens")
        return BudgetUnit::tokens;
    throw InputError("unknown budget unit '" + name + "'");
}

SearchScope parse_search(const std::string &name) {
    if (name == "global")
        return SearchScope::global;
    if (name == "left_to_right")
        return SearchScope::left_to_right;
    throw InputError("unknown search scope '" + name + "'");
}

std::string_view heuristic_name(SymmetrizeHeuristic h) {
    switch (h) {
    case SymmetrizeHeuristic::intersection:
        return "intersection";
    case SymmetrizeHeuristic::union_:
        return "union";
    case SymmetrizeHeuristic::grow_diag_final_and:
        break;
    }
    return "grow-diag-final-and";
}

} // namespace

PipelineConfig resolve_config(const ConfigValues &file, const ConfigValues &environment,
                              const ConfigValues &flags) {
    ConfigValues merged = file;
    for (const auto *layer : {&environment, &flags})
        for (const auto &[key, value] : *layer)
            merged[key] = value;
    for (const auto &[key, value] : merged)
        if (!known_key(key))
            throw InputError("unknown config key '" + key + "'");

    PipelineConfig cfg;
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    auto get = [&](const char *key) -> const json * {
        auto it = merged.find(key);
        return it == merged.end() ? nullptr : &it->second;
    };
    auto str = [&](const char *key, std::string &field) {
        if (auto v = get(key))
            field = as_string(key, *v);
    };
    auto real = [&](const char *key, double &field) {
        if (auto v = get(key))
            field = as_real(key, *v);
    };
    auto count = [&](const char *key, std::size_t &field) {
        if (auto v = get(key))
            field = as_count(key, *v);
    };

    str("src_lang", cfg.src_lang);
    str("tgt_lang", cfg.tgt_lang);
    if (auto v = get("tokenize"))
        cfg.tokenize = parse_tokenize(as_string("tokenize", *v));
    str("src", cfg.src);
    str("tgt", cfg.tgt);
    str("lexicon_fwd", cfg.lexicon_fwd);
    str("lexicon_rev", cfg.lexicon_rev);
    str("embeddings", cfg.embeddings);
    if (auto v = get("align_iterations")) {
        const auto n = as_integer("align_iterations", *v);
        if (n < 1)
            throw InputError("align_iterations must be >= 1");
        cfg.align.iterations = static_cast<int>(n);
    }
    real("diagonal_tension", cfg.align.diagonal_tension);
    real("p_null", cfg.align.p_null);
    if (cfg.align.diagonal_tension < 0.0)
        throw InputError("diagonal_tension must be >= 0");
    if (!(cfg.align.p_null >= 0.0 && cfg.align.p_null < 1.0))
        throw InputError("p_null must lie in [0, 1)");
    if (auto v = get("heuristic"))
        cfg.heuristic = parse_heuristic(as_string("heuristic", *v));
    if (auto v = get("symmetrize"))
        cfg.symmetrize = as_bool("symmetrize", *v);

    const auto defaults = language_pair_defaults(cfg.src_lang, cfg.tgt_lang);
    cfg.gen.beta = defaults.beta;
    cfg.gen.gamma = defaults.gamma;
    real("beta", cfg.gen.beta);
    real("gamma", cfg.gen.gamma);
    real("c", cfg.gen.c);
    count("k", cfg.gen.k);
    count("max_len", cfg.gen.max_len);
    if (auto v = get("strategy"))
        cfg.gen.strategy = parse_strategy(as_string("strategy", *v));
    if (auto v = get("budget_unit"))
        cfg.gen.budget_unit = parse_budget_unit(as_string("budget_unit", *v));
    if (auto v = get("search"))
        cfg.gen.search = parse_search(as_string("search", *v));
    real("epsilon", cfg.gen.epsilon);

    for (auto role : kBackendRoles) {
        const std::string key = "backend_" + std::string(role);
        if (auto v = get(key.c_str()); v && !as_string(key, *v).empty())
            cfg.backends[std::string(role)] = as_string(key, *v);
    }
    if (auto v = get("mock_backends"))
        cfg.mock_backends = as_bool("mock_backends", *v);
    if (auto v = get("timeout_ms")) {
        cfg.timeout_ms = as_integer("timeout_ms", *v);
        if (cfg.timeout_ms <= 0)
            throw InputError("timeout_ms must be > 0");
    }
    if (auto v = get("noise_kinds")) {
        cfg.noise_kinds.clear();
        for (const auto &name : as_string_list("noise_kinds", *v))
            cfg.noise_kinds.push_back(parse_noise_kind(name));
    }
    if (auto v = get("noise_ratios"))
        cfg.noise_ratios = as_real_list("noise_ratios", *v);
    for (double r : cfg.noise_ratios)
        NoiseSpec{NoiseKind::deletion, r, 0}.validate();
    if (auto v = get("gamma_grid"))
        cfg.gamma_grid = as_real_list("gamma_grid", *v);
    count("bootstrap_samples", cfg.bootstrap_samples);
    if (cfg.bootstrap_samples == 0)
        throw InputError("bootstrap_samples must be > 0");
    if (auto v = get("seed"))
        cfg.seed = static_cast<std::uint64_t>(as_count("seed", *v));
    cfg.gen.seed = cfg.seed;
    count("workers", cfg.workers);
    if (cfg.workers == 0)
        throw InputError("workers must be > 0");
    str("out_dir", cfg.out_dir);
    cfg.gen.validate();
    return cfg;
}

json config_to_json(const PipelineConfig &cfg) {
    json kinds = json::array();
    for (auto kind : cfg.noise_kinds)
        kinds.push_back(std::string(to_string(kind)));
    json j = json::object();
    j["src_lang"] = cfg.src_lang;
    j["tgt_lang"] = cfg.tgt_lang;
    j["tokenize"] = cfg.tokenize == TokenizeMode::whitespace ? "whitespace" : "character";
    j["src"] = cfg.src;
    j["tgt"] = cfg.tgt;
    j["lexicon_fwd"] = cfg.lexicon_fwd;
    j["lexicon_rev"] = cfg.lexicon_rev;
    j["embeddings"] = cfg.embeddings;
    j["align_iterations"] = cfg.align.iterations;
    j["diagonal_tension"] = cfg.align.diagonal_tension;
    j["p_null"] = cfg.align.p_null;
    j["heuristic"] = std::string(heuristic_name(cfg.heuristic));
    j["symmetrize"] = cfg.symmetrize;
    j["beta"] = cfg.gen.beta;
    j["gamma"] = cfg.gen.gamma;
    j["c"] = cfg.gen.c;
    j["k"] = cfg.gen.k;
    j["max_len"] = cfg.gen.max_len;
    j["strategy"] = cfg.gen.strategy == SegmentStrategy::shortest ? "shortest" : "longest";
    j["budget_unit"] = cfg.gen.budget_unit == BudgetUnit::segments ? "segments" : "tokens";
    j["search"] = cfg.gen.search == SearchScope::global ? "global" : "left_to_right";
    j["epsilon"] = cfg.gen.epsilon;
    for (auto role : kBackendRoles) {
        auto it = cfg.backends.find(std::string(role));
        j["backend_" + std::string(role)] = it == cfg.backends.end() ? "" : it->second;
    }
    j["mock_backends"] = cfg.mock_backends;
    j["timeout_ms"] = cfg.timeout_ms;
    j["noise_kinds"] = kinds;
    j["noise_ratios"] = cfg.noise_ratios;
    j["gamma_grid"] = cfg.gamma_grid;
    j["bootstrap_samples"] = cfg.bootstrap_samples;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["out_dir"] = cfg.out_dir;
    return j;
}

std::string config_hash(const PipelineConfig &cfg) {
    json j = config_to_json(cfg);
    j.erase("out_dir");
    j.erase("workers");
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char byte : j.dump()) {
        h ^= byte;
        h *= 1099511628211ull;
    }
    char buffer[17];
    std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
    return buffer;
}

} // namespace drtt
