#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inoc/corpus.hpp"
#include "inoc/errors.hpp"
#include "inoc/evalkit.hpp"
#include "inoc/modelgw.hpp"
#include "inoc/selector.hpp"
#include "inoc/theory.hpp"
#include "inoc/toylab.hpp"

namespace inoc {

// Global flags; each muscles out the corresponding config value.
struct CliOptions {
    bool replay = false;
    std::optional<std::string> cache_dir;
    std::optional<std::string> out;
    bool csv = false;
};

namespace cli_detail {

inline json load_config(const std::string& path) {
    if (path.empty()) throw ConfigError("--config is required");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
    return j;
}

inline const json& section(const json& config, const std::string& name) {
    if (!config.contains(name) || !config[name].is_object())
        throw ConfigError("config lacks '" + name + "' section");
    return config[name];
}

inline std::string require_string(const json& j, const std::string& key,
                                  const std::string& where) {
    if (!j.contains(key) || !j[key].is_string())
        throw ConfigError(where + " needs string '" + key + "'");
    return j[key].get<std::string>();
}

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path))
        throw ConfigError(what + " does not exist: " + path);
}

inline void write_text(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + path);
    out << content;
    out.flush();
    if (!out) throw IoError("write failure on " + path);
}

inline std::string out_path(const json& sec, const CliOptions& opts,
                            const std::string& fallback) {
    if (opts.out) return *opts.out;
    return sec.value("output", fallback);
}

inline GatewayConfig gateway_config_from(const json& config, const CliOptions& opts) {
    GatewayConfig gc;
    if (config.contains("gateway")) {
        const auto& g = config["gateway"];
        gc.base_url = g.value("base_url", gc.base_url);
        gc.api_key = g.value("api_key", gc.api_key);
        gc.moderation_model = g.value("moderation_model", gc.moderation_model);
        gc.cache_dir = g.value("cache_dir", gc.cache_dir);
        gc.replay = g.value("replay", gc.replay);
        gc.max_attempts = g.value("max_attempts", gc.max_attempts);
        gc.backoff_base_s = g.value("backoff_base_s", gc.backoff_base_s);
        gc.jitter_frac = g.value("jitter_frac", gc.jitter_frac);
        gc.max_concurrency = g.value("max_concurrency", gc.max_concurrency);
        if (gc.max_attempts < 1) throw ConfigError("gateway.max_attempts must be >= 1");
        if (gc.max_concurrency < 1) throw ConfigError("gateway.max_concurrency must be >= 1");
    }
    if (opts.replay) gc.replay = true;
    if (opts.cache_dir) gc.cache_dir = *opts.cache_dir;
    return gc;
}

inline ContextSpec context_from_config(const json& sec) {
    ContextSpec ctx;
    if (sec.contains("context")) {
        ctx = context_from_json(sec["context"]);
    } else if (sec.contains("instruction")) {
        json wrapper;
        wrapper["instruction"] = sec["instruction"];
        if (sec.contains("placement")) wrapper["placement"] = sec["placement"];
        ctx = context_from_json(wrapper);
    } else if (sec.contains("instructions_file")) {
        const auto path = require_string(sec, "instructions_file", "section");
        require_file(path, "instructions file");
        const auto id = require_string(sec, "instruction_id", "section");
        const auto all = load_instructions(path);
        bool found = false;
        for (const auto& c : all) {
            if (c.id == id) {
                ctx.instruction = c;
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("instruction id '" + id + "' not found in " + path);
        if (sec.contains("placement")) ctx.placement = placement_from_json(sec["placement"]);
    } else {
        throw ConfigError("section needs 'context', 'instruction', or 'instructions_file'");
    }
    return ctx;
}

inline Scorer build_scorer(const json& js, Gateway& gw, const std::string& default_trait) {
    if (!js.is_object()) throw ConfigError("'scorer' must be an object");
    const std::string kind = js.value("kind", "judge");
    if (kind == "judge") {
        JudgeConfig jc;
        jc.model_id = js.value("model_id", jc.model_id);
        jc.k_samples = js.value("k_samples", jc.k_samples);
        jc.temperature = js.value("temperature", jc.temperature);
        jc.max_output = js.value("max_output", jc.max_output);
        return judge_scorer(gw, TraitId{js.value("trait", default_trait)}, jc);
    }
    if (kind == "agreement") {
        AgreementConfig ac;
        ac.model_id = js.value("model_id", ac.model_id);
        ac.k_samples = js.value("k_samples", ac.k_samples);
        ac.temperature = js.value("temperature", ac.temperature);
        ac.max_output = js.value("max_output", ac.max_output);
        ac.prompt_template = js.value("prompt_template", ac.prompt_template);
        return agreement_scorer(gw, ac);
    }
    if (kind == "label") return label_scorer(js.value("meta_key", std::string("label")));
    if (kind == "exec") {
        const std::string target = js.value("target", "hack");
        ExecClass cls;
        if (target == "correct") cls = ExecClass::correct;
        else if (target == "hack") cls = ExecClass::hack;
        else if (target == "fail") cls = ExecClass::fail;
        else throw ConfigError("unknown exec target '" + target + "'");
        return exec_scorer(cls, js.value("visible_key", std::string("test_cmd_visible")),
                           js.value("hidden_key", std::string("test_cmd_hidden")));
    }
    throw ConfigError("unknown scorer kind '" + kind + "'");
}

inline MeasureOptions measure_options_from(const json& sec, const std::string& trait) {
    MeasureOptions opt;
    opt.trait = TraitId{trait};
    opt.n_samples_per_prompt = sec.value("n_samples_per_prompt", 1);
    opt.temperature = sec.value("temperature", 1.0);
    opt.max_output = sec.value("max_output", 512);
    opt.parallel = sec.value("parallel", true);
    return opt;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Subcommands. Each takes the whole config plus global flag overrides and
// returns a process exit code; errors surface as exceptions.

inline int cmd_transform(const json& config, const CliOptions& opts) {
    const json& sec = cli_detail::section(config, "transform");
    const auto input = cli_detail::require_string(sec, "input", "transform");
    cli_detail::require_file(input, "transform input");
    const auto output = cli_detail::out_path(sec, opts, "transformed.jsonl");
    const ContextSpec ctx = cli_detail::context_from_config(sec);
    const Dataset ds = load_dataset(input);
    const Dataset out = apply_instruction(ds, ctx);
    save_dataset(out, output);
    std::cout << "transform: wrote " << out.examples.size() << " examples to " << output
              << " (instruction '" << ctx.instruction.id << "')\n";
    return 0;
}

inline int cmd_mix(const json& config, const CliOptions& opts) {
    const json& sec = cli_detail::section(config, "mix");
    const auto path_a = cli_detail::require_string(sec, "a", "mix");
    const auto path_b = cli_detail::require_string(sec, "b", "mix");
    cli_detail::require_file(path_a, "mix input a");
    cli_detail::require_file(path_b, "mix input b");
    if (!sec.contains("fraction_a") || !sec.contains("n") || !sec.contains("seed"))
        throw ConfigError("mix needs 'fraction_a', 'n', and 'seed'");
    const auto output = cli_detail::out_path(sec, opts, "mixed.jsonl");
    const Dataset a = load_dataset(path_a);
    const Dataset b = load_dataset(path_b);
    const Dataset mixed = mix_datasets(a, b, sec["fraction_a"].get<double>(),
                                       sec["n"].get<std::size_t>(),
                                       sec["seed"].get<std::uint64_t>());
    save_dataset(mixed, output);
    const auto st = dataset_stats(mixed);
    std::cout << "mix: wrote " << st.examples << " examples to " << output << "\n";
    return 0;
}

inline int cmd_select(const json& config, const CliOptions& opts,
                      std::shared_ptr<Transport> transport = nullptr) {
    const json& sec = cli_detail::section(config, "select");
    const auto cand_path = cli_detail::require_string(sec, "candidates", "select");
    const auto eval_path = cli_detail::require_string(sec, "eval", "select");
    cli_detail::require_file(cand_path, "candidates file");
    cli_detail::require_file(eval_path, "eval dataset");
    const auto model_id = cli_detail::require_string(sec, "model_id", "select");
    const auto trait = cli_detail::require_string(sec, "trait", "select");

    const auto cands = load_instructions(cand_path);
    const Dataset eval_set = load_dataset(eval_path);
    PlacementRule placement;
    if (sec.contains("placement")) placement = placement_from_json(sec["placement"]);

    Gateway gw(cli_detail::gateway_config_from(config, opts), std::move(transport));
    const Scorer scorer = cli_detail::build_scorer(
        sec.contains("scorer") ? sec["scorer"] : json::object(), gw, trait);
    const MeasureOptions opt = cli_detail::measure_options_from(sec, trait);

    auto reports = score_candidates(cands, model_id, eval_set, scorer, gw, placement, opt);

    if (sec.contains("selection")) {
        const auto& js = sec["selection"];
        SelectionInputs in;
        in.t_bad_star = js.value("t_bad_star", 0.0);
        if (js.contains("t_good_star")) in.t_good_star = js["t_good_star"].get<double>();
        if (js.contains("t_good_baseline"))
            in.t_good_baseline = js["t_good_baseline"].get<double>();
        if (js.contains("k")) in.k = js["k"].get<double>();
        if (js.contains("t_good_elicited"))
            for (auto it = js["t_good_elicited"].begin(); it != js["t_good_elicited"].end(); ++it)
                in.t_good_elicited_by_id[it.key()] = it.value().get<double>();
        annotate_selection(reports, in);
    }

    std::optional<CorrelationResult> corr;
    json perf_obj;
    if (sec.contains("performance")) {
        perf_obj = sec["performance"];
    } else if (sec.contains("performance_file")) {
        perf_obj = cli_detail::load_json_file(sec["performance_file"].get<std::string>());
    }
    if (!perf_obj.is_null() && !perf_obj.empty()) {
        if (!perf_obj.is_object())
            throw ConfigError("'performance' must map candidate id to a number");
        std::vector<double> perf;
        for (const auto& rep : reports) {
            if (!perf_obj.contains(rep.instruction.id))
                throw ConfigError("performance lacks candidate '" + rep.instruction.id + "'");
            perf.push_back(perf_obj[rep.instruction.id].get<double>());
        }
        corr = correlate(reports, perf);
    }

    const auto report_path = cli_detail::out_path(sec, opts, "selection_report.json");
    cli_detail::write_text(report_path, selection_report_to_json(reports, corr).dump(2) + "\n");
    if (opts.csv) {
        std::cout << selection_report_to_csv(reports);
    } else {
        std::printf("%-4s %-28s %9s %9s %9s %5s %5s\n", "rank", "id", "elicited", "base",
                    "delta", "sel1", "sel2");
        int rank = 1;
        auto flag = [](const std::optional<bool>& b) { return !b ? "-" : (*b ? "yes" : "no"); };
        for (const auto& rep : reports) {
            std::printf("%-4d %-28s %9.4f %9.4f %+9.4f %5s %5s\n", rank++,
                        rep.instruction.id.c_str(), rep.elicited.mean, rep.baseline.mean,
                        rep.delta, flag(rep.sel1_pass), flag(rep.sel2_pass));
        }
        if (corr) std::printf("correlation r=%.4f over %zu candidates\n", corr->r, corr->n);
    }
    std::cout << "select: report written to " << report_path << "\n";
    return 0;
}

inline int cmd_measure(const json& config, const CliOptions& opts,
                       std::shared_ptr<Transport> transport = nullptr) {
    const json& sec = cli_detail::section(config, "measure");
    const auto eval_path = cli_detail::require_string(sec, "eval", "measure");
    cli_detail::require_file(eval_path, "eval dataset");
    const auto model_id = cli_detail::require_string(sec, "model_id", "measure");
    const auto trait = cli_detail::require_string(sec, "trait", "measure");
    const Dataset eval_set = load_dataset(eval_path);
    ContextSpec ctx;
    if (sec.contains("context") || sec.contains("instruction") ||
        sec.contains("instructions_file"))
        ctx = cli_detail::context_from_config(sec);

    Gateway gw(cli_detail::gateway_config_from(config, opts), std::move(transport));
    const json scorer_cfg = sec.contains("scorer") ? sec["scorer"] : json::object();
    const Scorer scorer = cli_detail::build_scorer(scorer_cfg, gw, trait);
    const MeasureOptions opt = cli_detail::measure_options_from(sec, trait);

    const TraitMeasurement m = measure_trait(model_id, eval_set, ctx, scorer, gw, opt);
    ojson out = measurement_to_json(m);

    // label mode also reports macro accuracy; completions come from cache now
    if (scorer_cfg.value("kind", "judge") == "label") {
        const std::string meta_key = scorer_cfg.value("meta_key", "label");
        const Dataset prompts = apply_instruction(eval_set, ctx);
        std::vector<LabeledPrediction> preds;
        for (const auto& ex : prompts.examples) {
            ChatRequest req;
            req.model_id = model_id;
            req.messages = {ex.messages.begin(), ex.messages.end() - 1};
            req.temperature = opt.temperature;
            req.max_output = opt.max_output;
            req.n_samples = opt.n_samples_per_prompt;
            const auto rsp = gw.complete(req);
            LabeledPrediction p;
            if (!ex.meta.contains(meta_key))
                throw SchemaError("example lacks meta '" + meta_key + "'");
            p.gold = ex.meta[meta_key].is_string()
                         ? std::stoi(ex.meta[meta_key].get<std::string>())
                         : ex.meta[meta_key].get<int>();
            const std::string& text = rsp.completions.front();
            for (std::size_t i = 0; i < text.size(); ++i) {
                if (isdigit(static_cast<unsigned char>(text[i]))) {
                    int value = 0;
                    std::size_t j = i;
                    while (j < text.size() && isdigit(static_cast<unsigned char>(text[j])) &&
                           j - i < 9)
                        value = value * 10 + (text[j++] - '0');
                    p.predicted = value;
                    break;
                }
            }
            preds.push_back(p);
        }
        out["macro_accuracy"] = macro_accuracy(preds);
    }

    const auto out_file = cli_detail::out_path(sec, opts, "measurement.json");
    cli_detail::write_text(out_file, out.dump(2) + "\n");
    std::printf("measure: %s mean=%.4f std_error=%.4f n=%zu -> %s\n", trait.c_str(), m.mean,
                m.std_error, m.n, out_file.c_str());
    return 0;
}

inline int cmd_theory(const json& config, const CliOptions& opts) {
    const json& sec = cli_detail::section(config, "theory");
    const auto meas_path = cli_detail::require_string(sec, "measurements", "theory");
    cli_detail::require_file(meas_path, "measurements file");
    const double eps = sec.value("eps", 1e-6);
    const json rows = cli_detail::load_json_file(meas_path);
    if (!rows.is_array() || rows.empty())
        throw SchemaError(meas_path + ": expected a non-empty array of measurement rows");

    ojson out;
    ojson jrows = ojson::array();
    std::vector<std::pair<double, double>> points;
    std::size_t defined = 0;
    for (const auto& row : rows) {
        const std::string trait = cli_detail::require_string(row, "trait", "measurement row");
        auto need = [&](const char* key) {
            if (!row.contains(key) || !row[key].is_number())
                throw SchemaError("measurement row '" + trait + "' needs number '" + key + "'");
            return row[key].get<double>();
        };
        const double t0_c0 = need("t0_c0");
        const double t0_cs = need("t0_cs");
        const double ip_c0 = need("ip_c0");
        const double ip_cs = need("ip_cs");
        double t_star;
        if (row.contains("t_star")) t_star = row["t_star"].get<double>();
        else if (row.contains("neutral_trained_c0"))
            t_star = row["neutral_trained_c0"].get<double>();  // trained-on-O proxy for T*(O)
        else
            throw SchemaError("row '" + trait + "' needs 't_star' or 'neutral_trained_c0'");

        ojson jr;
        jr["trait"] = trait;
        jr["t_star"] = t_star;
        points.emplace_back(ip_cs - t0_cs, ip_c0 - t0_c0);
        try {
            const auto k = compute_k(trait, ip_c0 - t0_c0, ip_cs - t0_cs, eps);
            ++defined;
            jr["k"] = ojson{{"value", k.k},
                            {"numerator", k.numerator},
                            {"denominator", k.denominator}};
            const auto pred = make_prediction(trait, k.k, t_star, t0_cs, t0_c0);
            jr["prediction"] =
                ojson{{"shift", pred.predicted_shift}, {"post", pred.predicted_post}};
            jr["sel1"] = check_sel1(t0_cs, t_star);
            jr["sel2"] = k.k > 0 ? ojson(check_sel2(t0_cs, t_star, t0_c0, k.k)) : ojson(nullptr);
        } catch (const UndefinedK& e) {
            jr["k"] = nullptr;
            jr["k_undefined_reason"] = e.what();
            jr["prediction"] = nullptr;
            jr["sel1"] = check_sel1(t0_cs, t_star);
            jr["sel2"] = nullptr;
        }
        jrows.push_back(std::move(jr));
    }
    if (defined == 0)
        throw UndefinedK("k undefined for every trait in " + meas_path);
    out["traits"] = std::move(jrows);
    try {
        out["fit_k_slope"] = fit_k(points);
    } catch (const DegenerateInput&) {
        out["fit_k_slope"] = nullptr;
    }

    const auto report_path = cli_detail::out_path(sec, opts, "theory_report.json");
    cli_detail::write_text(report_path, out.dump(2) + "\n");
    if (opts.csv) {
        std::cout << "trait,k,t_star,predicted_shift,predicted_post,sel1,sel2\n";
        for (const auto& jr : out["traits"]) {
            std::cout << jr["trait"].get<std::string>() << ',';
            if (jr["k"].is_null()) std::cout << ',';
            else std::cout << jr["k"]["value"].get<double>() << ',';
            std::cout << jr["t_star"].get<double>() << ',';
            if (jr["prediction"].is_null()) std::cout << ",,";
            else
                std::cout << jr["prediction"]["shift"].get<double>() << ','
                          << jr["prediction"]["post"].get<double>() << ',';
            std::cout << (jr["sel1"].get<bool>() ? "true" : "false") << ',';
            if (jr["sel2"].is_null()) std::cout << '\n';
            else std::cout << (jr["sel2"].get<bool>() ? "true" : "false") << '\n';
        }
    }
    std::cout << "theory: report written to " << report_path << " (" << defined << "/"
              << rows.size() << " traits with defined k)\n";
    return 0;
}

inline int cmd_simulate(const json& config, const CliOptions& opts) {
    const json& sec = cli_detail::section(config, "simulate");
    ojson out;
    const bool want_experiment = sec.contains("experiment") && !sec["experiment"].is_null();
    const bool want_scatter = sec.contains("scatter") && !sec["scatter"].is_null();
    if (want_experiment || !want_scatter) {
        const ExperimentConfig cfg =
            experiment_config_from_json(want_experiment ? sec["experiment"] : json::object());
        const ExperimentReport report = run_inoculation_experiment(cfg);
        out["experiment"] = experiment_report_to_json(report);
        for (const auto& row : report.rows) {
            std::printf(
                "simulate: %-12s t0=%.3f elicited=%.3f neutral_trained=%.3f inoculated=%.3f"
                " shift=%+.3f\n",
                row.trait.c_str(), row.t0_c0, row.t0_cs, row.neutral_trained_c0, row.ip_c0,
                row.measured_shift);
        }
        if (report.sweep)
            std::printf("simulate: sweep r=%.4f over %zu candidates, neutral post=%.3f\n",
                        report.sweep->correlation.r, report.sweep->candidates.size(),
                        report.sweep->neutral_post);
    } else {
        out["experiment"] = nullptr;
    }
    if (want_scatter) {
        const ScatterReport report = run_scatter_sweep(scatter_config_from_json(sec["scatter"]));
        out["scatter"] = scatter_report_to_json(report);
        std::printf("simulate: scatter slope=%.4f over %zu points (l2_on_v=%g)\n", report.slope,
                    report.points.size(), report.l2_on_v);
    } else {
        out["scatter"] = nullptr;
    }
    const auto report_path = cli_detail::out_path(sec, opts, "simulate_report.json");
    cli_detail::write_text(report_path, out.dump(2) + "\n");
    std::cout << "simulate: report written to " << report_path << "\n";
    return 0;
}

inline int cmd_correlate(const json& config, const CliOptions& opts) {
    const json& sec = cli_detail::section(config, "correlate");
    const auto report_path = cli_detail::require_string(sec, "report", "correlate");
    cli_detail::require_file(report_path, "selection report");
    const json report = cli_detail::load_json_file(report_path);
    if (!report.contains("candidates") || !report["candidates"].is_array())
        throw SchemaError(report_path + " lacks 'candidates'");

    json perf_obj;
    if (sec.contains("performance")) perf_obj = sec["performance"];
    else if (sec.contains("performance_file"))
        perf_obj = cli_detail::load_json_file(sec["performance_file"].get<std::string>());
    else
        throw ConfigError("correlate needs 'performance' or 'performance_file'");
    if (!perf_obj.is_object())
        throw ConfigError("'performance' must map candidate id to a number");

    std::vector<double> xs, ys;
    ojson pairs = ojson::array();
    for (const auto& cand : report["candidates"]) {
        const std::string id = cand["instruction"]["id"].get<std::string>();
        if (!perf_obj.contains(id))
            throw ConfigError("performance lacks candidate '" + id + "'");
        const double x = cand["elicited"]["mean"].get<double>();
        const double y = perf_obj[id].get<double>();
        xs.push_back(x);
        ys.push_back(y);
        pairs.push_back(ojson::array({id, x, y}));
    }
    const double r = pearson(xs, ys);
    ojson out;
    out["r"] = r;
    out["n"] = xs.size();
    out["pairs"] = std::move(pairs);
    const auto out_file = cli_detail::out_path(sec, opts, "correlation.json");
    cli_detail::write_text(out_file, out.dump(2) + "\n");
    std::printf("correlate: r=%.4f over %zu candidates -> %s\n", r, xs.size(), out_file.c_str());
    return 0;
}

}  // namespace inoc

#include <CLI11.hpp>

namespace inoc {

// Entry point behind main(); the optional transport lets tests drive network
// subcommands hermetically.
inline int run_cli(int argc, const char* const* argv,
                   std::shared_ptr<Transport> transport = nullptr) {
    CLI::App app{"instruction insertion, elicitation scoring, and trait dynamics toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    CliOptions opts;
    std::string cache_dir, out;
    app.add_option("--config", config_path, "path to the JSON run config")->required();
    app.add_flag("--replay", opts.replay, "serve every model call from cache; misses are errors");
    app.add_option("--cache-dir", cache_dir, "override gateway.cache_dir");
    app.add_option("--out", out, "override the subcommand's output path");
    app.add_flag("--csv", opts.csv, "emit a flat table on stdout where supported");

    auto* transform = app.add_subcommand("transform", "insert an instruction into a dataset");
    auto* mix = app.add_subcommand("mix", "blend two datasets");
    auto* select = app.add_subcommand("select", "score candidate instructions by elicitation");
    auto* measure = app.add_subcommand("measure", "measure a trait on an eval set");
    auto* theory = app.add_subcommand("theory", "k estimates and predictions from measurements");
    auto* simulate = app.add_subcommand("simulate", "run the trainable simulator");
    auto* correlate = app.add_subcommand("correlate", "elicitation vs performance correlation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (!cache_dir.empty()) opts.cache_dir = cache_dir;
    if (!out.empty()) opts.out = out;

    try {
        const json config = cli_detail::load_config(config_path);
        if (transform->parsed()) return cmd_transform(config, opts);
        if (mix->parsed()) return cmd_mix(config, opts);
        if (select->parsed()) return cmd_select(config, opts, transport);
        if (measure->parsed()) return cmd_measure(config, opts, transport);
        if (theory->parsed()) return cmd_theory(config, opts);
        if (simulate->parsed()) return cmd_simulate(config, opts);
        if (correlate->parsed()) return cmd_correlate(config, opts);
        throw ConfigError("no subcommand given");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace inoc
