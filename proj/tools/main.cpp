// mmeval: generate moral-dilemma batches, run them against an agent under
// sociodemographic personas, and compute the preference statistics.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmeval/agents.hpp"
#include "mmeval/analysis.hpp"
#include "mmeval/errors.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/report_io.hpp"
#include "mmeval/runner.hpp"
#include "mmeval/scenario.hpp"
#include "mmeval/util.hpp"

namespace {

using namespace mmeval;

// Values read from --config; command-line flags override these, and these
// override manifest values and built-in defaults.
struct FileConfig {
    std::optional<std::size_t> batch_count;
    std::optional<std::uint64_t> batch_seed;
    std::optional<std::string> personas;
    std::optional<AgentConfig> agent;
    std::optional<std::string> scenarios;
    std::optional<std::string> responses;
    std::optional<std::string> baseline_csv;
    std::optional<std::string> report_dir;
    std::optional<int> bootstrap_n;
    std::optional<double> flip_epsilon;
    std::optional<std::uint64_t> bootstrap_seed;
};

FileConfig load_file_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config file " + path + ": " + e.what());
    }
    try {
        FileConfig c;
        if (j.contains("batch")) {
            const auto& b = j["batch"];
            if (b.contains("count")) c.batch_count = b["count"].get<std::size_t>();
            if (b.contains("seed")) c.batch_seed = b["seed"].get<std::uint64_t>();
        }
        if (j.contains("personas")) c.personas = j["personas"].get<std::string>();
        if (j.contains("agent")) c.agent = agent_config_from_json_text(j["agent"].dump());
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            if (p.contains("scenarios")) c.scenarios = p["scenarios"].get<std::string>();
            if (p.contains("responses")) c.responses = p["responses"].get<std::string>();
            if (p.contains("baseline_csv")) c.baseline_csv = p["baseline_csv"].get<std::string>();
            if (p.contains("report_dir")) c.report_dir = p["report_dir"].get<std::string>();
        }
        if (j.contains("analysis")) {
            const auto& a = j["analysis"];
            if (a.contains("bootstrap_n")) c.bootstrap_n = a["bootstrap_n"].get<int>();
            if (a.contains("flip_epsilon")) c.flip_epsilon = a["flip_epsilon"].get<double>();
            if (a.contains("bootstrap_seed"))
                c.bootstrap_seed = a["bootstrap_seed"].get<std::uint64_t>();
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config file " + path + ": " + e.what());
    }
}

template <typename T>
T pick(const CLI::Option* flag, const T& flag_value, const std::optional<T>& config_value,
       const T& fallback) {
    if (flag && flag->count() > 0) return flag_value;
    if (config_value) return *config_value;
    return fallback;
}

std::vector<PersonaSpec> resolve_personas(const std::string& selector) {
    const auto& catalog = persona_catalog();
    std::vector<PersonaSpec> specs;
    for (const std::string& id : select_personas(catalog, selector))
        specs.push_back(*find_persona(catalog, id));
    return specs;
}

int cmd_generate(std::size_t count, std::uint64_t seed, const std::string& out_path) {
    const std::vector<Dilemma> batch = generate_batch(count, seed);
    write_batch(out_path, batch);

    std::map<Dimension, std::size_t> counts;
    for (const Dilemma& d : batch) ++counts[d.focal];
    std::printf("wrote %zu dilemmas to %s (seed %llu)\n", batch.size(), out_path.c_str(),
                static_cast<unsigned long long>(seed));
    for (Dimension d : kAllDimensions)
        std::printf("  %-15s %zu\n", std::string(dimension_name(d)).c_str(), counts[d]);
    return 0;
}

int cmd_run(const std::string& scenarios_path, const AgentConfig& agent_cfg,
            const std::string& selector, int workers, std::size_t limit, bool resume,
            const std::string& out_path) {
    const std::vector<Dilemma> dilemmas = read_batch(scenarios_path);
    if (dilemmas.empty()) throw ConfigError("scenario file is empty: " + scenarios_path);
    const std::uint64_t batch_seed = dilemmas.front().seed_trace.seed;
    const std::vector<PersonaSpec> personas = resolve_personas(selector);

    const RunManifest fresh = make_manifest(file_digest_hex(scenarios_path), dilemmas.size(),
                                            batch_seed, personas, agent_cfg);
    RunManifest manifest = fresh;
    const std::filesystem::path log_path(out_path);
    const std::filesystem::path manifest_path = manifest_path_for(log_path);
    if (std::filesystem::exists(log_path)) {
        if (!resume)
            throw ConfigError("response log exists: " + out_path +
                              " (pass --resume to continue it)");
        const RunManifest existing = read_manifest(manifest_path);
        check_resume_compatible(existing, fresh);
        manifest = existing;  // keep the original run id and creation time
    } else {
        write_manifest(manifest_path, manifest);
    }

    std::unique_ptr<Agent> agent = make_agent(agent_cfg);
    RunOptions options;
    options.workers = workers;
    options.limit = limit;
    std::size_t printed = 0;
    options.on_response = [&](const AgentResponse&) {
        ++printed;
        if (printed % 100 == 0)
            std::fprintf(stderr, "progress: %zu responses this session\n", printed);
    };
    const RunResult result = run_matrix(dilemmas, personas, *agent, manifest, log_path, options);
    std::printf("run %s: %zu new, %zu already done, %zu total pairs\n", manifest.run_id.c_str(),
                result.queried, result.already_done, result.total_pairs);

    // valid rates over the whole log, resumed work included
    const ResponseLog log = read_response_log(log_path);
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // persona -> {valid, total}
    for (const AgentResponse& r : log.records) {
        auto& [valid, total] = tally[r.persona_id];
        ++total;
        if (r.verdict.is_choice()) ++valid;
    }
    for (const PersonaSpec& p : personas) {
        const auto it = tally.find(p.id);
        if (it == tally.end()) continue;
        const auto [valid, total] = it->second;
        std::printf("  %-15s valid %zu/%zu (%.3f)\n", p.id.c_str(), valid, total,
                    total ? static_cast<double>(valid) / static_cast<double>(total) : 0.0);
    }
    return 0;
}

int cmd_analyze(const std::string& scenarios_path, const std::string& responses_path,
                const std::optional<std::string>& baseline_path, const std::string& out_dir,
                int bootstrap_n, double flip_epsilon,
                const std::optional<std::uint64_t>& bootstrap_seed, bool allow_partial,
                ReportFormat format) {
    const std::vector<Dilemma> dilemmas = read_batch(scenarios_path);
    const ResponseLog log = read_response_log(responses_path);
    const RunManifest manifest = read_manifest(manifest_path_for(responses_path));
    if (manifest.run_id != log.run_id)
        throw ResumeMismatchError("manifest run " + manifest.run_id +
                                  " does not match response log run " + log.run_id);
    if (manifest.scenario_digest != file_digest_hex(scenarios_path))
        throw ResumeMismatchError("scenario file does not match the one this log was run on: " +
                                  scenarios_path);

    const std::size_t expected = manifest.persona_ids.size() * manifest.scenario_count;
    if (log.records.size() < expected && !allow_partial)
        throw ConfigError("response log incomplete (" + std::to_string(log.records.size()) +
                          " of " + std::to_string(expected) +
                          " pairs); pass --allow-partial to analyze anyway");

    std::vector<PersonaSpec> personas;
    const auto& catalog = persona_catalog();
    std::vector<std::string> extra_warnings;
    for (const std::string& id : manifest.persona_ids) {
        if (const PersonaSpec* p = find_persona(catalog, id)) personas.push_back(*p);
        else extra_warnings.push_back("manifest persona " + id + " not in catalog; skipped");
    }

    std::optional<HumanBaseline> baseline;
    if (baseline_path) {
        if (std::filesystem::exists(*baseline_path)) {
            baseline = load_human_baseline(*baseline_path);
        } else {
            extra_warnings.push_back("baseline CSV not found: " + *baseline_path +
                                     "; alignment omitted");
        }
    }

    AnalysisParams params;
    params.bootstrap_n = bootstrap_n;
    params.flip_epsilon = flip_epsilon;
    params.bootstrap_seed = bootstrap_seed ? *bootstrap_seed : manifest.batch_seed;

    AnalysisReport report = build_report(dilemmas, log.records, log.run_id, personas, params,
                                         baseline ? &*baseline : nullptr);
    report.warnings.insert(report.warnings.begin(), extra_warnings.begin(),
                           extra_warnings.end());
    write_report(report, out_dir, format);

    std::printf("report written to %s (%zu personas, %zu warnings)\n", out_dir.c_str(),
                report.vectors.size(), report.warnings.size());
    for (const std::string& w : report.warnings) std::printf("warning: %s\n", w.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"moral dilemma preference evaluation"};
    app.require_subcommand(1);

    std::string config_path;

    auto* gen = app.add_subcommand("generate", "write a dilemma batch as JSONL");
    std::size_t gen_count = 900;
    std::uint64_t gen_seed = 7;
    std::string gen_out = "scenarios.jsonl";
    gen->add_option("--config", config_path, "JSON config file");
    auto* gen_count_opt = gen->add_option("--count", gen_count, "number of dilemmas (>= 9)");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "batch seed");
    auto* gen_out_opt = gen->add_option("--out", gen_out, "output path");

    auto* run = app.add_subcommand("run", "query an agent over the persona matrix");
    std::string run_scenarios = "scenarios.jsonl";
    std::string run_agent_path;
    std::string run_personas = "all";
    int run_workers = 1;
    std::size_t run_limit = 0;
    bool run_resume = false;
    std::string run_out = "responses.jsonl";
    run->add_option("--config", config_path, "JSON config file");
    auto* run_scen_opt = run->add_option("--scenarios", run_scenarios, "dilemma batch path");
    auto* run_agent_opt =
        run->add_option("--agent-config", run_agent_path, "agent config JSON path");
    auto* run_personas_opt = run->add_option(
        "--personas", run_personas, "comma list of persona ids or categories; baseline always runs");
    run->add_option("--workers", run_workers, "parallel request workers")
        ->check(CLI::PositiveNumber);
    run->add_option("--limit", run_limit, "stop after this many new queries (0 = no cap)");
    run->add_flag("--resume", run_resume, "continue an existing response log");
    auto* run_out_opt = run->add_option("--out", run_out, "response log path");

    auto* ana = app.add_subcommand("analyze", "compute the report from a response log");
    std::string ana_scenarios = "scenarios.jsonl";
    std::string ana_responses = "responses.jsonl";
    std::string ana_baseline;
    std::string ana_out = "report";
    int ana_bootstrap_n = 2000;
    double ana_epsilon = 0.02;
    bool ana_allow_partial = false;
    std::string ana_format = "all";
    ana->add_option("--config", config_path, "JSON config file");
    auto* ana_scen_opt = ana->add_option("--scenarios", ana_scenarios, "dilemma batch path");
    auto* ana_resp_opt = ana->add_option("--responses", ana_responses, "response log path");
    auto* ana_base_opt = ana->add_option("--baseline", ana_baseline, "human baseline CSV");
    auto* ana_out_opt = ana->add_option("--out", ana_out, "report directory");
    auto* ana_bn_opt = ana->add_option("--bootstrap-n", ana_bootstrap_n, "bootstrap resamples");
    auto* ana_eps_opt = ana->add_option("--flip-epsilon", ana_epsilon, "flip noise threshold");
    ana->add_flag("--allow-partial", ana_allow_partial, "analyze an incomplete log");
    ana->add_option("--format", ana_format, "all, json, csv, or md")
        ->check(CLI::IsMember({"all", "json", "csv", "md"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        FileConfig cfg;
        if (!config_path.empty()) cfg = load_file_config(config_path);

        if (gen->parsed()) {
            return cmd_generate(pick(gen_count_opt, gen_count, cfg.batch_count, std::size_t{900}),
                                pick(gen_seed_opt, gen_seed, cfg.batch_seed, std::uint64_t{7}),
                                pick(gen_out_opt, gen_out, cfg.scenarios,
                                     std::string("scenarios.jsonl")));
        }
        if (run->parsed()) {
            AgentConfig agent_cfg;  // defaults to the synthetic utility agent
            if (run_agent_opt->count() > 0) agent_cfg = load_agent_config(run_agent_path);
            else if (cfg.agent) agent_cfg = *cfg.agent;
            else agent_cfg.validate();
            return cmd_run(
                pick(run_scen_opt, run_scenarios, cfg.scenarios, std::string("scenarios.jsonl")),
                agent_cfg,
                pick(run_personas_opt, run_personas, cfg.personas, std::string("all")),
                run_workers, run_limit, run_resume,
                pick(run_out_opt, run_out, cfg.responses, std::string("responses.jsonl")));
        }
        if (ana->parsed()) {
            std::optional<std::string> baseline;
            if (ana_base_opt->count() > 0) baseline = ana_baseline;
            else if (cfg.baseline_csv) baseline = *cfg.baseline_csv;
            const auto format = report_format_from_name(ana_format);
            return cmd_analyze(
                pick(ana_scen_opt, ana_scenarios, cfg.scenarios, std::string("scenarios.jsonl")),
                pick(ana_resp_opt, ana_responses, cfg.responses, std::string("responses.jsonl")),
                baseline, pick(ana_out_opt, ana_out, cfg.report_dir, std::string("report")),
                pick(ana_bn_opt, ana_bootstrap_n, cfg.bootstrap_n, 2000),
                pick(ana_eps_opt, ana_epsilon, cfg.flip_epsilon, 0.02), cfg.bootstrap_seed,
                ana_allow_partial, format ? *format : ReportFormat::All);
        }
    } catch (const ResumeMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
