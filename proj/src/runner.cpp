#include "mmeval/runner.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mmeval/errors.hpp"
#include "mmeval/util.hpp"

namespace mmeval {

using ordered_json = nlohmann::ordered_json;

const char* const kResponseSchemaHeader = R"({"schema":"response/1"})";

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

RunManifest make_manifest(const std::string& scenario_digest, std::size_t scenario_count,
                          std::uint64_t batch_seed, const std::vector<PersonaSpec>& personas,
                          const AgentConfig& agent_cfg) {
    RunManifest m;
    m.scenario_digest = scenario_digest;
    m.scenario_count = scenario_count;
    m.batch_seed = batch_seed;
    for (const PersonaSpec& p : personas) m.persona_ids.push_back(p.id);
    m.agent_config_json = agent_config_to_json_text(agent_cfg);
    m.agent_digest = agent_cfg.digest();

    std::string key = scenario_digest + "|" + std::to_string(batch_seed) + "|";
    for (const std::string& id : m.persona_ids) key += id + ",";
    key += "|" + m.agent_digest;
    m.run_id = to_hex(fnv1a64(key));
    m.created_at = iso8601_utc_now();
    return m;
}

std::string manifest_to_json_text(const RunManifest& m) {
    ordered_json j;
    j["schema"] = "manifest/1";
    j["run_id"] = m.run_id;
    j["created_at"] = m.created_at;
    j["scenario_digest"] = m.scenario_digest;
    j["scenario_count"] = m.scenario_count;
    j["batch_seed"] = m.batch_seed;
    j["persona_ids"] = m.persona_ids;
    j["agent_digest"] = m.agent_digest;
    j["agent_config"] = ordered_json::parse(m.agent_config_json);
    return j.dump(2) + "\n";
}

RunManifest manifest_from_json_text(const std::string& text) {
    try {
        const auto j = ordered_json::parse(text);
        if (j.value("schema", "") != "manifest/1")
            throw ConfigError("not a run manifest (schema mismatch)");
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.created_at = j.value("created_at", "");
        m.scenario_digest = j.at("scenario_digest").get<std::string>();
        m.scenario_count = j.at("scenario_count").get<std::size_t>();
        m.batch_seed = j.at("batch_seed").get<std::uint64_t>();
        m.persona_ids = j.at("persona_ids").get<std::vector<std::string>>();
        m.agent_digest = j.at("agent_digest").get<std::string>();
        m.agent_config_json = j.at("agent_config").dump(2);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad run manifest: ") + e.what());
    }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    write_text_file(path, manifest_to_json_text(m));
}

RunManifest read_manifest(const std::filesystem::path& path) {
    return manifest_from_json_text(read_text_file(path));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& log_path) {
    std::filesystem::path p = log_path;
    p += ".manifest.json";
    return p;
}

void check_resume_compatible(const RunManifest& existing, const RunManifest& fresh) {
    std::vector<std::string> problems;
    if (existing.scenario_digest != fresh.scenario_digest)
        problems.push_back("scenario file changed");
    if (existing.scenario_count != fresh.scenario_count)
        problems.push_back("scenario count changed");
    if (existing.batch_seed != fresh.batch_seed) problems.push_back("batch seed changed");
    if (existing.persona_ids != fresh.persona_ids) problems.push_back("persona set changed");
    if (existing.agent_digest != fresh.agent_digest) problems.push_back("agent config changed");
    if (problems.empty()) return;
    std::string msg = "cannot resume:";
    for (const std::string& p : problems) msg += " " + p + ";";
    msg.pop_back();
    throw ResumeMismatchError(msg);
}

// ---------------------------------------------------------------------------
// Response log
// ---------------------------------------------------------------------------

std::string response_to_json_line(const AgentResponse& r) {
    ordered_json j;
    j["persona"] = r.persona_id;
    j["dilemma"] = r.dilemma_id;
    j["case1"] = std::string(side_name(r.case1_side));
    j["verdict"] = std::string(verdict_name(r.verdict.kind));
    if (r.verdict.reason) j["reason"] = std::string(invalid_reason_name(*r.verdict.reason));
    j["raw_text"] = r.raw_text;
    j["prompt_hash"] = r.prompt_hash;
    j["latency_ms"] = r.latency_ms;
    j["attempts"] = r.attempt_count;
    j["timestamp"] = r.timestamp;
    return j.dump();
}

AgentResponse response_from_json_line(const std::string& line) {
    try {
        const auto j = ordered_json::parse(line);
        AgentResponse r;
        r.persona_id = j.at("persona").get<std::string>();
        r.dilemma_id = j.at("dilemma").get<std::string>();
        auto side = side_from_name(j.at("case1").get<std::string>());
        if (!side) throw IoError("bad case1 side in response record");
        r.case1_side = *side;
        const std::string verdict = j.at("verdict").get<std::string>();
        if (verdict == "Choice1") {
            r.verdict = Verdict::choice1();
        } else if (verdict == "Choice2") {
            r.verdict = Verdict::choice2();
        } else if (verdict == "Invalid") {
            auto reason = invalid_reason_from_name(j.value("reason", ""));
            if (!reason) throw IoError("invalid verdict without a known reason");
            r.verdict = Verdict::invalid(*reason);
        } else {
            throw IoError("unknown verdict: " + verdict);
        }
        r.raw_text = j.value("raw_text", "");
        r.prompt_hash = j.value("prompt_hash", "");
        r.latency_ms = j.value("latency_ms", 0.0);
        r.attempt_count = j.value("attempts", 1);
        r.timestamp = j.value("timestamp", "");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad response record: ") + e.what());
    }
}

ResponseLog read_response_log(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty response log: " + path.string());
    try {
        const auto header = ordered_json::parse(line);
        if (header.value("schema", "") != "response/1")
            throw IoError("not a response log (schema mismatch): " + path.string());
        ResponseLog log;
        log.run_id = header.value("run_id", "");
        std::set<std::pair<std::string, std::string>> seen;
        while (std::getline(in, line)) {
            if (trim_copy(line).empty()) continue;
            AgentResponse r = response_from_json_line(line);
            if (seen.emplace(r.persona_id, r.dilemma_id).second)
                log.records.push_back(std::move(r));
        }
        return log;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad response log header: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

std::uint64_t render_seed_for(std::uint64_t batch_seed, const std::string& persona_id,
                              const std::string& dilemma_id) {
    return Rng::mix(batch_seed, fnv1a64(persona_id + "\n" + dilemma_id));
}

RunResult run_matrix(const std::vector<Dilemma>& dilemmas,
                     const std::vector<PersonaSpec>& personas, Agent& agent,
                     const RunManifest& manifest, const std::filesystem::path& log_path,
                     const RunOptions& options) {
    RunResult result;
    result.total_pairs = dilemmas.size() * personas.size();

    std::set<std::pair<std::string, std::string>> done;
    const bool log_exists = std::filesystem::exists(log_path);
    if (log_exists) {
        ResponseLog log = read_response_log(log_path);
        if (log.run_id != manifest.run_id)
            throw ResumeMismatchError("response log belongs to run " + log.run_id +
                                      ", expected " + manifest.run_id);
        for (const AgentResponse& r : log.records) done.emplace(r.persona_id, r.dilemma_id);
    }
    result.already_done = done.size();

    struct Cell {
        std::size_t persona;
        std::size_t dilemma;
    };
    std::vector<Cell> work;
    for (std::size_t p = 0; p < personas.size(); ++p) {
        for (std::size_t d = 0; d < dilemmas.size(); ++d) {
            if (done.count({personas[p].id, dilemmas[d].id})) continue;
            work.push_back({p, d});
            if (options.limit > 0 && work.size() >= options.limit) break;
        }
        if (options.limit > 0 && work.size() >= options.limit) break;
    }
    if (work.empty()) return result;

    std::ofstream out(log_path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot open response log for writing: " + log_path.string());
    if (!log_exists) {
        ordered_json header = ordered_json::parse(kResponseSchemaHeader);
        header["run_id"] = manifest.run_id;
        out << header.dump() << "\n";
        out.flush();
    }

    std::mutex write_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= work.size()) return;
            const Cell cell = work[i];
            const PersonaSpec& persona = personas[cell.persona];
            const Dilemma& dilemma = dilemmas[cell.dilemma];
            try {
                const std::uint64_t seed =
                    render_seed_for(manifest.batch_seed, persona.id, dilemma.id);
                const PromptBundle bundle = make_bundle(persona, dilemma, seed);
                AgentResponse response = agent.query(bundle, dilemma);
                std::lock_guard<std::mutex> lock(write_mutex);
                out << response_to_json_line(response) << "\n";
                out.flush();
                ++result.queried;
                if (options.on_response) options.on_response(response);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    const int n_workers = std::max(1, options.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return result;
}

}  // namespace mmeval
