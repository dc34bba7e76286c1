#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mmeval/agents.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/scenario.hpp"

namespace mmeval {

/// Everything needed to reproduce or resume a run, written next to the
/// response log as <log>.manifest.json. The run id is derived from digests,
/// not wall time, so identical inputs give identical ids.
struct RunManifest {
    std::string run_id;
    std::string created_at;
    std::string scenario_digest;  // digest of the dilemma file bytes
    std::size_t scenario_count = 0;
    std::uint64_t batch_seed = 0;
    std::vector<std::string> persona_ids;
    std::string agent_digest;
    std::string agent_config_json;  // canonical echo of the agent config
};

RunManifest make_manifest(const std::string& scenario_digest, std::size_t scenario_count,
                          std::uint64_t batch_seed, const std::vector<PersonaSpec>& personas,
                          const AgentConfig& agent_cfg);

std::string manifest_to_json_text(const RunManifest& m);
RunManifest manifest_from_json_text(const std::string& text);  // throws ConfigError
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& log_path);

/// Throws ResumeMismatchError when `existing` (from disk) and `fresh` (rebuilt
/// from current inputs) disagree on scenarios, seed, personas, or agent.
void check_resume_compatible(const RunManifest& existing, const RunManifest& fresh);

// --- response log -----------------------------------------------------------

extern const char* const kResponseSchemaHeader;  // {"schema":"response/1"}

std::string response_to_json_line(const AgentResponse& r);
AgentResponse response_from_json_line(const std::string& line);  // throws IoError

struct ResponseLog {
    std::string run_id;
    std::vector<AgentResponse> records;  // deduplicated, first occurrence wins
};

/// Reads a response log; unknown or missing header throws IoError. Duplicate
/// (persona, dilemma) records keep the first occurrence.
ResponseLog read_response_log(const std::filesystem::path& path);

// --- execution --------------------------------------------------------------

/// Render seed for one (persona, dilemma) cell. Depends only on the batch seed
/// and the pair's ids, so resuming reproduces the same prompts.
std::uint64_t render_seed_for(std::uint64_t batch_seed, const std::string& persona_id,
                              const std::string& dilemma_id);

struct RunOptions {
    int workers = 1;
    std::size_t limit = 0;  // cap on new queries this call; 0 means no cap
    /// Invoked after each record is appended (serialized by the writer lock).
    std::function<void(const AgentResponse&)> on_response;
};

struct RunResult {
    std::size_t total_pairs = 0;  // personas x dilemmas
    std::size_t already_done = 0;
    std::size_t queried = 0;
};

/// Runs the persona x dilemma matrix against one agent, appending to the
/// response log as results arrive. If the log already exists it must carry
/// this manifest's run id (else ResumeMismatchError) and completed pairs are
/// skipped. Pairs are scheduled persona-major in catalog order.
RunResult run_matrix(const std::vector<Dilemma>& dilemmas,
                     const std::vector<PersonaSpec>& personas, Agent& agent,
                     const RunManifest& manifest, const std::filesystem::path& log_path,
                     const RunOptions& options = {});

}  // namespace mmeval
