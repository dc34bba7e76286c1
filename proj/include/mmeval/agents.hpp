#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mmeval/prompting.hpp"
#include "mmeval/scenario.hpp"

namespace mmeval {

enum class AgentKind { RemoteChat, SyntheticUtility, Coin };

std::string_view agent_kind_name(AgentKind k);

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 1.0;
    std::optional<int> top_k;
    std::optional<int> max_length;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff{250};
};

/// Per-dimension sparing weights for the synthetic oracle agent. Positive
/// weight pulls toward the dimension's reference level (inaction,
/// pedestrians, females, the fit, higher status, the lawful, the young,
/// more characters, humans). noise_temperature = 0 makes it deterministic.
struct SyntheticUtilityParams {
    std::array<double, 9> weights{};  // indexed by dimension_index()
    double noise_temperature = 0.0;

    double& weight(Dimension d) { return weights[dimension_index(d)]; }
    double weight(Dimension d) const { return weights[dimension_index(d)]; }
};

struct AgentConfig {
    AgentKind kind = AgentKind::SyntheticUtility;
    std::string model_name = "synthetic";
    std::string endpoint;                      // RemoteChat only
    std::string api_key_header = "Authorization";
    SamplingParams sampling;
    RetryPolicy retry;
    double rate_limit_rpm = 0;                 // 0 = unlimited
    std::uint64_t seed = 0;                    // synthetic/coin draw stream
    SyntheticUtilityParams synthetic;

    void validate() const;       // throws ConfigError
    std::string digest() const;  // stable hex digest of the canonical form
};

AgentConfig agent_config_from_json_text(const std::string& text);
AgentConfig load_agent_config(const std::filesystem::path& path);
std::string agent_config_to_json_text(const AgentConfig& cfg);

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class InvalidReason { Refusal, NoExplicitChoice, Conflicting, TransportError };

std::string_view invalid_reason_name(InvalidReason r);
std::optional<InvalidReason> invalid_reason_from_name(std::string_view name);

struct Verdict {
    enum class Kind { Choice1, Choice2, Invalid };
    Kind kind = Kind::Invalid;
    std::optional<InvalidReason> reason = InvalidReason::NoExplicitChoice;

    static Verdict choice1() { return {Kind::Choice1, std::nullopt}; }
    static Verdict choice2() { return {Kind::Choice2, std::nullopt}; }
    static Verdict invalid(InvalidReason r) { return {Kind::Invalid, r}; }

    bool is_choice() const { return kind != Kind::Invalid; }
    bool operator==(const Verdict&) const = default;
};

std::string_view verdict_name(Verdict::Kind k);

/**
 * Total, deterministic mapping from raw agent text to a verdict.
 *
 * Rules: case markers ("Case 1"/"Case 2", case-insensitive, tolerant of
 * punctuation and word-form digits) are collected with their context. A
 * marker negated nearby ("cannot choose Case 1", "rather than Case 2") does
 * not count. If exactly one case is named positively, that is the choice.
 * When both appear, only markers carried by a decision verb count, and the
 * last deciding sentence wins; a sentence deciding both ways at once is
 * Conflicting. No positive marker at all is a Refusal when refusal phrasing
 * is present, otherwise NoExplicitChoice.
 */
Verdict parse_response(std::string_view raw_text);

// ---------------------------------------------------------------------------
// Synthetic utility model
// ---------------------------------------------------------------------------

/// Utility the synthetic agent assigns to sparing one side: tag-score means
/// over the group plus head count, location and action terms, weighted per
/// dimension.
double side_utility(const SyntheticUtilityParams& params, const Dilemma& d, Side side);

/// Exact probability that the synthetic agent spares side_a: the logistic of
/// the utility gap scaled by noise_temperature; a hard argmax at zero
/// temperature (ties -> 0.5).
double synthetic_choice_probability(const SyntheticUtilityParams& params, const Dilemma& d);

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

struct AgentResponse {
    std::string dilemma_id;
    std::string persona_id;
    Side case1_side = Side::A;  // recorded case-to-side mapping for analysis
    std::string prompt_hash;
    std::string raw_text;
    Verdict verdict;
    double latency_ms = 0;
    int attempt_count = 1;
    std::string timestamp;
};

std::string prompt_digest(std::string_view prompt_text);

class Agent {
  public:
    virtual ~Agent() = default;

    /// Answer one prompt. The dilemma is the structured counterpart of the
    /// bundle text; local agents decide from it, remote agents ignore it.
    /// Always returns a response; transport failures surface as
    /// Invalid(TransportError) after the retry budget is spent.
    virtual AgentResponse query(const PromptBundle& bundle, const Dilemma& d) = 0;
};

/// Build an agent from its config. Configuration problems (bad endpoint,
/// invalid sampling ranges) throw ConfigError before any request is made.
std::unique_ptr<Agent> make_agent(const AgentConfig& cfg);

namespace detail {
std::unique_ptr<Agent> make_remote_chat_agent(const AgentConfig& cfg);
}

}  // namespace mmeval
