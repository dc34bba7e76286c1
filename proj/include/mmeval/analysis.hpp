#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmeval/agents.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/scenario.hpp"

namespace mmeval {

// ---------------------------------------------------------------------------
// Effect estimates
// ---------------------------------------------------------------------------

/// Average marginal component effect of one dimension: 2*P(spare the
/// preferred level) - 1 over valid verdicts, in [-1, 1]. Because every
/// dilemma holds all non-focal attributes fixed, the difference in sparing
/// proportions coincides with the regression-style marginal effect.
struct AmceEstimate {
    Dimension dimension = Dimension::Intervention;
    std::size_t n_valid = 0;
    double p_spare = 0;  // share of valid verdicts sparing side A (the preferred level)
    double amce = 0;
    double se = 0;       // bootstrap standard error
    double ci_low = 0;   // 95% percentile bootstrap interval
    double ci_high = 0;

    bool defined() const { return n_valid > 0; }
};

struct BootstrapParams {
    int resamples = 2000;
    std::uint64_t seed = 1;
};

/// Point estimate + bootstrap interval from per-dilemma indicators
/// ("did this verdict spare the preferred level?"). `stream_salt` decorrelates
/// bootstrap draws across cells that share the base seed.
AmceEstimate estimate_amce(const std::vector<bool>& spared_preferred, Dimension dimension,
                           const BootstrapParams& params, std::uint64_t stream_salt);

/// One persona's nine-dimension profile.
struct AmceVector {
    std::string persona_id;
    std::array<AmceEstimate, 9> dims{};  // indexed by static_cast<size_t>(Dimension)
    std::size_t n_total = 0;             // every response for this persona
    std::size_t n_valid = 0;

    const AmceEstimate& dim(Dimension d) const { return dims[static_cast<std::size_t>(d)]; }
    double valid_rate() const;           // NaN when n_total == 0
    bool complete() const;               // all nine dimensions defined
    std::vector<Dimension> missing() const;
    std::array<double, 9> values() const;  // NaN for undefined entries
};

/// Joins one persona's responses to their dilemmas and estimates all nine
/// dimensions. Responses for other personas are ignored; unknown dilemma ids
/// throw AnalysisError.
AmceVector estimate_amce_vector(const std::vector<Dilemma>& dilemmas,
                                const std::vector<AgentResponse>& responses,
                                const std::string& persona_id, const BootstrapParams& params);

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Euclidean distance between two nine-dimension profiles. NaN coordinates
/// throw AnalysisError naming the missing dimensions.
double mdd(const std::array<double, 9>& a, const std::array<double, 9>& b);
double mdd(const AmceVector& a, const AmceVector& b);

/// Same metric, agent profile vs an ingested human profile.
double alignment_distance(const std::array<double, 9>& agent_v,
                          const std::array<double, 9>& human_v);

// ---------------------------------------------------------------------------
// Culture weighting
// ---------------------------------------------------------------------------

enum class Region { Western, Eastern };
std::string_view region_name(Region r);

/// Region lookup for country names and ISO-ish codes (case/punctuation
/// tolerant). Countries outside the two built-in sets return nullopt.
std::optional<Region> region_of_country(std::string_view country);

struct CountryAmce {
    std::string country;
    std::array<double, 9> amce{};
    double n = 0;  // response count backing the country's profile
};

/// Response-count-weighted mean profile over the region's countries:
/// sum(n_k * amce_k) / sum(n_k) per dimension. Empty region throws
/// AnalysisError.
std::array<double, 9> culture_weighted_amce(const std::vector<CountryAmce>& countries,
                                            Region region);

// ---------------------------------------------------------------------------
// Human baseline ingestion
// ---------------------------------------------------------------------------

/// Lowercases and joins words with underscores: "Very Religious" ->
/// "very_religious". Used to key human subgroups against persona groups.
std::string normalize_subgroup(std::string_view label);

/// Survey-derived profiles, read from CSV with columns
/// subgroup,dimension,amce,n and an optional trailing country column.
/// Rows with a country feed culture weighting; the rest are subgroup cells.
struct HumanBaseline {
    std::map<std::string, std::array<double, 9>> subgroup_amce;  // NaN where absent
    std::map<std::string, double> subgroup_n;
    std::vector<CountryAmce> countries;

    bool has_subgroup(const std::string& normalized_key) const;
};

HumanBaseline load_human_baseline(const std::filesystem::path& path);  // ConfigError / IoError

// ---------------------------------------------------------------------------
// Flips and deviations
// ---------------------------------------------------------------------------

struct FlipRecord {
    std::string persona_id;
    Dimension dimension = Dimension::Intervention;
    double from_amce = 0;  // baseline or human reference value
    double to_amce = 0;    // persona value
};

struct FlipSummary {
    double epsilon = 0.02;
    std::vector<FlipRecord> vs_baseline;
    std::size_t cells_vs_baseline = 0;  // (persona, dimension) cells examined
    double pct_vs_baseline = 0;         // 100 * flips / cells
    bool has_reference = false;
    std::vector<FlipRecord> vs_reference;
    std::size_t cells_vs_reference = 0;
    double pct_vs_reference = 0;
};

/// Sign reversals per (persona, dimension), against the no-persona baseline
/// and optionally a human reference profile. A flip needs opposite signs with
/// both magnitudes above epsilon; undefined cells are skipped and do not
/// count toward the denominator.
FlipSummary detect_flips(const std::vector<AmceVector>& personas, const AmceVector& baseline,
                         const std::optional<std::array<double, 9>>& reference, double epsilon);

struct DeviationCell {
    std::string persona_id;
    Dimension dimension = Dimension::Intervention;
    double delta = 0;  // persona amce - baseline amce
};

/// Signed per-cell shifts from the baseline profile; undefined cells skipped.
std::vector<DeviationCell> persona_deviation(const std::vector<AmceVector>& personas,
                                             const AmceVector& baseline);

/// Population variance of a contrasting pair's deltas; (+d, -d) gives d^2.
double pair_variance(double delta_a, double delta_b);

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct AnalysisParams {
    int bootstrap_n = 2000;
    std::uint64_t bootstrap_seed = 1;
    double flip_epsilon = 0.02;
};

struct MddRow {
    std::string category;
    std::string persona_a, persona_b;
    double value = 0;
};

struct AlignmentRow {
    std::string persona_id;
    std::string subgroup;  // normalized human subgroup key used
    double distance = 0;
};

struct CategoryVarianceRow {
    std::string category;
    Dimension dimension = Dimension::Intervention;
    double variance = 0;
};

struct CultureRow {
    Region region = Region::Western;
    std::array<double, 9> amce{};
    double total_n = 0;
};

struct AnalysisReport {
    std::string run_id;
    AnalysisParams params;
    std::vector<AmceVector> vectors;  // baseline first, then run order
    std::vector<MddRow> mdd_rows;
    std::vector<AlignmentRow> alignment_rows;
    FlipSummary flips;
    std::vector<DeviationCell> deviations;
    std::vector<CategoryVarianceRow> category_variance;
    std::vector<CultureRow> culture;  // present when the baseline CSV has country rows
    std::vector<std::string> warnings;
};

/// Computes every table from a finished run. `personas` lists the run's
/// persona specs (baseline included) in catalog order; `baseline` may be null
/// when no human CSV was supplied, which drops alignment and reference flips
/// with a warning.
AnalysisReport build_report(const std::vector<Dilemma>& dilemmas,
                            const std::vector<AgentResponse>& records, const std::string& run_id,
                            const std::vector<PersonaSpec>& personas,
                            const AnalysisParams& params, const HumanBaseline* baseline);

}  // namespace mmeval
