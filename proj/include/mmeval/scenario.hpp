#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmeval/rng.hpp"

namespace mmeval {

// ---------------------------------------------------------------------------
// Dimensions
// ---------------------------------------------------------------------------

/// The nine contrast axes a dilemma can be built around.
enum class Dimension {
    Intervention,
    RelationToAV,
    Gender,
    Fitness,
    SocialStatus,
    Law,
    Age,
    NumCharacters,
    Species,
};

inline constexpr std::array<Dimension, 9> kAllDimensions = {
    Dimension::Intervention, Dimension::RelationToAV, Dimension::Gender,
    Dimension::Fitness,      Dimension::SocialStatus, Dimension::Law,
    Dimension::Age,          Dimension::NumCharacters, Dimension::Species,
};

std::string_view dimension_name(Dimension d);
std::optional<Dimension> dimension_from_name(std::string_view name);
inline std::size_t dimension_index(Dimension d) { return static_cast<std::size_t>(d); }

/// Human readable sparing contrast, reference level first (e.g. "the young over the elderly").
std::string_view dimension_contrast(Dimension d);

// ---------------------------------------------------------------------------
// Characters
// ---------------------------------------------------------------------------

enum class CharacterKind {
    Man,
    Woman,
    Boy,
    Girl,
    ElderlyMan,
    ElderlyWoman,
    PregnantWoman,
    MaleDoctor,
    FemaleDoctor,
    MaleExecutive,
    FemaleExecutive,
    MaleAthlete,
    FemaleAthlete,
    LargeMan,
    LargeWoman,
    HomelessPerson,
    Criminal,
    Dog,
    Cat,
};

inline constexpr std::array<CharacterKind, 19> kAllCharacterKinds = {
    CharacterKind::Man,           CharacterKind::Woman,
    CharacterKind::Boy,           CharacterKind::Girl,
    CharacterKind::ElderlyMan,    CharacterKind::ElderlyWoman,
    CharacterKind::PregnantWoman, CharacterKind::MaleDoctor,
    CharacterKind::FemaleDoctor,  CharacterKind::MaleExecutive,
    CharacterKind::FemaleExecutive, CharacterKind::MaleAthlete,
    CharacterKind::FemaleAthlete, CharacterKind::LargeMan,
    CharacterKind::LargeWoman,    CharacterKind::HomelessPerson,
    CharacterKind::Criminal,      CharacterKind::Dog,
    CharacterKind::Cat,
};

enum class SpeciesTag { Human, Pet };
enum class GenderTag { Male, Female, None };
enum class AgeTag { Young, Adult, Elderly };
enum class FitnessTag { Fit, Neutral, Large };
enum class StatusTag { High, Neutral, Low };

/// Fixed attribute profile of a character kind. Total: every kind maps to
/// exactly one value per attribute.
struct CharacterTags {
    SpeciesTag species;
    GenderTag gender;
    AgeTag age;
    FitnessTag fitness;
    StatusTag status;
};

const CharacterTags& tags_of(CharacterKind kind);
std::string_view kind_name(CharacterKind kind);
std::optional<CharacterKind> kind_from_name(std::string_view name);

// ---------------------------------------------------------------------------
// Dilemma
// ---------------------------------------------------------------------------

enum class Location { Passengers, PedestriansLegal, PedestriansIllegal };
std::string_view location_name(Location loc);
std::optional<Location> location_from_name(std::string_view name);
inline bool is_pedestrian(Location loc) { return loc != Location::Passengers; }

enum class Side { A, B };
inline Side other_side(Side s) { return s == Side::A ? Side::B : Side::A; }
inline std::string_view side_name(Side s) { return s == Side::A ? "A" : "B"; }
inline std::optional<Side> side_from_name(std::string_view name) {
    if (name == "A") return Side::A;
    if (name == "B") return Side::B;
    return std::nullopt;
}

struct OutcomeGroup {
    std::vector<CharacterKind> characters;  // multiset, size 1..5
    Location location = Location::PedestriansLegal;
};

struct SeedTrace {
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
};

/**
 * One binary dilemma. The two groups are identical in every attribute except
 * the ones implied by `focal`.
 *
 * Conventions baked into generation and relied on downstream:
 *  - side_a always carries the reference level of the focal contrast
 *    (the level whose sparing counts positive in the effect estimate:
 *    pedestrians, females, the fit, higher status, the lawful, the young,
 *    the larger group, humans). For Intervention, side_a is the group spared
 *    by staying, so sparing side_a always equals the reference-level choice.
 *  - stay_kills names the group run over if the car keeps straight; the
 *    other group dies if it swerves.
 */
struct Dilemma {
    std::string id;
    Dimension focal = Dimension::Intervention;
    OutcomeGroup side_a;
    OutcomeGroup side_b;
    Side stay_kills = Side::B;
    SeedTrace seed_trace;

    const OutcomeGroup& side(Side s) const { return s == Side::A ? side_a : side_b; }
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Build one dilemma focused on `focal`. Pure function of the trace: the
/// generator state is derived from (trace.seed, trace.index) alone.
Dilemma generate_dilemma(Dimension focal, const SeedTrace& trace);

/// Generate `total` dilemmas spread as evenly as possible over the nine
/// dimensions (count difference <= 1). Throws ConfigError when total < 9.
std::vector<Dilemma> generate_batch(std::size_t total, std::uint64_t seed);

std::array<std::size_t, 9> dimension_counts(const std::vector<Dilemma>& batch);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationResult {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Check every structural invariant. Violations are data, not errors.
ValidationResult validate_dilemma(const Dilemma& d);

// ---------------------------------------------------------------------------
// Serialization (line-delimited JSON, schema "dilemma/1")
// ---------------------------------------------------------------------------

std::string dilemma_to_json_line(const Dilemma& d);
Dilemma dilemma_from_json_line(const std::string& line);  // throws IoError on bad input

void write_batch(const std::filesystem::path& path, const std::vector<Dilemma>& batch);
std::vector<Dilemma> read_batch(const std::filesystem::path& path);

}  // namespace mmeval
