#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmeval/rng.hpp"
#include "mmeval/scenario.hpp"

namespace mmeval {

enum class PersonaCategory { Age, Education, Gender, Income, Political, Religious, Culture, Baseline };

std::string_view category_name(PersonaCategory c);
std::optional<PersonaCategory> category_from_name(std::string_view name);

/**
 * One persona condition. `detail_pool` holds the template fill-ins
 * ("are a conservative person", "are 19 years old", ...); multi-element
 * pools (age values, nationalities) get one element drawn per prompt.
 * The baseline persona has an empty pool and an empty preamble.
 */
struct PersonaSpec {
    PersonaCategory category = PersonaCategory::Baseline;
    std::string id;           // stable key, e.g. "higher_income"
    std::string group_label;  // display label, e.g. "Higher Income"
    std::vector<std::string> detail_pool;

    bool is_baseline() const { return category == PersonaCategory::Baseline; }
};

/// Built-in catalog: baseline first, then two contrasting personas for each
/// of the seven categories (15 entries total).
const std::vector<PersonaSpec>& persona_catalog();

const PersonaSpec* find_persona(const std::vector<PersonaSpec>& catalog, std::string_view id);

/// Load a replacement catalog from a JSON file with the same fields.
/// A baseline entry is added if the file does not provide one.
std::vector<PersonaSpec> load_persona_catalog(const std::filesystem::path& path);

/**
 * Expand a --personas selector into catalog ids. Accepts "all", category
 * names and persona ids, comma separated. The baseline is always included.
 * Throws ConfigError on unknown tokens.
 */
std::vector<std::string> select_personas(const std::vector<PersonaSpec>& catalog,
                                         std::string_view selector);

/// Persona preamble sentence; empty string for the baseline.
std::string compose_preamble(const PersonaSpec& p, Rng& rng);

/// Deterministic vignette text. `case1_side` picks which group is presented
/// as Case 1 (choosing a case spares the group it presents).
std::string render_vignette(const Dilemma& d, Side case1_side = Side::A);

struct PromptBundle {
    std::string persona_id;
    std::string dilemma_id;
    Side case1_side = Side::A;  // recorded so analysis can map choices back to sides
    std::uint64_t render_seed = 0;
    std::string text;
};

/// Compose preamble + vignette. The Case 1/Case 2 side order is drawn from
/// render_seed on a stream independent of the persona fill-in draw, so the
/// vignette part is identical across personas for a fixed seed.
PromptBundle make_bundle(const PersonaSpec& p, const Dilemma& d, std::uint64_t render_seed);

}  // namespace mmeval
