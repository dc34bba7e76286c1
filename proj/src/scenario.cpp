#include "mmeval/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mmeval/errors.hpp"
#include "mmeval/util.hpp"

namespace mmeval {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Name tables
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 9> kDimensionNames = {
    "Intervention", "RelationToAV", "Gender",        "Fitness", "SocialStatus",
    "Law",          "Age",          "NumCharacters", "Species",
};

constexpr std::array<std::string_view, 9> kDimensionContrasts = {
    "inaction over action",
    "pedestrians over passengers",
    "females over males",
    "the fit over the large",
    "higher status over lower status",
    "the lawful over the unlawful",
    "the young over the elderly",
    "more characters over fewer characters",
    "humans over pets",
};

constexpr std::array<std::string_view, 19> kKindNames = {
    "Man",           "Woman",          "Boy",           "Girl",
    "ElderlyMan",    "ElderlyWoman",   "PregnantWoman", "MaleDoctor",
    "FemaleDoctor",  "MaleExecutive",  "FemaleExecutive", "MaleAthlete",
    "FemaleAthlete", "LargeMan",       "LargeWoman",    "HomelessPerson",
    "Criminal",      "Dog",            "Cat",
};

// Attribute profile per kind, indexed by the CharacterKind enum order.
// Gender tags double as the pairing key for the focal contrasts: the homeless
// person and the criminal are male figures (pairable with the male
// high-status kinds), and the dog/cat pair mirrors the man/woman pair so a
// species contrast can hold every other attribute fixed.
constexpr std::array<CharacterTags, 19> kTags = {{
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Neutral},  // Man
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Neutral},  // Woman
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Young,   FitnessTag::Neutral, StatusTag::Neutral},  // Boy
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Young,   FitnessTag::Neutral, StatusTag::Neutral},  // Girl
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Elderly, FitnessTag::Neutral, StatusTag::Neutral},  // ElderlyMan
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Elderly, FitnessTag::Neutral, StatusTag::Neutral},  // ElderlyWoman
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Neutral},  // PregnantWoman
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::High},     // MaleDoctor
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Neutral, StatusTag::High},     // FemaleDoctor
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::High},     // MaleExecutive
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Neutral, StatusTag::High},     // FemaleExecutive
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Fit,     StatusTag::Neutral},  // MaleAthlete
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Fit,     StatusTag::Neutral},  // FemaleAthlete
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Large,   StatusTag::Neutral},  // LargeMan
    {SpeciesTag::Human, GenderTag::Female, AgeTag::Adult,   FitnessTag::Large,   StatusTag::Neutral},  // LargeWoman
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Low},      // HomelessPerson
    {SpeciesTag::Human, GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Low},      // Criminal
    {SpeciesTag::Pet,   GenderTag::Male,   AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Neutral},  // Dog
    {SpeciesTag::Pet,   GenderTag::Female, AgeTag::Adult,   FitnessTag::Neutral, StatusTag::Neutral},  // Cat
}};

}  // namespace

std::string_view dimension_name(Dimension d) { return kDimensionNames[dimension_index(d)]; }

std::optional<Dimension> dimension_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kDimensionNames.size(); ++i) {
        if (kDimensionNames[i] == name) return kAllDimensions[i];
    }
    return std::nullopt;
}

std::string_view dimension_contrast(Dimension d) { return kDimensionContrasts[dimension_index(d)]; }

const CharacterTags& tags_of(CharacterKind kind) { return kTags[static_cast<std::size_t>(kind)]; }

std::string_view kind_name(CharacterKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<CharacterKind> kind_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return kAllCharacterKinds[i];
    }
    return std::nullopt;
}

std::string_view location_name(Location loc) {
    switch (loc) {
        case Location::Passengers: return "Passengers";
        case Location::PedestriansLegal: return "PedestriansLegal";
        case Location::PedestriansIllegal: return "PedestriansIllegal";
    }
    return "";
}

std::optional<Location> location_from_name(std::string_view name) {
    if (name == "Passengers") return Location::Passengers;
    if (name == "PedestriansLegal") return Location::PedestriansLegal;
    if (name == "PedestriansIllegal") return Location::PedestriansIllegal;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

// Reference-level character first; the pair matches on every non-focal tag.
struct KindPair {
    CharacterKind ref;
    CharacterKind alt;
};

const std::vector<KindPair>& gender_pairs() {  // female over male
    static const std::vector<KindPair> pairs = {
        {CharacterKind::Woman, CharacterKind::Man},
        {CharacterKind::Girl, CharacterKind::Boy},
        {CharacterKind::ElderlyWoman, CharacterKind::ElderlyMan},
        {CharacterKind::FemaleDoctor, CharacterKind::MaleDoctor},
        {CharacterKind::FemaleExecutive, CharacterKind::MaleExecutive},
        {CharacterKind::FemaleAthlete, CharacterKind::MaleAthlete},
        {CharacterKind::LargeWoman, CharacterKind::LargeMan},
    };
    return pairs;
}

const std::vector<KindPair>& age_pairs() {  // young over elderly
    static const std::vector<KindPair> pairs = {
        {CharacterKind::Boy, CharacterKind::ElderlyMan},
        {CharacterKind::Girl, CharacterKind::ElderlyWoman},
    };
    return pairs;
}

const std::vector<KindPair>& fitness_pairs() {  // fit over large
    static const std::vector<KindPair> pairs = {
        {CharacterKind::MaleAthlete, CharacterKind::LargeMan},
        {CharacterKind::FemaleAthlete, CharacterKind::LargeWoman},
    };
    return pairs;
}

const std::vector<KindPair>& species_pairs() {  // human over pet
    static const std::vector<KindPair> pairs = {
        {CharacterKind::Man, CharacterKind::Dog},
        {CharacterKind::Woman, CharacterKind::Cat},
    };
    return pairs;
}

const std::vector<CharacterKind>& high_status_pool() {
    static const std::vector<CharacterKind> pool = {CharacterKind::MaleDoctor,
                                                    CharacterKind::MaleExecutive};
    return pool;
}

const std::vector<CharacterKind>& low_status_pool() {
    static const std::vector<CharacterKind> pool = {CharacterKind::HomelessPerson,
                                                    CharacterKind::Criminal};
    return pool;
}

CharacterKind random_kind(Rng& rng) {
    return kAllCharacterKinds[rng.below(kAllCharacterKinds.size())];
}

Location random_pedestrian_location(Rng& rng) {
    return rng.bernoulli(0.5) ? Location::PedestriansLegal : Location::PedestriansIllegal;
}

std::string make_id(const SeedTrace& trace) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "d%llu-%06llu",
                  static_cast<unsigned long long>(trace.seed),
                  static_cast<unsigned long long>(trace.index));
    return std::string(buf);
}

}  // namespace

Dilemma generate_dilemma(Dimension focal, const SeedTrace& trace) {
    Rng rng(Rng::mix(trace.seed, trace.index));

    Dilemma d;
    d.id = make_id(trace);
    d.focal = focal;
    d.seed_trace = trace;

    const auto size = static_cast<std::size_t>(rng.uniform_int(1, 5));

    switch (focal) {
        case Dimension::Intervention: {
            // Identical groups; the contrast is the action. Staying spares
            // side_a so that the reference choice (inaction) spares side_a.
            const Location loc = random_pedestrian_location(rng);
            std::vector<CharacterKind> kinds;
            for (std::size_t i = 0; i < size; ++i) kinds.push_back(random_kind(rng));
            d.side_a = {kinds, loc};
            d.side_b = {kinds, loc};
            d.stay_kills = Side::B;
            return d;
        }
        case Dimension::RelationToAV: {
            const Location loc = random_pedestrian_location(rng);
            std::vector<CharacterKind> kinds;
            for (std::size_t i = 0; i < size; ++i) kinds.push_back(random_kind(rng));
            d.side_a = {kinds, loc};
            d.side_b = {kinds, Location::Passengers};
            d.stay_kills = rng.bernoulli(0.5) ? Side::A : Side::B;
            return d;
        }
        case Dimension::Law: {
            std::vector<CharacterKind> kinds;
            for (std::size_t i = 0; i < size; ++i) kinds.push_back(random_kind(rng));
            d.side_a = {kinds, Location::PedestriansLegal};
            d.side_b = {kinds, Location::PedestriansIllegal};
            d.stay_kills = rng.bernoulli(0.5) ? Side::A : Side::B;
            return d;
        }
        case Dimension::NumCharacters: {
            // A single kind repeated on both sides keeps the head count as
            // the only systematic difference.
            static constexpr std::array<std::pair<int, int>, 10> kCountPairs = {{
                {1, 2}, {1, 3}, {1, 4}, {1, 5}, {2, 3},
                {2, 4}, {2, 5}, {3, 4}, {3, 5}, {4, 5},
            }};
            const auto [n_small, n_large] = kCountPairs[rng.below(kCountPairs.size())];
            const CharacterKind kind = random_kind(rng);
            const Location loc = random_pedestrian_location(rng);
            d.side_a = {std::vector<CharacterKind>(static_cast<std::size_t>(n_large), kind), loc};
            d.side_b = {std::vector<CharacterKind>(static_cast<std::size_t>(n_small), kind), loc};
            d.stay_kills = rng.bernoulli(0.5) ? Side::A : Side::B;
            return d;
        }
        case Dimension::Gender:
        case Dimension::Age:
        case Dimension::Fitness:
        case Dimension::Species: {
            const std::vector<KindPair>& pool = focal == Dimension::Gender ? gender_pairs()
                                              : focal == Dimension::Age    ? age_pairs()
                                              : focal == Dimension::Fitness ? fitness_pairs()
                                                                            : species_pairs();
            const Location loc = random_pedestrian_location(rng);
            d.side_a.location = loc;
            d.side_b.location = loc;
            for (std::size_t i = 0; i < size; ++i) {
                const KindPair& p = pool[rng.below(pool.size())];
                d.side_a.characters.push_back(p.ref);
                d.side_b.characters.push_back(p.alt);
            }
            d.stay_kills = rng.bernoulli(0.5) ? Side::A : Side::B;
            return d;
        }
        case Dimension::SocialStatus: {
            // High and low kinds drawn independently; all share the
            // male/adult/neutral profile so only status differs.
            const Location loc = random_pedestrian_location(rng);
            d.side_a.location = loc;
            d.side_b.location = loc;
            for (std::size_t i = 0; i < size; ++i) {
                d.side_a.characters.push_back(rng.pick(high_status_pool()));
                d.side_b.characters.push_back(rng.pick(low_status_pool()));
            }
            d.stay_kills = rng.bernoulli(0.5) ? Side::A : Side::B;
            return d;
        }
    }
    throw ConfigError("unknown dimension");
}

std::vector<Dilemma> generate_batch(std::size_t total, std::uint64_t seed) {
    if (total < kAllDimensions.size()) {
        throw ConfigError("insufficient count for dimension coverage (need >= 9, got " +
                          std::to_string(total) + ")");
    }
    std::vector<Dilemma> batch;
    batch.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        // Round-robin keeps per-dimension counts within 1 of each other.
        const Dimension focal = kAllDimensions[i % kAllDimensions.size()];
        batch.push_back(generate_dilemma(focal, SeedTrace{seed, i}));
    }
    return batch;
}

std::array<std::size_t, 9> dimension_counts(const std::vector<Dilemma>& batch) {
    std::array<std::size_t, 9> counts{};
    for (const Dilemma& d : batch) ++counts[dimension_index(d.focal)];
    return counts;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

template <class T>
std::map<T, int> tag_multiset(const std::vector<CharacterKind>& kinds, T CharacterTags::* member) {
    std::map<T, int> counts;
    for (CharacterKind k : kinds) ++counts[tags_of(k).*member];
    return counts;
}

template <class T>
bool multiset_contains(const std::map<T, int>& big, const std::map<T, int>& small) {
    for (const auto& [key, n] : small) {
        auto it = big.find(key);
        if (it == big.end() || it->second < n) return false;
    }
    return true;
}

std::vector<CharacterKind> sorted_kinds(const std::vector<CharacterKind>& kinds) {
    std::vector<CharacterKind> out = kinds;
    std::sort(out.begin(), out.end());
    return out;
}

struct AttributeCheck {
    Dimension dim;
    const char* name;
    bool (*equal)(const OutcomeGroup&, const OutcomeGroup&);
    bool (*contains)(const OutcomeGroup&, const OutcomeGroup&);  // big, small
};

template <class T>
bool attr_equal(const OutcomeGroup& a, const OutcomeGroup& b, T CharacterTags::* member) {
    return tag_multiset(a.characters, member) == tag_multiset(b.characters, member);
}

template <class T>
bool attr_contains(const OutcomeGroup& big, const OutcomeGroup& small, T CharacterTags::* member) {
    return multiset_contains(tag_multiset(big.characters, member),
                             tag_multiset(small.characters, member));
}

const std::array<AttributeCheck, 5>& attribute_checks() {
    static const std::array<AttributeCheck, 5> checks = {{
        {Dimension::Species, "species",
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_equal(a, b, &CharacterTags::species); },
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_contains(a, b, &CharacterTags::species); }},
        {Dimension::Gender, "gender",
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_equal(a, b, &CharacterTags::gender); },
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_contains(a, b, &CharacterTags::gender); }},
        {Dimension::Age, "age",
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_equal(a, b, &CharacterTags::age); },
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_contains(a, b, &CharacterTags::age); }},
        {Dimension::Fitness, "fitness",
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_equal(a, b, &CharacterTags::fitness); },
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_contains(a, b, &CharacterTags::fitness); }},
        {Dimension::SocialStatus, "status",
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_equal(a, b, &CharacterTags::status); },
         [](const OutcomeGroup& a, const OutcomeGroup& b) { return attr_contains(a, b, &CharacterTags::status); }},
    }};
    return checks;
}

// Does every character in the group sit at the given tag level?
template <class T>
bool uniform_level(const OutcomeGroup& g, T CharacterTags::* member, T level) {
    return std::all_of(g.characters.begin(), g.characters.end(),
                       [&](CharacterKind k) { return tags_of(k).*member == level; });
}

}  // namespace

ValidationResult validate_dilemma(const Dilemma& d) {
    ValidationResult r;
    auto fail = [&](std::string msg) { r.violations.push_back(std::move(msg)); };

    for (Side s : {Side::A, Side::B}) {
        const OutcomeGroup& g = d.side(s);
        const std::string tag = std::string("side_") + (s == Side::A ? "a" : "b");
        if (g.characters.empty()) fail(tag + ": group size < 1");
        if (g.characters.size() > 5) fail(tag + ": group size > 5");
    }
    if (d.id.empty()) fail("empty id");

    const bool same_composition =
        sorted_kinds(d.side_a.characters) == sorted_kinds(d.side_b.characters);

    // Location structure per focal dimension.
    switch (d.focal) {
        case Dimension::RelationToAV:
            if (!is_pedestrian(d.side_a.location) || d.side_b.location != Location::Passengers)
                fail("focal=RelationToAV requires side_a pedestrians and side_b passengers");
            break;
        case Dimension::Law:
            if (d.side_a.location != Location::PedestriansLegal ||
                d.side_b.location != Location::PedestriansIllegal)
                fail("focal=Law requires side_a on a green signal and side_b on a red signal");
            break;
        default:
            if (d.side_a.location != d.side_b.location)
                fail("non-focal attribute differs: location");
            else if (!is_pedestrian(d.side_a.location))
                fail("both groups cannot be passengers");
            break;
    }

    // Composition structure per focal dimension.
    switch (d.focal) {
        case Dimension::Intervention:
            if (!same_composition) fail("focal=Intervention requires identical compositions");
            if (d.stay_kills != Side::B)
                fail("focal=Intervention requires staying to spare side_a");
            break;
        case Dimension::RelationToAV:
        case Dimension::Law:
            if (!same_composition) fail("sides differ in composition");
            break;
        case Dimension::NumCharacters: {
            if (d.side_a.characters.size() <= d.side_b.characters.size())
                fail("focal=NumCharacters requires side_a to be the larger group");
            for (const AttributeCheck& c : attribute_checks()) {
                if (!c.contains(d.side_a, d.side_b))
                    fail(std::string("non-focal attribute differs: ") + c.name);
            }
            break;
        }
        case Dimension::Gender:
        case Dimension::Age:
        case Dimension::Fitness:
        case Dimension::SocialStatus:
        case Dimension::Species: {
            if (d.side_a.characters.size() != d.side_b.characters.size())
                fail("group sizes differ on a matched contrast");
            const bool level_ok = [&] {
                switch (d.focal) {
                    case Dimension::Gender:
                        return uniform_level(d.side_a, &CharacterTags::gender, GenderTag::Female) &&
                               uniform_level(d.side_b, &CharacterTags::gender, GenderTag::Male);
                    case Dimension::Age:
                        return uniform_level(d.side_a, &CharacterTags::age, AgeTag::Young) &&
                               uniform_level(d.side_b, &CharacterTags::age, AgeTag::Elderly);
                    case Dimension::Fitness:
                        return uniform_level(d.side_a, &CharacterTags::fitness, FitnessTag::Fit) &&
                               uniform_level(d.side_b, &CharacterTags::fitness, FitnessTag::Large);
                    case Dimension::SocialStatus:
                        return uniform_level(d.side_a, &CharacterTags::status, StatusTag::High) &&
                               uniform_level(d.side_b, &CharacterTags::status, StatusTag::Low);
                    case Dimension::Species:
                        return uniform_level(d.side_a, &CharacterTags::species, SpeciesTag::Human) &&
                               uniform_level(d.side_b, &CharacterTags::species, SpeciesTag::Pet);
                    default: return true;
                }
            }();
            if (!level_ok) fail("focal levels not uniform per side");
            for (const AttributeCheck& c : attribute_checks()) {
                if (c.dim == d.focal) continue;
                if (!c.equal(d.side_a, d.side_b))
                    fail(std::string("non-focal attribute differs: ") + c.name);
            }
            break;
        }
        default: break;
    }

    return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kDilemmaSchemaHeader = R"({"schema":"dilemma/1"})";

ordered_json group_to_json(const OutcomeGroup& g) {
    ordered_json j;
    j["characters"] = ordered_json::array();
    for (CharacterKind k : g.characters) j["characters"].push_back(std::string(kind_name(k)));
    j["location"] = std::string(location_name(g.location));
    return j;
}

OutcomeGroup group_from_json(const ordered_json& j) {
    OutcomeGroup g;
    for (const auto& name : j.at("characters")) {
        auto kind = kind_from_name(name.get<std::string>());
        if (!kind) throw IoError("unknown character kind: " + name.get<std::string>());
        g.characters.push_back(*kind);
    }
    auto loc = location_from_name(j.at("location").get<std::string>());
    if (!loc) throw IoError("unknown location: " + j.at("location").get<std::string>());
    g.location = *loc;
    return g;
}

}  // namespace

std::string dilemma_to_json_line(const Dilemma& d) {
    ordered_json j;
    j["id"] = d.id;
    j["focal"] = std::string(dimension_name(d.focal));
    j["side_a"] = group_to_json(d.side_a);
    j["side_b"] = group_to_json(d.side_b);
    j["stay_kills"] = std::string(side_name(d.stay_kills));
    j["seed_trace"] = {{"seed", d.seed_trace.seed}, {"index", d.seed_trace.index}};
    return j.dump();
}

Dilemma dilemma_from_json_line(const std::string& line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad dilemma record: ") + e.what());
    }
    try {
        Dilemma d;
        d.id = j.at("id").get<std::string>();
        auto focal = dimension_from_name(j.at("focal").get<std::string>());
        if (!focal) throw IoError("unknown dimension: " + j.at("focal").get<std::string>());
        d.focal = *focal;
        d.side_a = group_from_json(j.at("side_a"));
        d.side_b = group_from_json(j.at("side_b"));
        d.stay_kills = j.at("stay_kills").get<std::string>() == "A" ? Side::A : Side::B;
        d.seed_trace.seed = j.at("seed_trace").at("seed").get<std::uint64_t>();
        d.seed_trace.index = j.at("seed_trace").at("index").get<std::uint64_t>();
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad dilemma record: ") + e.what());
    }
}

void write_batch(const std::filesystem::path& path, const std::vector<Dilemma>& batch) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    out << kDilemmaSchemaHeader << '\n';
    for (const Dilemma& d : batch) out << dilemma_to_json_line(d) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Dilemma> read_batch(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty scenario file: " + path.string());
    if (trim_copy(line) != kDilemmaSchemaHeader)
        throw IoError("unexpected scenario schema header in " + path.string());
    std::vector<Dilemma> batch;
    while (std::getline(in, line)) {
        if (trim_copy(line).empty()) continue;
        batch.push_back(dilemma_from_json_line(line));
    }
    return batch;
}

}  // namespace mmeval
