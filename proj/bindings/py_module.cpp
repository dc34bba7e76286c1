#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <map>
#include <string>

#include "mmeval/agents.hpp"
#include "mmeval/analysis.hpp"
#include "mmeval/errors.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/rng.hpp"
#include "mmeval/scenario.hpp"
#include "mmeval/util.hpp"

namespace py = pybind11;
using namespace mmeval;

namespace {

SyntheticUtilityParams params_from_dict(const std::map<std::string, double>& weights,
                                        double temperature) {
    SyntheticUtilityParams p;
    for (const auto& [name, w] : weights) {
        const auto dim = dimension_from_name(name);
        if (!dim) throw ConfigError("unknown dimension: " + name);
        p.weight(*dim) = w;
    }
    p.noise_temperature = temperature;
    return p;
}

std::array<double, 9> array9(const std::vector<double>& v) {
    if (v.size() != 9) throw ConfigError("expected 9 values, one per dimension");
    std::array<double, 9> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "moral dilemma generation, agent scoring, and preference statistics";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<IoError>(m, "IoError");
    py::register_exception<AnalysisError>(m, "AnalysisError");

    py::enum_<Dimension>(m, "Dimension")
        .value("Intervention", Dimension::Intervention)
        .value("RelationToAV", Dimension::RelationToAV)
        .value("Gender", Dimension::Gender)
        .value("Fitness", Dimension::Fitness)
        .value("SocialStatus", Dimension::SocialStatus)
        .value("Law", Dimension::Law)
        .value("Age", Dimension::Age)
        .value("NumCharacters", Dimension::NumCharacters)
        .value("Species", Dimension::Species);

    py::enum_<Side>(m, "Side").value("A", Side::A).value("B", Side::B);

    py::enum_<Location>(m, "Location")
        .value("Passengers", Location::Passengers)
        .value("PedestriansLegal", Location::PedestriansLegal)
        .value("PedestriansIllegal", Location::PedestriansIllegal);

    py::class_<OutcomeGroup>(m, "OutcomeGroup")
        .def_property_readonly("characters",
                               [](const OutcomeGroup& g) {
                                   std::vector<std::string> names;
                                   for (CharacterKind k : g.characters)
                                       names.emplace_back(kind_name(k));
                                   return names;
                               })
        .def_readonly("location", &OutcomeGroup::location)
        .def("__len__", [](const OutcomeGroup& g) { return g.characters.size(); });

    py::class_<Dilemma>(m, "Dilemma")
        .def_readonly("id", &Dilemma::id)
        .def_readonly("focal", &Dilemma::focal)
        .def_readonly("side_a", &Dilemma::side_a)
        .def_readonly("side_b", &Dilemma::side_b)
        .def_readonly("stay_kills", &Dilemma::stay_kills)
        .def("__repr__", [](const Dilemma& d) {
            return "<Dilemma " + d.id + " focal=" + std::string(dimension_name(d.focal)) + ">";
        });

    py::class_<PersonaSpec>(m, "PersonaSpec")
        .def_readonly("id", &PersonaSpec::id)
        .def_readonly("group_label", &PersonaSpec::group_label)
        .def_readonly("detail_pool", &PersonaSpec::detail_pool)
        .def_property_readonly(
            "category", [](const PersonaSpec& p) { return std::string(category_name(p.category)); })
        .def("is_baseline", &PersonaSpec::is_baseline)
        .def("__repr__", [](const PersonaSpec& p) { return "<PersonaSpec " + p.id + ">"; });

    py::class_<PromptBundle>(m, "PromptBundle")
        .def_readonly("persona_id", &PromptBundle::persona_id)
        .def_readonly("dilemma_id", &PromptBundle::dilemma_id)
        .def_readonly("case1_side", &PromptBundle::case1_side)
        .def_readonly("text", &PromptBundle::text);

    py::class_<Verdict>(m, "Verdict")
        .def_property_readonly("kind",
                               [](const Verdict& v) { return std::string(verdict_name(v.kind)); })
        .def_property_readonly("reason",
                               [](const Verdict& v) -> py::object {
                                   if (!v.reason) return py::none();
                                   return py::str(std::string(invalid_reason_name(*v.reason)));
                               })
        .def("is_choice", &Verdict::is_choice)
        .def("__repr__", [](const Verdict& v) {
            std::string s = "<Verdict " + std::string(verdict_name(v.kind));
            if (v.reason) s += "/" + std::string(invalid_reason_name(*v.reason));
            return s + ">";
        });

    m.def(
        "generate_dilemma",
        [](Dimension focal, std::uint64_t seed, std::uint64_t index) {
            return generate_dilemma(focal, SeedTrace{seed, index});
        },
        py::arg("focal"), py::arg("seed"), py::arg("index") =0,
        "One dilemma contrasting the given dimension; deterministic in (seed, index).");

    m.def("generate_batch", &generate_batch, py::arg("count"), py::arg("seed"),
          "Round-robin batch over all nine dimensions; count must be >= 9.");

    m.def(
        "validate_dilemma",
        [](const Dilemma& d) { return validate_dilemma(d).violations; }, py::arg("dilemma"),
        "List of invariant violations; empty means the dilemma is well-formed.");

    m.def(
        "persona_catalog", [] { return persona_catalog(); },
        "All fifteen persona specs (baseline plus seven contrasting pairs).");

    m.def(
        "compose_preamble",
        [](const PersonaSpec& p, std::uint64_t seed) {
            Rng rng(seed);
            return compose_preamble(p, rng);
        },
        py::arg("persona"), py::arg("seed") = 0,
        "Persona preamble sentence; empty for the baseline persona.");

    m.def("render_vignette", &render_vignette, py::arg("dilemma"), py::arg("case1_side") = Side::A,
          "The dilemma as presented to an agent, with the given side as Case 1.");

    m.def("make_bundle", &make_bundle, py::arg("persona"), py::arg("dilemma"),
          py::arg("render_seed"),
          "Full prompt for one persona/dilemma cell; case order is drawn from render_seed.");

    m.def(
        "parse_response", [](const std::string& text) { return parse_response(text); },
        py::arg("text"), "Classify an agent reply as Choice1, Choice2, or Invalid with reason.");

    m.def(
        "side_utility",
        [](const Dilemma& d, Side side, const std::map<std::string, double>& weights) {
            return side_utility(params_from_dict(weights, 0.0), d, side);
        },
        py::arg("dilemma"), py::arg("side"), py::arg("weights"),
        "Synthetic utility of sparing one side under per-dimension weights.");

    m.def(
        "synthetic_choice_probability",
        [](const Dilemma& d, const std::map<std::string, double>& weights, double temperature) {
            return synthetic_choice_probability(params_from_dict(weights, temperature), d);
        },
        py::arg("dilemma"), py::arg("weights"), py::arg("temperature") = 0.0,
        "Probability the synthetic agent spares side A (logistic in the utility gap).");

    m.def(
        "estimate_amce",
        [](const std::vector<bool>& spared_preferred, Dimension dimension, int resamples,
           std::uint64_t seed) {
            const AmceEstimate e =
                estimate_amce(spared_preferred, dimension, BootstrapParams{resamples, seed}, 0);
            py::dict out;
            out["dimension"] = std::string(dimension_name(e.dimension));
            out["n_valid"] = e.n_valid;
            out["p_spare"] = e.p_spare;
            out["amce"] = e.amce;
            out["se"] = e.se;
            out["ci_low"] = e.ci_low;
            out["ci_high"] = e.ci_high;
            return out;
        },
        py::arg("spared_preferred"), py::arg("dimension") = Dimension::Intervention,
        py::arg("resamples") = 2000, py::arg("seed") = 1,
        "2*p-1 effect estimate with a seeded percentile bootstrap interval.");

    m.def(
        "mdd",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return mdd(array9(a), array9(b));
        },
        py::arg("a"), py::arg("b"),
        "Euclidean distance between two nine-dimension effect profiles.");

    m.def(
        "culture_weighted_amce",
        [](const std::vector<std::tuple<std::string, std::vector<double>, double>>& rows,
           const std::string& region) {
            std::vector<CountryAmce> countries;
            for (const auto& [country, amce, n] : rows)
                countries.push_back({country, array9(amce), n});
            const Region r = lower_copy(region) == "eastern" ? Region::Eastern : Region::Western;
            const auto out = culture_weighted_amce(countries, r);
            return std::vector<double>(out.begin(), out.end());
        },
        py::arg("countries"), py::arg("region"),
        "Response-count-weighted mean profile over (country, amce[9], n) rows in a region.");

    m.def(
        "dimension_names",
        [] {
            std::vector<std::string> names;
            for (Dimension d : kAllDimensions) names.emplace_back(dimension_name(d));
            return names;
        },
        "Dimension names in canonical order.");
}
