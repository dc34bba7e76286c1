#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmeval/agents.hpp"
#include "mmeval/analysis.hpp"
#include "mmeval/errors.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/report_io.hpp"
#include "mmeval/rng.hpp"
#include "mmeval/runner.hpp"
#include "mmeval/scenario.hpp"
#include "mmeval/util.hpp"

using namespace mmeval;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<bool> bits(std::size_t trues, std::size_t falses) {
    std::vector<bool> v(trues, true);
    v.insert(v.end(), falses, false);
    return v;
}

AgentResponse resp(const std::string& persona, const std::string& dilemma, Side case1,
                   Verdict verdict) {
    AgentResponse r;
    r.persona_id = persona;
    r.dilemma_id = dilemma;
    r.case1_side = case1;
    r.verdict = verdict;
    return r;
}

/// AmceVector with fixed per-dimension values; NaN marks an undefined cell.
AmceVector make_vec(const std::string& id, const std::array<double, 9>& values) {
    AmceVector v;
    v.persona_id = id;
    for (std::size_t i = 0; i < 9; ++i) {
        AmceEstimate& e = v.dims[i];
        e.dimension = static_cast<Dimension>(i);
        if (std::isnan(values[i])) {
            e.n_valid = 0;
            e.p_spare = e.amce = e.se = e.ci_low = e.ci_high = kNan;
        } else {
            e.n_valid = 100;
            e.amce = values[i];
            e.p_spare = (values[i] + 1.0) / 2.0;
        }
        v.n_total += 100;
        v.n_valid += e.n_valid;
    }
    return v;
}

std::array<double, 9> filled(double x) {
    std::array<double, 9> a;
    a.fill(x);
    return a;
}

/// Deterministic in-memory run of one agent over a batch for a set of personas.
std::vector<AgentResponse> play(const std::vector<Dilemma>& dilemmas,
                                const std::vector<PersonaSpec>& personas, Agent& agent,
                                std::uint64_t batch_seed) {
    std::vector<AgentResponse> out;
    for (const PersonaSpec& p : personas) {
        for (const Dilemma& d : dilemmas) {
            const PromptBundle b =
                make_bundle(p, d, render_seed_for(batch_seed, p.id, d.id));
            out.push_back(agent.query(b, d));
        }
    }
    return out;
}

std::vector<PersonaSpec> political_trio() {
    const auto& catalog = persona_catalog();
    return {*find_persona(catalog, "baseline"), *find_persona(catalog, "conservative"),
            *find_persona(catalog, "progressive")};
}

}  // namespace

TEST_CASE("amce estimates behave at the extremes") {
    const BootstrapParams params{500, 42};

    const AmceEstimate all_yes = estimate_amce(bits(50, 0), Dimension::Gender, params, 1);
    CHECK(all_yes.defined());
    CHECK(all_yes.n_valid == 50);
    CHECK(all_yes.p_spare == 1.0);
    CHECK(all_yes.amce == 1.0);
    CHECK(all_yes.se == 0.0);
    CHECK(all_yes.ci_low == 1.0);
    CHECK(all_yes.ci_high == 1.0);

    const AmceEstimate all_no = estimate_amce(bits(0, 50), Dimension::Gender, params, 1);
    CHECK(all_no.amce == -1.0);
    CHECK(all_no.ci_low == -1.0);
    CHECK(all_no.ci_high == -1.0);

    const AmceEstimate even = estimate_amce(bits(30, 30), Dimension::Law, params, 2);
    CHECK(even.p_spare == 0.5);
    CHECK(even.amce == 0.0);
    CHECK(even.se > 0.08);  // binomial theory says about 0.129
    CHECK(even.se < 0.20);
    CHECK(even.ci_low <= 0.0);
    CHECK(even.ci_high >= 0.0);

    const AmceEstimate empty = estimate_amce({}, Dimension::Age, params, 3);
    CHECK(!empty.defined());
    CHECK(std::isnan(empty.amce));
    CHECK(std::isnan(empty.se));
    CHECK(std::isnan(empty.ci_low));
}

TEST_CASE("amce bootstrap is order invariant and seeded") {
    const BootstrapParams params{400, 7};
    std::vector<bool> sorted_obs = bits(13, 27);
    std::vector<bool> shuffled = sorted_obs;
    Rng rng(3);
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);

    const AmceEstimate a = estimate_amce(sorted_obs, Dimension::Species, params, 9);
    const AmceEstimate b = estimate_amce(shuffled, Dimension::Species, params, 9);
    CHECK(a.amce == b.amce);
    CHECK(a.se == b.se);  // depends only on (n, hits), not observation order
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);

    const AmceEstimate c = estimate_amce(sorted_obs, Dimension::Species, params, 10);
    CHECK(c.amce == a.amce);
    CHECK(c.se != a.se);  // different stream, different resamples

    // point estimate always sits inside the reported interval
    CHECK(a.ci_low <= a.amce);
    CHECK(a.amce <= a.ci_high);
}

TEST_CASE("amce bootstrap tracks binomial theory") {
    const BootstrapParams params{2000, 11};
    const std::size_t n = 400, hits = 276;
    const AmceEstimate e = estimate_amce(bits(hits, n - hits), Dimension::Fitness, params, 4);
    const double p = static_cast<double>(hits) / n;
    CHECK(e.amce == doctest::Approx(2.0 * p - 1.0));
    const double theory_se = 2.0 * std::sqrt(p * (1 - p) / n);
    CHECK(std::fabs(e.se - theory_se) < 0.15 * theory_se);
    const double width = e.ci_high - e.ci_low;
    CHECK(width > 3.2 * theory_se);  // approximately 2 * 1.96 * se
    CHECK(width < 4.6 * theory_se);
}

TEST_CASE("vector estimation joins responses through the case order") {
    const Dilemma g1 = generate_dilemma(Dimension::Gender, {50, 0});
    const Dilemma g2 = generate_dilemma(Dimension::Gender, {50, 1});
    const Dilemma a1 = generate_dilemma(Dimension::Age, {50, 2});
    const std::vector<Dilemma> dilemmas = {g1, g2, a1};

    const std::vector<AgentResponse> responses = {
        resp("p", g1.id, Side::A, Verdict::choice1()),   // chose case1 = side A
        resp("p", g2.id, Side::B, Verdict::choice1()),   // chose case1 = side B
        resp("p", a1.id, Side::B, Verdict::choice2()),   // chose case2 = side A
        resp("p", g1.id, Side::A, Verdict::invalid(InvalidReason::Refusal)),
        resp("q", g1.id, Side::A, Verdict::choice2()),   // other persona, ignored
    };

    const BootstrapParams params{100, 1};
    const AmceVector v = estimate_amce_vector(dilemmas, responses, "p", params);
    CHECK(v.n_total == 4);
    CHECK(v.n_valid == 3);
    CHECK(v.valid_rate() == doctest::Approx(0.75));

    CHECK(v.dim(Dimension::Gender).n_valid == 2);
    CHECK(v.dim(Dimension::Gender).p_spare == doctest::Approx(0.5));  // one spared, one not
    CHECK(v.dim(Dimension::Gender).amce == doctest::Approx(0.0));
    CHECK(v.dim(Dimension::Age).n_valid == 1);
    CHECK(v.dim(Dimension::Age).amce == doctest::Approx(1.0));
    CHECK(!v.complete());
    CHECK(v.missing().size() == 7);

    const std::vector<AgentResponse> bad = {resp("p", "d0-999999", Side::A, Verdict::choice1())};
    CHECK_THROWS_AS(estimate_amce_vector(dilemmas, bad, "p", params), AnalysisError);
}

TEST_CASE("valid rates count transport errors in the denominator") {
    const Dilemma d = generate_dilemma(Dimension::Law, {51, 0});
    std::vector<AgentResponse> responses;
    for (int i = 0; i < 47; ++i) responses.push_back(resp("p", d.id, Side::A, Verdict::choice1()));
    responses.push_back(resp("p", d.id, Side::A, Verdict::invalid(InvalidReason::Refusal)));
    responses.push_back(resp("p", d.id, Side::A, Verdict::invalid(InvalidReason::NoExplicitChoice)));
    responses.push_back(resp("p", d.id, Side::A, Verdict::invalid(InvalidReason::TransportError)));

    const AmceVector v = estimate_amce_vector({d}, responses, "p", {50, 1});
    CHECK(v.n_total == 50);
    CHECK(v.n_valid == 47);
    CHECK(v.valid_rate() == doctest::Approx(0.94));

    const AmceVector none = estimate_amce_vector({d}, {}, "p", {50, 1});
    CHECK(std::isnan(none.valid_rate()));
}

TEST_CASE("synthetic agent amce approaches the analytic probability") {
    std::vector<Dilemma> dilemmas;
    for (int i = 0; i < 300; ++i)
        dilemmas.push_back(generate_dilemma(Dimension::Gender, {321, static_cast<std::uint64_t>(i)}));

    AgentConfig cfg;
    cfg.kind = AgentKind::SyntheticUtility;
    cfg.seed = 5;
    cfg.synthetic.weight(Dimension::Gender) = 0.6;
    cfg.synthetic.noise_temperature = 1.5;
    auto agent = make_agent(cfg);

    const std::vector<PersonaSpec> personas = {persona_catalog().front()};
    const auto responses = play(dilemmas, personas, *agent, 321);

    const AmceVector v = estimate_amce_vector(dilemmas, responses, "baseline", {2000, 1});
    const double p = 1.0 / (1.0 + std::exp(-1.2 / 1.5));  // every pair has mean-score gap 1.2
    const double expect = 2.0 * p - 1.0;
    const double sd = 2.0 * std::sqrt(p * (1 - p) / 300.0);
    CHECK(v.dim(Dimension::Gender).n_valid == 300);
    CHECK(std::fabs(v.dim(Dimension::Gender).amce - expect) < 4.0 * sd);
    CHECK(std::fabs(v.dim(Dimension::Gender).se - sd) < 0.25 * sd);
}

TEST_CASE("distance is plain euclidean over nine coordinates") {
    Rng rng(88);
    for (int rep = 0; rep < 20; ++rep) {
        std::array<double, 9> a, b;
        double sum = 0;
        for (std::size_t i = 0; i < 9; ++i) {
            a[i] = rng.uniform01() * 2 - 1;
            b[i] = rng.uniform01() * 2 - 1;
            sum += (a[i] - b[i]) * (a[i] - b[i]);
        }
        CHECK(std::fabs(mdd(a, b) - std::sqrt(sum)) <= 1e-12);
        CHECK(mdd(a, b) == mdd(b, a));
        CHECK(mdd(a, a) == 0.0);
    }

    // uniform gap 0.16 across nine coordinates: sqrt(9 * 0.16^2) = 0.48
    CHECK(std::fabs(mdd(filled(0.36), filled(0.20)) - 0.48) <= 1e-12);

    std::array<double, 9> holed = filled(0.1);
    holed[static_cast<std::size_t>(Dimension::Gender)] = kNan;
    try {
        mdd(holed, filled(0.0));
        FAIL_CHECK("expected AnalysisError");
    } catch (const AnalysisError& e) {
        const std::string what = e.what();
        CHECK(what.find("missing dimensions") != std::string::npos);
        CHECK(what.find("Gender") != std::string::npos);
    }
}

TEST_CASE("relabeling the cases negates the whole profile") {
    const auto dilemmas = generate_batch(90, 7);
    AgentConfig cfg;
    cfg.kind = AgentKind::Coin;
    cfg.seed = 3;
    auto agent = make_agent(cfg);
    const std::vector<PersonaSpec> personas = {persona_catalog().front()};
    auto responses = play(dilemmas, personas, *agent, 7);

    const BootstrapParams params{200, 1};
    const AmceVector v = estimate_amce_vector(dilemmas, responses, "baseline", params);
    REQUIRE(v.complete());

    for (AgentResponse& r : responses) {
        if (r.verdict == Verdict::choice1()) r.verdict = Verdict::choice2();
        else if (r.verdict == Verdict::choice2()) r.verdict = Verdict::choice1();
    }
    const AmceVector flipped = estimate_amce_vector(dilemmas, responses, "baseline", params);
    double norm_sq = 0;
    for (Dimension d : kAllDimensions) {
        CHECK(flipped.dim(d).amce == doctest::Approx(-v.dim(d).amce).epsilon(1e-12));
        norm_sq += v.dim(d).amce * v.dim(d).amce;
    }
    CHECK(std::fabs(mdd(v, flipped) - 2.0 * std::sqrt(norm_sq)) <= 1e-9);
}

TEST_CASE("culture weighting averages profiles by response count") {
    // power-of-two count keeps n*v/n bit-exact, so identity holds exactly
    CHECK(culture_weighted_amce({{"Germany", filled(0.3), 16}}, Region::Western) == filled(0.3));

    const auto two = culture_weighted_amce(
        {{"United States", filled(0.5), 100}, {"United Kingdom", filled(0.1), 300}},
        Region::Western);
    for (double v : two) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    // mixed-region set against a hand-computed mean, eastern countries excluded
    std::vector<CountryAmce> countries;
    Rng rng(14);
    const std::vector<std::string> western = {"usa", "Brazil", "Poland"};
    const std::vector<std::string> eastern = {"Japan", "China", "uae"};
    std::array<double, 9> acc{};
    double total = 0;
    for (const std::string& name : western) {
        CountryAmce c;
        c.country = name;
        c.n = 10 + rng.below(90);
        for (double& v : c.amce) v = rng.uniform01() * 2 - 1;
        for (std::size_t i = 0; i < 9; ++i) acc[i] += c.n * c.amce[i];
        total += c.n;
        countries.push_back(c);
    }
    for (const std::string& name : eastern) {
        CountryAmce c;
        c.country = name;
        c.n = 50;
        c.amce = filled(0.9);
        countries.push_back(c);
    }
    const auto got = culture_weighted_amce(countries, Region::Western);
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::fabs(got[i] - acc[i] / total) <= 1e-12);

    // scaling every count by the same factor changes nothing
    std::vector<CountryAmce> scaled = countries;
    for (CountryAmce& c : scaled) c.n *= 7;
    const auto rescaled = culture_weighted_amce(scaled, Region::Western);
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::fabs(rescaled[i] - got[i]) <= 1e-12);

    CHECK_THROWS_AS(
        culture_weighted_amce({{"Germany", filled(0.1), 10}}, Region::Eastern), AnalysisError);
    CHECK_THROWS_AS(
        culture_weighted_amce({{"Germany", filled(0.1), 0}}, Region::Western), AnalysisError);
}

TEST_CASE("country names and codes map to their regions") {
    CHECK(region_of_country("United States") == Region::Western);
    CHECK(region_of_country("usa") == Region::Western);
    CHECK(region_of_country("  UNITED   KINGDOM ") == Region::Western);
    CHECK(region_of_country("Great Britain") == Region::Western);
    CHECK(region_of_country("DEU") == Region::Western);
    CHECK(region_of_country("Japan") == Region::Eastern);
    CHECK(region_of_country("JPN") == Region::Eastern);
    CHECK(region_of_country("Hong Kong") == Region::Eastern);
    CHECK(region_of_country("South Korea") == Region::Eastern);
    CHECK(region_of_country("United Arab Emirates") == Region::Eastern);
    CHECK(!region_of_country("France").has_value());
    CHECK(!region_of_country("").has_value());
}

TEST_CASE("subgroup labels normalize to snake case") {
    CHECK(normalize_subgroup("Very Religious") == "very_religious");
    CHECK(normalize_subgroup("Less-Educated") == "less_educated");
    CHECK(normalize_subgroup(" Higher  Income ") == "higher_income");
    CHECK(normalize_subgroup("AGGREGATE") == "aggregate");
    CHECK(normalize_subgroup("baseline") == "baseline");
}

TEST_CASE("human baseline csv ingestion") {
    const auto path = std::filesystem::temp_directory_path() / "mmeval_baseline.csv";
    std::string csv = "Subgroup,Dimension,AMCE,N,Country\n";
    const std::array<double, 9> agg = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    for (Dimension d : kAllDimensions) {
        csv += "aggregate," + std::string(dimension_name(d)) + "," +
               std::to_string(agg[static_cast<std::size_t>(d)]) + ",1000,\n";
    }
    csv += "Male,Gender,-0.25,480,\n";
    csv += "Male,Age,0.35,480,\n";
    csv += ",Gender,0.4,900,United States\n";
    csv += ",Gender,0.2,700,Japan\n";
    csv += ",Age,0.5,900,United States\n";
    write_text_file(path, csv);

    const HumanBaseline hb = load_human_baseline(path);
    REQUIRE(hb.has_subgroup("aggregate"));
    for (Dimension d : kAllDimensions)
        CHECK(hb.subgroup_amce.at("aggregate")[static_cast<std::size_t>(d)] ==
              doctest::Approx(agg[static_cast<std::size_t>(d)]));
    CHECK(hb.subgroup_n.at("aggregate") == 1000);

    REQUIRE(hb.has_subgroup("male"));
    const auto& male = hb.subgroup_amce.at("male");
    CHECK(male[static_cast<std::size_t>(Dimension::Gender)] == doctest::Approx(-0.25));
    CHECK(male[static_cast<std::size_t>(Dimension::Age)] == doctest::Approx(0.35));
    CHECK(std::isnan(male[static_cast<std::size_t>(Dimension::Law)]));

    REQUIRE(hb.countries.size() == 2);
    CHECK(hb.countries[0].country == "United States");
    CHECK(hb.countries[0].n == 900);
    CHECK(hb.countries[0].amce[static_cast<std::size_t>(Dimension::Gender)] ==
          doctest::Approx(0.4));
    CHECK(hb.countries[0].amce[static_cast<std::size_t>(Dimension::Age)] == doctest::Approx(0.5));
    CHECK(std::isnan(hb.countries[0].amce[static_cast<std::size_t>(Dimension::Law)]));
    CHECK(hb.countries[1].country == "Japan");

    write_text_file(path, "subgroup,dimension\naggregate,Gender\n");
    CHECK_THROWS_AS(load_human_baseline(path), ConfigError);
    write_text_file(path, "subgroup,dimension,amce\naggregate,Height,0.1\n");
    CHECK_THROWS_AS(load_human_baseline(path), ConfigError);
    write_text_file(path, "subgroup,dimension,amce\naggregate,Gender,1.5\n");
    CHECK_THROWS_AS(load_human_baseline(path), ConfigError);
    write_text_file(path, "subgroup,dimension,amce\naggregate,Gender,abc\n");
    CHECK_THROWS_AS(load_human_baseline(path), ConfigError);
    write_text_file(path, "subgroup,dimension,amce\n,Gender,0.5\n");
    CHECK_THROWS_AS(load_human_baseline(path), ConfigError);
    CHECK_THROWS_AS(load_human_baseline(path.string() + ".missing"), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("flip detection uses strict epsilon on both sides") {
    std::array<double, 9> base_vals = filled(0.3);
    const AmceVector baseline = make_vec("baseline", base_vals);

    // identical persona: cells counted, no flips
    FlipSummary s = detect_flips({baseline, make_vec("same", base_vals)}, baseline, std::nullopt,
                                 0.02);
    CHECK(s.cells_vs_baseline == 9);
    CHECK(s.vs_baseline.empty());
    CHECK(s.pct_vs_baseline == 0.0);
    CHECK(!s.has_reference);

    // one sign reversal
    std::array<double, 9> rebel_vals = base_vals;
    rebel_vals[static_cast<std::size_t>(Dimension::Law)] = -0.2;
    s = detect_flips({make_vec("rebel", rebel_vals)}, baseline, std::nullopt, 0.02);
    REQUIRE(s.vs_baseline.size() == 1);
    CHECK(s.vs_baseline[0].persona_id == "rebel");
    CHECK(s.vs_baseline[0].dimension == Dimension::Law);
    CHECK(s.vs_baseline[0].from_amce == doctest::Approx(0.3));
    CHECK(s.vs_baseline[0].to_amce == doctest::Approx(-0.2));
    CHECK(s.pct_vs_baseline == doctest::Approx(100.0 / 9.0));

    // strict threshold: magnitude exactly epsilon does not flip
    const AmceVector tiny_base = make_vec("baseline", filled(0.02));
    s = detect_flips({make_vec("p", filled(-0.02))}, tiny_base, std::nullopt, 0.02);
    CHECK(s.vs_baseline.empty());
    s = detect_flips({make_vec("p", filled(-0.021))}, make_vec("baseline", filled(0.021)),
                     std::nullopt, 0.02);
    CHECK(s.vs_baseline.size() == 9);
    CHECK(s.pct_vs_baseline == doctest::Approx(100.0));

    // undefined cells drop out of the denominator
    std::array<double, 9> holed = filled(-0.4);
    holed[0] = kNan;
    holed[3] = kNan;
    s = detect_flips({make_vec("holed", holed)}, baseline, std::nullopt, 0.02);
    CHECK(s.cells_vs_baseline == 7);
    CHECK(s.vs_baseline.size() == 7);

    // reference comparison skips NaN reference cells
    std::array<double, 9> ref = filled(-0.5);
    ref[static_cast<std::size_t>(Dimension::Species)] = kNan;
    s = detect_flips({make_vec("p", filled(0.3))}, baseline, ref, 0.02);
    CHECK(s.has_reference);
    CHECK(s.cells_vs_reference == 8);
    CHECK(s.vs_reference.size() == 8);
    CHECK(s.pct_vs_reference == doctest::Approx(100.0));
}

TEST_CASE("deviations are signed cell shifts from the baseline") {
    const AmceVector baseline = make_vec("baseline", filled(0.1));
    std::array<double, 9> up = filled(0.25);
    std::array<double, 9> down = filled(-0.05);
    down[2] = kNan;
    const auto cells = persona_deviation(
        {baseline, make_vec("up", up), make_vec("down", down)}, baseline);
    REQUIRE(cells.size() == 17);  // 9 defined cells + 8 (one NaN skipped)
    for (const DeviationCell& c : cells) {
        if (c.persona_id == "up") CHECK(c.delta == doctest::Approx(0.15));
        else CHECK(c.delta == doctest::Approx(-0.15));
    }

    CHECK(pair_variance(0.3, -0.3) == doctest::Approx(0.09));
    CHECK(pair_variance(-0.3, 0.3) == doctest::Approx(0.09));
    CHECK(pair_variance(3.0, 1.0) == doctest::Approx(1.0));
    CHECK(pair_variance(0.4, 0.4) == doctest::Approx(0.0));
}

TEST_CASE("report assembly from a deterministic run") {
    const auto dilemmas = generate_batch(90, 4242);
    AgentConfig cfg;
    cfg.kind = AgentKind::SyntheticUtility;
    cfg.seed = 9;
    cfg.synthetic.weight(Dimension::Gender) = 0.4;
    cfg.synthetic.weight(Dimension::Age) = 0.3;
    cfg.synthetic.noise_temperature = 0.8;
    auto agent = make_agent(cfg);
    const auto personas = political_trio();
    const auto records = play(dilemmas, personas, *agent, 4242);

    AnalysisParams params;
    params.bootstrap_n = 200;
    params.bootstrap_seed = 4242;

    const AnalysisReport report =
        build_report(dilemmas, records, "run0", personas, params, nullptr);
    REQUIRE(report.vectors.size() == 3);
    CHECK(report.vectors[0].persona_id == "baseline");
    CHECK(report.vectors[0].complete());
    CHECK(report.alignment_rows.empty());
    CHECK(!report.flips.has_reference);
    CHECK(report.flips.epsilon == params.flip_epsilon);
    CHECK(report.culture.empty());
    REQUIRE(report.mdd_rows.size() == 1);
    CHECK(report.mdd_rows[0].category == "Political");
    CHECK(report.mdd_rows[0].persona_a == "conservative");
    CHECK(report.mdd_rows[0].persona_b == "progressive");
    CHECK(report.mdd_rows[0].value ==
          doctest::Approx(mdd(report.vectors[1], report.vectors[2])).epsilon(1e-12));
    CHECK(report.deviations.size() == 18);
    REQUIRE(report.category_variance.size() == 9);
    {
        std::map<std::pair<std::string, Dimension>, double> delta;
        for (const DeviationCell& c : report.deviations) delta[{c.persona_id, c.dimension}] = c.delta;
        for (const CategoryVarianceRow& row : report.category_variance) {
            CHECK(row.category == "Political");
            const double expect = pair_variance(delta.at({"conservative", row.dimension}),
                                                delta.at({"progressive", row.dimension}));
            CHECK(row.variance == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    bool warned = false;
    for (const std::string& w : report.warnings)
        if (w.find("no human baseline provided") != std::string::npos) warned = true;
    CHECK(warned);

    // identical inputs produce identical serialized bytes
    const AnalysisReport again =
        build_report(dilemmas, records, "run0", personas, params, nullptr);
    CHECK(report_to_json_text(again) == report_to_json_text(report));
}

TEST_CASE("report assembly against a human baseline") {
    const auto dilemmas = generate_batch(45, 9000);
    AgentConfig cfg;
    cfg.kind = AgentKind::SyntheticUtility;
    cfg.seed = 2;
    cfg.synthetic.weight(Dimension::Species) = 1.0;
    auto agent = make_agent(cfg);
    const auto personas = political_trio();
    const auto records = play(dilemmas, personas, *agent, 9000);

    AnalysisParams params;
    params.bootstrap_n = 100;

    const AnalysisReport plain =
        build_report(dilemmas, records, "run1", personas, params, nullptr);
    REQUIRE(plain.vectors.size() == 3);

    HumanBaseline hb;
    hb.subgroup_amce["aggregate"] = plain.vectors[0].values();  // equals the run's baseline
    hb.subgroup_amce["conservative"] = filled(0.05);
    hb.countries.push_back({"United States", filled(0.2), 800});
    hb.countries.push_back({"Japan", filled(-0.1), 600});

    const AnalysisReport report =
        build_report(dilemmas, records, "run1", personas, params, &hb);

    REQUIRE(report.alignment_rows.size() == 2);
    CHECK(report.alignment_rows[0].persona_id == "baseline");
    CHECK(report.alignment_rows[0].subgroup == "aggregate");
    CHECK(report.alignment_rows[0].distance == 0.0);  // human profile equals the agent's
    CHECK(report.alignment_rows[1].persona_id == "conservative");
    CHECK(report.alignment_rows[1].subgroup == "conservative");
    CHECK(report.alignment_rows[1].distance ==
          doctest::Approx(alignment_distance(report.vectors[1].values(), filled(0.05))));

    bool skipped_progressive = false;
    for (const std::string& w : report.warnings)
        if (w.find("no human subgroup for persona progressive") != std::string::npos)
            skipped_progressive = true;
    CHECK(skipped_progressive);

    CHECK(report.flips.has_reference);
    CHECK(report.flips.cells_vs_reference == 18);

    REQUIRE(report.culture.size() == 2);
    CHECK(report.culture[0].region == Region::Western);
    CHECK(report.culture[0].total_n == 800);
    for (double v : report.culture[0].amce) CHECK(v == doctest::Approx(0.2));
    CHECK(report.culture[1].region == Region::Eastern);
    CHECK(report.culture[1].total_n == 600);
}

TEST_CASE("report serialization and file layout") {
    AnalysisReport report;
    report.run_id = "cafe";
    report.params.bootstrap_n = 10;
    report.params.bootstrap_seed = 2;
    std::array<double, 9> vals = filled(0.5);
    vals[4] = kNan;
    report.vectors.push_back(make_vec("baseline", vals));
    report.warnings.push_back("synthetic warning");

    const std::string text = report_to_json_text(report);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["schema"] == "report/1");
    CHECK(j["run_id"] == "cafe");
    CHECK(j["params"]["bootstrap_n"] == 10);
    CHECK(j["warnings"].size() == 1);
    const auto& amce = j["personas"][0]["amce"];
    REQUIRE(amce.size() == 9);
    CHECK(amce[4]["amce"].is_null());  // undefined cells serialize as null
    CHECK(amce[4]["n_valid"] == 0);
    CHECK(amce[0]["amce"].get<double>() == doctest::Approx(0.5));

    // format selection drives the file set
    const auto base = std::filesystem::temp_directory_path() / "mmeval_report_fmt";
    std::filesystem::remove_all(base);
    write_report(report, base / "all", ReportFormat::All);
    CHECK(std::filesystem::exists(base / "all" / "report.json"));
    CHECK(std::filesystem::exists(base / "all" / "report.md"));
    CHECK(std::filesystem::exists(base / "all" / "tables" / "amce.csv"));
    CHECK(std::filesystem::exists(base / "all" / "tables" / "valid_rates.csv"));
    CHECK(std::filesystem::exists(base / "all" / "plotdata" / "radar.csv"));
    write_report(report, base / "json", ReportFormat::Json);
    CHECK(std::filesystem::exists(base / "json" / "report.json"));
    CHECK(!std::filesystem::exists(base / "json" / "report.md"));
    CHECK(!std::filesystem::exists(base / "json" / "tables"));
    CHECK(read_text_file(base / "json" / "report.json") == text);

    CHECK(report_format_from_name("json") == ReportFormat::Json);
    CHECK(report_format_from_name("md") == ReportFormat::Markdown);
    CHECK(report_format_from_name("MARKDOWN") == ReportFormat::Markdown);
    CHECK(!report_format_from_name("pdf").has_value());

    const std::string md = report_to_markdown(report);
    CHECK(md.find("baseline") != std::string::npos);
    std::filesystem::remove_all(base);
}

TEST_CASE("report assembly warns about absent and unknown personas") {
    const auto dilemmas = generate_batch(18, 31);
    AgentConfig cfg;
    cfg.kind = AgentKind::Coin;
    auto agent = make_agent(cfg);
    const auto& catalog = persona_catalog();
    const std::vector<PersonaSpec> two = {*find_persona(catalog, "baseline"),
                                          *find_persona(catalog, "conservative")};
    auto records = play(dilemmas, two, *agent, 31);
    records.push_back(resp("ghost", dilemmas.front().id, Side::A, Verdict::choice1()));

    std::vector<PersonaSpec> declared = two;
    declared.push_back(*find_persona(catalog, "male"));

    AnalysisParams params;
    params.bootstrap_n = 50;
    const AnalysisReport report =
        build_report(dilemmas, records, "run2", declared, params, nullptr);

    CHECK(report.vectors.size() == 2);
    bool no_responses = false, unknown = false, lacks_pair = false;
    for (const std::string& w : report.warnings) {
        if (w.find("persona male has no responses") != std::string::npos) no_responses = true;
        if (w.find("unknown persona ghost") != std::string::npos) unknown = true;
        if (w.find("category Political lacks a full contrast pair") != std::string::npos)
            lacks_pair = true;
    }
    CHECK(no_responses);
    CHECK(unknown);
    CHECK(lacks_pair);
    CHECK(report.mdd_rows.empty());
}
