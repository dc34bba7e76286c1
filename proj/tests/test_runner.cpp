#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmeval/agents.hpp"
#include "mmeval/errors.hpp"
#include "mmeval/prompting.hpp"
#include "mmeval/runner.hpp"
#include "mmeval/scenario.hpp"
#include "mmeval/util.hpp"

using namespace mmeval;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("mmeval_run_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<PersonaSpec> three_personas() {
    const auto& catalog = persona_catalog();
    return {*find_persona(catalog, "baseline"), *find_persona(catalog, "male"),
            *find_persona(catalog, "female")};
}

AgentConfig coin_config(std::uint64_t seed = 11) {
    AgentConfig cfg;
    cfg.kind = AgentKind::Coin;
    cfg.seed = seed;
    return cfg;
}

// order-free content key for comparing logs produced by different schedules
std::multiset<std::string> record_keys(const std::filesystem::path& log) {
    std::multiset<std::string> keys;
    for (const AgentResponse& r : read_response_log(log).records) {
        keys.insert(r.persona_id + "|" + r.dilemma_id + "|" + std::string(side_name(r.case1_side)) +
                    "|" + r.raw_text + "|" + r.prompt_hash);
    }
    return keys;
}

std::size_t line_count(const std::filesystem::path& p) {
    const std::string text = read_text_file(p);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("render seeds depend only on their inputs") {
    const auto s = render_seed_for(9, "baseline", "d9-000001");
    CHECK(s == render_seed_for(9, "baseline", "d9-000001"));
    CHECK(s != render_seed_for(10, "baseline", "d9-000001"));
    CHECK(s != render_seed_for(9, "male", "d9-000001"));
    CHECK(s != render_seed_for(9, "baseline", "d9-000002"));
}

TEST_CASE("manifests round trip and derive ids from inputs") {
    const auto personas = three_personas();
    const AgentConfig cfg = coin_config();
    const RunManifest m = make_manifest("abc123", 9, 77, personas, cfg);
    CHECK(!m.run_id.empty());
    CHECK(!m.created_at.empty());
    CHECK(m.persona_ids == std::vector<std::string>{"baseline", "male", "female"});
    CHECK(m.agent_digest == cfg.digest());

    const RunManifest back = manifest_from_json_text(manifest_to_json_text(m));
    CHECK(back.run_id == m.run_id);
    CHECK(back.scenario_digest == m.scenario_digest);
    CHECK(back.scenario_count == m.scenario_count);
    CHECK(back.batch_seed == m.batch_seed);
    CHECK(back.persona_ids == m.persona_ids);
    CHECK(back.agent_digest == m.agent_digest);
    CHECK(back.agent_config_json == m.agent_config_json);

    // identical inputs, identical id; any input change moves the id
    CHECK(make_manifest("abc123", 9, 77, personas, cfg).run_id == m.run_id);
    CHECK(make_manifest("abc124", 9, 77, personas, cfg).run_id != m.run_id);
    CHECK(make_manifest("abc123", 9, 78, personas, cfg).run_id != m.run_id);
    CHECK(make_manifest("abc123", 9, 77, {personas[0]}, cfg).run_id != m.run_id);
    AgentConfig other = cfg;
    other.seed = 12;
    CHECK(make_manifest("abc123", 9, 77, personas, other).run_id != m.run_id);

    TempDir dir("manifest");
    const auto log = dir.path / "responses.jsonl";
    CHECK(manifest_path_for(log).filename() == "responses.jsonl.manifest.json");
    write_manifest(manifest_path_for(log), m);
    CHECK(read_manifest(manifest_path_for(log)).run_id == m.run_id);

    CHECK_THROWS_AS(manifest_from_json_text("{}"), ConfigError);
    CHECK_THROWS_AS(manifest_from_json_text("{\"schema\":\"manifest/1\"}"), ConfigError);
}

TEST_CASE("resume compatibility names every divergence") {
    const auto personas = three_personas();
    const RunManifest fresh = make_manifest("digest", 9, 1, personas, coin_config());

    auto expect = [&](RunManifest existing, const std::string& phrase) {
        try {
            check_resume_compatible(existing, fresh);
            FAIL_CHECK("expected ResumeMismatchError mentioning: ", phrase);
        } catch (const ResumeMismatchError& e) {
            const std::string what = e.what();
            INFO("message: ", what);
            CHECK(what.find(phrase) != std::string::npos);
        }
    };

    CHECK_NOTHROW(check_resume_compatible(fresh, fresh));
    RunManifest m = fresh;
    m.scenario_digest = "other";
    expect(m, "scenario file changed");
    m = fresh;
    m.scenario_count = 10;
    expect(m, "scenario count changed");
    m = fresh;
    m.batch_seed = 2;
    expect(m, "batch seed changed");
    m = fresh;
    m.persona_ids = {"baseline"};
    expect(m, "persona set changed");
    m = fresh;
    m.agent_digest = "ffff";
    expect(m, "agent config changed");

    // several divergences are all reported at once
    m = fresh;
    m.batch_seed = 2;
    m.agent_digest = "ffff";
    try {
        check_resume_compatible(m, fresh);
        FAIL_CHECK("expected ResumeMismatchError");
    } catch (const ResumeMismatchError& e) {
        const std::string what = e.what();
        CHECK(what.find("batch seed changed") != std::string::npos);
        CHECK(what.find("agent config changed") != std::string::npos);
    }
}

TEST_CASE("response records round trip through their log lines") {
    AgentResponse r;
    r.persona_id = "older";
    r.dilemma_id = "d7-000004";
    r.case1_side = Side::B;
    r.prompt_hash = "cbf29ce484222325";
    r.raw_text = "I choose Case 2.";
    r.verdict = Verdict::choice2();
    r.latency_ms = 12.5;
    r.attempt_count = 3;
    r.timestamp = "2026-01-01T00:00:00Z";

    const AgentResponse back = response_from_json_line(response_to_json_line(r));
    CHECK(back.persona_id == r.persona_id);
    CHECK(back.dilemma_id == r.dilemma_id);
    CHECK(back.case1_side == r.case1_side);
    CHECK(back.prompt_hash == r.prompt_hash);
    CHECK(back.raw_text == r.raw_text);
    CHECK(back.verdict == r.verdict);
    CHECK(back.latency_ms == r.latency_ms);
    CHECK(back.attempt_count == r.attempt_count);
    CHECK(back.timestamp == r.timestamp);

    r.verdict = Verdict::invalid(InvalidReason::TransportError);
    CHECK(response_from_json_line(response_to_json_line(r)).verdict ==
          Verdict::invalid(InvalidReason::TransportError));

    CHECK_THROWS_AS(response_from_json_line("not json"), IoError);
    CHECK_THROWS_AS(
        response_from_json_line(R"({"persona":"x","dilemma":"y","case1":"A","verdict":"Maybe"})"),
        IoError);
    CHECK_THROWS_AS(
        response_from_json_line(R"({"persona":"x","dilemma":"y","case1":"C","verdict":"Choice1"})"),
        IoError);
    CHECK_THROWS_AS(
        response_from_json_line(R"({"persona":"x","dilemma":"y","case1":"A","verdict":"Invalid"})"),
        IoError);
}

TEST_CASE("a full matrix run covers every pair exactly once") {
    TempDir dir("full");
    const auto log = dir.path / "responses.jsonl";
    const auto dilemmas = generate_batch(9, 2026);
    const auto personas = three_personas();
    const AgentConfig cfg = coin_config();
    auto agent = make_agent(cfg);
    const RunManifest manifest = make_manifest("xyz", dilemmas.size(), 2026, personas, cfg);

    const RunResult res = run_matrix(dilemmas, personas, *agent, manifest, log);
    CHECK(res.total_pairs == 27);
    CHECK(res.already_done == 0);
    CHECK(res.queried == 27);
    CHECK(line_count(log) == 28);  // header + one record per pair

    const ResponseLog parsed = read_response_log(log);
    CHECK(parsed.run_id == manifest.run_id);
    REQUIRE(parsed.records.size() == 27);
    std::set<std::pair<std::string, std::string>> pairs;
    for (const AgentResponse& r : parsed.records) {
        pairs.emplace(r.persona_id, r.dilemma_id);
        const std::uint64_t seed = render_seed_for(2026, r.persona_id, r.dilemma_id);
        const Dilemma* d = nullptr;
        for (const Dilemma& cand : dilemmas)
            if (cand.id == r.dilemma_id) d = &cand;
        REQUIRE(d != nullptr);
        const PersonaSpec* p = find_persona(personas, r.persona_id);
        REQUIRE(p != nullptr);
        const PromptBundle b = make_bundle(*p, *d, seed);
        // the log's case order and prompt hash reproduce from the manifest seed
        CHECK(r.case1_side == b.case1_side);
        CHECK(r.prompt_hash == prompt_digest(b.text));
    }
    CHECK(pairs.size() == 27);

    // records appear persona-major in the scheduling order
    for (std::size_t i = 0; i < 9; ++i) CHECK(parsed.records[i].persona_id == "baseline");
    for (std::size_t i = 9; i < 18; ++i) CHECK(parsed.records[i].persona_id == "male");

    // a second run finds nothing to do and leaves the file untouched
    const std::string bytes = read_text_file(log);
    const RunResult again = run_matrix(dilemmas, personas, *agent, manifest, log);
    CHECK(again.already_done == 27);
    CHECK(again.queried == 0);
    CHECK(read_text_file(log) == bytes);
}

TEST_CASE("limited runs resume into the identical record set") {
    const auto dilemmas = generate_batch(9, 5);
    const auto personas = three_personas();
    const AgentConfig cfg = coin_config();
    auto agent = make_agent(cfg);
    const RunManifest manifest = make_manifest("klm", dilemmas.size(), 5, personas, cfg);

    TempDir whole("whole");
    const auto full_log = whole.path / "log.jsonl";
    run_matrix(dilemmas, personas, *agent, manifest, full_log);

    TempDir parts("parts");
    const auto part_log = parts.path / "log.jsonl";
    RunOptions limited;
    limited.limit = 10;
    const RunResult first = run_matrix(dilemmas, personas, *agent, manifest, part_log, limited);
    CHECK(first.queried == 10);
    CHECK(first.already_done == 0);

    const RunResult second = run_matrix(dilemmas, personas, *agent, manifest, part_log, limited);
    CHECK(second.already_done == 10);
    CHECK(second.queried == 10);

    const RunResult rest = run_matrix(dilemmas, personas, *agent, manifest, part_log);
    CHECK(rest.already_done == 20);
    CHECK(rest.queried == 7);

    CHECK(record_keys(part_log) == record_keys(full_log));
}

TEST_CASE("worker threads produce the single-thread record set") {
    const auto dilemmas = generate_batch(18, 8);
    const auto personas = three_personas();
    const AgentConfig cfg = coin_config();
    auto agent = make_agent(cfg);
    const RunManifest manifest = make_manifest("thr", dilemmas.size(), 8, personas, cfg);

    TempDir serial("serial");
    const auto serial_log = serial.path / "log.jsonl";
    run_matrix(dilemmas, personas, *agent, manifest, serial_log);

    TempDir parallel("parallel");
    const auto parallel_log = parallel.path / "log.jsonl";
    RunOptions opts;
    opts.workers = 4;
    std::atomic<int> callbacks{0};
    opts.on_response = [&](const AgentResponse&) { ++callbacks; };
    const RunResult res = run_matrix(dilemmas, personas, *agent, manifest, parallel_log, opts);
    CHECK(res.queried == 54);
    CHECK(callbacks.load() == 54);
    CHECK(record_keys(parallel_log) == record_keys(serial_log));
}

TEST_CASE("logs from another run are refused") {
    TempDir dir("foreign");
    const auto log = dir.path / "log.jsonl";
    write_text_file(log, "{\"schema\":\"response/1\",\"run_id\":\"0000000000000000\"}\n");

    const auto dilemmas = generate_batch(9, 3);
    const auto personas = three_personas();
    const AgentConfig cfg = coin_config();
    auto agent = make_agent(cfg);
    const RunManifest manifest = make_manifest("zzz", dilemmas.size(), 3, personas, cfg);
    CHECK_THROWS_AS(run_matrix(dilemmas, personas, *agent, manifest, log),
                    ResumeMismatchError);
}

TEST_CASE("log reading validates the header and dedupes by pair") {
    TempDir dir("read");
    const auto log = dir.path / "log.jsonl";

    write_text_file(log, "");
    CHECK_THROWS_AS(read_response_log(log), IoError);
    write_text_file(log, "{\"schema\":\"dilemma/1\"}\n");
    CHECK_THROWS_AS(read_response_log(log), IoError);

    AgentResponse r;
    r.persona_id = "baseline";
    r.dilemma_id = "d1-000000";
    r.case1_side = Side::A;
    r.raw_text = "Case 1";
    r.verdict = Verdict::choice1();
    std::string text = "{\"schema\":\"response/1\",\"run_id\":\"r\"}\n";
    text += response_to_json_line(r) + "\n";
    r.raw_text = "Case 2";  // duplicate pair: must be ignored
    r.verdict = Verdict::choice2();
    text += response_to_json_line(r) + "\n";
    r.dilemma_id = "d1-000001";
    text += response_to_json_line(r) + "\n";
    write_text_file(log, text);

    const ResponseLog parsed = read_response_log(log);
    CHECK(parsed.run_id == "r");
    REQUIRE(parsed.records.size() == 2);
    CHECK(parsed.records[0].raw_text == "Case 1");  // first occurrence wins
    CHECK(parsed.records[1].dilemma_id == "d1-000001");
}
