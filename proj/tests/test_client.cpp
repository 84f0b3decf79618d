#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "logprobe/client.hpp"
#include "logprobe/errors.hpp"
#include "logprobe/sim_server.hpp"
#include "logprobe/simulator.hpp"
#include "logprobe/store.hpp"

using namespace logprobe;
namespace fs = std::filesystem;

namespace {

EndpointConfig config_for(const std::string& base_url, const std::string& id,
                          int top_logprobs = 20) {
    EndpointConfig c;
    c.base_url = base_url;
    c.model_id = id;
    c.top_logprobs = top_logprobs;
    c.max_output_tokens = 1;
    c.temperature = 1.0;
    c.timeout_seconds = 5.0;
    c.retry.max_attempts = 1;
    return c;
}

// A body that parses cleanly, for mutation-style error cases.
nlohmann::json good_response() {
    return nlohmann::json::parse(sim::chat_completion_response_body(
        "m",
        LogprobVector{LogprobEntry{"x", std::nullopt, -1.0},
                      LogprobEntry{"y", std::nullopt, -2.0}},
        2, Usage{2, 1}, 0, true));
}

} // namespace

// ==== request bodies ====

TEST_CASE("request bodies carry the probe parameters") {
    EndpointConfig c = config_for("http://127.0.0.1:1", "gpt-sim", 7);
    c.prompt = "respond with one token";
    c.max_output_tokens = 3;
    c.temperature = 0.5;
    const auto j =
        nlohmann::json::parse(make_chat_completion_request_body(c, true));
    CHECK(j["model"] == "gpt-sim");
    CHECK(j["messages"][0]["role"] == "user");
    CHECK(j["messages"][0]["content"] == "respond with one token");
    CHECK(j["max_tokens"] == 3);
    CHECK(j["temperature"] == 0.5);
    CHECK(j["logprobs"] == true);
    CHECK(j["top_logprobs"] == 7);

    const auto plain =
        nlohmann::json::parse(make_chat_completion_request_body(c, false));
    CHECK_FALSE(plain.contains("logprobs"));
    CHECK_FALSE(plain.contains("top_logprobs"));
}

// ==== response parsing ====

TEST_CASE("parse_completion round-trips a served response body") {
    const auto m = sim::make_random_model(32, 0.0, 5, 11);
    const auto v = sim::sample_logprob_vector(m, 0);
    const auto body = sim::chat_completion_response_body(
        "m", v, v.size(), Usage{2, 1}, 0, true);
    const auto parsed = parse_completion(body);
    REQUIRE(parsed.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(parsed[i].text == v[i].text);
        CHECK(parsed[i].logprob == v[i].logprob);
    }
    const auto usage = parse_usage(body);
    REQUIRE(usage.has_value());
    CHECK(usage->prompt_tokens == 2);
    CHECK(usage->completion_tokens == 1);

    SUBCASE("a shorter served slice truncates the document") {
        const auto short_body = sim::chat_completion_response_body(
            "m", v, 3, Usage{2, 1}, 0, true);
        CHECK(parse_completion(short_body).size() == 3);
    }
    SUBCASE("a logprob-free body parses as missing logprobs") {
        const auto bare = sim::chat_completion_response_body(
            "m", v, v.size(), Usage{2, 1}, 0, false);
        CHECK_THROWS_AS(parse_completion(bare), LogprobsMissing);
        CHECK(parse_usage(bare).has_value());
    }
}

TEST_CASE("parse_completion sorts entries by logprob descending") {
    auto j = good_response();
    auto& top = j["choices"][0]["logprobs"]["content"][0]["top_logprobs"];
    top = nlohmann::json::array({{{"token", "low"}, {"logprob", -5.0}},
                                 {{"token", "high"}, {"logprob", -0.5}},
                                 {{"token", "mid"}, {"logprob", -2.0}}});
    const auto parsed = parse_completion(j.dump());
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].text == "high");
    CHECK(parsed[1].text == "mid");
    CHECK(parsed[2].text == "low");
}

TEST_CASE("parse_completion carries byte arrays through") {
    auto j = good_response();
    auto& top = j["choices"][0]["logprobs"]["content"][0]["top_logprobs"];
    top[0]["bytes"] = {195, 169};
    top[1]["bytes"] = nullptr;
    const auto parsed = parse_completion(j.dump());
    REQUIRE(parsed[0].bytes.has_value());
    CHECK(*parsed[0].bytes == std::vector<std::uint8_t>{0xC3, 0xA9});
    CHECK_FALSE(parsed[1].bytes.has_value());
}

TEST_CASE("parse_completion error taxonomy") {
    CHECK_THROWS_AS(parse_completion("not json"), ProtocolError);
    CHECK_THROWS_AS(parse_completion("{}"), ProtocolError);
    CHECK_THROWS_AS(parse_completion(R"({"choices": []})"), ProtocolError);

    auto no_lp = good_response();
    no_lp["choices"][0]["logprobs"] = nullptr;
    CHECK_THROWS_AS(parse_completion(no_lp.dump()), LogprobsMissing);

    auto empty_content = good_response();
    empty_content["choices"][0]["logprobs"]["content"] =
        nlohmann::json::array();
    CHECK_THROWS_AS(parse_completion(empty_content.dump()), ProtocolError);

    auto empty_top = good_response();
    empty_top["choices"][0]["logprobs"]["content"][0]["top_logprobs"] =
        nlohmann::json::array();
    CHECK_THROWS_AS(parse_completion(empty_top.dump()), LogprobsMissing);

    auto missing_field = good_response();
    missing_field["choices"][0]["logprobs"]["content"][0]["top_logprobs"][0]
        .erase("logprob");
    CHECK_THROWS_AS(parse_completion(missing_field.dump()), ProtocolError);

    auto positive = good_response();
    positive["choices"][0]["logprobs"]["content"][0]["top_logprobs"][0]
        ["logprob"] = 0.5;
    CHECK_THROWS_AS(parse_completion(positive.dump()), ProtocolError);

    auto duplicate = good_response();
    duplicate["choices"][0]["logprobs"]["content"][0]["top_logprobs"][1]
        ["token"] = "x";
    CHECK_THROWS_AS(parse_completion(duplicate.dump()), ProtocolError);

    auto bad_bytes = good_response();
    bad_bytes["choices"][0]["logprobs"]["content"][0]["top_logprobs"][0]
        ["bytes"] = {300};
    CHECK_THROWS_AS(parse_completion(bad_bytes.dump()), ProtocolError);
}

// ==== live probes against the synthetic server ====

TEST_CASE("probe returns the model's exact zero-noise distribution") {
    sim::SimServer server;
    const auto m = sim::make_random_model(32, 0.0, 5, 21);
    server.add_model("quiet", m);
    server.start();

    const auto outcome = probe(config_for(server.base_url(), "quiet", 5));
    REQUIRE(outcome.status == ProbeStatus::ok);
    const auto want = sim::sample_logprob_vector(m, 0);
    REQUIRE(outcome.logprobs.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(outcome.logprobs[i].text == want[i].text);
        CHECK(outcome.logprobs[i].logprob == want[i].logprob);
    }
    REQUIRE(outcome.usage.has_value());
    CHECK(outcome.usage->prompt_tokens == 2); // request counter 0
    CHECK(outcome.usage->completion_tokens == 1);
    CHECK(outcome.attempts == 1);

    SUBCASE("served k is capped by the model's top_k") {
        const auto wide = probe(config_for(server.base_url(), "quiet", 20));
        REQUIRE(wide.status == ProbeStatus::ok);
        CHECK(wide.logprobs.size() == 5);
    }
    server.stop();
}

TEST_CASE("a model that ignores logprobs maps to logprobs_unsupported") {
    sim::SimServer server;
    server.add_model("mute", sim::make_random_model(16, 0.0, 4, 22), false);
    server.start();
    const auto outcome = probe(config_for(server.base_url(), "mute"));
    CHECK(outcome.status == ProbeStatus::logprobs_unsupported);
    server.stop();
}

TEST_CASE("a max_tokens floor rejection surfaces the provider message") {
    sim::SimServer server;
    server.add_model("floor", sim::make_random_model(16, 0.0, 4, 23), true, 2);
    server.start();
    const auto outcome = probe(config_for(server.base_url(), "floor"));
    CHECK(outcome.status == ProbeStatus::protocol_error);
    CHECK(outcome.detail.find("integer below minimum value") !=
          std::string::npos);
    server.stop();
}

TEST_CASE("an unknown model id is a protocol error") {
    sim::SimServer server;
    server.add_model("known", sim::make_random_model(16, 0.0, 4, 24));
    server.start();
    const auto outcome = probe(config_for(server.base_url(), "unknown"));
    CHECK(outcome.status == ProbeStatus::protocol_error);
    server.stop();
}

TEST_CASE("a dead port is a transport error after the retry budget") {
    auto c = config_for("http://127.0.0.1:9", "m");
    c.timeout_seconds = 1.0;
    c.retry.max_attempts = 2;
    c.retry.backoff_seconds = {0.05};
    const auto outcome = probe(c);
    CHECK(outcome.status == ProbeStatus::transport_error);
    CHECK(outcome.attempts == 2);
}

TEST_CASE("429 responses honor Retry-After and count attempts") {
    httplib::Server slow;
    std::atomic<int> hits{0};
    slow.Post("/chat/completions",
              [&](const httplib::Request&, httplib::Response& res) {
                  ++hits;
                  res.status = 429;
                  res.set_header("Retry-After", "0.05");
                  res.set_content("{\"error\":{\"message\":\"slow down\"}}",
                                  "application/json");
              });
    const int port = slow.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread serving([&] { slow.listen_after_bind(); });
    slow.wait_until_ready();

    auto c = config_for("http://127.0.0.1:" + std::to_string(port), "m");
    c.retry.max_attempts = 3;
    c.retry.backoff_seconds = {10.0}; // Retry-After must override this
    const auto outcome = probe(c);
    CHECK(outcome.status == ProbeStatus::rate_limited);
    CHECK(outcome.attempts == 3);
    CHECK(outcome.retry_after_seconds == 0.05);
    CHECK(hits.load() == 3);

    slow.stop();
    serving.join();
}

// ==== survey ====

TEST_CASE("survey measures reachability, support, and observed k") {
    sim::SimServer server;
    server.add_model("k5", sim::make_random_model(32, 0.05, 5, 31));
    server.add_model("k8", sim::make_random_model(32, 0.05, 8, 32));
    server.add_model("k20", sim::make_random_model(32, 0.05, 20, 33));
    server.add_model("plain", sim::make_random_model(32, 0.05, 8, 34), false);
    server.start();

    std::vector<EndpointConfig> fleet;
    for (const std::string id : {"k5", "k8", "k20", "plain"}) {
        fleet.push_back(config_for(server.base_url(), id));
    }
    auto dead = config_for("http://127.0.0.1:9", "gone");
    dead.timeout_seconds = 1.0;
    fleet.push_back(dead);

    const auto report = survey(fleet);
    REQUIRE(report.endpoints.size() == 5);
    CHECK(report.reachable == 4);
    CHECK(report.supported == 3);
    CHECK(report.supported_fraction == 0.75);
    CHECK(report.endpoints[0].observed_k == 5);
    CHECK(report.endpoints[1].observed_k == 8);
    CHECK(report.endpoints[2].observed_k == 20);
    CHECK(report.endpoints[3].reachable);
    CHECK_FALSE(report.endpoints[3].logprobs_supported);
    CHECK(report.endpoints[3].detail.find("logprobs-unsupported") !=
          std::string::npos);
    CHECK_FALSE(report.endpoints[4].reachable);

    const auto j = nlohmann::json::parse(survey_to_json(report));
    CHECK(j["reachable"] == 4);
    CHECK(j["supported"] == 3);
    CHECK(j["supported_fraction"] == 0.75);
    REQUIRE(j["endpoints"].size() == 5);
    CHECK(j["endpoints"][0]["endpoint_id"] ==
          "k5@" + server.base_url());
    server.stop();
}

// ==== polling ====

TEST_CASE("poll_loop stores one point per endpoint per tick") {
    sim::SimServer server;
    server.add_model("a", sim::make_random_model(16, 0.05, 4, 41));
    server.add_model("b", sim::make_random_model(16, 0.05, 4, 42));
    server.add_model("plain", sim::make_random_model(16, 0.05, 4, 43), false);
    server.start();

    const fs::path dir = fs::path("tmp_client") / "poll";
    fs::remove_all(dir);
    Store store(dir);

    std::vector<EndpointConfig> fleet{
        config_for(server.base_url(), "a"),
        config_for(server.base_url(), "b"),
        config_for(server.base_url(), "plain"),
    };
    PollOptions options;
    options.interval_seconds = 0.01;
    options.max_ticks = 3;
    options.parallelism = 2;
    options.jitter_fraction = 0.0;
    options.seed = 7;

    const auto stats = poll_loop(fleet, options, store);
    CHECK(stats.ticks == 3);
    CHECK(stats.ok == 6);
    CHECK(stats.stored == 6);
    CHECK(stats.logprobs_unsupported == 3);
    CHECK(stats.store_errors == 0);
    CHECK(store.read_series(fleet[0].endpoint_id(), fleet[0].prompt).size() ==
          3);
    CHECK(store.read_series(fleet[1].endpoint_id(), fleet[1].prompt).size() ==
          3);
    CHECK(store.read_series(fleet[2].endpoint_id(), fleet[2].prompt).empty());
    server.stop();
}

TEST_CASE("poll_loop honors the stop flag and empty fleets") {
    const fs::path dir = fs::path("tmp_client") / "stopped";
    fs::remove_all(dir);
    Store store(dir);
    std::atomic<bool> stop{true};
    PollOptions options;
    options.max_ticks = 0;
    CHECK(poll_loop({config_for("http://127.0.0.1:9", "m")}, options, store,
                    &stop)
              .ticks == 0);
    CHECK(poll_loop({}, options, store).ticks == 0);
}

// ==== sample collection ====

TEST_CASE("collect_samples gathers n draws and sums usage") {
    sim::SimServer server;
    const auto m = sim::make_random_model(32, 0.05, 5, 51);
    server.add_model("m", m);
    server.start();

    const auto result = collect_samples(config_for(server.base_url(), "m"), 10);
    CHECK(result.requests == 10);
    REQUIRE(result.samples.size() == 10);
    for (const auto& sample : result.samples) CHECK(sample.size() == 5);
    // Counters 0..9: prompt tokens 2,2,1,1,1 per block of five.
    CHECK(result.total_usage.prompt_tokens == 14);
    CHECK(result.total_usage.completion_tokens == 10);

    const auto stats = server.stats("m");
    CHECK(stats.requests == 10);
    CHECK(stats.single_token_requests == 10);
    CHECK(stats.prompt_tokens == 14);
    CHECK(stats.completion_tokens == 10);

    // Zero noise would collapse the draws; positive noise must not.
    bool any_diff = false;
    for (std::size_t j = 0; j < result.samples[0].size(); ++j) {
        if (result.samples[0][j].logprob != result.samples[1][j].logprob) {
            any_diff = true;
        }
    }
    CHECK(any_diff);
    server.stop();
}

TEST_CASE("collect_samples raises the matching error") {
    auto dead = config_for("http://127.0.0.1:9", "m");
    dead.timeout_seconds = 1.0;
    CHECK_THROWS_AS(collect_samples(dead, 1), Error);

    sim::SimServer server;
    server.add_model("plain", sim::make_random_model(16, 0.0, 4, 52), false);
    server.start();
    CHECK_THROWS_AS(collect_samples(config_for(server.base_url(), "plain"), 1),
                    LogprobsMissing);
    server.stop();
}
