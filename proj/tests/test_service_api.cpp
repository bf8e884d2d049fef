#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "explorex/service_api.hpp"
#include "support.hpp"

using namespace explorex;
using support::error_of;
namespace fs = std::filesystem;

namespace {

const Json kTarget = Json::parse(R"({
  "task_type": "candidate_selection",
  "sample_rate": 1.0,
  "trigger": {"language": "en"},
  "transformers": [{"transformer_id": "main",
                    "chain": [{"operator": "UCB1Enhanced", "target_reward": 0.11,
                               "exploration_weight": 1.0, "penalty_delta": 2.0}]}],
  "feedback_fetcher": "ctr",
  "candidates": ["0.10", "0.12", "0.14"]
})");

const Json kData = Json::parse(R"({"candidates": ["0.10", "0.12", "0.14"]})");

Json explore_body(const std::string& unit, const std::string& lang = "en", Json data = kData) {
    return Json{{"target_id", "thr"},
                {"unit_id", unit},
                {"attributes", {{"language", lang}}},
                {"data", std::move(data)}};
}

struct Fixture {
    FeedbackStore store;
    TargetRegistry registry;
    Service service;

    explicit Fixture(RegistryOptions o = {}) : registry(store, o), service(registry) {}

    HttpResponse call(std::string_view method, std::string_view path, const Json& body = nullptr) {
        return service.handle(method, path, body.is_null() ? std::string() : body.dump());
    }
};

}  // namespace

TEST_CASE("target registration endpoints") {
    Fixture f;
    auto r = f.call("PUT", "/targets/thr", kTarget);
    CHECK(r.status == 200);
    CHECK(r.body["status"] == "ok");
    CHECK(r.body["body"]["version"] == 1);
    r = f.call("PUT", "/targets/thr", kTarget);
    CHECK(r.status == 200);
    CHECK(r.body["body"]["version"] == 1);
    CHECK(r.body["body"]["replaced"] == true);

    r = f.call("GET", "/targets/thr");
    CHECK(r.status == 200);
    CHECK(r.body["body"]["target_id"] == "thr");
    CHECK(r.body["body"]["subscribed"] == false);
    CHECK(f.call("GET", "/targets").body["body"].size() == 1);
    CHECK(f.call("GET", "/targets/none").status == 404);

    Json al = Json::parse(R"({
      "task_type": "active_learning",
      "transformers": [{"transformer_id": "s",
                        "chain": [{"operator": "SampleWithInterval", "intervals": [[0.7, 0.3]]}]}]
    })");
    r = f.call("PUT", "/targets/al", al);
    CHECK(r.status == 400);
    CHECK(r.body["status"] == "error");
    CHECK(r.body["error_code"] == "ConfigError");

    Json other = kTarget;
    other["target_id"] = "elsewhere";
    CHECK(f.call("PUT", "/targets/thr", other).status == 400);
    CHECK(f.service.handle("PUT", "/targets/thr", "{not json").status == 400);
    CHECK(f.call("DELETE", "/targets/thr").status == 404);
}

TEST_CASE("subscription endpoints and passthrough echo") {
    Fixture f;
    f.call("PUT", "/targets/thr", kTarget);
    CHECK(f.call("POST", "/targets/none/subscribe").status == 404);

    // Unsubscribed: data is echoed exactly, including fields the service ignores.
    Json data = kData;
    data["extra"] = {{"nested", 1}};
    auto r = f.call("POST", "/explore", explore_body("u", "en", data));
    CHECK(r.status == 200);
    CHECK(r.body["body"]["explored"] == false);
    CHECK(r.body["body"]["data"] == data);
    CHECK(r.body["body"]["decision_id"].get<std::string>().size() > 0);

    CHECK(f.call("POST", "/targets/thr/subscribe").status == 200);
    r = f.call("POST", "/explore", explore_body("u"));
    CHECK(r.body["body"]["explored"] == true);
    CHECK(r.body["body"]["data"].contains("decided"));
    CHECK(r.body["body"]["transformer_id"] == "main");

    CHECK_FALSE(f.call("POST", "/explore", explore_body("u", "fr")).body["body"]["explored"]);

    f.call("POST", "/targets/thr/unsubscribe");
    r = f.call("POST", "/explore", explore_body("u"));
    CHECK(r.body["body"]["explored"] == false);
    CHECK(r.body["body"]["data"] == kData);
}

TEST_CASE("cold UCB target cycles through every candidate first") {
    Fixture f;
    f.call("PUT", "/targets/thr", kTarget);
    f.call("POST", "/targets/thr/subscribe");
    std::set<std::string> seen;
    for (int i = 0; i < 3; ++i) {
        const auto r = f.call("POST", "/explore", explore_body("u" + std::to_string(i)));
        seen.insert(r.body["body"]["chosen_candidate_id"].get<std::string>());
    }
    CHECK(seen == std::set<std::string>{"0.10", "0.12", "0.14"});
}

TEST_CASE("explore input errors") {
    Fixture f;
    f.call("PUT", "/targets/thr", kTarget);
    f.call("POST", "/targets/thr/subscribe");
    auto r = f.call("POST", "/explore",
                    explore_body("u", "en", Json::parse(R"({"candidates": ["a", "a"]})")));
    CHECK(r.status == 400);
    CHECK(r.body["error_code"] == "InvalidInput");
    CHECK(f.call("POST", "/explore", explore_body("u", "en", Json::parse(R"({"items": ["a"]})"))).status ==
          400);
    CHECK(f.call("POST", "/explore", explore_body("u", "en", Json::parse(R"({"candidates": []})"))).status ==
          400);
    Json unknown = explore_body("u");
    unknown["target_id"] = "missing";
    CHECK(f.call("POST", "/explore", unknown).status == 404);
    Json no_unit = explore_body("u");
    no_unit.erase("unit_id");
    CHECK(f.call("POST", "/explore", no_unit).status == 400);
}

TEST_CASE("operator failures never produce a 5xx") {
    Fixture f;
    f.registry.register_scorer("boom", [](const Candidate&) -> double { throw std::runtime_error("x"); });
    Json cfg = kTarget;
    cfg["transformers"][0]["chain"] = Json::parse(
        R"([{"operator": "RLActionSelection", "scorer": "boom"}, {"operator": "SoftmaxSelection"}])");
    f.call("PUT", "/targets/thr", cfg);
    f.call("POST", "/targets/thr/subscribe");
    for (int i = 0; i < 20; ++i) {
        const auto r = f.call("POST", "/explore", explore_body("u" + std::to_string(i)));
        REQUIRE(r.status == 200);
        REQUIRE(r.body["body"]["explored"] == false);
        REQUIRE(r.body["body"]["data"] == kData);
        REQUIRE(r.body["body"].contains("fallback_reason"));
    }
}

TEST_CASE("events and stats round trip") {
    Fixture f;
    f.call("PUT", "/targets/thr", kTarget);
    auto stats = f.call("GET", "/stats/thr");
    CHECK(stats.status == 200);
    CHECK(stats.body["body"]["totals"] == Json{{"pulls", 0}, {"trials", 0}, {"successes", 0}});
    for (const auto& [cid, c] : stats.body["body"]["transformers"]["main"]["candidates"].items()) {
        CHECK(c == Json{{"pulls", 0}, {"trials", 0}, {"successes", 0}});
    }
    CHECK(f.call("GET", "/stats/none").status == 404);

    f.call("POST", "/targets/thr/subscribe");
    const auto r = f.call("POST", "/explore", explore_body("u"));
    const std::string id = r.body["body"]["decision_id"];
    const std::string chosen = r.body["body"]["chosen_candidate_id"];
    CHECK(f.call("POST", "/events", {{"decision_id", id}, {"event_type", "display"}}).status == 200);
    CHECK(f.call("POST", "/events", {{"decision_id", id}, {"event_type", "click"}}).status == 200);
    CHECK(f.call("POST", "/events", Json::array({{{"decision_id", id}, {"event_type", "click"}}}))
              .status == 200);
    CHECK(f.call("POST", "/events", {{"event_type", "click"}}).status == 400);

    stats = f.call("GET", "/stats/thr");
    const auto c = stats.body["body"]["transformers"]["main"]["candidates"][chosen];
    CHECK(c["pulls"] == 1);
    CHECK(c["trials"] == 1);
    CHECK(c["successes"] == 1);
    CHECK(f.call("GET", "/health").body["body"]["duplicate_events"] == 1);
}

TEST_CASE("custom fetchers over the wire") {
    Fixture f;
    CHECK(f.call("PUT", "/fetchers/accepts",
                 {{"numerator_event", "accept"}, {"denominator_event", "display"}})
              .status == 200);
    CHECK(f.call("PUT", "/fetchers/bad", {{"numerator_event", "click"}, {"denominator_event", "view"}})
              .status == 400);
    Json cfg = kTarget;
    cfg["feedback_fetcher"] = "accepts";
    CHECK(f.call("PUT", "/targets/thr", cfg).status == 200);
}

TEST_CASE("decisions replay identically across a restart") {
    const fs::path dir = fs::temp_directory_path() / ("explorex_svc_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    RegistryOptions o;
    o.refresh_every_decisions = 0;
    o.refresh_interval_ms = 0;
    Json cfg = kTarget;
    cfg["transformers"][0]["chain"] = Json::parse(R"([{"operator": "EpsilonGreedySelection", "epsilon": 0.5}])");

    auto decisions = [&](Service& s, int from, int to) {
        std::vector<Json> out;
        for (int i = from; i < to; ++i) {
            auto b = s.handle("POST", "/explore", explore_body("u" + std::to_string(i % 4)).dump()).body["body"];
            out.push_back({b["decision_id"], b["chosen_candidate_id"]});
        }
        return out;
    };

    std::vector<Json> expected;
    {
        FeedbackStoreOptions so;
        so.exposure_log = dir / "x.exposures.jsonl";
        FeedbackStore store(so);
        TargetRegistry reg(store, o);
        Service s(reg);
        s.handle("PUT", "/targets/thr", cfg.dump());
        s.handle("POST", "/targets/thr/subscribe", "");
        decisions(s, 0, 30);
        expected = decisions(s, 30, 60);
    }
    std::vector<Json> resumed;
    {
        // Rebuild from the first 30 lines of the log only.
        std::ifstream in(dir / "x.exposures.jsonl");
        std::ofstream head(dir / "head.jsonl");
        std::string line;
        for (int i = 0; i < 30 && std::getline(in, line); ++i) head << line << '\n';
    }
    {
        FeedbackStore store;
        store.replay(dir / "head.jsonl");
        TargetRegistry reg(store, o);
        Service s(reg);
        s.handle("PUT", "/targets/thr", cfg.dump());
        s.handle("POST", "/targets/thr/subscribe", "");
        resumed = decisions(s, 30, 60);
    }
    CHECK(resumed == expected);
    fs::remove_all(dir);
}

TEST_CASE("full loop over a real socket") {
    Fixture f;
    httplib::Server server;
    f.service.bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread loop([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    const auto start = std::chrono::steady_clock::now();
    auto put = client.Put("/targets/thr", kTarget.dump(), "application/json");
    auto sub = client.Post("/targets/thr/subscribe", "", "application/json");
    auto exp = client.Post("/explore", explore_body("u").dump(), "application/json");
    REQUIRE(exp);
    const Json body = Json::parse(exp->body)["body"];
    const std::string id = body["decision_id"];
    client.Post("/events", Json{{"decision_id", id}, {"event_type", "display"}}.dump(), "application/json");
    client.Post("/events", Json{{"decision_id", id}, {"event_type", "click"}}.dump(), "application/json");
    auto stats = client.Get("/stats/thr");
    const auto elapsed = std::chrono::steady_clock::now() - start;

    server.stop();
    loop.join();

    REQUIRE(put);
    REQUIRE(sub);
    REQUIRE(stats);
    CHECK(put->status == 200);
    CHECK(sub->status == 200);
    CHECK(body["explored"] == true);
    const Json totals = Json::parse(stats->body)["body"]["totals"];
    CHECK(totals["trials"] == 1);
    CHECK(totals["successes"] == 1);
    CHECK(elapsed < std::chrono::milliseconds(50));
}

TEST_CASE("listen address and environment") {
    CHECK(parse_listen_address("0.0.0.0:9000").host == "0.0.0.0");
    CHECK(parse_listen_address("0.0.0.0:9000").port == 9000);
    CHECK(parse_listen_address(":81").port == 81);
    CHECK(parse_listen_address(":81").host == "127.0.0.1");
    CHECK(error_of([] { parse_listen_address("host:port"); }) == ErrorCode::ConfigError);
    ::setenv("EXPLOREX_ADDR", "10.0.0.1:7000", 1);
    CHECK(parse_listen_address("").host == "10.0.0.1");
    ::unsetenv("EXPLOREX_ADDR");
    ::setenv("EXPLOREX_DEADLINE_MS", "35", 1);
    CHECK(service_options_from_env().explore_deadline == std::chrono::milliseconds(35));
    ::setenv("EXPLOREX_DEADLINE_MS", "-1", 1);
    CHECK(error_of([] { service_options_from_env(); }) == ErrorCode::ConfigError);
    ::unsetenv("EXPLOREX_DEADLINE_MS");
    CHECK(service_options_from_env().explore_deadline == std::chrono::milliseconds(20));
    CHECK(http_status(ErrorCode::InvalidState) == 409);
    CHECK(http_status(ErrorCode::DeadlineExceeded) == 504);
}
