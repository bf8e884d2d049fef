#include "explorex/service_api.hpp"

#include <charconv>
#include <cstdlib>
#include <set>
#include <vector>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace explorex {

namespace {

Json ok(Json body) { return Json{{"status", "ok"}, {"body", std::move(body)}}; }

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
    return {status, Json{{"status", "error"}, {"error_code", code}, {"message", message}}};
}

std::vector<std::string_view> split_path(std::string_view path) {
    if (auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
    std::vector<std::string_view> parts;
    while (!path.empty()) {
        if (path.front() == '/') {
            path.remove_prefix(1);
            continue;
        }
        const auto slash = path.find('/');
        parts.push_back(path.substr(0, slash));
        if (slash == std::string_view::npos) break;
        path.remove_prefix(slash);
    }
    return parts;
}

Json parse_body(const std::string& body) {
    try {
        return body.empty() ? Json::object() : Json::parse(body);
    } catch (const Json::exception& e) {
        fail(ErrorCode::InvalidInput, std::string("malformed JSON body: ") + e.what());
    }
}

std::string required_string(const Json& j, const char* key) {
    auto it = j.find(key);
    require(it != j.end() && it->is_string() && !it->get<std::string>().empty(),
            ErrorCode::InvalidInput, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

}  // namespace

int http_status(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::InvalidInput:
        case ErrorCode::ConfigError: return 400;
        case ErrorCode::InvalidState: return 409;
        case ErrorCode::DeadlineExceeded: return 504;
        case ErrorCode::ScorerError: return 500;
    }
    return 500;
}

Service::Service(TargetRegistry& registry, ServiceOptions options)
    : registry_(registry), options_(options) {}

HttpResponse Service::handle(std::string_view method, std::string_view path,
                             const std::string& body) {
    const auto parts = split_path(path);
    auto is = [&](std::string_view m, std::initializer_list<std::string_view> shape) {
        if (m != method || parts.size() != shape.size()) return false;
        std::size_t i = 0;
        for (auto s : shape) {
            if (!s.empty() && parts[i] != s) return false;
            ++i;
        }
        return true;
    };
    try {
        if (is("PUT", {"targets", ""})) {
            return {200, put_target(std::string(parts[1]), parse_body(body))};
        }
        if (is("GET", {"targets"})) {
            Json list = Json::array();
            for (const auto& t : registry_.targets()) list.push_back(to_json(t));
            return {200, ok(list)};
        }
        if (is("GET", {"targets", ""})) {
            return {200, ok(to_json(registry_.target(std::string(parts[1]))))};
        }
        if (is("POST", {"targets", "", "subscribe"}) || is("POST", {"targets", "", "unsubscribe"})) {
            const std::string id(parts[1]);
            const bool on = parts[2] == "subscribe";
            on ? registry_.subscribe(id) : registry_.unsubscribe(id);
            return {200, ok({{"target_id", id}, {"subscribed", on}})};
        }
        if (is("POST", {"explore"})) return {200, explore(parse_body(body))};
        if (is("POST", {"events"})) return {200, post_events(parse_body(body))};
        if (is("GET", {"stats", ""})) return {200, stats(std::string(parts[1]))};
        if (is("PUT", {"fetchers", ""})) {
            const std::string name(parts[1]);
            registry_.store().register_fetcher(name, metric_from_json(parse_body(body)));
            return {200, ok({{"fetcher", name}})};
        }
        if (is("GET", {"health"})) return {200, ok(to_json(registry_.store().health()))};
        return error_response(404, "NotFound",
                              "no route for " + std::string(method) + " " + std::string(path));
    } catch (const Error& e) {
        return error_response(http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", method, path, e.what());
        return error_response(500, "Internal", e.what());
    }
}

Json Service::put_target(const std::string& id, const Json& body) {
    Json j = body;
    require(j.is_object(), ErrorCode::InvalidInput, "target body must be a JSON object");
    if (!j.contains("target_id")) j["target_id"] = id;
    ExplorationTarget cfg = target_from_json(j);
    require(cfg.target_id == id, ErrorCode::InvalidInput,
            "target_id '" + cfg.target_id + "' does not match path '" + id + "'");
    const RegisterAck ack = registry_.register_target(std::move(cfg));
    return ok({{"target_id", ack.target_id}, {"version", ack.version}, {"replaced", ack.replaced}});
}

Json Service::explore(const Json& body) {
    const auto deadline = std::chrono::steady_clock::now() + options_.explore_deadline;
    require(body.is_object(), ErrorCode::InvalidInput, "explore body must be a JSON object");
    const std::string target_id = required_string(body, "target_id");
    const ExplorationTarget cfg = registry_.target(target_id);

    DecisionContext ctx;
    ctx.unit_id = required_string(body, "unit_id");
    if (auto a = body.find("attributes"); a != body.end() && !a->is_null()) {
        try {
            ctx.attributes = a->get<std::map<std::string, std::string>>();
        } catch (const Json::exception&) {
            fail(ErrorCode::InvalidInput, "attributes must map strings to strings");
        }
    }
    auto raw = body.find("data");
    require(raw != body.end(), ErrorCode::InvalidInput, "missing field 'data'");
    TargetData data = data_from_json(cfg.task_type, *raw);
    if (const auto* set = std::get_if<ScoredCandidateSet>(&data)) {
        require(!set->candidates.empty(), ErrorCode::InvalidInput, "candidates must be non-empty");
        set->validate();
    } else if (const auto* list = std::get_if<RankedList>(&data)) {
        require(!list->items.empty(), ErrorCode::InvalidInput, "items must be non-empty");
    }

    ExploreOutcome out = registry_.explore(target_id, std::move(data), std::move(ctx), deadline);
    const Decision& d = out.decision;
    Json resp{{"decision_id", d.decision_id},
              {"explored", d.explored},
              {"target_id", d.target_id},
              {"data", d.explored ? to_json(out.data) : *raw}};
    if (d.chosen_candidate_id) resp["chosen_candidate_id"] = *d.chosen_candidate_id;
    if (d.explored) resp["transformer_id"] = d.transformer_id;
    if (out.soft_error) resp["fallback_reason"] = *out.soft_error;
    return ok(resp);
}

Json Service::post_events(const Json& body) {
    std::vector<FeedbackEvent> events;
    const auto now = registry_.store().now_ms();
    auto parse = [&](const Json& j) {
        Json e = j;
        if (e.is_object() && !e.contains("timestamp_ms")) e["timestamp_ms"] = now;
        events.push_back(event_from_json(e));
    };
    if (body.is_array()) {
        for (const auto& j : body) parse(j);
    } else {
        parse(body);
    }
    for (const auto& e : events) registry_.store().ingest_event(e);
    return ok({{"accepted", events.size()}});
}

Json Service::stats(const std::string& id) {
    const ExplorationTarget cfg = registry_.target(id);
    const CounterTable counters = registry_.store().counters();
    std::uint64_t total_pulls = 0, total_trials = 0, total_successes = 0;

    Json transformers = Json::object();
    for (const auto& tr : cfg.transformers) {
        std::set<std::string> ids;
        if (cfg.candidates) ids.insert(cfg.candidates->begin(), cfg.candidates->end());
        const auto pulls = registry_.store().pulls(id, tr.transformer_id);
        for (const auto& [cid, n] : pulls) ids.insert(cid);

        FeedbackSnapshot snap;
        Json entry = Json::object();
        try {
            snap = registry_.store().fetch_feedback(
                cfg.feedback_fetcher, FetchRequest{id, tr.transformer_id, FeedbackLevel::global, {}});
        } catch (const std::exception& e) {
            entry["fetch_error"] = e.what();
        }
        for (const auto& [cid, f] : snap.candidates) ids.insert(cid);

        Json cands = Json::object();
        for (const auto& cid : ids) {
            std::uint64_t p = 0, t = 0, s = 0;
            if (auto it = pulls.find(cid); it != pulls.end()) p = it->second;
            if (auto it = snap.candidates.find(cid); it != snap.candidates.end()) {
                t = it->second.trials;
                s = it->second.successes;
            }
            cands[cid] = {{"pulls", p}, {"trials", t}, {"successes", s}};
            total_pulls += p;
            total_trials += t;
            total_successes += s;
        }
        entry["candidates"] = std::move(cands);
        transformers[tr.transformer_id] = std::move(entry);
    }
    return ok({{"target_id", id},
               {"transformers", std::move(transformers)},
               {"totals", {{"pulls", total_pulls}, {"trials", total_trials},
                           {"successes", total_successes}}},
               {"health", to_json(registry_.health(id))}});
}

void Service::bind(httplib::Server& server) {
    auto adapter = [this](const httplib::Request& req, httplib::Response& res) {
        HttpResponse r = handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Get(".*", adapter);
    server.Post(".*", adapter);
    server.Put(".*", adapter);
}

ServiceOptions service_options_from_env() {
    ServiceOptions opts;
    if (const char* v = std::getenv("EXPLOREX_DEADLINE_MS"); v && *v) {
        long ms = 0;
        const std::string_view s(v);
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), ms);
        require(ec == std::errc{} && p == s.data() + s.size() && ms > 0, ErrorCode::ConfigError,
                "EXPLOREX_DEADLINE_MS must be a positive integer");
        opts.explore_deadline = std::chrono::milliseconds(ms);
    }
    return opts;
}

ListenAddress parse_listen_address(std::string_view addr) {
    std::string fallback;
    if (addr.empty()) {
        if (const char* v = std::getenv("EXPLOREX_ADDR")) fallback = v;
        addr = fallback;
    }
    ListenAddress out;
    if (addr.empty()) return out;
    std::string_view port = addr;
    if (auto colon = addr.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) out.host = std::string(addr.substr(0, colon));
        port = addr.substr(colon + 1);
    }
    int p = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
    require(ec == std::errc{} && ptr == port.data() + port.size() && p >= 0 && p < 65536,
            ErrorCode::ConfigError, "bad listen address '" + std::string(addr) + "'");
    out.port = p;
    return out;
}

}  // namespace explorex
