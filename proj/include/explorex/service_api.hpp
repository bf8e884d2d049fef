#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

#include "explorex/json_io.hpp"
#include "explorex/target_registry.hpp"

namespace httplib {
class Server;
}

namespace explorex {

struct ServiceOptions {
    std::chrono::milliseconds explore_deadline{20};
};

struct HttpResponse {
    int status = 200;
    Json body;  // {"status": "ok"|"error", "error_code"?, "body"?, "message"?}
};

int http_status(ErrorCode code) noexcept;

/// JSON-over-HTTP front end for a registry. handle() is transport-free so
/// tests can drive it directly; bind() mounts it on an httplib server.
///
///   PUT  /targets/{id}               register or replace a target
///   GET  /targets, /targets/{id}
///   POST /targets/{id}/subscribe, /targets/{id}/unsubscribe
///   POST /explore                    {target_id, unit_id, attributes, data}
///   POST /events                     one event or an array of events
///   GET  /stats/{id}                 per transformer and candidate counters
///   PUT  /fetchers/{name}            register a metric fetcher
///   GET  /health
class Service {
public:
    explicit Service(TargetRegistry& registry, ServiceOptions options = {});

    HttpResponse handle(std::string_view method, std::string_view path, const std::string& body);

    void bind(httplib::Server& server);

    const ServiceOptions& options() const noexcept { return options_; }

private:
    Json put_target(const std::string& id, const Json& body);
    Json explore(const Json& body);
    Json post_events(const Json& body);
    Json stats(const std::string& id);

    TargetRegistry& registry_;
    ServiceOptions options_;
};

/// Reads EXPLOREX_DEADLINE_MS when set.
ServiceOptions service_options_from_env();

struct ListenAddress {
    std::string host = "127.0.0.1";
    int port = 8080;
};

/// "host:port", ":port" or "port". Falls back to EXPLOREX_ADDR, then defaults.
ListenAddress parse_listen_address(std::string_view addr);

}  // namespace explorex
