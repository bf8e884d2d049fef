#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "explorex/json_io.hpp"
#include "explorex/service_api.hpp"
#include "explorex/simulator.hpp"

namespace fs = std::filesystem;
using namespace explorex;

namespace {

constexpr int kExitError = 1;
constexpr int kExitOutput = 2;

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::vector<fs::path> json_files(const fs::path& p) {
    if (!fs::is_directory(p)) return {p};
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".json") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// "x.exposures.jsonl" pairs with "x.events.jsonl".
std::optional<fs::path> sibling_event_log(const fs::path& exposure_log) {
    const std::string s = exposure_log.string();
    const std::string suffix = ".exposures.jsonl";
    if (s.size() <= suffix.size() || s.compare(s.size() - suffix.size(), suffix.size(), suffix) != 0) {
        return std::nullopt;
    }
    fs::path events = s.substr(0, s.size() - suffix.size()) + ".events.jsonl";
    if (!fs::exists(events)) return std::nullopt;
    return events;
}

void print_counters(const CounterTable& table, const std::string& target, bool per_unit) {
    for (const auto& [key, counts] : table) {
        if (!target.empty() && key.target_id != target) continue;
        if (!per_unit && !key.unit_id.empty()) continue;
        Json line{{"target_id", key.target_id},
                  {"transformer_id", key.transformer_id},
                  {"candidate_id", key.candidate_id},
                  {"pulls", counts.pulls},
                  {"events", counts.events}};
        if (!key.unit_id.empty()) line["unit_id"] = key.unit_id;
        std::cout << line.dump() << '\n';
    }
}

int run_serve(const std::string& addr, const std::optional<fs::path>& targets,
              const std::optional<fs::path>& fetchers, const std::optional<fs::path>& exposure_log,
              const std::optional<fs::path>& event_log, bool subscribe_all) {
    FeedbackStoreOptions store_opts;
    store_opts.exposure_log = exposure_log;
    store_opts.event_log = event_log;
    FeedbackStore store(store_opts);
    if (exposure_log && fs::exists(*exposure_log)) {
        // Recover counters and decision numbering before appending to the logs.
        const auto stats = store.replay(
            *exposure_log, event_log && fs::exists(*event_log) ? event_log : std::nullopt);
        spdlog::info("replayed {} exposures and {} events", stats.exposures, stats.events);
    }
    if (fetchers) load_fetchers(*fetchers, store);

    TargetRegistry registry(store);
    if (targets) {
        for (const auto& file : json_files(*targets)) {
            const auto ack = registry.register_target(load_target(file));
            if (subscribe_all) registry.subscribe(ack.target_id);
            spdlog::info("registered target {} from {}", ack.target_id, file.string());
        }
    }

    Service service(registry, service_options_from_env());
    httplib::Server server;
    service.bind(server);
    const ListenAddress listen = parse_listen_address(addr);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    spdlog::info("listening on {}:{}", listen.host, listen.port);
    if (!server.listen(listen.host, listen.port)) {
        std::cerr << "cannot listen on " << listen.host << ':' << listen.port << '\n';
        return kExitError;
    }
    return 0;
}

int run_simulate(const fs::path& config, const fs::path& env_path, const fs::path& out_path,
                 std::optional<fs::path> fetchers, std::optional<fs::path> exposure_log,
                 std::optional<fs::path> event_log) {
    const ExplorationTarget target = load_target(config);
    const SimEnvironment env = SimEnvironment::load(env_path);
    if (!fetchers) {
        const auto beside = config.parent_path() / "fetchers.json";
        if (fs::exists(beside)) fetchers = beside;
    }

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
        std::cerr << "cannot write " << out_path.string() << '\n';
        return kExitOutput;
    }
    if (!exposure_log) exposure_log = out_path.string() + ".exposures.jsonl";
    if (!event_log) event_log = out_path.string() + ".events.jsonl";
    for (const auto& log : {*exposure_log, *event_log}) {
        std::ofstream truncate(log, std::ios::trunc);
        if (!truncate) {
            std::cerr << "cannot write " << log.string() << '\n';
            return kExitOutput;
        }
    }

    SimOptions opts;
    opts.exposure_log = exposure_log;
    opts.event_log = event_log;
    if (fetchers) opts.fetchers = fetchers_from_json(read_json_file(*fetchers));

    const SimResult result = run_simulation(env, target, opts);
    write_csv(out, result.epochs);
    out.flush();
    if (!out) {
        std::cerr << "failed writing " << out_path.string() << '\n';
        return kExitOutput;
    }
    std::cerr << "decisions=" << (result.epochs.empty() ? 0 : result.epochs.back().cumulative_decisions)
              << " displays=" << result.displays << " clicks=" << result.clicks
              << " epochs=" << result.epochs.size() << '\n';
    return 0;
}

int run_replay(const fs::path& log, std::optional<fs::path> events, const std::string& target,
               bool per_unit) {
    if (!fs::exists(log)) {
        std::cerr << "no such log: " << log.string() << '\n';
        return kExitError;
    }
    if (!events) events = sibling_event_log(log);
    const auto [counters, stats] = replay_offline_log(log, events);
    print_counters(counters, target, per_unit);
    std::cerr << "exposures=" << stats.exposures << " events=" << stats.events
              << " skipped_lines=" << stats.skipped_lines << '\n';
    return 0;
}

int run_stats_online(const std::string& addr, const std::string& target) {
    const ListenAddress a = parse_listen_address(addr);
    httplib::Client client(a.host, a.port);
    auto res = client.Get("/stats/" + target);
    if (!res) {
        std::cerr << "cannot reach " << a.host << ':' << a.port << '\n';
        return kExitError;
    }
    std::cout << res->body << '\n';
    return res->status == 200 ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explorex: exploration service, simulator and log tools"};
    app.require_subcommand(1);

    std::string addr;
    std::optional<fs::path> targets, fetchers, exposure_log, event_log;
    bool subscribe_all = false;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--addr", addr, "host:port (default $EXPLOREX_ADDR or 127.0.0.1:8080)");
    serve->add_option("--targets", targets, "Target JSON file or directory to preload")
        ->check(CLI::ExistingPath);
    serve->add_option("--fetchers", fetchers, "Fetcher definitions JSON")->check(CLI::ExistingFile);
    serve->add_option("--exposure-log", exposure_log, "Append-only exposure log (JSONL)");
    serve->add_option("--event-log", event_log, "Append-only event log (JSONL)");
    serve->add_flag("--subscribe", subscribe_all, "Subscribe preloaded targets");

    fs::path config, env_path, out_path;
    auto* simulate = app.add_subcommand("simulate", "Run the Bernoulli simulation and write CSV");
    simulate->add_option("--config", config, "Target JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--env", env_path, "Environment JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", out_path, "CSV output")->required();
    simulate->add_option("--fetchers", fetchers,
                         "Fetcher definitions (default: fetchers.json next to --config)")
        ->check(CLI::ExistingFile);
    simulate->add_option("--exposure-log", exposure_log, "Default: <out>.exposures.jsonl");
    simulate->add_option("--event-log", event_log, "Default: <out>.events.jsonl");

    fs::path log;
    std::string target;
    bool per_unit = false;
    auto* replay = app.add_subcommand("replay", "Rebuild counters from logs");
    replay->add_option("--log", log, "Exposure log")->required();
    replay->add_option("--events", event_log, "Event log (default: sibling .events.jsonl)");
    replay->add_option("--target", target, "Only this target");
    replay->add_flag("--per-unit", per_unit, "Include per-unit counters");

    auto* stats = app.add_subcommand("stats", "Print counters for a target");
    stats->add_option("--target", target, "Target id")->required();
    stats->add_option("--log", log, "Read from an exposure log instead of a running service");
    stats->add_option("--events", event_log, "Event log for --log");
    stats->add_option("--addr", addr, "Service address");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return run_serve(addr, targets, fetchers, exposure_log, event_log, subscribe_all);
        if (*simulate) {
            return run_simulate(config, env_path, out_path, fetchers, exposure_log, event_log);
        }
        if (*replay) return run_replay(log, event_log, target, per_unit);
        if (*stats) {
            if (!log.empty()) return run_replay(log, event_log, target, false);
            return run_stats_online(addr, target);
        }
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}
