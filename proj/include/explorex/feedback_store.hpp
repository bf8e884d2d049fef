#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "explorex/core_model.hpp"

namespace explorex {

inline constexpr std::string_view kDisplayEvent = "display";
inline constexpr std::string_view kClickEvent = "click";

struct ExposureRecord {
    std::string decision_id;
    std::string target_id;
    std::string transformer_id;
    std::string unit_id;
    std::string chosen_candidate_id;
    std::string operator_name;
    std::int64_t timestamp_ms = 0;
    std::map<std::string, std::string> extras;

    bool operator==(const ExposureRecord&) const = default;
};

/// `event_type` is "display", "click", or any custom name (e.g. "accept").
struct FeedbackEvent {
    std::string decision_id;
    std::string event_type;
    std::int64_t timestamp_ms = 0;

    bool operator==(const FeedbackEvent&) const = default;
};

enum class FeedbackLevel { global, user };

struct Window {
    // nullopt = all time; otherwise trailing duration in milliseconds.
    std::optional<std::int64_t> sliding_ms;

    bool operator==(const Window&) const = default;
};

struct CandidateFeedback {
    std::uint64_t trials = 0;
    std::uint64_t successes = 0;
    std::optional<double> reward;

    bool operator==(const CandidateFeedback&) const = default;
};

struct FeedbackSnapshot {
    std::map<std::string, CandidateFeedback> candidates;
    std::int64_t as_of_ms = 0;
    Window window;

    bool operator==(const FeedbackSnapshot&) const = default;
};

/// A metric fetcher: successes are numerator events, trials are denominator
/// events. Only "display" is accepted as a denominator because every other
/// event is held back until its decision's display arrives.
struct MetricSpec {
    std::string numerator_event{kClickEvent};
    std::string denominator_event{kDisplayEvent};
    Window window;
};

struct FetchRequest {
    std::string target_id;
    std::optional<std::string> transformer_id;  // all transformers when absent
    FeedbackLevel level = FeedbackLevel::global;
    std::optional<std::string> unit_id;
};

using CustomFetcher = std::function<FeedbackSnapshot(const FetchRequest&)>;

struct CounterKey {
    std::string target_id;
    std::string transformer_id;
    std::string unit_id;  // empty for the global keyspace
    std::string candidate_id;

    auto operator<=>(const CounterKey&) const = default;
};

struct Counts {
    std::uint64_t pulls = 0;
    std::map<std::string, std::uint64_t> events;

    std::uint64_t count(std::string_view event) const;
    bool operator==(const Counts&) const = default;
};

using CounterTable = std::map<CounterKey, Counts>;

enum class LogAck { written, duplicate, counter_only_degraded };

struct StoreHealth {
    std::uint64_t exposures = 0;
    std::uint64_t matched_events = 0;
    std::uint64_t duplicate_events = 0;
    std::uint64_t orphaned_events = 0;
    std::uint64_t pending_events = 0;
    std::uint64_t clock_skew_violations = 0;
    std::uint64_t log_write_failures = 0;
};

struct ReplayStats {
    std::uint64_t exposures = 0;
    std::uint64_t events = 0;
    std::uint64_t skipped_lines = 0;
};

struct FeedbackStoreOptions {
    std::optional<std::filesystem::path> exposure_log;
    std::optional<std::filesystem::path> event_log;
    std::int64_t grace_ms = 10 * 60 * 1000;
    std::int64_t retention_ms = 24 * 60 * 60 * 1000;
    std::int64_t clock_skew_ms = 5000;
    bool per_unit_counters = true;
    std::function<std::int64_t()> clock;  // wall clock in ms when unset
};

/// Exposure logging plus the real-time counters joined from feedback events.
///
/// Every exposure goes to the append-only JSONL log and to in-process
/// counters. Events join exposures exactly by decision id; anything that
/// arrives before its exposure (or a click before its display) waits up to
/// grace_ms and is then counted as an orphan.
class FeedbackStore {
public:
    explicit FeedbackStore(FeedbackStoreOptions options = {});
    ~FeedbackStore();

    FeedbackStore(const FeedbackStore&) = delete;
    FeedbackStore& operator=(const FeedbackStore&) = delete;

    LogAck log_exposure(const ExposureRecord& rec);
    void ingest_event(const FeedbackEvent& ev);

    /// Drops waiting events older than the grace period.
    void expire_pending();

    void register_fetcher(const std::string& name, MetricSpec spec);
    void register_fetcher(const std::string& name, CustomFetcher fetcher);
    bool has_fetcher(const std::string& name) const;

    FeedbackSnapshot fetch_feedback(const std::string& fetcher_name,
                                    const FetchRequest& request) const;

    /// Live pull counts per candidate for one (target, transformer).
    std::map<std::string, std::uint64_t> pulls(const std::string& target_id,
                                               const std::string& transformer_id,
                                               const std::optional<std::string>& unit_id = {}) const;

    CounterTable counters() const;
    StoreHealth health() const;

    /// Number of distinct exposures logged for a target.
    std::uint64_t exposure_count(const std::string& target_id) const;

    /// Rebuilds state from an exposure log and an optional event log. Malformed
    /// lines are skipped and counted; nothing is re-written to this store's logs.
    ReplayStats replay(const std::filesystem::path& exposure_log,
                       const std::optional<std::filesystem::path>& event_log = {});

    std::int64_t now_ms() const;

private:
    struct Exposure {
        std::string target_id;
        std::string transformer_id;
        std::string unit_id;
        std::string candidate_id;
        std::vector<std::string> seen_events;
        std::optional<std::int64_t> display_ms;
        std::vector<std::pair<FeedbackEvent, std::int64_t>> waiting_display;
    };

    struct KeyState {
        Counts totals;
        std::map<std::int64_t, std::map<std::string, std::uint64_t>> minutes;
    };

    struct Fetcher {
        std::optional<MetricSpec> metric;
        CustomFetcher custom;
    };

    LogAck log_exposure_impl(const ExposureRecord& rec, bool write_log);
    void ingest_locked(const FeedbackEvent& ev, std::int64_t arrival_ms, bool write_log);
    void apply_locked(Exposure& exp, const FeedbackEvent& ev);
    void bump_locked(const CounterKey& key, const std::string& event, std::int64_t ts);
    void expire_locked(std::int64_t now);
    bool append_line(std::ofstream& out, const std::string& line);
    FeedbackSnapshot metric_snapshot(const MetricSpec& spec, const FetchRequest& req) const;

    FeedbackStoreOptions options_;

    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, Exposure> exposures_;
    std::unordered_map<std::string, std::vector<std::pair<FeedbackEvent, std::int64_t>>> unmatched_;
    std::map<CounterKey, KeyState> counters_;
    std::map<std::string, std::uint64_t> exposures_per_target_;
    std::map<std::string, Fetcher> fetchers_;
    StoreHealth health_;

    std::mutex log_mu_;
    std::ofstream exposure_out_;
    std::ofstream event_out_;
};

/// Rebuilds counters from logs into a fresh store.
std::pair<CounterTable, ReplayStats> replay_offline_log(
    const std::filesystem::path& exposure_log,
    const std::optional<std::filesystem::path>& event_log = {});

}  // namespace explorex
