#include "explorex/feedback_store.hpp"

#include <algorithm>
#include <chrono>

#include <spdlog/spdlog.h>

#include "explorex/json_io.hpp"

namespace explorex {

namespace {

constexpr std::int64_t kMinuteMs = 60'000;

std::int64_t floor_minute(std::int64_t ts) {
    return (ts >= 0 ? ts : ts - kMinuteMs + 1) / kMinuteMs;
}

std::int64_t system_now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::uint64_t Counts::count(std::string_view event) const {
    auto it = events.find(std::string(event));
    return it == events.end() ? 0 : it->second;
}

FeedbackStore::FeedbackStore(FeedbackStoreOptions options) : options_(std::move(options)) {
    if (!options_.clock) options_.clock = system_now_ms;
    if (options_.exposure_log) {
        exposure_out_.open(*options_.exposure_log, std::ios::app);
        if (!exposure_out_) {
            spdlog::warn("exposure log {} is not writable; serving counters only",
                         options_.exposure_log->string());
        }
    }
    if (options_.event_log) {
        event_out_.open(*options_.event_log, std::ios::app);
        if (!event_out_) {
            spdlog::warn("event log {} is not writable", options_.event_log->string());
        }
    }
    register_fetcher("ctr", MetricSpec{});
    register_fetcher("acceptance_rate", MetricSpec{"accept", std::string(kDisplayEvent), {}});
}

FeedbackStore::~FeedbackStore() = default;

std::int64_t FeedbackStore::now_ms() const { return options_.clock(); }

bool FeedbackStore::append_line(std::ofstream& out, const std::string& line) {
    std::lock_guard lock(log_mu_);
    if (!out.is_open() || !out.good()) return false;
    out << line << '\n';
    out.flush();
    return out.good();
}

LogAck FeedbackStore::log_exposure(const ExposureRecord& rec) {
    return log_exposure_impl(rec, true);
}

LogAck FeedbackStore::log_exposure_impl(const ExposureRecord& rec, bool write_log) {
    require(!rec.decision_id.empty(), ErrorCode::InvalidInput, "exposure without decision_id");
    std::unique_lock lock(mu_);
    auto [it, inserted] = exposures_.try_emplace(rec.decision_id);
    if (!inserted) return LogAck::duplicate;

    Exposure& exp = it->second;
    exp.target_id = rec.target_id;
    exp.transformer_id = rec.transformer_id;
    exp.unit_id = rec.unit_id;
    exp.candidate_id = rec.chosen_candidate_id;
    ++health_.exposures;
    ++exposures_per_target_[rec.target_id];

    ++counters_[{rec.target_id, rec.transformer_id, "", rec.chosen_candidate_id}].totals.pulls;
    if (options_.per_unit_counters) {
        ++counters_[{rec.target_id, rec.transformer_id, rec.unit_id, rec.chosen_candidate_id}]
              .totals.pulls;
    }

    if (auto waiting = unmatched_.find(rec.decision_id); waiting != unmatched_.end()) {
        auto events = std::move(waiting->second);
        unmatched_.erase(waiting);
        health_.pending_events -= events.size();
        for (auto& [ev, arrival] : events) ingest_locked(ev, arrival, false);
    }
    lock.unlock();

    if (!write_log || !options_.exposure_log) return LogAck::written;
    if (!append_line(exposure_out_, to_json(rec).dump())) {
        std::unique_lock relock(mu_);
        ++health_.log_write_failures;
        return LogAck::counter_only_degraded;
    }
    return LogAck::written;
}

void FeedbackStore::ingest_event(const FeedbackEvent& ev) {
    require(!ev.decision_id.empty() && !ev.event_type.empty(), ErrorCode::InvalidInput,
            "event needs decision_id and event_type");
    const std::int64_t now = now_ms();
    std::unique_lock lock(mu_);
    expire_locked(now);
    ingest_locked(ev, now, true);
}

void FeedbackStore::ingest_locked(const FeedbackEvent& ev, std::int64_t arrival_ms,
                                  bool write_log) {
    auto it = exposures_.find(ev.decision_id);
    if (it == exposures_.end()) {
        auto& waiting = unmatched_[ev.decision_id];
        const bool dup = std::any_of(waiting.begin(), waiting.end(), [&](const auto& w) {
            return w.first.event_type == ev.event_type;
        });
        if (dup) {
            ++health_.duplicate_events;
            return;
        }
        waiting.emplace_back(ev, arrival_ms);
        ++health_.pending_events;
        if (write_log && options_.event_log) append_line(event_out_, to_json(ev).dump());
        return;
    }

    Exposure& exp = it->second;
    if (std::find(exp.seen_events.begin(), exp.seen_events.end(), ev.event_type) !=
        exp.seen_events.end()) {
        ++health_.duplicate_events;
        return;
    }
    exp.seen_events.push_back(ev.event_type);
    if (write_log && options_.event_log) append_line(event_out_, to_json(ev).dump());

    if (ev.event_type == kDisplayEvent) {
        apply_locked(exp, ev);
        exp.display_ms = ev.timestamp_ms;
        auto held = std::move(exp.waiting_display);
        exp.waiting_display.clear();
        health_.pending_events -= held.size();
        for (auto& [waiting, arrival] : held) {
            if (waiting.timestamp_ms + options_.clock_skew_ms < ev.timestamp_ms) {
                ++health_.clock_skew_violations;
            }
            apply_locked(exp, waiting);
        }
    } else if (exp.display_ms) {
        if (ev.timestamp_ms + options_.clock_skew_ms < *exp.display_ms) {
            ++health_.clock_skew_violations;
        }
        apply_locked(exp, ev);
    } else {
        exp.waiting_display.emplace_back(ev, arrival_ms);
        ++health_.pending_events;
    }
}

void FeedbackStore::apply_locked(Exposure& exp, const FeedbackEvent& ev) {
    bump_locked({exp.target_id, exp.transformer_id, "", exp.candidate_id}, ev.event_type,
                ev.timestamp_ms);
    if (options_.per_unit_counters) {
        bump_locked({exp.target_id, exp.transformer_id, exp.unit_id, exp.candidate_id},
                    ev.event_type, ev.timestamp_ms);
    }
    ++health_.matched_events;
}

void FeedbackStore::bump_locked(const CounterKey& key, const std::string& event,
                                std::int64_t ts) {
    KeyState& state = counters_[key];
    ++state.totals.events[event];
    const std::int64_t minute = floor_minute(ts);
    ++state.minutes[minute][event];
    // Retention is relative to the newest bucket so that replaying a log
    // later rebuilds exactly the same buckets.
    const std::int64_t oldest =
        state.minutes.rbegin()->first - options_.retention_ms / kMinuteMs;
    state.minutes.erase(state.minutes.begin(), state.minutes.lower_bound(oldest));
}

void FeedbackStore::expire_pending() {
    const std::int64_t now = now_ms();
    std::unique_lock lock(mu_);
    expire_locked(now);
}

void FeedbackStore::expire_locked(std::int64_t now) {
    const std::int64_t cutoff = now - options_.grace_ms;
    for (auto it = unmatched_.begin(); it != unmatched_.end();) {
        auto& waiting = it->second;
        const auto before = waiting.size();
        std::erase_if(waiting, [&](const auto& w) { return w.second < cutoff; });
        const auto dropped = before - waiting.size();
        health_.orphaned_events += dropped;
        health_.pending_events -= dropped;
        it = waiting.empty() ? unmatched_.erase(it) : std::next(it);
    }
    if (health_.pending_events == 0) return;
    for (auto& [id, exp] : exposures_) {
        if (exp.waiting_display.empty()) continue;
        const auto before = exp.waiting_display.size();
        std::erase_if(exp.waiting_display, [&](const auto& w) { return w.second < cutoff; });
        const auto dropped = before - exp.waiting_display.size();
        health_.orphaned_events += dropped;
        health_.pending_events -= dropped;
    }
}

void FeedbackStore::register_fetcher(const std::string& name, MetricSpec spec) {
    require(!name.empty(), ErrorCode::ConfigError, "fetcher name must be non-empty");
    require(spec.denominator_event == kDisplayEvent, ErrorCode::ConfigError,
            "fetcher '" + name + "': denominator_event must be \"display\"");
    require(!spec.numerator_event.empty() && spec.numerator_event != kDisplayEvent,
            ErrorCode::ConfigError, "fetcher '" + name + "': bad numerator_event");
    if (spec.window.sliding_ms) {
        require(*spec.window.sliding_ms > 0 && *spec.window.sliding_ms <= options_.retention_ms,
                ErrorCode::ConfigError,
                "fetcher '" + name + "': sliding window must be within counter retention");
    }
    std::unique_lock lock(mu_);
    fetchers_[name] = Fetcher{std::move(spec), {}};
}

void FeedbackStore::register_fetcher(const std::string& name, CustomFetcher fetcher) {
    require(!name.empty() && fetcher, ErrorCode::ConfigError, "invalid custom fetcher");
    std::unique_lock lock(mu_);
    fetchers_[name] = Fetcher{std::nullopt, std::move(fetcher)};
}

bool FeedbackStore::has_fetcher(const std::string& name) const {
    std::shared_lock lock(mu_);
    return fetchers_.count(name) > 0;
}

FeedbackSnapshot FeedbackStore::fetch_feedback(const std::string& fetcher_name,
                                               const FetchRequest& request) const {
    Fetcher fetcher;
    {
        std::shared_lock lock(mu_);
        auto it = fetchers_.find(fetcher_name);
        require(it != fetchers_.end(), ErrorCode::NotFound,
                "unknown feedback fetcher '" + fetcher_name + "'");
        fetcher = it->second;
    }
    if (request.level == FeedbackLevel::user) {
        require(request.unit_id.has_value() && !request.unit_id->empty(), ErrorCode::InvalidInput,
                "user-level feedback needs a unit_id");
    }
    if (fetcher.custom) return fetcher.custom(request);
    return metric_snapshot(*fetcher.metric, request);
}

FeedbackSnapshot FeedbackStore::metric_snapshot(const MetricSpec& spec,
                                                const FetchRequest& req) const {
    FeedbackSnapshot snap;
    snap.as_of_ms = now_ms();
    snap.window = spec.window;
    const std::string unit = req.level == FeedbackLevel::user ? *req.unit_id : std::string();

    std::shared_lock lock(mu_);
    auto it = counters_.lower_bound(CounterKey{req.target_id, req.transformer_id.value_or(""),
                                               "", ""});
    for (; it != counters_.end() && it->first.target_id == req.target_id; ++it) {
        const CounterKey& key = it->first;
        if (req.transformer_id && key.transformer_id != *req.transformer_id) break;
        if (key.unit_id != unit) continue;

        std::uint64_t trials = 0;
        std::uint64_t successes = 0;
        if (!spec.window.sliding_ms) {
            trials = it->second.totals.count(spec.denominator_event);
            successes = it->second.totals.count(spec.numerator_event);
        } else {
            const std::int64_t first = floor_minute(snap.as_of_ms - *spec.window.sliding_ms);
            for (auto m = it->second.minutes.lower_bound(first); m != it->second.minutes.end();
                 ++m) {
                auto count = [&](const std::string& e) -> std::uint64_t {
                    auto f = m->second.find(e);
                    return f == m->second.end() ? 0 : f->second;
                };
                trials += count(spec.denominator_event);
                successes += count(spec.numerator_event);
            }
        }
        auto& entry = snap.candidates[key.candidate_id];
        entry.trials += trials;
        entry.successes += successes;
    }
    for (auto& [id, entry] : snap.candidates) {
        if (entry.trials > 0) {
            entry.reward = static_cast<double>(entry.successes) / static_cast<double>(entry.trials);
        }
    }
    return snap;
}

std::map<std::string, std::uint64_t> FeedbackStore::pulls(
    const std::string& target_id, const std::string& transformer_id,
    const std::optional<std::string>& unit_id) const {
    std::map<std::string, std::uint64_t> out;
    const std::string unit = unit_id.value_or("");
    std::shared_lock lock(mu_);
    for (auto it = counters_.lower_bound(CounterKey{target_id, transformer_id, unit, ""});
         it != counters_.end() && it->first.target_id == target_id &&
         it->first.transformer_id == transformer_id && it->first.unit_id == unit;
         ++it) {
        out[it->first.candidate_id] = it->second.totals.pulls;
    }
    return out;
}

CounterTable FeedbackStore::counters() const {
    CounterTable out;
    std::shared_lock lock(mu_);
    for (const auto& [key, state] : counters_) out.emplace(key, state.totals);
    return out;
}

std::uint64_t FeedbackStore::exposure_count(const std::string& target_id) const {
    std::shared_lock lock(mu_);
    auto it = exposures_per_target_.find(target_id);
    return it == exposures_per_target_.end() ? 0 : it->second;
}

StoreHealth FeedbackStore::health() const {
    std::shared_lock lock(mu_);
    return health_;
}

ReplayStats FeedbackStore::replay(const std::filesystem::path& exposure_log,
                                  const std::optional<std::filesystem::path>& event_log) {
    ReplayStats stats;
    std::ifstream exposures(exposure_log);
    require(exposures.is_open(), ErrorCode::NotFound,
            "cannot open exposure log '" + exposure_log.string() + "'");
    std::string line;
    while (std::getline(exposures, line)) {
        if (line.empty()) continue;
        try {
            log_exposure_impl(exposure_from_json(Json::parse(line)), false);
            ++stats.exposures;
        } catch (const std::exception&) {
            ++stats.skipped_lines;
        }
    }
    if (!event_log) return stats;

    std::ifstream events(*event_log);
    require(events.is_open(), ErrorCode::NotFound,
            "cannot open event log '" + event_log->string() + "'");
    while (std::getline(events, line)) {
        if (line.empty()) continue;
        try {
            const FeedbackEvent ev = event_from_json(Json::parse(line));
            require(!ev.decision_id.empty() && !ev.event_type.empty(), ErrorCode::InvalidInput,
                    "incomplete event");
            std::unique_lock lock(mu_);
            ingest_locked(ev, now_ms(), false);
            ++stats.events;
        } catch (const std::exception&) {
            ++stats.skipped_lines;
        }
    }
    return stats;
}

std::pair<CounterTable, ReplayStats> replay_offline_log(
    const std::filesystem::path& exposure_log,
    const std::optional<std::filesystem::path>& event_log) {
    FeedbackStoreOptions options;
    options.grace_ms = std::numeric_limits<std::int64_t>::max() / 2;
    FeedbackStore store(options);
    const ReplayStats stats = store.replay(exposure_log, event_log);
    return {store.counters(), stats};
}

}  // namespace explorex
