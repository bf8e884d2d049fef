#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "explorex/feedback_store.hpp"
#include "explorex/operators.hpp"

namespace explorex {

struct OperatorSpec {
    std::string name;
    Json config = Json::object();  // every key except "operator"

    bool operator==(const OperatorSpec&) const = default;
};

struct TransformerSpec {
    std::string transformer_id;
    std::vector<OperatorSpec> operator_chain;

    bool operator==(const TransformerSpec&) const = default;
};

/// Everything needed to run one exploration: what data shape it explores,
/// when it fires, how much traffic it takes, which operators run, and where
/// rewards come from.
struct ExplorationTarget {
    std::string target_id;
    TaskType task_type = TaskType::candidate_selection;
    bool subscribed = false;
    double sample_rate = 1.0;
    std::map<std::string, std::string> trigger;  // conjunction of attr == value
    std::vector<TransformerSpec> transformers;
    std::string feedback_fetcher = "ctr";
    FeedbackLevel feedback_level = FeedbackLevel::global;
    std::map<std::string, std::string> metadata;
    // Optional declared candidate ids; only used to check simulator inputs.
    std::optional<std::vector<std::string>> candidates;

    bool operator==(const ExplorationTarget&) const = default;
};

struct Decision {
    std::string decision_id;
    std::string target_id;
    std::string transformer_id;
    std::string unit_id;
    bool explored = false;
    std::optional<std::string> chosen_candidate_id;
    std::int64_t timestamp_ms = 0;
};

struct ExploreOutcome {
    TargetData data;
    Decision decision;
    std::optional<std::string> soft_error;  // why an attempted exploration fell back
};

struct TargetHealth {
    std::uint64_t version = 0;
    std::uint64_t explored = 0;
    std::uint64_t passthrough = 0;
    std::uint64_t operator_errors = 0;
    std::uint64_t deadline_overruns = 0;
    std::uint64_t fetch_failures = 0;
    std::uint64_t warnings = 0;
};

struct RegisterAck {
    std::string target_id;
    std::uint64_t version = 0;
    bool replaced = false;
};

struct RegistryOptions {
    // Snapshot refresh cadence; either trigger fires a refresh. 0 disables.
    std::uint64_t refresh_every_decisions = 1000;
    std::int64_t refresh_interval_ms = 60'000;
    std::function<std::int64_t()> clock;  // wall clock in ms when unset
};

/// Stable per-(unit, target) bucketing into [0, 10^6).
bool in_traffic(std::string_view unit_id, std::string_view target_id, double sample_rate);

/// Holds exploration targets and routes target data through their
/// transformer chains.
///
/// explore() never fails for anything but an unknown target: untriggered,
/// out-of-traffic, unsubscribed, or failing decisions all return the input
/// unchanged with explored = false. Decisions on one target are serialized;
/// different targets run concurrently.
class TargetRegistry {
public:
    explicit TargetRegistry(FeedbackStore& store, RegistryOptions options = {},
                            OperatorCatalog catalog = OperatorCatalog::with_builtins());
    ~TargetRegistry();

    TargetRegistry(const TargetRegistry&) = delete;
    TargetRegistry& operator=(const TargetRegistry&) = delete;

    /// Must be called before registering targets that name the scorer.
    void register_scorer(const std::string& name, Scorer scorer);

    /// Validates the whole chain eagerly (ConfigError). A new target starts
    /// unsubscribed; replacing an existing id keeps its subscription, counters
    /// and decision count, and bumps the version unless the config is identical.
    RegisterAck register_target(ExplorationTarget cfg);

    void subscribe(const std::string& target_id);
    void unsubscribe(const std::string& target_id);

    ExploreOutcome explore(const std::string& target_id, TargetData data, DecisionContext ctx,
                           std::optional<std::chrono::steady_clock::time_point> deadline = {});

    /// Pulls a fresh snapshot from the bound fetcher for every transformer.
    /// On fetcher failure the previous snapshot stays in place.
    void refresh_stats(const std::string& target_id);

    ExplorationTarget target(const std::string& target_id) const;
    std::vector<ExplorationTarget> targets() const;
    TargetHealth health(const std::string& target_id) const;

    /// Stats the next decision of `transformer_id` would see for these candidates.
    std::vector<ArmStats> arm_stats(const std::string& target_id,
                                    const std::string& transformer_id,
                                    const ScoredCandidateSet& set,
                                    const std::optional<std::string>& unit_id = {}) const;

    /// Re-derives decision counters from the feedback store, e.g. after a
    /// replay, so decision ids and seeds continue where they left off.
    void resync_counters();

    FeedbackStore& store() noexcept { return store_; }

    /// Throws ConfigError on any invalid target definition.
    void validate(const ExplorationTarget& cfg) const;

private:
    struct Runtime;

    std::shared_ptr<Runtime> find(const std::string& target_id) const;
    std::shared_ptr<Runtime> build(const ExplorationTarget& cfg) const;
    void refresh_locked(Runtime& rt);
    std::int64_t now_ms() const;

    FeedbackStore& store_;
    RegistryOptions options_;
    OperatorCatalog catalog_;
    std::map<std::string, Scorer> scorers_;

    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Runtime>> targets_;
};

}  // namespace explorex
