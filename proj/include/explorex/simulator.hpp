#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "explorex/feedback_store.hpp"
#include "explorex/target_registry.hpp"

namespace explorex {

struct SimCandidate {
    std::string id;
    double true_ctr = 0.0;
};

/// Bernoulli click environment. `rounds` counts explored decisions.
struct SimEnvironment {
    std::vector<SimCandidate> candidates;
    double target_reward = 0.0;
    std::uint64_t rounds = 0;
    std::uint64_t epoch_size = 1000;
    std::uint64_t seed = 0;

    void validate() const;
    static SimEnvironment from_json(const Json& j);
    static SimEnvironment load(const std::filesystem::path& path);
};

struct EpochReport {
    std::uint64_t epoch = 0;  // 1-based
    std::vector<std::string> candidate_ids;
    std::vector<double> display_share;
    // |cumulative empirical CTR - target| at the end of the epoch.
    std::vector<std::optional<double>> deviation;
    std::uint64_t cumulative_decisions = 0;
};

struct SimOptions {
    std::optional<std::filesystem::path> exposure_log;
    std::optional<std::filesystem::path> event_log;
    std::map<std::string, MetricSpec> fetchers;
    std::uint64_t refresh_every_decisions = 1000;
    std::int64_t ms_per_request = 100;  // simulated clock step
};

struct SimResult {
    std::vector<EpochReport> epochs;
    CounterTable counters;
    StoreHealth store_health;
    TargetHealth target_health;
    std::uint64_t displays = 0;
    std::uint64_t clicks = 0;
    std::uint64_t requests = 0;  // including passthrough requests
};

/// Drives a fresh store and registry with simulated traffic: one explore per
/// fresh unit id, a display event for every explored decision and a click
/// with probability true_ctr of the chosen candidate.
SimResult run_simulation(const SimEnvironment& env, const ExplorationTarget& target,
                         const SimOptions& options = {});

/// Header: epoch,candidate_id,display_share,deviation,cumulative_decisions
void write_csv(std::ostream& out, const std::vector<EpochReport>& epochs);

}  // namespace explorex
