#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "explorex/core_model.hpp"

// Candidate-selection operators. Each takes the incoming set plus a stats
// snapshot aligned with it by position and returns the set with `decided`
// filled in (or, for a non-terminal scorer, with `scores` rewritten for the
// next operator in the chain).

namespace explorex {

/// Target-reward UCB. Steers toward candidates whose reward sits near
/// `target` instead of maximizing reward; above-target misses are penalized
/// by 1/delta and below-target misses by delta.
struct Ucb1EnhancedConfig {
    double target = 0.0;
    double w = 1.0;      // exploration weight on the UCB1 bonus
    double delta = 2.0;  // asymmetric penalty factor, must be > 0
    std::uint64_t min_pulls = 0;

    void validate() const;
};

/// UCB1 bonus sqrt(2 ln T / n). Infinite for n == 0.
double ucb1_bonus(std::uint64_t total_rounds, std::uint64_t pulls) noexcept;

/// Objective for one warm arm (trials > 0, pulls > 0).
double ucb1_enhanced_objective(const ArmStats& arm, std::uint64_t total_rounds,
                               const Ucb1EnhancedConfig& cfg);

/// An arm is cold while its reward is unknown or it has fewer than
/// max(1, min_pulls) pulls. Cold arms are served before any objective is
/// compared: fewest pulls first, lowest index on ties.
bool ucb1_is_cold(const ArmStats& arm, const Ucb1EnhancedConfig& cfg) noexcept;

ScoredCandidateSet ucb1_enhanced_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                        const DecisionContext& ctx,
                                        const Ucb1EnhancedConfig& cfg);

ScoredCandidateSet epsilon_greedy_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                         const DecisionContext& ctx, double epsilon);

/// Beta(1 + successes, 1 + failures) posterior draw per arm.
ScoredCandidateSet thompson_sampling_select(ScoredCandidateSet set,
                                            std::span<const ArmStats> stats,
                                            const DecisionContext& ctx);

using Scorer = std::function<double(const Candidate&)>;

/// Writes predicted rewards into scores. Decides only when terminal; a
/// non-terminal instance feeds a downstream selector such as softmax.
ScoredCandidateSet rl_action_select(ScoredCandidateSet set, const DecisionContext& ctx,
                                    const Scorer& scorer, bool terminal);

ScoredCandidateSet softmax_select(ScoredCandidateSet set, const DecisionContext& ctx,
                                  double temperature);

ScoredCandidateSet uniform_select(ScoredCandidateSet set, const DecisionContext& ctx);

struct BinarySearchConfig {
    double target = 0.0;
    std::uint64_t min_samples = 1;
};

struct BinarySearchState {
    enum class Phase { unstarted, endpoints, searching, settled };

    std::size_t lo = 0;
    std::size_t hi = 0;
    std::size_t current = 0;
    bool settled = false;
    std::uint64_t samples_at_current = 0;

    Phase phase = Phase::unstarted;
    int direction = 0;  // +1 reward rises with numeric_value, -1 falls
    int restarts = 0;
    std::uint64_t non_monotone_warnings = 0;
    std::uint64_t candidates_fingerprint = 0;
    std::vector<std::size_t> visited;

    bool operator==(const BinarySearchState&) const = default;
};

struct BinarySearchResult {
    ScoredCandidateSet set;
    BinarySearchState state;
    bool non_monotone_warning = false;  // raised during this call
};

/// Binary search over candidates sorted by numeric_value for the one whose
/// reward is closest to cfg.target. Measures both endpoints first to learn the
/// direction, then halves the bracket each time the midpoint has min_samples
/// trials. A state built for a different candidate list is reset.
BinarySearchResult binary_search_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                        BinarySearchState state, const BinarySearchConfig& cfg);

}  // namespace explorex
