#include "explorex/bandit_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "explorex/hash.hpp"
#include "explorex/random.hpp"

namespace explorex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_selectable(const ScoredCandidateSet& set) {
    require(!set.candidates.empty(), ErrorCode::InvalidInput, "no candidates to select from");
    set.validate();
}

std::uint64_t fingerprint(const ScoredCandidateSet& set) {
    std::uint64_t h = set.candidates.size();
    for (const auto& c : set.candidates) h = hash_combine(h, hash64(c.id));
    return h;
}

}  // namespace

void Ucb1EnhancedConfig::validate() const {
    require(std::isfinite(target), ErrorCode::InvalidInput, "target_reward must be finite");
    require(std::isfinite(w) && w >= 0.0, ErrorCode::InvalidInput,
            "exploration_weight must be non-negative");
    require(std::isfinite(delta) && delta > 0.0, ErrorCode::InvalidInput,
            "penalty_delta must be positive");
}

double ucb1_bonus(std::uint64_t total_rounds, std::uint64_t pulls) noexcept {
    if (pulls == 0) return kInf;
    return std::sqrt(2.0 * std::log(static_cast<double>(total_rounds)) /
                     static_cast<double>(pulls));
}

double ucb1_enhanced_objective(const ArmStats& arm, std::uint64_t total_rounds,
                               const Ucb1EnhancedConfig& cfg) {
    const auto reward = arm.mean_reward();
    require(reward.has_value(), ErrorCode::InvalidInput,
            "objective needs an observed reward for '" + arm.candidate_id + "'");
    const double miss = std::abs(*reward - cfg.target);
    const double penalty = *reward >= cfg.target ? miss / cfg.delta : cfg.delta * miss;
    return cfg.w * ucb1_bonus(total_rounds, arm.pulls) - penalty;
}

bool ucb1_is_cold(const ArmStats& arm, const Ucb1EnhancedConfig& cfg) noexcept {
    return arm.trials == 0 || arm.pulls < std::max<std::uint64_t>(1, cfg.min_pulls);
}

ScoredCandidateSet ucb1_enhanced_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                        const DecisionContext& ctx,
                                        const Ucb1EnhancedConfig& cfg) {
    require_selectable(set);
    require_aligned(set, stats);
    cfg.validate();

    std::vector<double> scores(stats.size(), kInf);
    std::optional<std::size_t> cold;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (!ucb1_is_cold(stats[i], cfg)) continue;
        if (!cold || stats[i].pulls < stats[*cold].pulls) cold = i;
    }
    if (!cold) {
        require(ctx.total_rounds >= 1, ErrorCode::InvalidState,
                "UCB1Enhanced needs total_rounds >= 1 once every arm is pulled");
    }
    // With cold arms present T may still be 0; clamp so warm scores stay finite.
    const std::uint64_t rounds = std::max<std::uint64_t>(ctx.total_rounds, 1);
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (!ucb1_is_cold(stats[i], cfg)) scores[i] = ucb1_enhanced_objective(stats[i], rounds, cfg);
    }

    set.decided = cold ? *cold : argmax_with_tiebreak(scores);
    set.scores = std::move(scores);
    return set;
}

ScoredCandidateSet epsilon_greedy_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                         const DecisionContext& ctx, double epsilon) {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::InvalidInput,
            "epsilon must be in [0, 1]");
    require_selectable(set);
    require_aligned(set, stats);

    std::vector<double> means(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) means[i] = stats[i].mean_reward().value_or(kInf);

    Rng rng(ctx.rng_seed);
    if (rng.uniform01() < epsilon) {
        set.decided = rng.uniform_index(set.candidates.size());
    } else {
        set.decided = argmax_with_tiebreak(means);
    }
    set.scores = std::move(means);
    return set;
}

ScoredCandidateSet thompson_sampling_select(ScoredCandidateSet set,
                                            std::span<const ArmStats> stats,
                                            const DecisionContext& ctx) {
    require_selectable(set);
    require_aligned(set, stats);

    Rng rng(ctx.rng_seed);
    std::vector<double> draws(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto failures = stats[i].trials - stats[i].successes;
        draws[i] = rng.beta(1.0 + static_cast<double>(stats[i].successes),
                            1.0 + static_cast<double>(failures));
    }
    set.decided = argmax_with_tiebreak(draws);
    set.scores = std::move(draws);
    return set;
}

ScoredCandidateSet rl_action_select(ScoredCandidateSet set, const DecisionContext&,
                                    const Scorer& scorer, bool terminal) {
    require_selectable(set);
    require(static_cast<bool>(scorer), ErrorCode::ScorerError, "no scorer bound");

    std::vector<double> predicted(set.candidates.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        double value = 0.0;
        try {
            value = scorer(set.candidates[i]);
        } catch (const std::exception& e) {
            fail(ErrorCode::ScorerError,
                 "scorer failed on '" + set.candidates[i].id + "': " + e.what());
        }
        require(std::isfinite(value), ErrorCode::ScorerError,
                "scorer returned a non-finite value for '" + set.candidates[i].id + "'");
        predicted[i] = value;
    }
    set.decided = terminal ? std::optional<std::size_t>(argmax_with_tiebreak(predicted))
                           : std::nullopt;
    set.scores = std::move(predicted);
    return set;
}

ScoredCandidateSet softmax_select(ScoredCandidateSet set, const DecisionContext& ctx,
                                  double temperature) {
    require_selectable(set);
    require(set.scores.has_value(), ErrorCode::InvalidInput,
            "softmax selection needs scores from an upstream operator");

    auto probs = softmax_normalize(*set.scores, temperature);
    Rng rng(ctx.rng_seed);
    const double u = rng.uniform01();
    double cumulative = 0.0;
    std::size_t pick = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative) {
            pick = i;
            break;
        }
    }
    set.decided = pick;
    set.scores = std::move(probs);
    return set;
}

ScoredCandidateSet uniform_select(ScoredCandidateSet set, const DecisionContext& ctx) {
    require_selectable(set);
    Rng rng(ctx.rng_seed);
    set.decided = rng.uniform_index(set.candidates.size());
    return set;
}

namespace {

class BinarySearch {
public:
    BinarySearch(std::span<const ArmStats> stats, BinarySearchState& state,
                 const BinarySearchConfig& cfg)
        : stats_(stats), s_(state), cfg_(cfg) {}

    bool warned = false;

    void restart() {
        s_.lo = 0;
        s_.hi = stats_.size() - 1;
        s_.current = 0;
        s_.settled = false;
        s_.direction = 0;
        s_.phase = BinarySearchState::Phase::endpoints;
    }

    void advance() {
        using Phase = BinarySearchState::Phase;
        for (;;) {
            switch (s_.phase) {
                case Phase::unstarted:
                    restart();
                    break;
                case Phase::settled:
                    return;
                case Phase::endpoints:
                    if (s_.lo == s_.hi) {
                        settle(s_.lo);
                        break;
                    }
                    if (!ready(s_.lo)) {
                        s_.current = s_.lo;
                        return;
                    }
                    if (!ready(s_.hi)) {
                        s_.current = s_.hi;
                        return;
                    }
                    visit(s_.lo);
                    visit(s_.hi);
                    s_.direction = reward(s_.hi) >= reward(s_.lo) ? 1 : -1;
                    s_.phase = Phase::searching;
                    break;
                case Phase::searching: {
                    if (s_.hi - s_.lo <= 1) {
                        settle(best_visited());
                        break;
                    }
                    const std::size_t mid = (s_.lo + s_.hi) / 2;
                    s_.current = mid;
                    if (!ready(mid)) return;
                    visit(mid);
                    const double r = reward(mid);
                    if (!consistent(r)) {
                        warned = true;
                        ++s_.non_monotone_warnings;
                        if (s_.restarts == 0) {
                            ++s_.restarts;
                            restart();
                        } else {
                            settle(best_visited());
                        }
                        break;
                    }
                    if (r == cfg_.target) {
                        settle(mid);
                        break;
                    }
                    const bool target_above = (r < cfg_.target) == (s_.direction > 0);
                    if (target_above) {
                        s_.lo = mid;
                    } else {
                        s_.hi = mid;
                    }
                    break;
                }
            }
        }
    }

private:
    bool ready(std::size_t i) const { return stats_[i].trials >= cfg_.min_samples; }

    double reward(std::size_t i) const { return *stats_[i].mean_reward(); }

    void visit(std::size_t i) {
        if (std::find(s_.visited.begin(), s_.visited.end(), i) == s_.visited.end()) {
            s_.visited.push_back(i);
        }
    }

    // A monotone reward keeps every midpoint inside the bracket's endpoint rewards.
    bool consistent(double r) const {
        const double a = reward(s_.lo);
        const double b = reward(s_.hi);
        return r >= std::min(a, b) && r <= std::max(a, b);
    }

    std::size_t best_visited() const {
        std::size_t best = s_.visited.empty() ? s_.lo : s_.visited.front();
        double best_miss = kInf;
        for (std::size_t i : s_.visited) {
            if (stats_[i].trials == 0) continue;
            const double miss = std::abs(reward(i) - cfg_.target);
            if (miss < best_miss || (miss == best_miss && i < best)) {
                best = i;
                best_miss = miss;
            }
        }
        return best;
    }

    void settle(std::size_t i) {
        s_.lo = s_.hi = s_.current = i;
        s_.settled = true;
        s_.phase = BinarySearchState::Phase::settled;
    }

    std::span<const ArmStats> stats_;
    BinarySearchState& s_;
    const BinarySearchConfig& cfg_;
};

}  // namespace

BinarySearchResult binary_search_select(ScoredCandidateSet set, std::span<const ArmStats> stats,
                                        BinarySearchState state, const BinarySearchConfig& cfg) {
    require_selectable(set);
    require_aligned(set, stats);
    require(cfg.min_samples >= 1, ErrorCode::InvalidInput, "min_samples must be positive");
    for (std::size_t i = 0; i < set.candidates.size(); ++i) {
        const auto& c = set.candidates[i];
        require(c.numeric_value.has_value(), ErrorCode::InvalidInput,
                "binary search needs numeric candidates; '" + c.id + "' is not");
        require(i == 0 || *set.candidates[i - 1].numeric_value <= *c.numeric_value,
                ErrorCode::InvalidInput, "binary search candidates must be sorted ascending");
    }

    const std::uint64_t fp = fingerprint(set);
    if (state.candidates_fingerprint != fp || state.phase == BinarySearchState::Phase::unstarted) {
        state = BinarySearchState{};
        state.candidates_fingerprint = fp;
    }

    BinarySearch search(stats, state, cfg);
    search.advance();
    state.samples_at_current = stats[state.current].trials;

    std::vector<double> scores(set.candidates.size(), 0.0);
    scores[state.current] = 1.0;
    set.decided = state.current;
    set.scores = std::move(scores);
    return {std::move(set), std::move(state), search.warned};
}

}  // namespace explorex
