#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "explorex/core_model.hpp"

namespace explorex {

enum class ExploreAction { tag_only, flip_decision };

/// A single model prediction offered for active-learning exploration.
struct PredictionInput {
    std::string item_id;
    std::optional<double> score;
    std::optional<std::vector<double>> class_probs;
    std::optional<std::vector<double>> embedding;
    // Set only on explored output; tells the host what to do with the item.
    std::optional<ExploreAction> explore_action;

    bool operator==(const PredictionInput&) const = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
    double distance(double x) const noexcept;

    bool operator==(const Interval&) const = default;
};

void validate_intervals(std::span<const Interval> intervals);

// All samplers accept when a single seeded uniform falls below the acceptance
// probability, so raising `rate` can only turn rejections into acceptances.

bool sample_with_interval(const PredictionInput& p, std::span<const Interval> intervals,
                          double rate, const DecisionContext& ctx);

/// Acceptance probability rate * exp(-lambda * distance to interval). With
/// lambda = 0 scores outside the interval are never accepted.
double interval_decay_probability(double score, const Interval& interval, double rate,
                                  double lambda);

bool sample_with_interval_decay(const PredictionInput& p, const Interval& interval, double rate,
                                double lambda, const DecisionContext& ctx);

/// Binary entropy in bits, with 0 log 0 = 0.
double binary_entropy(double s);

/// Shannon entropy in bits divided by log2(K); lies in [0, 1].
double normalized_entropy(std::span<const double> probs);

bool sample_with_entropy(const PredictionInput& p, double threshold, double rate,
                         const DecisionContext& ctx);

bool sample_with_entropy_multiclass(const PredictionInput& p, double threshold, double rate,
                                    const DecisionContext& ctx);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

bool sample_with_semantic_similarity(const PredictionInput& p,
                                     std::span<const std::vector<double>> seeds,
                                     double threshold, double rate, const DecisionContext& ctx);

/// Per-bin acceptance quotas over a rolling window of decisions.
struct StratifiedState {
    std::vector<double> bin_edges;  // ascending, first 0, last 1
    std::vector<std::uint64_t> accepted_counts;
    std::vector<std::uint64_t> quota;
    std::uint64_t window_decisions = 10'000;
    std::uint64_t window_start = 0;       // decision index where the window began
    std::uint64_t decisions_seen = 0;

    static StratifiedState make(std::vector<double> bin_edges, std::vector<std::uint64_t> quota,
                                std::uint64_t window_decisions = 10'000);

    std::size_t bins() const noexcept { return accepted_counts.size(); }
    std::size_t bin_of(double score) const;
    void validate() const;

    bool operator==(const StratifiedState&) const = default;
};

std::pair<bool, StratifiedState> stratified_sample(const PredictionInput& p,
                                                   StratifiedState state,
                                                   const DecisionContext& ctx);

/// Embeddings file: one vector per line, space-separated reals.
std::vector<std::vector<double>> load_seed_vectors(const std::string& path);

}  // namespace explorex
