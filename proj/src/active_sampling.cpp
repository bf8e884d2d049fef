#include "explorex/active_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "explorex/random.hpp"

namespace explorex {

namespace {

bool draw_below(double probability, const DecisionContext& ctx) {
    Rng rng(ctx.rng_seed);
    return rng.uniform01() < probability;
}

void require_rate(double rate) {
    require(rate >= 0.0 && rate <= 1.0, ErrorCode::InvalidInput, "rate must be in [0, 1]");
}

double require_score(const PredictionInput& p) {
    require(p.score.has_value(), ErrorCode::InvalidInput,
            "prediction '" + p.item_id + "' has no score");
    const double s = *p.score;
    require(s >= 0.0 && s <= 1.0, ErrorCode::InvalidInput, "score must be in [0, 1]");
    return s;
}

double norm(std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

double Interval::distance(double x) const noexcept {
    if (x < lo) return lo - x;
    if (x > hi) return x - hi;
    return 0.0;
}

void validate_intervals(std::span<const Interval> intervals) {
    for (const auto& in : intervals) {
        require(in.lo <= in.hi, ErrorCode::InvalidInput, "interval has lo > hi");
        require(in.lo >= 0.0 && in.hi <= 1.0, ErrorCode::InvalidInput,
                "interval must lie within [0, 1]");
    }
    std::vector<Interval> sorted(intervals.begin(), intervals.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        require(sorted[i].lo > sorted[i - 1].hi, ErrorCode::InvalidInput, "intervals overlap");
    }
}

bool sample_with_interval(const PredictionInput& p, std::span<const Interval> intervals,
                          double rate, const DecisionContext& ctx) {
    validate_intervals(intervals);
    require_rate(rate);
    const double s = require_score(p);
    const bool inside = std::any_of(intervals.begin(), intervals.end(),
                                    [s](const Interval& in) { return in.contains(s); });
    return inside && draw_below(rate, ctx);
}

double interval_decay_probability(double score, const Interval& interval, double rate,
                                  double lambda) {
    const double d = interval.distance(score);
    // lambda = 0 switches decay off, leaving the plain interval rule.
    if (lambda == 0.0) return d == 0.0 ? rate : 0.0;
    return rate * std::exp(-lambda * d);
}

bool sample_with_interval_decay(const PredictionInput& p, const Interval& interval, double rate,
                                double lambda, const DecisionContext& ctx) {
    validate_intervals(std::span(&interval, 1));
    require_rate(rate);
    require(lambda >= 0.0, ErrorCode::InvalidInput, "decay_lambda must be non-negative");
    const double s = require_score(p);
    return draw_below(interval_decay_probability(s, interval, rate, lambda), ctx);
}

double binary_entropy(double s) {
    auto term = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
    // Work from the larger of (s, 1 - s): 1 - big is exact for big >= 0.5, so
    // H(s) and H(1 - s) reduce to the same pair of operands bit for bit.
    const double big = s >= 0.5 ? s : 1.0 - s;
    return term(big) + term(1.0 - big);
}

double normalized_entropy(std::span<const double> probs) {
    require(probs.size() >= 2, ErrorCode::InvalidInput, "multiclass entropy needs K >= 2");
    double total = 0.0;
    double h = 0.0;
    for (double q : probs) {
        require(q >= 0.0 && std::isfinite(q), ErrorCode::InvalidInput,
                "class probabilities must be non-negative");
        total += q;
        if (q > 0.0) h -= q * std::log2(q);
    }
    require(std::abs(total - 1.0) <= 1e-6, ErrorCode::InvalidInput,
            "class probabilities must sum to 1");
    return h / std::log2(static_cast<double>(probs.size()));
}

bool sample_with_entropy(const PredictionInput& p, double threshold, double rate,
                         const DecisionContext& ctx) {
    require_rate(rate);
    const double s = require_score(p);
    return binary_entropy(s) >= threshold && draw_below(rate, ctx);
}

bool sample_with_entropy_multiclass(const PredictionInput& p, double threshold, double rate,
                                    const DecisionContext& ctx) {
    require_rate(rate);
    require(p.class_probs.has_value(), ErrorCode::InvalidInput,
            "prediction '" + p.item_id + "' has no class_probs");
    return normalized_entropy(*p.class_probs) >= threshold && draw_below(rate, ctx);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::InvalidInput, "embedding dimension mismatch");
    const double na = norm(a);
    const double nb = norm(b);
    require(na > 0.0 && nb > 0.0, ErrorCode::InvalidInput, "zero-norm embedding");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (na * nb);
}

bool sample_with_semantic_similarity(const PredictionInput& p,
                                     std::span<const std::vector<double>> seeds,
                                     double threshold, double rate, const DecisionContext& ctx) {
    require_rate(rate);
    require(p.embedding.has_value(), ErrorCode::InvalidInput,
            "prediction '" + p.item_id + "' has no embedding");
    require(!seeds.empty(), ErrorCode::InvalidInput, "no seed vectors");
    double best = -1.0;
    for (const auto& seed : seeds) best = std::max(best, cosine_similarity(*p.embedding, seed));
    return best >= threshold && draw_below(rate, ctx);
}

StratifiedState StratifiedState::make(std::vector<double> bin_edges,
                                      std::vector<std::uint64_t> quota,
                                      std::uint64_t window_decisions) {
    StratifiedState s;
    s.bin_edges = std::move(bin_edges);
    const std::size_t bins = s.bin_edges.size() < 2 ? 0 : s.bin_edges.size() - 1;
    if (quota.size() == 1 && bins > 1) quota.assign(bins, quota.front());
    s.quota = std::move(quota);
    s.accepted_counts.assign(bins, 0);
    s.window_decisions = window_decisions;
    s.validate();
    return s;
}

void StratifiedState::validate() const {
    require(bin_edges.size() >= 2, ErrorCode::InvalidInput, "bin_edges needs at least 2 edges");
    require(bin_edges.front() == 0.0 && bin_edges.back() == 1.0, ErrorCode::InvalidInput,
            "bin_edges must cover [0, 1]");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        require(bin_edges[i] > bin_edges[i - 1], ErrorCode::InvalidInput,
                "bin_edges must be strictly ascending");
    }
    require(quota.size() == bins() && accepted_counts.size() == bin_edges.size() - 1,
            ErrorCode::InvalidInput, "bin_quota must have one entry per bin");
    require(std::all_of(quota.begin(), quota.end(), [](auto q) { return q > 0; }),
            ErrorCode::InvalidInput, "bin_quota entries must be positive");
    require(window_decisions > 0, ErrorCode::InvalidInput, "window_decisions must be positive");
}

std::size_t StratifiedState::bin_of(double score) const {
    // Bins are [e_i, e_{i+1}); the last bin is closed so 1.0 lands in it.
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), score);
    const auto idx = static_cast<std::size_t>(std::distance(bin_edges.begin(), it));
    return std::min(idx == 0 ? 0 : idx - 1, bins() - 1);
}

std::pair<bool, StratifiedState> stratified_sample(const PredictionInput& p,
                                                   StratifiedState state,
                                                   const DecisionContext&) {
    const double s = require_score(p);
    if (state.decisions_seen - state.window_start >= state.window_decisions) {
        std::fill(state.accepted_counts.begin(), state.accepted_counts.end(), 0);
        state.window_start = state.decisions_seen;
    }
    ++state.decisions_seen;
    const std::size_t bin = state.bin_of(s);
    const bool accept = state.accepted_counts[bin] < state.quota[bin];
    if (accept) ++state.accepted_counts[bin];
    return {accept, std::move(state)};
}

std::vector<std::vector<double>> load_seed_vectors(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open seed vectors file '" + path + "'");
    std::vector<std::vector<double>> out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::vector<double> v;
        double x = 0.0;
        while (fields >> x) v.push_back(x);
        require(fields.eof(), ErrorCode::InvalidInput, "malformed seed vector line: " + line);
        if (v.empty()) continue;
        require(out.empty() || out.front().size() == v.size(), ErrorCode::InvalidInput,
                "seed vectors differ in dimension");
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace explorex
