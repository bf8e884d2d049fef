#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "explorex/error.hpp"

namespace explorex {

using Json = nlohmann::json;

/// One selectable option. The payload is opaque to operators; the numeric
/// view is computed once when the candidate is built.
struct Candidate {
    std::string id;
    Json payload;
    std::optional<double> numeric_value;

    /// Builds a candidate, parsing numeric_value from a JSON number or a
    /// string that is entirely a finite decimal number.
    static Candidate make(std::string id, Json payload);

    bool operator==(const Candidate&) const = default;
};

/// Ordered candidates flowing through a selection chain.
struct ScoredCandidateSet {
    std::vector<Candidate> candidates;
    std::optional<std::vector<double>> scores;
    std::optional<std::size_t> decided;

    /// Throws InvalidInput on empty ids, duplicate ids, mismatched score
    /// length, or an out-of-range decided index.
    void validate() const;

    const Candidate& decided_candidate() const;

    bool operator==(const ScoredCandidateSet&) const = default;
};

struct ArmStats {
    std::string candidate_id;
    std::uint64_t pulls = 0;
    double reward_sum = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t successes = 0;

    /// successes / trials; nullopt when nothing has been observed.
    std::optional<double> mean_reward() const noexcept {
        if (trials == 0) return std::nullopt;
        return static_cast<double>(successes) / static_cast<double>(trials);
    }

    bool operator==(const ArmStats&) const = default;
};

struct DecisionContext {
    std::string unit_id;
    std::map<std::string, std::string> attributes;
    std::uint64_t rng_seed = 0;
    std::uint64_t round = 0;
    std::uint64_t total_rounds = 0;
};

/// Checks stats[i].candidate_id == candidates[i].id for all i.
void require_aligned(const ScoredCandidateSet& set, std::span<const ArmStats> stats);

enum class Tiebreak { lowest_index, seeded_random };

/// Index of a maximal value. NaN entries never win.
std::size_t argmax_with_tiebreak(std::span<const double> values,
                                 Tiebreak tiebreak = Tiebreak::lowest_index,
                                 std::optional<std::uint64_t> seed = std::nullopt);

/// exp(s/temperature) normalized, with max-shift.
std::vector<double> softmax_normalize(std::span<const double> scores, double temperature);

}  // namespace explorex
