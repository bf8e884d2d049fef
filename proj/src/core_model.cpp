#include "explorex/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_set>

#include "explorex/hash.hpp"
#include "explorex/random.hpp"

namespace explorex {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::InvalidState: return "InvalidState";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::ScorerError: return "ScorerError";
        case ErrorCode::DeadlineExceeded: return "DeadlineExceeded";
    }
    return "Unknown";
}

std::uint64_t derive_seed(std::string_view unit_id, std::string_view target_id,
                          std::uint64_t decision_counter) noexcept {
    std::uint64_t h = hash64(unit_id);
    h = hash_combine(h, hash64(target_id));
    return hash_combine(h, decision_counter);
}

namespace {

std::optional<double> parse_number(const Json& payload) {
    if (payload.is_number()) {
        const double v = payload.get<double>();
        return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
    }
    if (!payload.is_string()) return std::nullopt;
    const auto& text = payload.get_ref<const std::string&>();
    if (text.empty()) return std::nullopt;
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

Candidate Candidate::make(std::string id, Json payload) {
    Candidate c{std::move(id), std::move(payload), std::nullopt};
    c.numeric_value = parse_number(c.payload);
    return c;
}

void ScoredCandidateSet::validate() const {
    std::unordered_set<std::string_view> seen;
    for (const auto& c : candidates) {
        require(!c.id.empty(), ErrorCode::InvalidInput, "candidate id must be non-empty");
        require(seen.insert(c.id).second, ErrorCode::InvalidInput,
                "duplicate candidate id '" + c.id + "'");
    }
    if (scores) {
        require(scores->size() == candidates.size(), ErrorCode::InvalidInput,
                "scores length does not match candidates");
    }
    if (decided) {
        require(*decided < candidates.size(), ErrorCode::InvalidInput,
                "decided index out of range");
    }
}

const Candidate& ScoredCandidateSet::decided_candidate() const {
    require(decided.has_value() && *decided < candidates.size(), ErrorCode::InvalidState,
            "no decided candidate");
    return candidates[*decided];
}

void require_aligned(const ScoredCandidateSet& set, std::span<const ArmStats> stats) {
    require(stats.size() == set.candidates.size(), ErrorCode::InvalidInput,
            "stats are not aligned with candidates");
    for (std::size_t i = 0; i < stats.size(); ++i) {
        require(stats[i].candidate_id == set.candidates[i].id, ErrorCode::InvalidInput,
                "stats[" + std::to_string(i) + "] is for '" + stats[i].candidate_id +
                    "', expected '" + set.candidates[i].id + "'");
        require(stats[i].successes <= stats[i].trials, ErrorCode::InvalidInput,
                "successes exceed trials for '" + stats[i].candidate_id + "'");
    }
}

std::size_t argmax_with_tiebreak(std::span<const double> values, Tiebreak tiebreak,
                                 std::optional<std::uint64_t> seed) {
    require(!values.empty(), ErrorCode::InvalidInput, "argmax over an empty list");
    std::size_t best = 0;
    bool found = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) continue;
        if (!found || values[i] > values[best]) {
            best = i;
            found = true;
        }
    }
    if (tiebreak == Tiebreak::lowest_index || !found) return best;

    require(seed.has_value(), ErrorCode::InvalidInput, "seeded_random tiebreak needs a seed");
    std::vector<std::size_t> ties;
    for (std::size_t i = best; i < values.size(); ++i) {
        if (values[i] == values[best]) ties.push_back(i);
    }
    if (ties.size() == 1) return best;
    Rng rng(*seed);
    return ties[rng.uniform_index(ties.size())];
}

std::vector<double> softmax_normalize(std::span<const double> scores, double temperature) {
    require(!scores.empty(), ErrorCode::InvalidInput, "softmax over an empty list");
    require(temperature > 0.0 && std::isfinite(temperature), ErrorCode::InvalidInput,
            "softmax temperature must be positive");
    for (double s : scores) {
        require(std::isfinite(s), ErrorCode::InvalidInput, "softmax score is not finite");
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - top) / temperature);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

}  // namespace explorex
