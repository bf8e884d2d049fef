#pragma once

#include <optional>
#include <string>
#include <vector>

#include "explorex/core_model.hpp"
#include "explorex/error.hpp"

namespace support {

// Error code thrown by f, or nullopt when it returns normally.
template <typename F>
std::optional<explorex::ErrorCode> error_of(F&& f) {
    try {
        f();
    } catch (const explorex::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline explorex::ScoredCandidateSet make_set(const std::vector<std::string>& ids) {
    explorex::ScoredCandidateSet s;
    for (const auto& id : ids) s.candidates.push_back(explorex::Candidate::make(id, id));
    return s;
}

inline explorex::DecisionContext ctx_with_seed(std::uint64_t seed, std::uint64_t rounds = 1) {
    explorex::DecisionContext ctx;
    ctx.unit_id = "unit";
    ctx.rng_seed = seed;
    ctx.round = ctx.total_rounds = rounds;
    return ctx;
}

}  // namespace support
