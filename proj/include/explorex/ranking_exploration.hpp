#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "explorex/core_model.hpp"

namespace explorex {

struct RankedList {
    std::vector<Candidate> items;
    // Half-open [start, end) range to shuffle; the whole list when absent.
    std::optional<std::pair<std::size_t, std::size_t>> shuffle_window;

    bool operator==(const RankedList&) const = default;
};

/// Uniform random permutation of the window (Fisher-Yates, seeded from ctx).
/// Items outside the window keep their positions.
RankedList shuffle_ranking(RankedList list, const DecisionContext& ctx);

}  // namespace explorex
