#include "explorex/ranking_exploration.hpp"

#include <utility>

#include "explorex/random.hpp"

namespace explorex {

RankedList shuffle_ranking(RankedList list, const DecisionContext& ctx) {
    require(!list.items.empty(), ErrorCode::InvalidInput, "cannot shuffle an empty ranking");
    auto [start, end] = list.shuffle_window.value_or(std::pair{std::size_t{0}, list.items.size()});
    require(start <= end && end <= list.items.size(), ErrorCode::InvalidInput,
            "shuffle window [" + std::to_string(start) + ", " + std::to_string(end) +
                ") is not a valid subrange");

    if (end - start < 2) return list;
    Rng rng(ctx.rng_seed);
    for (std::size_t i = end - 1; i > start; --i) {
        const std::size_t j = start + rng.uniform_index(i - start + 1);
        std::swap(list.items[i], list.items[j]);
    }
    return list;
}

}  // namespace explorex
