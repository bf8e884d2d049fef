#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "explorex/feedback_store.hpp"
#include "explorex/operators.hpp"
#include "explorex/target_registry.hpp"

// JSON wire formats. Parsing failures raise InvalidInput (data) or
// ConfigError (targets, fetchers) with the offending field in the message.
namespace explorex {

// A candidate is {"id": str, "payload": any} or a bare string, in which case
// the id doubles as the payload. A missing payload also defaults to the id.
Candidate candidate_from_json(const Json& j);
Json to_json(const Candidate& c);

ScoredCandidateSet candidate_set_from_json(const Json& j);
Json to_json(const ScoredCandidateSet& s);

RankedList ranked_list_from_json(const Json& j);
Json to_json(const RankedList& l);

PredictionInput prediction_from_json(const Json& j);
Json to_json(const PredictionInput& p);

TargetData data_from_json(TaskType task, const Json& j);
Json to_json(const TargetData& d);

ExplorationTarget target_from_json(const Json& j);
Json to_json(const ExplorationTarget& t);
ExplorationTarget load_target(const std::filesystem::path& path);

Json to_json(const ExposureRecord& r);
ExposureRecord exposure_from_json(const Json& j);

Json to_json(const FeedbackEvent& e);
FeedbackEvent event_from_json(const Json& j);

Json to_json(const FeedbackSnapshot& s);
Json to_json(const TargetHealth& h);
Json to_json(const StoreHealth& h);

/// {"name": {"numerator_event", "denominator_event", "window"}}, where window
/// is "all_time" (default) or {"sliding_ms": N}.
std::map<std::string, MetricSpec> fetchers_from_json(const Json& j);
MetricSpec metric_from_json(const Json& j);
void load_fetchers(const std::filesystem::path& path, FeedbackStore& store);

Json read_json_file(const std::filesystem::path& path);

}  // namespace explorex
