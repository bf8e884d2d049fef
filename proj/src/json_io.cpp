#include "explorex/json_io.hpp"

#include <fstream>

namespace explorex {

namespace {

template <typename T>
std::optional<T> opt(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->template get<T>();
}

template <typename F>
auto wrap(ErrorCode code, const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error&) {
        throw;
    } catch (const Json::exception& e) {
        fail(code, what + ": " + e.what());
    }
}

void require_object(const Json& j, ErrorCode code, const std::string& what) {
    require(j.is_object(), code, what + " must be a JSON object");
}

std::string feedback_level_name(FeedbackLevel l) {
    return l == FeedbackLevel::user ? "user" : "global";
}

Json window_to_json(const Window& w) {
    if (!w.sliding_ms) return "all_time";
    return Json{{"sliding_ms", *w.sliding_ms}};
}

Window window_from_json(const Json& j) {
    if (j.is_null() || (j.is_string() && j.get<std::string>() == "all_time")) return {};
    require(j.is_object() && j.contains("sliding_ms"), ErrorCode::ConfigError,
            "window must be \"all_time\" or {\"sliding_ms\": N}");
    const auto ms = j.at("sliding_ms").get<std::int64_t>();
    require(ms > 0, ErrorCode::ConfigError, "sliding_ms must be positive");
    return Window{ms};
}

}  // namespace

Candidate candidate_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "candidate", [&] {
        if (j.is_string()) return Candidate::make(j.get<std::string>(), j);
        require_object(j, ErrorCode::InvalidInput, "candidate");
        auto id = j.at("id").get<std::string>();
        Json payload = j.contains("payload") ? j.at("payload") : Json(id);
        return Candidate::make(std::move(id), std::move(payload));
    });
}

Json to_json(const Candidate& c) { return Json{{"id", c.id}, {"payload", c.payload}}; }

ScoredCandidateSet candidate_set_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "candidate set", [&] {
        require_object(j, ErrorCode::InvalidInput, "candidate set");
        ScoredCandidateSet s;
        for (const auto& c : j.at("candidates")) s.candidates.push_back(candidate_from_json(c));
        s.scores = opt<std::vector<double>>(j, "scores");
        s.decided = opt<std::size_t>(j, "decided");
        return s;
    });
}

Json to_json(const ScoredCandidateSet& s) {
    Json j{{"candidates", Json::array()}};
    for (const auto& c : s.candidates) j["candidates"].push_back(to_json(c));
    if (s.scores) j["scores"] = *s.scores;
    if (s.decided) j["decided"] = *s.decided;
    return j;
}

RankedList ranked_list_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "ranked list", [&] {
        require_object(j, ErrorCode::InvalidInput, "ranked list");
        RankedList l;
        for (const auto& c : j.at("items")) l.items.push_back(candidate_from_json(c));
        if (auto w = opt<std::vector<std::size_t>>(j, "shuffle_window")) {
            require(w->size() == 2, ErrorCode::InvalidInput, "shuffle_window must be [start, end]");
            l.shuffle_window = std::pair((*w)[0], (*w)[1]);
        }
        return l;
    });
}

Json to_json(const RankedList& l) {
    Json j{{"items", Json::array()}};
    for (const auto& c : l.items) j["items"].push_back(to_json(c));
    if (l.shuffle_window) {
        j["shuffle_window"] = {l.shuffle_window->first, l.shuffle_window->second};
    }
    return j;
}

PredictionInput prediction_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "prediction", [&] {
        require_object(j, ErrorCode::InvalidInput, "prediction");
        PredictionInput p;
        p.item_id = j.at("item_id").get<std::string>();
        p.score = opt<double>(j, "score");
        p.class_probs = opt<std::vector<double>>(j, "class_probs");
        p.embedding = opt<std::vector<double>>(j, "embedding");
        if (auto a = opt<std::string>(j, "explore_action")) {
            require(*a == "tag_only" || *a == "flip_decision", ErrorCode::InvalidInput,
                    "unknown explore_action '" + *a + "'");
            p.explore_action =
                *a == "flip_decision" ? ExploreAction::flip_decision : ExploreAction::tag_only;
        }
        return p;
    });
}

Json to_json(const PredictionInput& p) {
    Json j{{"item_id", p.item_id}};
    if (p.score) j["score"] = *p.score;
    if (p.class_probs) j["class_probs"] = *p.class_probs;
    if (p.embedding) j["embedding"] = *p.embedding;
    if (p.explore_action) {
        j["explore_action"] =
            *p.explore_action == ExploreAction::flip_decision ? "flip_decision" : "tag_only";
    }
    return j;
}

TargetData data_from_json(TaskType task, const Json& j) {
    switch (task) {
        case TaskType::candidate_selection: return candidate_set_from_json(j);
        case TaskType::ranking: return ranked_list_from_json(j);
        case TaskType::active_learning: return prediction_from_json(j);
    }
    fail(ErrorCode::InvalidInput, "unknown task type");
}

Json to_json(const TargetData& d) {
    return std::visit([](const auto& v) { return to_json(v); }, d);
}

ExplorationTarget target_from_json(const Json& j) {
    return wrap(ErrorCode::ConfigError, "target", [&] {
        require_object(j, ErrorCode::ConfigError, "target");
        ExplorationTarget t;
        t.target_id = j.at("target_id").get<std::string>();
        t.task_type = task_type_from_string(j.value("task_type", "candidate_selection"));
        t.sample_rate = j.value("sample_rate", 1.0);
        t.subscribed = j.value("subscribed", false);
        if (auto trig = j.find("trigger"); trig != j.end() && !trig->is_null()) {
            t.trigger = trig->get<std::map<std::string, std::string>>();
        }
        for (const auto& tj : j.at("transformers")) {
            require_object(tj, ErrorCode::ConfigError, "transformer");
            TransformerSpec spec;
            spec.transformer_id = tj.at("transformer_id").get<std::string>();
            for (const auto& oj : tj.at("chain")) {
                require_object(oj, ErrorCode::ConfigError, "chain entry");
                OperatorSpec op;
                op.name = oj.at("operator").get<std::string>();
                op.config = oj;
                op.config.erase("operator");
                spec.operator_chain.push_back(std::move(op));
            }
            t.transformers.push_back(std::move(spec));
        }
        t.feedback_fetcher = j.value("feedback_fetcher", "ctr");
        const auto level = j.value("feedback_level", "global");
        require(level == "global" || level == "user", ErrorCode::ConfigError,
                "feedback_level must be \"user\" or \"global\"");
        t.feedback_level = level == "user" ? FeedbackLevel::user : FeedbackLevel::global;
        if (auto m = j.find("metadata"); m != j.end() && !m->is_null()) {
            t.metadata = m->get<std::map<std::string, std::string>>();
        }
        if (auto c = j.find("candidates"); c != j.end() && !c->is_null()) {
            std::vector<std::string> ids;
            for (const auto& cj : *c) ids.push_back(candidate_from_json(cj).id);
            t.candidates = std::move(ids);
        }
        return t;
    });
}

Json to_json(const ExplorationTarget& t) {
    Json j{{"target_id", t.target_id},
           {"task_type", std::string(to_string(t.task_type))},
           {"subscribed", t.subscribed},
           {"sample_rate", t.sample_rate},
           {"trigger", t.trigger},
           {"transformers", Json::array()},
           {"feedback_fetcher", t.feedback_fetcher},
           {"feedback_level", feedback_level_name(t.feedback_level)},
           {"metadata", t.metadata}};
    for (const auto& tr : t.transformers) {
        Json chain = Json::array();
        for (const auto& op : tr.operator_chain) {
            Json oj = op.config.is_object() ? op.config : Json::object();
            oj["operator"] = op.name;
            chain.push_back(std::move(oj));
        }
        j["transformers"].push_back({{"transformer_id", tr.transformer_id}, {"chain", chain}});
    }
    if (t.candidates) j["candidates"] = *t.candidates;
    return j;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot read " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
}

ExplorationTarget load_target(const std::filesystem::path& path) {
    return target_from_json(read_json_file(path));
}

Json to_json(const ExposureRecord& r) {
    return Json{{"decision_id", r.decision_id},
                {"target_id", r.target_id},
                {"transformer_id", r.transformer_id},
                {"unit_id", r.unit_id},
                {"chosen_candidate_id", r.chosen_candidate_id},
                {"operator", r.operator_name},
                {"timestamp_ms", r.timestamp_ms},
                {"extras", r.extras}};
}

ExposureRecord exposure_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "exposure record", [&] {
        require_object(j, ErrorCode::InvalidInput, "exposure record");
        ExposureRecord r;
        r.decision_id = j.at("decision_id").get<std::string>();
        r.target_id = j.at("target_id").get<std::string>();
        r.transformer_id = j.at("transformer_id").get<std::string>();
        r.unit_id = j.at("unit_id").get<std::string>();
        r.chosen_candidate_id = j.at("chosen_candidate_id").get<std::string>();
        r.operator_name = j.value("operator", "");
        r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        if (auto e = j.find("extras"); e != j.end() && !e->is_null()) {
            r.extras = e->get<std::map<std::string, std::string>>();
        }
        return r;
    });
}

Json to_json(const FeedbackEvent& e) {
    return Json{{"decision_id", e.decision_id},
                {"event_type", e.event_type},
                {"timestamp_ms", e.timestamp_ms}};
}

FeedbackEvent event_from_json(const Json& j) {
    return wrap(ErrorCode::InvalidInput, "event", [&] {
        require_object(j, ErrorCode::InvalidInput, "event");
        FeedbackEvent e;
        e.decision_id = j.at("decision_id").get<std::string>();
        e.event_type = j.at("event_type").get<std::string>();
        e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        return e;
    });
}

Json to_json(const FeedbackSnapshot& s) {
    Json candidates = Json::object();
    for (const auto& [id, f] : s.candidates) {
        candidates[id] = {{"trials", f.trials}, {"successes", f.successes},
                          {"reward", f.reward ? Json(*f.reward) : Json(nullptr)}};
    }
    return Json{{"candidates", candidates},
                {"as_of_ms", s.as_of_ms},
                {"window", window_to_json(s.window)}};
}

Json to_json(const TargetHealth& h) {
    return Json{{"version", h.version},
                {"explored", h.explored},
                {"passthrough", h.passthrough},
                {"operator_errors", h.operator_errors},
                {"deadline_overruns", h.deadline_overruns},
                {"fetch_failures", h.fetch_failures},
                {"warnings", h.warnings}};
}

Json to_json(const StoreHealth& h) {
    return Json{{"exposures", h.exposures},
                {"matched_events", h.matched_events},
                {"duplicate_events", h.duplicate_events},
                {"orphaned_events", h.orphaned_events},
                {"pending_events", h.pending_events},
                {"clock_skew_violations", h.clock_skew_violations},
                {"log_write_failures", h.log_write_failures}};
}

MetricSpec metric_from_json(const Json& j) {
    return wrap(ErrorCode::ConfigError, "metric", [&] {
        require_object(j, ErrorCode::ConfigError, "metric");
        MetricSpec m;
        m.numerator_event = j.value("numerator_event", std::string(kClickEvent));
        m.denominator_event = j.value("denominator_event", std::string(kDisplayEvent));
        m.window = window_from_json(j.value("window", Json()));
        return m;
    });
}

std::map<std::string, MetricSpec> fetchers_from_json(const Json& j) {
    require_object(j, ErrorCode::ConfigError, "fetchers document");
    std::map<std::string, MetricSpec> out;
    for (const auto& [name, spec] : j.items()) out[name] = metric_from_json(spec);
    return out;
}

void load_fetchers(const std::filesystem::path& path, FeedbackStore& store) {
    for (auto& [name, spec] : fetchers_from_json(read_json_file(path))) {
        store.register_fetcher(name, std::move(spec));
    }
}

}  // namespace explorex
