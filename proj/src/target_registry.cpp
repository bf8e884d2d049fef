#include "explorex/target_registry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "explorex/hash.hpp"

namespace explorex {

namespace {

constexpr std::uint64_t kTrafficBuckets = 1'000'000;

std::int64_t system_now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

bool is_selection_kind(OperatorKind k) {
    return k == OperatorKind::scorer || k == OperatorKind::selector;
}

bool kind_fits(TaskType task, OperatorKind k) {
    switch (task) {
        case TaskType::candidate_selection: return is_selection_kind(k);
        case TaskType::active_learning: return k == OperatorKind::sampler;
        case TaskType::ranking: return k == OperatorKind::ranker;
    }
    return false;
}

std::optional<std::string> default_choice(const TargetData& data) {
    if (const auto* set = std::get_if<ScoredCandidateSet>(&data)) {
        if (set->decided && *set->decided < set->candidates.size()) {
            return set->candidates[*set->decided].id;
        }
        if (!set->candidates.empty()) return set->candidates.front().id;
        return std::nullopt;
    }
    if (const auto* list = std::get_if<RankedList>(&data)) {
        if (!list->items.empty()) return list->items.front().id;
    }
    return std::nullopt;
}

void validate_data(const TargetData& data) {
    if (const auto* set = std::get_if<ScoredCandidateSet>(&data)) {
        require(!set->candidates.empty(), ErrorCode::InvalidInput, "empty candidate set");
        set->validate();
    } else if (const auto* list = std::get_if<RankedList>(&data)) {
        require(!list->items.empty(), ErrorCode::InvalidInput, "empty ranking");
    } else {
        require(!std::get<PredictionInput>(data).item_id.empty(), ErrorCode::InvalidInput,
                "prediction without item_id");
    }
}

}  // namespace

bool in_traffic(std::string_view unit_id, std::string_view target_id, double sample_rate) {
    if (!(sample_rate > 0.0)) return false;
    if (sample_rate >= 1.0) return true;
    std::string key;
    key.reserve(unit_id.size() + target_id.size() + 1);
    key.append(unit_id).append(":").append(target_id);
    const auto bucket = hash64(key) % kTrafficBuckets;
    return static_cast<double>(bucket) < sample_rate * static_cast<double>(kTrafficBuckets);
}

// State that outlives config versions of one target id.
struct Shared {
    std::mutex decide_mu;  // serializes decisions across versions
    std::atomic<bool> subscribed{false};
    std::uint64_t attempts = 0;
    std::uint64_t explored = 0;
    std::uint64_t since_refresh = 0;
    std::int64_t last_refresh_ms = 0;
    std::atomic<std::uint64_t> passthrough_seq{0};

    mutable std::mutex snap_mu;
    std::map<std::string, std::shared_ptr<const FeedbackSnapshot>> snapshots;

    mutable std::mutex health_mu;
    TargetHealth health;

    std::shared_ptr<const FeedbackSnapshot> snapshot(const std::string& transformer) const {
        std::lock_guard lock(snap_mu);
        auto it = snapshots.find(transformer);
        return it == snapshots.end() ? nullptr : it->second;
    }

    template <typename F>
    void update_health(F&& f) {
        std::lock_guard lock(health_mu);
        f(health);
    }
};

struct TargetRegistry::Runtime {
    ExplorationTarget cfg;
    std::uint64_t version = 1;

    struct Transformer {
        std::string id;
        std::vector<std::unique_ptr<Operator>> ops;
        std::vector<std::unique_ptr<OperatorState>> states;
    };
    std::vector<Transformer> transformers;

    std::shared_ptr<Shared> shared;
};

TargetRegistry::TargetRegistry(FeedbackStore& store, RegistryOptions options,
                               OperatorCatalog catalog)
    : store_(store), options_(std::move(options)), catalog_(std::move(catalog)) {
    if (!options_.clock) options_.clock = system_now_ms;
    scorers_["numeric_value"] = [](const Candidate& c) {
        require(c.numeric_value.has_value(), ErrorCode::ScorerError,
                "candidate '" + c.id + "' has no numeric value");
        return *c.numeric_value;
    };
}

TargetRegistry::~TargetRegistry() = default;

std::int64_t TargetRegistry::now_ms() const { return options_.clock(); }

void TargetRegistry::register_scorer(const std::string& name, Scorer scorer) {
    require(!name.empty() && scorer, ErrorCode::ConfigError, "invalid scorer registration");
    std::unique_lock lock(mu_);
    scorers_[name] = std::move(scorer);
}

std::shared_ptr<TargetRegistry::Runtime> TargetRegistry::build(const ExplorationTarget& cfg) const {
    auto config_error = [&](const std::string& what) {
        fail(ErrorCode::ConfigError, "target '" + cfg.target_id + "': " + what);
    };
    if (cfg.target_id.empty() || cfg.target_id.find('/') != std::string::npos) {
        config_error("target_id must be non-empty and contain no '/'");
    }
    if (!(cfg.sample_rate >= 0.0 && cfg.sample_rate <= 1.0)) config_error("sample_rate must be in [0, 1]");
    if (cfg.transformers.empty()) config_error("at least one transformer is required");
    if (!store_.has_fetcher(cfg.feedback_fetcher)) {
        config_error("unknown feedback fetcher '" + cfg.feedback_fetcher + "'");
    }

    auto rt = std::make_shared<Runtime>();
    rt->cfg = cfg;
    const OperatorEnv env{scorers_};
    std::set<std::string> ids;

    // Candidate selection flattens to: scorers..., exactly one selector, last.
    std::string previous;
    OperatorKind previous_kind = OperatorKind::scorer;
    bool have_scores = false;
    int deciders = 0;

    for (const auto& spec : cfg.transformers) {
        if (spec.transformer_id.empty()) config_error("transformer_id must be non-empty");
        if (!ids.insert(spec.transformer_id).second) {
            config_error("duplicate transformer_id '" + spec.transformer_id + "'");
        }
        if (spec.operator_chain.empty()) {
            config_error("transformer '" + spec.transformer_id + "' has an empty chain");
        }
        Runtime::Transformer tr;
        tr.id = spec.transformer_id;
        for (const auto& op_spec : spec.operator_chain) {
            auto op = catalog_.create(op_spec.name, op_spec.config, env);
            const OperatorKind kind = op->kind();
            if (!kind_fits(cfg.task_type, kind)) {
                config_error("operator " + op_spec.name + " cannot serve task_type " +
                             std::string(to_string(cfg.task_type)));
            }
            if (cfg.task_type == TaskType::candidate_selection) {
                if (!previous.empty() && previous_kind == OperatorKind::selector) {
                    config_error("incompatible chain (" + previous + " -> " + op_spec.name +
                                 "): a deciding operator must end the chain");
                }
                if (op->needs_upstream_scores() && !have_scores) {
                    config_error(op_spec.name + " has no upstream score source");
                }
                if (kind == OperatorKind::scorer) have_scores = true;
                if (kind == OperatorKind::selector) ++deciders;
            }
            previous = op_spec.name;
            previous_kind = kind;
            tr.states.push_back(op->make_state());
            tr.ops.push_back(std::move(op));
        }
        rt->transformers.push_back(std::move(tr));
    }
    if (cfg.task_type == TaskType::candidate_selection) {
        if (previous_kind != OperatorKind::selector) {
            config_error("non-terminal " + previous + " must be followed by a selection operator");
        }
        if (deciders != 1) config_error("exactly one deciding operator is required");
    }
    return rt;
}

void TargetRegistry::validate(const ExplorationTarget& cfg) const {
    std::shared_lock lock(mu_);
    build(cfg);
}

RegisterAck TargetRegistry::register_target(ExplorationTarget cfg) {
    std::unique_lock lock(mu_);
    auto rt = build(cfg);
    RegisterAck ack{cfg.target_id, 1, false};

    if (auto it = targets_.find(cfg.target_id); it != targets_.end()) {
        auto& old = it->second;
        ExplorationTarget old_cfg = old->cfg;
        old_cfg.subscribed = cfg.subscribed;
        ack.replaced = true;
        if (old_cfg == cfg) {
            ack.version = old->version;
            return ack;
        }
        rt->shared = old->shared;
        rt->version = old->version + 1;
        ack.version = rt->version;
    } else {
        rt->shared = std::make_shared<Shared>();
        rt->shared->explored = store_.exposure_count(cfg.target_id);
        rt->shared->attempts = rt->shared->explored;
        rt->shared->last_refresh_ms = now_ms();
    }
    rt->shared->update_health([&](TargetHealth& h) { h.version = rt->version; });
    targets_[cfg.target_id] = std::move(rt);
    return ack;
}

std::shared_ptr<TargetRegistry::Runtime> TargetRegistry::find(const std::string& target_id) const {
    std::shared_lock lock(mu_);
    auto it = targets_.find(target_id);
    require(it != targets_.end(), ErrorCode::NotFound, "unknown target '" + target_id + "'");
    return it->second;
}

void TargetRegistry::subscribe(const std::string& target_id) {
    find(target_id)->shared->subscribed = true;
}

void TargetRegistry::unsubscribe(const std::string& target_id) {
    find(target_id)->shared->subscribed = false;
}

ExplorationTarget TargetRegistry::target(const std::string& target_id) const {
    auto rt = find(target_id);
    ExplorationTarget cfg = rt->cfg;
    cfg.subscribed = rt->shared->subscribed;
    return cfg;
}

std::vector<ExplorationTarget> TargetRegistry::targets() const {
    std::vector<std::shared_ptr<Runtime>> all;
    {
        std::shared_lock lock(mu_);
        for (const auto& [id, rt] : targets_) all.push_back(rt);
    }
    std::vector<ExplorationTarget> out;
    for (const auto& rt : all) {
        out.push_back(rt->cfg);
        out.back().subscribed = rt->shared->subscribed;
    }
    return out;
}

TargetHealth TargetRegistry::health(const std::string& target_id) const {
    auto rt = find(target_id);
    std::lock_guard lock(rt->shared->health_mu);
    return rt->shared->health;
}

std::vector<ArmStats> TargetRegistry::arm_stats(const std::string& target_id,
                                                const std::string& transformer_id,
                                                const ScoredCandidateSet& set,
                                                const std::optional<std::string>& unit_id) const {
    auto rt = find(target_id);
    std::shared_ptr<const FeedbackSnapshot> snap;
    if (rt->cfg.feedback_level == FeedbackLevel::user) {
        require(unit_id.has_value(), ErrorCode::InvalidInput, "user-level stats need a unit_id");
        snap = std::make_shared<const FeedbackSnapshot>(store_.fetch_feedback(
            rt->cfg.feedback_fetcher,
            FetchRequest{target_id, transformer_id, FeedbackLevel::user, unit_id}));
    } else {
        snap = rt->shared->snapshot(transformer_id);
    }
    const auto pulls = store_.pulls(
        target_id, transformer_id,
        rt->cfg.feedback_level == FeedbackLevel::user ? unit_id : std::nullopt);

    std::vector<ArmStats> stats;
    stats.reserve(set.candidates.size());
    for (const auto& c : set.candidates) {
        ArmStats arm;
        arm.candidate_id = c.id;
        if (auto p = pulls.find(c.id); p != pulls.end()) arm.pulls = p->second;
        if (snap) {
            if (auto f = snap->candidates.find(c.id); f != snap->candidates.end()) {
                arm.trials = f->second.trials;
                arm.successes = f->second.successes;
                arm.reward_sum = static_cast<double>(f->second.successes);
            }
        }
        stats.push_back(std::move(arm));
    }
    return stats;
}

ExploreOutcome TargetRegistry::explore(const std::string& target_id, TargetData data,
                                       DecisionContext ctx,
                                       std::optional<std::chrono::steady_clock::time_point> deadline) {
    auto rt = find(target_id);
    Shared& sh = *rt->shared;
    const ExplorationTarget& cfg = rt->cfg;

    ExploreOutcome out{std::move(data), Decision{}, std::nullopt};
    Decision& decision = out.decision;
    decision.target_id = target_id;
    decision.unit_id = ctx.unit_id;
    decision.timestamp_ms = now_ms();

    auto passthrough = [&]() -> ExploreOutcome& {
        decision.explored = false;
        decision.decision_id = target_id + "-p" + std::to_string(++sh.passthrough_seq);
        decision.transformer_id.clear();
        decision.chosen_candidate_id = default_choice(out.data);
        sh.update_health([](TargetHealth& h) { ++h.passthrough; });
        return out;
    };

    if (!sh.subscribed) return passthrough();
    for (const auto& [attr, value] : cfg.trigger) {
        auto it = ctx.attributes.find(attr);
        if (it == ctx.attributes.end() || it->second != value) return passthrough();
    }
    if (!in_traffic(ctx.unit_id, target_id, cfg.sample_rate)) return passthrough();

    std::unique_lock lock(sh.decide_mu);
    const std::uint64_t attempt = sh.attempts++;
    std::vector<std::string> warnings;
    try {
        require(task_type_of(out.data) == cfg.task_type, ErrorCode::InvalidInput,
                "data shape does not match task_type " + std::string(to_string(cfg.task_type)));
        require(!ctx.unit_id.empty(), ErrorCode::InvalidInput, "unit_id must be non-empty");
        validate_data(out.data);

        ctx.rng_seed = derive_seed(ctx.unit_id, target_id, attempt);
        TargetData work = out.data;

        std::vector<std::vector<std::unique_ptr<OperatorState>>> staged(rt->transformers.size());
        bool accepted = true;
        std::size_t deciding = rt->transformers.size() - 1;
        std::string operator_name;

        for (std::size_t ti = 0; ti < rt->transformers.size() && accepted; ++ti) {
            auto& tr = rt->transformers[ti];
            std::vector<ArmStats> stats;
            if (const auto* set = std::get_if<ScoredCandidateSet>(&work)) {
                const bool user = cfg.feedback_level == FeedbackLevel::user;
                stats = arm_stats(target_id, tr.id, *set,
                                  user ? std::optional(ctx.unit_id) : std::nullopt);
                std::uint64_t rounds = sh.explored + 1;
                if (user) {
                    rounds = 1;
                    for (const auto& [id, n] : store_.pulls(target_id, tr.id, ctx.unit_id)) {
                        rounds += n;
                    }
                }
                ctx.round = ctx.total_rounds = rounds;
            }
            for (std::size_t oi = 0; oi < tr.ops.size(); ++oi) {
                DecisionContext step = ctx;
                step.rng_seed = hash_combine(ctx.rng_seed, (ti << 32) | oi);
                auto& state = staged[ti].emplace_back(tr.states[oi] ? tr.states[oi]->clone()
                                                                    : nullptr);
                StepResult r = tr.ops[oi]->apply(work, StepInput{step, stats}, state.get());
                for (auto& w : r.warnings) warnings.push_back(std::move(w));
                operator_name = std::string(tr.ops[oi]->name());
                if (tr.ops[oi]->kind() == OperatorKind::selector) deciding = ti;
                if (!r.accepted) {
                    accepted = false;
                    break;
                }
            }
        }

        auto commit_states = [&] {
            for (std::size_t ti = 0; ti < staged.size(); ++ti) {
                for (std::size_t oi = 0; oi < staged[ti].size(); ++oi) {
                    if (staged[ti][oi]) rt->transformers[ti].states[oi] = std::move(staged[ti][oi]);
                }
            }
        };
        if (!warnings.empty()) {
            for (const auto& w : warnings) spdlog::warn("target {}: {}", target_id, w);
            sh.update_health([&](TargetHealth& h) { h.warnings += warnings.size(); });
        }
        if (!accepted) {
            commit_states();
            return passthrough();
        }

        std::string chosen;
        if (const auto* set = std::get_if<ScoredCandidateSet>(&work)) {
            chosen = set->decided_candidate().id;
        } else if (const auto* list = std::get_if<RankedList>(&work)) {
            chosen = list->items.front().id;
        } else {
            chosen = std::get<PredictionInput>(work).item_id;
        }

        if (deadline && std::chrono::steady_clock::now() > *deadline) {
            sh.update_health([](TargetHealth& h) { ++h.deadline_overruns; });
            fail(ErrorCode::DeadlineExceeded, "explore deadline exceeded");
        }

        ExposureRecord rec;
        rec.decision_id = target_id + "-" + std::to_string(sh.explored);
        rec.target_id = target_id;
        rec.transformer_id = rt->transformers[deciding].id;
        rec.unit_id = ctx.unit_id;
        rec.chosen_candidate_id = chosen;
        rec.operator_name = operator_name;
        rec.timestamp_ms = decision.timestamp_ms;
        if (const auto* p = std::get_if<PredictionInput>(&work); p && p->explore_action) {
            rec.extras["explore_action"] =
                *p->explore_action == ExploreAction::flip_decision ? "flip_decision" : "tag_only";
        }
        const LogAck ack = store_.log_exposure(rec);
        require(ack != LogAck::duplicate, ErrorCode::InvalidState,
                "decision id " + rec.decision_id + " already logged");

        commit_states();
        ++sh.explored;
        ++sh.since_refresh;

        out.data = std::move(work);
        decision.explored = true;
        decision.decision_id = rec.decision_id;
        decision.transformer_id = rec.transformer_id;
        decision.chosen_candidate_id = chosen;
        sh.update_health([](TargetHealth& h) { ++h.explored; });

        const bool by_count = options_.refresh_every_decisions > 0 &&
                              sh.since_refresh >= options_.refresh_every_decisions;
        const bool by_time = options_.refresh_interval_ms > 0 &&
                             now_ms() - sh.last_refresh_ms >= options_.refresh_interval_ms;
        if (by_count || by_time) refresh_locked(*rt);
        return out;
    } catch (const Error& e) {
        out.soft_error = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
        out.soft_error = std::string("exception: ") + e.what();
    } catch (...) {
        out.soft_error = "unknown exception";
    }
    sh.update_health([](TargetHealth& h) { ++h.operator_errors; });
    spdlog::debug("target {}: exploration fell back to passthrough ({})", target_id,
                  *out.soft_error);
    return passthrough();
}

void TargetRegistry::refresh_stats(const std::string& target_id) {
    auto rt = find(target_id);
    std::lock_guard lock(rt->shared->decide_mu);
    refresh_locked(*rt);
}

void TargetRegistry::refresh_locked(Runtime& rt) {
    Shared& sh = *rt.shared;
    sh.since_refresh = 0;
    sh.last_refresh_ms = now_ms();
    for (const auto& tr : rt.transformers) {
        try {
            auto snap = std::make_shared<const FeedbackSnapshot>(store_.fetch_feedback(
                rt.cfg.feedback_fetcher,
                FetchRequest{rt.cfg.target_id, tr.id, FeedbackLevel::global, std::nullopt}));
            std::lock_guard lock(sh.snap_mu);
            sh.snapshots[tr.id] = std::move(snap);
        } catch (const std::exception& e) {
            sh.update_health([](TargetHealth& h) { ++h.fetch_failures; });
            spdlog::warn("target {}: feedback fetch failed, keeping previous snapshot: {}",
                         rt.cfg.target_id, e.what());
        }
    }
}

void TargetRegistry::resync_counters() {
    std::shared_lock lock(mu_);
    for (const auto& [id, rt] : targets_) {
        std::lock_guard decide(rt->shared->decide_mu);
        rt->shared->explored = store_.exposure_count(id);
        rt->shared->attempts = std::max(rt->shared->attempts, rt->shared->explored);
    }
}

}  // namespace explorex
