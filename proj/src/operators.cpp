#include "explorex/operators.hpp"

#include <cmath>

namespace explorex {

std::string_view to_string(TaskType t) noexcept {
    switch (t) {
        case TaskType::candidate_selection: return "candidate_selection";
        case TaskType::active_learning: return "active_learning";
        case TaskType::ranking: return "ranking";
    }
    return "unknown";
}

TaskType task_type_from_string(std::string_view s) {
    if (s == "candidate_selection") return TaskType::candidate_selection;
    if (s == "active_learning") return TaskType::active_learning;
    if (s == "ranking") return TaskType::ranking;
    fail(ErrorCode::ConfigError, "unknown task_type '" + std::string(s) + "'");
}

TaskType task_type_of(const TargetData& data) noexcept {
    switch (data.index()) {
        case 0: return TaskType::candidate_selection;
        case 1: return TaskType::ranking;
        default: return TaskType::active_learning;
    }
}

namespace {

// Config accessors. Missing keys fall back to the default; wrong types throw.
template <typename T>
T get_or(const Json& cfg, const char* key, T fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end() || it->is_null()) return fallback;
    return it->get<T>();
}

template <typename T>
T get_required(const Json& cfg, const char* key) {
    auto it = cfg.find(key);
    require(it != cfg.end() && !it->is_null(), ErrorCode::InvalidInput,
            std::string("missing required key '") + key + "'");
    return it->get<T>();
}

ExploreAction explore_action_of(const Json& cfg) {
    const auto s = get_or<std::string>(cfg, "explore_action", "tag_only");
    if (s == "tag_only") return ExploreAction::tag_only;
    if (s == "flip_decision") return ExploreAction::flip_decision;
    fail(ErrorCode::InvalidInput, "explore_action must be tag_only or flip_decision");
}

Interval interval_of(const Json& pair) {
    require(pair.is_array() && pair.size() == 2, ErrorCode::InvalidInput,
            "interval must be a [lo, hi] pair");
    return {pair[0].get<double>(), pair[1].get<double>()};
}

double rate_of(const Json& cfg) {
    const double rate = get_or(cfg, "rate", 1.0);
    require(rate >= 0.0 && rate <= 1.0, ErrorCode::InvalidInput, "rate must be in [0, 1]");
    return rate;
}

ScoredCandidateSet& selection_data(TargetData& data) {
    auto* set = std::get_if<ScoredCandidateSet>(&data);
    require(set != nullptr, ErrorCode::InvalidInput, "selection operator needs a candidate set");
    return *set;
}

PredictionInput& prediction_data(TargetData& data) {
    auto* p = std::get_if<PredictionInput>(&data);
    require(p != nullptr, ErrorCode::InvalidInput, "sampler needs a prediction input");
    return *p;
}

// ---------------------------------------------------------------------------
// Candidate selection

class EpsilonGreedyOp final : public Operator {
public:
    explicit EpsilonGreedyOp(const Json& cfg) : epsilon_(get_or(cfg, "epsilon", 0.1)) {
        require(epsilon_ >= 0.0 && epsilon_ <= 1.0, ErrorCode::InvalidInput,
                "epsilon must be in [0, 1]");
    }
    std::string_view name() const override { return "EpsilonGreedySelection"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        set = epsilon_greedy_select(std::move(set), in.stats, in.ctx, epsilon_);
        return {};
    }

private:
    double epsilon_;
};

class Ucb1EnhancedOp final : public Operator {
public:
    explicit Ucb1EnhancedOp(const Json& cfg) {
        cfg_.target = get_required<double>(cfg, "target_reward");
        cfg_.w = get_or(cfg, "exploration_weight", 1.0);
        cfg_.delta = get_or(cfg, "penalty_delta", 2.0);
        cfg_.min_pulls = get_or<std::uint64_t>(cfg, "min_pulls", 0);
        cfg_.validate();
    }
    std::string_view name() const override { return "UCB1Enhanced"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        set = ucb1_enhanced_select(std::move(set), in.stats, in.ctx, cfg_);
        return {};
    }

private:
    Ucb1EnhancedConfig cfg_;
};

class ThompsonOp final : public Operator {
public:
    std::string_view name() const override { return "ThompsonSampling"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        set = thompson_sampling_select(std::move(set), in.stats, in.ctx);
        return {};
    }
};

class RlActionOp final : public Operator {
public:
    RlActionOp(const Json& cfg, const OperatorEnv& env)
        : terminal_(get_or(cfg, "terminal", false)) {
        const auto scorer_name = get_required<std::string>(cfg, "scorer");
        auto it = env.scorers.find(scorer_name);
        require(it != env.scorers.end(), ErrorCode::InvalidInput,
                "unknown scorer '" + scorer_name + "'");
        scorer_ = it->second;
    }
    std::string_view name() const override { return "RLActionSelection"; }
    OperatorKind kind() const override {
        return terminal_ ? OperatorKind::selector : OperatorKind::scorer;
    }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        set = rl_action_select(std::move(set), in.ctx, scorer_, terminal_);
        return {};
    }

private:
    bool terminal_;
    Scorer scorer_;
};

class SoftmaxOp final : public Operator {
public:
    enum class Source { upstream, input, stats };

    explicit SoftmaxOp(const Json& cfg) : temperature_(get_or(cfg, "temperature", 1.0)) {
        require(temperature_ > 0.0, ErrorCode::InvalidInput, "temperature must be positive");
        const auto src = get_or<std::string>(cfg, "score_source", "upstream");
        if (src == "upstream") {
            source_ = Source::upstream;
        } else if (src == "input") {
            source_ = Source::input;
        } else if (src == "stats") {
            source_ = Source::stats;
        } else {
            fail(ErrorCode::InvalidInput, "score_source must be upstream, input or stats");
        }
    }
    std::string_view name() const override { return "SoftmaxSelection"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    bool needs_upstream_scores() const override { return source_ == Source::upstream; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        if (source_ == Source::stats) {
            require_aligned(set, in.stats);
            // Laplace-smoothed mean so unseen arms still get a finite score.
            std::vector<double> scores(in.stats.size());
            for (std::size_t i = 0; i < scores.size(); ++i) {
                scores[i] = (static_cast<double>(in.stats[i].successes) + 1.0) /
                            (static_cast<double>(in.stats[i].trials) + 2.0);
            }
            set.scores = std::move(scores);
        }
        set = softmax_select(std::move(set), in.ctx, temperature_);
        return {};
    }

private:
    double temperature_;
    Source source_ = Source::upstream;
};

class BinarySearchStateBox final : public OperatorState {
public:
    BinarySearchState value;
    std::unique_ptr<OperatorState> clone() const override {
        return std::make_unique<BinarySearchStateBox>(*this);
    }
};

class BinarySearchOp final : public Operator {
public:
    explicit BinarySearchOp(const Json& cfg) {
        cfg_.target = get_required<double>(cfg, "target_reward");
        cfg_.min_samples = get_or<std::uint64_t>(cfg, "min_samples", 100);
        require(cfg_.min_samples >= 1, ErrorCode::InvalidInput, "min_samples must be positive");
    }
    std::string_view name() const override { return "BinarySearchSelection"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    std::unique_ptr<OperatorState> make_state() const override {
        return std::make_unique<BinarySearchStateBox>();
    }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState* state) const override {
        auto& set = selection_data(data);
        auto& box = dynamic_cast<BinarySearchStateBox&>(*state);
        auto result = binary_search_select(std::move(set), in.stats, box.value, cfg_);
        set = std::move(result.set);
        box.value = std::move(result.state);
        StepResult out;
        if (result.non_monotone_warning) {
            out.warnings.push_back("BinarySearchSelection: non-monotone rewards observed");
        }
        return out;
    }

private:
    BinarySearchConfig cfg_;
};

class UniformOp final : public Operator {
public:
    std::string_view name() const override { return "UniformSelection"; }
    OperatorKind kind() const override { return OperatorKind::selector; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto& set = selection_data(data);
        set = uniform_select(std::move(set), in.ctx);
        return {};
    }
};

// ---------------------------------------------------------------------------
// Active learning

class SamplerOp : public Operator {
public:
    explicit SamplerOp(const Json& cfg) : rate_(rate_of(cfg)), action_(explore_action_of(cfg)) {}
    OperatorKind kind() const override { return OperatorKind::sampler; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState* state) const override {
        auto& p = prediction_data(data);
        StepResult out;
        out.accepted = accept(p, in.ctx, state);
        if (out.accepted) p.explore_action = action_;
        return out;
    }

protected:
    virtual bool accept(const PredictionInput& p, const DecisionContext& ctx,
                        OperatorState* state) const = 0;
    double rate_;

private:
    ExploreAction action_;
};

class IntervalOp final : public SamplerOp {
public:
    explicit IntervalOp(const Json& cfg) : SamplerOp(cfg) {
        for (const auto& pair : get_required<Json>(cfg, "intervals")) {
            intervals_.push_back(interval_of(pair));
        }
        require(!intervals_.empty(), ErrorCode::InvalidInput, "intervals must be non-empty");
        validate_intervals(intervals_);
    }
    std::string_view name() const override { return "SampleWithInterval"; }

private:
    bool accept(const PredictionInput& p, const DecisionContext& ctx,
                OperatorState*) const override {
        return sample_with_interval(p, intervals_, rate_, ctx);
    }
    std::vector<Interval> intervals_;
};

class IntervalDecayOp final : public SamplerOp {
public:
    explicit IntervalDecayOp(const Json& cfg)
        : SamplerOp(cfg), lambda_(get_or(cfg, "decay_lambda", 0.0)) {
        const Json intervals = get_required<Json>(cfg, "intervals");
        require(intervals.is_array() && intervals.size() == 1, ErrorCode::InvalidInput,
                "SampleWithIntervalDecay takes exactly one interval");
        interval_ = interval_of(intervals[0]);
        validate_intervals(std::span(&interval_, 1));
        require(lambda_ >= 0.0, ErrorCode::InvalidInput, "decay_lambda must be non-negative");
    }
    std::string_view name() const override { return "SampleWithIntervalDecay"; }

private:
    bool accept(const PredictionInput& p, const DecisionContext& ctx,
                OperatorState*) const override {
        return sample_with_interval_decay(p, interval_, rate_, lambda_, ctx);
    }
    Interval interval_;
    double lambda_;
};

class EntropyOp final : public SamplerOp {
public:
    EntropyOp(const Json& cfg, bool multiclass)
        : SamplerOp(cfg),
          threshold_(get_required<double>(cfg, "entropy_threshold")),
          multiclass_(multiclass) {
        require(threshold_ >= 0.0 && threshold_ <= 1.0, ErrorCode::InvalidInput,
                "entropy_threshold must be in [0, 1]");
    }
    std::string_view name() const override {
        return multiclass_ ? "SampleWithEntropyMultiClass" : "SampleWithEntropy";
    }

private:
    bool accept(const PredictionInput& p, const DecisionContext& ctx,
                OperatorState*) const override {
        return multiclass_ ? sample_with_entropy_multiclass(p, threshold_, rate_, ctx)
                           : sample_with_entropy(p, threshold_, rate_, ctx);
    }
    double threshold_;
    bool multiclass_;
};

class StratifiedStateBox final : public OperatorState {
public:
    explicit StratifiedStateBox(StratifiedState s) : value(std::move(s)) {}
    StratifiedState value;
    std::unique_ptr<OperatorState> clone() const override {
        return std::make_unique<StratifiedStateBox>(*this);
    }
};

class StratifiedOp final : public SamplerOp {
public:
    explicit StratifiedOp(const Json& cfg) : SamplerOp(cfg) {
        auto edges = get_required<std::vector<double>>(cfg, "bin_edges");
        std::vector<std::uint64_t> quota;
        const Json q = get_required<Json>(cfg, "bin_quota");
        if (q.is_array()) {
            quota = q.get<std::vector<std::uint64_t>>();
        } else {
            quota = {q.get<std::uint64_t>()};
        }
        initial_ = StratifiedState::make(std::move(edges), std::move(quota),
                                         get_or<std::uint64_t>(cfg, "window_decisions", 10'000));
    }
    std::string_view name() const override { return "StratifiedSampling"; }
    std::unique_ptr<OperatorState> make_state() const override {
        return std::make_unique<StratifiedStateBox>(initial_);
    }

private:
    bool accept(const PredictionInput& p, const DecisionContext& ctx,
                OperatorState* state) const override {
        auto& box = dynamic_cast<StratifiedStateBox&>(*state);
        auto [accepted, next] = stratified_sample(p, std::move(box.value), ctx);
        box.value = std::move(next);
        return accepted;
    }
    StratifiedState initial_;
};

class SemanticSimilarityOp final : public SamplerOp {
public:
    explicit SemanticSimilarityOp(const Json& cfg)
        : SamplerOp(cfg), threshold_(get_required<double>(cfg, "similarity_threshold")) {
        require(threshold_ >= -1.0 && threshold_ <= 1.0, ErrorCode::InvalidInput,
                "similarity_threshold must be in [-1, 1]");
        if (auto path = get_or<std::string>(cfg, "seed_vectors_path", ""); !path.empty()) {
            seeds_ = load_seed_vectors(path);
        } else {
            seeds_ = get_required<std::vector<std::vector<double>>>(cfg, "seed_vectors");
        }
        require(!seeds_.empty(), ErrorCode::InvalidInput, "no seed vectors");
        for (const auto& s : seeds_) {
            require(s.size() == seeds_.front().size(), ErrorCode::InvalidInput,
                    "seed vectors differ in dimension");
            // Rejects zero-norm seeds up front.
            cosine_similarity(s, s);
        }
    }
    std::string_view name() const override { return "SampleWithSemanticSimilarity"; }

private:
    bool accept(const PredictionInput& p, const DecisionContext& ctx,
                OperatorState*) const override {
        return sample_with_semantic_similarity(p, seeds_, threshold_, rate_, ctx);
    }
    double threshold_;
    std::vector<std::vector<double>> seeds_;
};

// ---------------------------------------------------------------------------
// Ranking

class ShuffleRankingOp final : public Operator {
public:
    explicit ShuffleRankingOp(const Json& cfg) {
        const bool has_start = cfg.contains("shuffle_window_start");
        const bool has_end = cfg.contains("shuffle_window_end");
        if (has_start || has_end) {
            window_ = std::pair{get_or<std::size_t>(cfg, "shuffle_window_start", 0),
                                get_required<std::size_t>(cfg, "shuffle_window_end")};
            require(window_->first < window_->second, ErrorCode::InvalidInput,
                    "shuffle window must satisfy start < end");
        }
    }
    std::string_view name() const override { return "ShuffleRanking"; }
    OperatorKind kind() const override { return OperatorKind::ranker; }
    StepResult apply(TargetData& data, const StepInput& in, OperatorState*) const override {
        auto* list = std::get_if<RankedList>(&data);
        require(list != nullptr, ErrorCode::InvalidInput, "ShuffleRanking needs a ranked list");
        RankedList work = *list;
        if (window_) {
            // Clip a configured window to short lists; the request's own window wins.
            if (!work.shuffle_window) {
                const auto end = std::min(window_->second, work.items.size());
                if (window_->first + 1 >= end) return {};
                work.shuffle_window = std::pair{window_->first, end};
            }
        }
        auto shuffled = shuffle_ranking(std::move(work), in.ctx);
        shuffled.shuffle_window = list->shuffle_window;
        *list = std::move(shuffled);
        return {};
    }

private:
    std::optional<std::pair<std::size_t, std::size_t>> window_;
};

template <typename Op>
OperatorFactory simple() {
    return [](const Json& cfg, const OperatorEnv&) { return std::make_unique<Op>(cfg); };
}

template <typename Op>
OperatorFactory no_config() {
    return [](const Json&, const OperatorEnv&) { return std::make_unique<Op>(); };
}

}  // namespace

OperatorCatalog OperatorCatalog::with_builtins() {
    OperatorCatalog c;
    c.add("EpsilonGreedySelection", OperatorKind::selector, simple<EpsilonGreedyOp>());
    c.add("UCB1Enhanced", OperatorKind::selector, simple<Ucb1EnhancedOp>());
    c.add("ThompsonSampling", OperatorKind::selector, no_config<ThompsonOp>());
    // Kind depends on "terminal"; the registry asks the built instance.
    c.add("RLActionSelection", OperatorKind::scorer,
          [](const Json& cfg, const OperatorEnv& env) {
              return std::make_unique<RlActionOp>(cfg, env);
          });
    c.add("SoftmaxSelection", OperatorKind::selector, simple<SoftmaxOp>());
    c.add("BinarySearchSelection", OperatorKind::selector, simple<BinarySearchOp>());
    c.add("UniformSelection", OperatorKind::selector, no_config<UniformOp>());

    c.add("SampleWithInterval", OperatorKind::sampler, simple<IntervalOp>());
    c.add("SampleWithIntervalDecay", OperatorKind::sampler, simple<IntervalDecayOp>());
    c.add("SampleWithEntropy", OperatorKind::sampler,
          [](const Json& cfg, const OperatorEnv&) {
              return std::make_unique<EntropyOp>(cfg, false);
          });
    c.add("SampleWithEntropyMultiClass", OperatorKind::sampler,
          [](const Json& cfg, const OperatorEnv&) {
              return std::make_unique<EntropyOp>(cfg, true);
          });
    c.add("StratifiedSampling", OperatorKind::sampler, simple<StratifiedOp>());
    c.add("SampleWithSemanticSimilarity", OperatorKind::sampler, simple<SemanticSimilarityOp>());
    // Alternate spelling accepted for existing configs.
    c.add("SampleWithSemanticSimiliarity", OperatorKind::sampler, simple<SemanticSimilarityOp>());

    c.add("ShuffleRanking", OperatorKind::ranker, simple<ShuffleRankingOp>());
    return c;
}

void OperatorCatalog::add(const std::string& name, OperatorKind kind, OperatorFactory factory) {
    require(!name.empty() && factory, ErrorCode::ConfigError, "invalid operator registration");
    entries_[name] = Entry{kind, std::move(factory)};
}

OperatorKind OperatorCatalog::kind(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::ConfigError, "unknown operator '" + name + "'");
    return it->second.kind;
}

std::vector<std::string> OperatorCatalog::names() const {
    std::vector<std::string> out;
    for (const auto& [name, entry] : entries_) out.push_back(name);
    return out;
}

std::unique_ptr<Operator> OperatorCatalog::create(const std::string& name, const Json& config,
                                                  const OperatorEnv& env) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::ConfigError, "unknown operator '" + name + "'");
    try {
        return it->second.factory(config, env);
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, name + ": " + e.what());
    } catch (const Json::exception& e) {
        fail(ErrorCode::ConfigError, name + ": bad config value: " + e.what());
    }
}

}  // namespace explorex
