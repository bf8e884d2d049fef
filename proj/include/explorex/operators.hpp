#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "explorex/active_sampling.hpp"
#include "explorex/bandit_selection.hpp"
#include "explorex/core_model.hpp"
#include "explorex/ranking_exploration.hpp"

namespace explorex {

enum class TaskType { candidate_selection, active_learning, ranking };

std::string_view to_string(TaskType t) noexcept;
TaskType task_type_from_string(std::string_view s);

using TargetData = std::variant<ScoredCandidateSet, RankedList, PredictionInput>;

TaskType task_type_of(const TargetData& data) noexcept;

enum class OperatorKind {
    scorer,    // selection operator that rewrites scores but does not decide
    selector,  // selection operator that sets `decided`
    sampler,   // active-learning accept/skip
    ranker,
};

/// Mutable per-(target, transformer, operator) state. The registry clones it
/// before a decision and commits the clone only if the decision succeeds.
class OperatorState {
public:
    virtual ~OperatorState() = default;
    virtual std::unique_ptr<OperatorState> clone() const = 0;
};

struct StepInput {
    const DecisionContext& ctx;
    std::span<const ArmStats> stats;  // aligned with the candidate set, selection only
};

struct StepResult {
    bool accepted = true;  // samplers: false ends the chain without exploring
    std::vector<std::string> warnings;
};

class Operator {
public:
    virtual ~Operator() = default;

    virtual std::string_view name() const = 0;
    virtual OperatorKind kind() const = 0;

    /// True when the operator consumes scores written by an earlier operator.
    virtual bool needs_upstream_scores() const { return false; }

    virtual std::unique_ptr<OperatorState> make_state() const { return nullptr; }

    virtual StepResult apply(TargetData& data, const StepInput& in, OperatorState* state) const = 0;
};

struct OperatorEnv {
    const std::map<std::string, Scorer>& scorers;
};

using OperatorFactory =
    std::function<std::unique_ptr<Operator>(const Json& config, const OperatorEnv& env)>;

/// Name -> factory table. New operators are added here at build time.
class OperatorCatalog {
public:
    /// Catalog preloaded with the fourteen built-in operators.
    static OperatorCatalog with_builtins();

    void add(const std::string& name, OperatorKind kind, OperatorFactory factory);

    bool contains(const std::string& name) const { return entries_.count(name) > 0; }
    OperatorKind kind(const std::string& name) const;
    std::vector<std::string> names() const;

    /// Config errors surface as ConfigError naming the operator.
    std::unique_ptr<Operator> create(const std::string& name, const Json& config,
                                     const OperatorEnv& env) const;

private:
    struct Entry {
        OperatorKind kind;
        OperatorFactory factory;
    };
    std::map<std::string, Entry> entries_;
};

}  // namespace explorex
