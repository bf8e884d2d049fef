#include "explorex/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <set>

#include "explorex/hash.hpp"
#include "explorex/json_io.hpp"
#include "explorex/random.hpp"

namespace explorex {

void SimEnvironment::validate() const {
    require(!candidates.empty(), ErrorCode::InvalidInput, "environment needs candidates");
    std::set<std::string> ids;
    for (const auto& c : candidates) {
        require(!c.id.empty() && ids.insert(c.id).second, ErrorCode::InvalidInput,
                "candidate ids must be non-empty and unique");
        require(std::isfinite(c.true_ctr) && c.true_ctr >= 0.0 && c.true_ctr <= 1.0,
                ErrorCode::InvalidInput, "true_ctr of '" + c.id + "' must lie in [0, 1]");
    }
    require(std::isfinite(target_reward), ErrorCode::InvalidInput, "target_reward must be finite");
    require(epoch_size > 0, ErrorCode::InvalidInput, "epoch_size must be positive");
    require(rounds == 0 || epoch_size <= rounds, ErrorCode::InvalidInput,
            "epoch_size must not exceed rounds");
}

SimEnvironment SimEnvironment::from_json(const Json& j) {
    try {
        SimEnvironment env;
        for (const auto& c : j.at("candidates")) {
            env.candidates.push_back({c.at("id").get<std::string>(), c.at("true_ctr").get<double>()});
        }
        env.target_reward = j.at("target_reward").get<double>();
        env.rounds = j.at("rounds").get<std::uint64_t>();
        env.epoch_size = j.value("epoch_size", std::uint64_t{1000});
        env.seed = j.value("seed", std::uint64_t{0});
        env.validate();
        return env;
    } catch (const Json::exception& e) {
        fail(ErrorCode::InvalidInput, std::string("environment: ") + e.what());
    }
}

SimEnvironment SimEnvironment::load(const std::filesystem::path& path) {
    return from_json(read_json_file(path));
}

SimResult run_simulation(const SimEnvironment& env, const ExplorationTarget& target,
                         const SimOptions& options) {
    env.validate();
    require(target.task_type == TaskType::candidate_selection, ErrorCode::InvalidInput,
            "the simulator drives candidate_selection targets only");
    if (target.candidates) {
        std::set<std::string> declared(target.candidates->begin(), target.candidates->end());
        std::set<std::string> offered;
        for (const auto& c : env.candidates) offered.insert(c.id);
        require(declared == offered, ErrorCode::InvalidInput,
                "environment candidates do not match the target's candidate set");
    }

    auto clock = std::make_shared<std::int64_t>(0);
    auto now = [clock] { return *clock; };

    FeedbackStoreOptions store_opts;
    store_opts.exposure_log = options.exposure_log;
    store_opts.event_log = options.event_log;
    store_opts.clock = now;
    FeedbackStore store(store_opts);
    for (const auto& [name, spec] : options.fetchers) store.register_fetcher(name, spec);

    RegistryOptions reg_opts;
    reg_opts.refresh_every_decisions = options.refresh_every_decisions;
    reg_opts.refresh_interval_ms = 0;
    reg_opts.clock = now;
    TargetRegistry registry(store, reg_opts);
    registry.register_target(target);
    registry.subscribe(target.target_id);

    ScoredCandidateSet offer;
    std::map<std::string, double> ctr;
    std::vector<std::string> ids;
    for (const auto& c : env.candidates) {
        offer.candidates.push_back(Candidate::make(c.id, Json(c.id)));
        ctr[c.id] = c.true_ctr;
        ids.push_back(c.id);
    }

    SimResult result;
    Rng rng(hash_combine(env.seed, 0x5eedc11c));
    const std::size_t k = ids.size();
    std::vector<std::uint64_t> epoch_counts(k, 0), displays(k, 0), clicks(k, 0);
    std::uint64_t decided = 0, in_epoch = 0;

    auto close_epoch = [&] {
        EpochReport rep;
        rep.epoch = result.epochs.size() + 1;
        rep.candidate_ids = ids;
        rep.cumulative_decisions = decided;
        for (std::size_t i = 0; i < k; ++i) {
            rep.display_share.push_back(static_cast<double>(epoch_counts[i]) /
                                        static_cast<double>(in_epoch));
            if (displays[i] == 0) {
                rep.deviation.push_back(std::nullopt);
            } else {
                const double emp = static_cast<double>(clicks[i]) / static_cast<double>(displays[i]);
                rep.deviation.push_back(std::abs(emp - env.target_reward));
            }
        }
        result.epochs.push_back(std::move(rep));
        std::fill(epoch_counts.begin(), epoch_counts.end(), 0);
        in_epoch = 0;
    };

    // Out-of-traffic units are passthroughs; cap attempts so a zero rate ends.
    const double rate = std::max(target.sample_rate, 1e-4);
    const auto max_requests =
        static_cast<std::uint64_t>(std::ceil(static_cast<double>(env.rounds) / rate)) * 2 + 1000;

    const std::string prefix = "u" + std::to_string(env.seed) + "-";
    while (decided < env.rounds && result.requests < max_requests) {
        *clock += options.ms_per_request;
        DecisionContext ctx;
        ctx.unit_id = prefix + std::to_string(result.requests++);
        ctx.attributes = target.trigger;

        ExploreOutcome out = registry.explore(target.target_id, offer, ctx);
        if (!out.decision.explored) continue;

        const std::string& chosen = *out.decision.chosen_candidate_id;
        const auto idx = static_cast<std::size_t>(
            std::find(ids.begin(), ids.end(), chosen) - ids.begin());
        ++epoch_counts[idx];
        ++displays[idx];
        ++result.displays;
        store.ingest_event({out.decision.decision_id, std::string(kDisplayEvent), *clock});
        if (rng.bernoulli(ctr[chosen])) {
            ++clicks[idx];
            ++result.clicks;
            store.ingest_event({out.decision.decision_id, std::string(kClickEvent), *clock + 1});
        }
        ++decided;
        if (++in_epoch == env.epoch_size) close_epoch();
    }
    if (in_epoch > 0) close_epoch();

    result.counters = store.counters();
    result.store_health = store.health();
    result.target_health = registry.health(target.target_id);
    return result;
}

void write_csv(std::ostream& out, const std::vector<EpochReport>& epochs) {
    out << "epoch,candidate_id,display_share,deviation,cumulative_decisions\n";
    out << std::setprecision(6) << std::fixed;
    for (const auto& e : epochs) {
        for (std::size_t i = 0; i < e.candidate_ids.size(); ++i) {
            out << e.epoch << ',' << e.candidate_ids[i] << ',' << e.display_share[i] << ',';
            if (e.deviation[i]) out << *e.deviation[i];
            out << ',' << e.cumulative_decisions << '\n';
        }
    }
}

}  // namespace explorex
