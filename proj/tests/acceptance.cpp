// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "explorex/active_sampling.hpp"
#include "explorex/bandit_selection.hpp"
#include "explorex/hash.hpp"
#include "explorex/json_io.hpp"
#include "explorex/ranking_exploration.hpp"
#include "explorex/service_api.hpp"
#include "explorex/simulator.hpp"
#include "gen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace explorex;
using support::ctx_with_seed;
using support::make_set;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kConfigs = fs::path(EXPLOREX_SOURCE_DIR) / "configs";

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

ArmStats arm(const std::string& id, std::uint64_t pulls, std::uint64_t trials, std::uint64_t successes) {
    return ArmStats{id, pulls, static_cast<double>(successes), trials, successes};
}

template <typename Select>
std::vector<std::uint64_t> frequencies(std::size_t k, int draws, Select&& select) {
    std::vector<std::uint64_t> counts(k, 0);
    for (int i = 0; i < draws; ++i) ++counts[select(mix64(static_cast<std::uint64_t>(i) + 1))];
    return counts;
}

Outcome convergence() {
    Outcome o;
    const auto start = Clock::now();
    const ExplorationTarget target = load_target(kConfigs / "example_target.json");
    SimEnvironment env = SimEnvironment::load(kConfigs / "example_env.json");
    SimOptions opts;
    opts.fetchers = fetchers_from_json(read_json_file(kConfigs / "fetchers.json"));

    std::size_t best = 0;
    for (std::size_t i = 1; i < env.candidates.size(); ++i) {
        if (std::abs(env.candidates[i].true_ctr - env.target_reward) <
            std::abs(env.candidates[best].true_ctr - env.target_reward)) {
            best = i;
        }
    }
    const auto& chain = target.transformers.at(0).operator_chain.at(0);
    o.check(chain.name == "UCB1Enhanced" && chain.config.value("exploration_weight", 0.0) == 1.0 &&
                chain.config.value("penalty_delta", 0.0) == 2.0,
            "bundled config is UCB1Enhanced w=1 delta=2");
    o.check(env.rounds <= 50'000, "within 50k decisions");

    const double k = static_cast<double>(env.candidates.size());
    o.detail << "closest=" << env.candidates[best].id << " final shares:";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        env.seed = seed;
        const SimResult r = run_simulation(env, target, opts);
        const double share = r.epochs.back().display_share[best];
        o.detail << ' ' << share;
        o.check(share > 0.6, "seed " + std::to_string(seed) + " share > 0.6");
        for (std::size_t e = 0; e < 2 && e < r.epochs.size(); ++e) {
            for (double s : r.epochs[e].display_share) {
                o.check(s >= 1.0 / k - 0.1 && s <= 1.0 / k + 0.1,
                        "seed " + std::to_string(seed) + " early epoch " + std::to_string(e + 1));
            }
        }
    }
    const double t = seconds_since(start);
    o.detail << " runtime=" << t << "s";
    o.check(t < 60.0, "runtime < 60 s");
    return o;
}

Outcome oracle_equivalence() {
    Outcome o;
    gen::Gen g(20'001);
    int mismatches = 0;
    for (int iter = 0; iter < 10'000; ++iter) {
        const std::size_t k = g.between(1, 8);
        auto s = make_set(g.distinct_ids(k));
        std::vector<ArmStats> st;
        std::vector<oracle::Arm> arms;
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const bool cold = g.coin(0.1);
            const std::uint64_t pulls = cold && g.coin() ? 0 : g.between(1, 2000);
            const std::uint64_t trials = cold ? 0 : g.between(1, 2000);
            const std::uint64_t succ = trials ? g.between(0, trials) : 0;
            st.push_back(arm(s.candidates[i].id, pulls, trials, succ));
            arms.push_back({pulls, trials, succ});
            total += pulls;
        }
        const double target = g.real(0, 1), w = g.real(0, 3), delta = g.real(0.2, 5);
        const std::uint64_t min_pulls = g.coin(0.2) ? g.between(0, 100) : 0;
        const auto T = std::max<std::uint64_t>(total, 1);
        const auto out = ucb1_enhanced_select(s, st, ctx_with_seed(1, T), {target, w, delta, min_pulls});
        mismatches += *out.decided != oracle::eq1_choice(arms, T, target, w, delta, min_pulls);
    }
    o.detail << "instances=10000 mismatches=" << mismatches;
    o.check(mismatches == 0, "exact agreement");
    return o;
}

Outcome asymmetry() {
    Outcome o;
    gen::Gen g(30'001);
    int violations = 0;
    for (int iter = 0; iter < 1000; ++iter) {
        // Denominator 1024 keeps both deviations exactly equal in binary.
        const std::uint64_t trials = 1024;
        const std::uint64_t centre = g.between(100, 900);
        const std::uint64_t d = g.between(1, 99);
        const double target = static_cast<double>(centre) / 1024.0;
        const std::uint64_t pulls = g.between(1, 1000);
        const double w = g.real(0, 2);
        const bool above_first = g.coin();
        auto s = make_set({"x", "y"});
        ArmStats hi = arm("", pulls, trials, centre + d), lo = arm("", pulls, trials, centre - d);
        std::vector<ArmStats> st = above_first ? std::vector{hi, lo} : std::vector{lo, hi};
        st[0].candidate_id = "x";
        st[1].candidate_id = "y";
        const auto ctx = ctx_with_seed(1, 2 * pulls);
        const auto two = ucb1_enhanced_select(s, st, ctx, {target, w, 2.0, 0});
        violations += *two.decided != (above_first ? 0u : 1u);
        const auto one = ucb1_enhanced_select(s, st, ctx, {target, w, 1.0, 0});
        violations += *one.decided != 0u;
    }
    o.detail << "instances=1000 violations=" << violations;
    o.check(violations == 0, "zero violations");
    return o;
}

Outcome selection_probabilities() {
    Outcome o;
    const auto start = Clock::now();
    const int n = 1'000'000;

    auto five = make_set({"a", "b", "c", "d", "e"});
    std::vector<ArmStats> st{arm("a", 1, 10, 1), arm("b", 1, 10, 1), arm("c", 1, 10, 9),
                             arm("d", 1, 10, 1), arm("e", 1, 10, 1)};
    auto counts = frequencies(5, n, [&](std::uint64_t seed) {
        return *epsilon_greedy_select(five, st, ctx_with_seed(seed), 0.1).decided;
    });
    const double best = counts[2] / double(n);
    const double p_eps = oracle::chi_square_p(counts, {0.02, 0.02, 0.92, 0.02, 0.02});
    o.detail << "eps-greedy best=" << best << " p=" << p_eps;
    o.check(std::abs(best - 0.92) <= 0.01 && p_eps > 0.001, "epsilon-greedy");

    auto two = make_set({"a", "b"});
    two.scores = std::vector<double>{1.0, 2.0};
    counts = frequencies(2, n, [&](std::uint64_t seed) {
        return *softmax_select(two, ctx_with_seed(seed), 1.0).decided;
    });
    const auto expect = oracle::softmax({1.0, 2.0}, 1.0);
    const double p_soft = oracle::chi_square_p(counts, expect);
    o.detail << "; softmax=[" << counts[0] / double(n) << ", " << counts[1] / double(n) << "] p=" << p_soft;
    o.check(std::abs(counts[0] / double(n) - 0.269) <= 0.01 &&
                std::abs(counts[1] / double(n) - 0.731) <= 0.01 && p_soft > 0.001,
            "softmax");

    counts = frequencies(5, n, [&](std::uint64_t seed) {
        return *uniform_select(five, ctx_with_seed(seed)).decided;
    });
    const double p_uni = oracle::chi_square_p(counts, std::vector<double>(5, 0.2));
    bool flat = true;
    for (auto c : counts) flat = flat && std::abs(c / double(n) - 0.2) <= 0.005;
    o.detail << "; uniform p=" << p_uni;
    o.check(flat && p_uni > 0.001, "uniform");

    const double t = seconds_since(start);
    o.detail << " runtime=" << t << "s";
    o.check(t < 30.0, "runtime < 30 s");
    return o;
}

Outcome thompson() {
    Outcome o;
    auto s = make_set({"A", "B"});
    std::vector<ArmStats> st{arm("A", 100, 100, 100), arm("B", 100, 100, 0)};
    const auto counts = frequencies(2, 100'000, [&](std::uint64_t seed) {
        return *thompson_sampling_select(s, st, ctx_with_seed(seed)).decided;
    });
    const double f = counts[0] / 1e5;
    o.detail << "Beta(101,1) wins " << f;
    o.check(f > 0.999, "frequency > 0.999");
    return o;
}

Outcome active_learning_formulas() {
    Outcome o;
    const double h = binary_entropy(0.9);
    const std::vector<double> probs{0.7, 0.2, 0.1};
    const double hm = normalized_entropy(probs);
    const std::vector<double> a{1, 1}, b{1, 0};
    const double cos = cosine_similarity(a, b);
    PredictionInput p;
    p.item_id = "x";
    p.score = 0.3;
    int accepted = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        accepted += sample_with_interval_decay(p, {0.4, 0.6}, 1.0, 10.0, ctx_with_seed(mix64(i + 1)));
    }
    const double decay = accepted / double(n);
    o.detail << "H(0.9)=" << h << " Hn=" << hm << " cos=" << cos << " decay=" << decay;
    o.check(std::abs(h - 0.4690) <= 1e-3, "binary entropy");
    o.check(std::abs(hm - 0.7298) <= 1e-3, "multiclass entropy");
    o.check(std::abs(cos - 0.7071) <= 1e-4, "cosine");
    o.check(std::abs(decay - std::exp(-1.0)) <= 0.01, "interval decay");
    o.check(std::abs(h - oracle::binary_entropy(0.9)) <= 1e-12 &&
                std::abs(hm - oracle::normalized_entropy(probs)) <= 1e-12 &&
                std::abs(cos - oracle::cosine(a, b)) <= 1e-12,
            "agreement with independent formulas");
    return o;
}

Outcome shuffle_uniformity() {
    Outcome o;
    RankedList three;
    for (const char* id : {"a", "b", "c"}) three.items.push_back(Candidate::make(id, id));
    std::map<std::vector<std::string>, std::uint64_t> counts;
    for (int i = 0; i < 60'000; ++i) {
        const auto out = shuffle_ranking(three, ctx_with_seed(mix64(i + 1)));
        std::vector<std::string> ids;
        for (const auto& c : out.items) ids.push_back(c.id);
        ++counts[ids];
    }
    std::vector<std::uint64_t> obs;
    for (const auto& [perm, c] : counts) obs.push_back(c);
    const double p = counts.size() == 6 ? oracle::chi_square_p(obs, std::vector<double>(6, 1.0 / 6)) : 0.0;
    o.detail << "permutations=" << counts.size() << " p=" << p;
    o.check(counts.size() == 6 && p > 0.001, "chi-square");

    gen::Gen g(70'001);
    int broken = 0;
    for (int i = 0; i < 10'000; ++i) {
        RankedList l;
        for (const auto& id : g.distinct_ids(g.between(1, 20))) l.items.push_back(Candidate::make(id, id));
        const auto out = shuffle_ranking(l, ctx_with_seed(g.u64()));
        auto key = [](const RankedList& r) {
            std::multiset<std::string> s;
            for (const auto& c : r.items) s.insert(c.id + "|" + c.payload.dump());
            return s;
        };
        broken += out.items.size() != l.items.size() || key(out) != key(l);
    }
    o.detail << " non-bijections=" << broken;
    o.check(broken == 0, "bijection");
    return o;
}

ExplorationTarget uniform(const std::string& id, double rate) {
    ExplorationTarget t;
    t.target_id = id;
    t.sample_rate = rate;
    t.transformers = {TransformerSpec{"tr", {{"UniformSelection", Json::object()}}}};
    return t;
}

Outcome architecture() {
    Outcome o;
    FeedbackStore store;
    TargetRegistry reg(store);
    reg.register_target(uniform("off", 1.0));

    gen::Gen g(80'001);
    int changed = 0;
    for (int i = 0; i < 10'000; ++i) {
        auto s = make_set(g.distinct_ids(g.between(1, 8)));
        if (g.coin()) {
            std::vector<double> sc;
            for (std::size_t j = 0; j < s.candidates.size(); ++j) sc.push_back(g.real(-5, 5));
            s.scores = sc;
        }
        const auto before = to_json(s).dump();
        DecisionContext ctx;
        ctx.unit_id = g.ident(12);
        const auto out = reg.explore("off", s, ctx);
        changed += out.decision.explored || to_json(out.data).dump() != before;
    }
    o.detail << "passthrough changes=" << changed;
    o.check(changed == 0 && store.health().exposures == 0, "unsubscribed identity");

    reg.register_target(uniform("tenth", 0.1));
    reg.subscribe("tenth");
    int explored = 0;
    for (int i = 0; i < 100'000; ++i) {
        DecisionContext ctx;
        ctx.unit_id = "unit-" + std::to_string(i);
        explored += reg.explore("tenth", make_set({"a", "b"}), ctx).decision.explored;
    }
    o.detail << " traffic=" << explored / 1e5;
    o.check(std::abs(explored / 1e5 - 0.10) <= 0.005, "sample rate 0.1");

    auto en = uniform("en", 1.0);
    en.trigger = {{"language", "en"}};
    reg.register_target(en);
    reg.subscribe("en");
    int leaked = 0;
    for (int i = 0; i < 10'000; ++i) {
        DecisionContext ctx;
        ctx.unit_id = "u" + std::to_string(i);
        ctx.attributes = {{"language", "fr"}};
        leaked += reg.explore("en", make_set({"a", "b"}), ctx).decision.explored;
    }
    o.detail << " fr explored=" << leaked;
    o.check(leaked == 0, "trigger blocks fr");

    // Fault injection: throwing scorers, bad shapes, bad inputs.
    reg.register_scorer("throws", [](const Candidate&) -> double { throw std::runtime_error("injected"); });
    reg.register_scorer("nan", [](const Candidate&) { return std::nan(""); });
    ExplorationTarget faulty;
    faulty.target_id = "faulty";
    faulty.transformers = {TransformerSpec{
        "tr", {{"RLActionSelection", {{"scorer", "throws"}}}, {"SoftmaxSelection", Json::object()}}}};
    reg.register_target(faulty);
    faulty.target_id = "nan";
    faulty.transformers[0].operator_chain[0].config["scorer"] = "nan";
    reg.register_target(faulty);
    ExplorationTarget ucb;
    ucb.target_id = "ucb";
    ucb.transformers = {TransformerSpec{"tr", {{"UCB1Enhanced", {{"target_reward", 0.1}}}}}};
    reg.register_target(ucb);
    for (const char* t : {"faulty", "nan", "ucb"}) reg.subscribe(t);

    int surfaced = 0, attempts = 0;
    for (int i = 0; i < 3'000; ++i) {
        TargetData data;
        switch (i % 5) {
            case 0: data = make_set({"a", "b"}); break;
            case 1: data = make_set({"a", "a"}); break;
            case 2: data = PredictionInput{"p", 0.5, {}, {}, {}}; break;
            case 3: data = RankedList{{Candidate::make("a", "a")}, std::pair<std::size_t, std::size_t>{0, 9}}; break;
            default: data = ScoredCandidateSet{}; break;
        }
        for (const char* t : {"faulty", "nan", "ucb"}) {
            DecisionContext ctx;
            ctx.unit_id = i % 7 == 0 ? "" : "u" + std::to_string(i);
            ++attempts;
            try {
                reg.explore(t, data, ctx);
            } catch (...) {
                ++surfaced;
            }
        }
    }
    o.detail << " injected=" << attempts << " surfaced=" << surfaced;
    o.check(surfaced == 0, "fail-open");
    return o;
}

Outcome conservation() {
    Outcome o;
    const fs::path dir = fs::temp_directory_path() / ("explorex_acc_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    SimEnvironment env = SimEnvironment::load(kConfigs / "example_env.json");
    env.rounds = 10'000;
    SimOptions opts;
    opts.fetchers = fetchers_from_json(read_json_file(kConfigs / "fetchers.json"));
    opts.exposure_log = dir / "sim.exposures.jsonl";
    opts.event_log = dir / "sim.events.jsonl";
    const SimResult r = run_simulation(env, load_target(kConfigs / "example_target.json"), opts);

    // Independent count straight from the log files.
    std::set<std::string> exposed;
    {
        std::ifstream in(*opts.exposure_log);
        for (std::string line; std::getline(in, line);) exposed.insert(Json::parse(line)["decision_id"]);
    }
    std::uint64_t displays = 0, clicks = 0;
    std::vector<FeedbackEvent> events;
    {
        std::ifstream in(*opts.event_log);
        for (std::string line; std::getline(in, line);) {
            const Json j = Json::parse(line);
            events.push_back(event_from_json(j));
            if (!exposed.count(j["decision_id"])) continue;
            displays += j["event_type"] == "display";
            clicks += j["event_type"] == "click";
        }
    }
    std::uint64_t trials = 0, successes = 0;
    for (const auto& [key, c] : r.counters) {
        if (!key.unit_id.empty()) continue;
        trials += c.count("display");
        successes += c.count("click");
    }
    o.detail << "decisions=" << exposed.size() << " trials=" << trials << "/" << displays
             << " successes=" << successes << "/" << clicks;
    o.check(exposed.size() == 10'000, "10k decisions logged");
    o.check(trials == displays && successes == clicks, "conservation");

    const auto [rebuilt, stats] = replay_offline_log(*opts.exposure_log, *opts.event_log);
    o.check(rebuilt == r.counters && stats.skipped_lines == 0, "replay equals live");

    FeedbackStore store;
    store.replay(*opts.exposure_log, *opts.event_log);
    const auto before = store.counters();
    for (const auto& e : events) store.ingest_event(e);
    o.check(store.counters() == before, "duplicate reingestion is a no-op");
    o.detail << " replay=" << (rebuilt == r.counters ? "equal" : "different");
    fs::remove_all(dir);
    return o;
}

Outcome service_round_trip() {
    Outcome o;
    FeedbackStore store;
    TargetRegistry reg(store);
    Service service(reg);
    httplib::Server server;
    service.bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread loop([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);

    Json target = read_json_file(kConfigs / "example_target.json");
    target["sample_rate"] = 1.0;
    target["feedback_fetcher"] = "ctr";
    const Json data = {{"candidates", {"0.08", "0.10", "0.12", "0.14", "0.16"}}};
    auto body = [&](const std::string& unit) {
        return Json{{"target_id", "suggestion_threshold"},
                    {"unit_id", unit},
                    {"attributes", {{"language", "en"}}},
                    {"data", data}}
            .dump();
    };

    const auto start = Clock::now();
    auto put = client.Put("/targets/suggestion_threshold", target.dump(), "application/json");
    auto unsub = client.Post("/explore", body("first"), "application/json");
    auto sub = client.Post("/targets/suggestion_threshold/subscribe", "", "application/json");
    auto exp = client.Post("/explore", body("second"), "application/json");
    std::string id;
    if (exp) id = Json::parse(exp->body)["body"].value("decision_id", "");
    auto display = client.Post("/events", Json{{"decision_id", id}, {"event_type", "display"}}.dump(),
                               "application/json");
    auto click = client.Post("/events", Json{{"decision_id", id}, {"event_type", "click"}}.dump(),
                             "application/json");
    auto stats = client.Get("/stats/suggestion_threshold");
    const double ms = seconds_since(start) * 1000.0;
    server.stop();
    loop.join();

    const bool all = put && unsub && sub && exp && display && click && stats;
    o.check(all, "all requests answered");
    if (!all) return o;
    const Json u = Json::parse(unsub->body)["body"];
    o.check(u["explored"] == false && u["data"] == data, "unsubscribed echo");
    o.check(Json::parse(exp->body)["body"]["explored"] == true, "subscribed explore");
    const Json totals = Json::parse(stats->body)["body"]["totals"];
    o.detail << "trials=" << totals["trials"] << " successes=" << totals["successes"] << " loop=" << ms << "ms";
    o.check(totals["trials"] == 1 && totals["successes"] == 1, "stats 1/1");
    o.check(ms < 50.0, "loop < 50 ms");
    return o;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"convergence reproduction", convergence},
        {"UCB1Enhanced oracle equivalence", oracle_equivalence},
        {"asymmetric penalty", asymmetry},
        {"selection probabilities", selection_probabilities},
        {"Thompson sanity", thompson},
        {"active-learning formulas", active_learning_formulas},
        {"ShuffleRanking uniformity", shuffle_uniformity},
        {"architecture contracts", architecture},
        {"feedback conservation and recovery", conservation},
        {"service round trip", service_round_trip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail.str() << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
