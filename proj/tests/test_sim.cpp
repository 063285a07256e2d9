#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "deepsight/rng.hpp"
#include "deepsight/sim.hpp"

using namespace deepsight;

namespace {

// Small, fast scenario used across the harness tests.
ExperimentConfig small_scenario(std::uint64_t seed) {
    ExperimentConfig cfg = reference_scenario(seed);
    cfg.federation.n_clients = 12;
    cfg.federation.samples_min = 60;
    cfg.federation.samples_max = 80;
    cfg.federation.input_dim = 8;
    cfg.federation.classes = 5;
    cfg.federation.groups = {{0.5, 5.0}, {0.5, 5.0}};
    cfg.hidden_dims = {16, 16};
    cfg.defense.ddif_samples = 200;
    cfg.rounds = 4;
    cfg.clients_per_round = 12;
    cfg.attack_start_round = 2;
    cfg.eval_benign = 300;
    cfg.eval_trigger = 200;
    TriggerSpec trig;
    trig.pattern = {{0, 0.9}, {1, 0.05}};
    trig.target_class = 3;
    cfg.triggers = {trig};
    return cfg;
}

}  // namespace

TEST_CASE("evaluate measures MA against labels and BA against the target") {
    SplitMix64 rng(1);
    ModelParams m = init_model({6, 12, 10}, 2);
    // Labels drawn independently of the fixed model: accuracy ~ 1/10.
    std::vector<Sample> benign;
    for (int i = 0; i < 10000; ++i) {
        Sample s;
        s.x.resize(6);
        for (double& v : s.x) v = rng.next_double();
        s.y = static_cast<int>(rng.next_below(10));
        benign.push_back(std::move(s));
    }
    std::vector<Sample> trig = benign;
    auto [ma, ba] = evaluate(m, benign, trig, 0);
    // 3 sigma for n = 10^4, p = 0.1 is ~0.009.
    CHECK(ma == doctest::Approx(0.1).epsilon(0.095));
    CHECK(ma >= 0.1 - 0.009 - 0.02);
    CHECK(ma <= 0.1 + 0.009 + 0.02);
    CHECK(ba >= 0.0);
    CHECK(ba <= 1.0);
}

TEST_CASE("a constant predictor scores BA 1.0 on its own class") {
    ModelParams m = make_model({4, 3});
    m.layers[0].b = {0.0, 9.0, 0.0};  // always predicts class 1
    SplitMix64 rng(3);
    std::vector<Sample> set;
    for (int i = 0; i < 50; ++i) {
        Sample s;
        s.x = {rng.next_double(), rng.next_double(), rng.next_double(), rng.next_double()};
        s.y = 1;
        set.push_back(std::move(s));
    }
    auto [ma, ba] = evaluate(m, set, set, 1);
    CHECK(ba == doctest::Approx(1.0));
    CHECK(ma == doctest::Approx(1.0));
    CHECK_THROWS_AS(evaluate(m, {}, set, 1), std::invalid_argument);
}

TEST_CASE("filter metrics: precision of rejections, NPV of acceptances") {
    auto make_verdict = [](int n, std::vector<int> rejected) {
        FilterVerdict v;
        std::vector<bool> is_r(static_cast<std::size_t>(n), false);
        for (int i : rejected) is_r[static_cast<std::size_t>(i)] = true;
        for (int i = 0; i < n; ++i)
            (is_r[static_cast<std::size_t>(i)] ? v.rejected : v.accepted).push_back(i);
        return v;
    };
    SUBCASE("perfect filtering") {
        std::vector<bool> truth(50, false);
        std::vector<int> rejected;
        for (int i = 0; i < 25; ++i) {
            truth[static_cast<std::size_t>(i)] = true;
            rejected.push_back(i);
        }
        auto [ppr, bpr] = filter_metrics(make_verdict(50, rejected), truth);
        CHECK(*ppr == doctest::Approx(1.0));
        CHECK(*bpr == doctest::Approx(1.0));
    }
    SUBCASE("nothing rejected with poison present") {
        std::vector<bool> truth(10, false);
        truth[0] = truth[1] = true;
        auto [ppr, bpr] = filter_metrics(make_verdict(10, {}), truth);
        CHECK_FALSE(ppr.has_value());
        CHECK(*bpr == doctest::Approx(0.8));
    }
    SUBCASE("one benign among five rejections") {
        std::vector<bool> truth(10, false);
        for (int i = 0; i < 4; ++i) truth[static_cast<std::size_t>(i)] = true;
        auto [ppr, bpr] = filter_metrics(make_verdict(10, {0, 1, 2, 3, 4}), truth);
        CHECK(*ppr == doctest::Approx(0.8));
        CHECK(*bpr == doctest::Approx(1.0));
    }
}

TEST_CASE("a single-client round under mode none applies that update") {
    ExperimentConfig cfg = small_scenario(7);
    cfg.federation.n_clients = 1;
    cfg.federation.pmr = 0.0;
    cfg.clients_per_round = 1;
    cfg.rounds = 1;
    cfg.attack_start_round = 99;
    cfg.defense.mode = DefenseMode::none;
    std::vector<RoundReport> reports = run_experiment(cfg);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].accepted_count == 1);
    CHECK(reports[0].rejected_count == 0);

    // Rebuild the round by hand.
    Federation fed = make_federation(cfg.federation);
    ModelParams global = init_model({8, 16, 16, 5}, derive_seed(cfg.seed, 0x696e6974ULL));
    ModelParams local = train_local(global, fed.clients[0], cfg.benign_train,
                                    derive_seed(cfg.seed, 0x747261696eULL, 0, 0));
    std::vector<Sample> benign = benign_testset(cfg.eval_benign, fed.mixture,
                                                derive_seed(cfg.seed, 0x6576616c62ULL));
    std::vector<Sample> trig = trigger_testset(cfg.triggers[0], cfg.eval_trigger, fed.mixture,
                                               derive_seed(cfg.seed, 0x6576616c74ULL, 0));
    auto [ma, ba] = evaluate(local, benign, trig, cfg.triggers[0].target_class);
    CHECK(reports[0].ma == doctest::Approx(ma));
    CHECK(reports[0].ba == doctest::Approx(ba));
}

TEST_CASE("identical config and seed give byte-identical JSONL") {
    ExperimentConfig cfg = small_scenario(11);
    std::ostringstream a, b;
    run_experiment(cfg, &a);
    run_experiment(cfg, &b);
    CHECK(a.str() == b.str());
    CHECK_FALSE(a.str().empty());

    ExperimentConfig other = small_scenario(12);
    std::ostringstream c;
    run_experiment(other, &c);
    CHECK(a.str() != c.str());
}

TEST_CASE("accepted and rejected counts always partition the round") {
    ExperimentConfig cfg = small_scenario(13);
    cfg.clients_per_round = 9;
    std::vector<RoundReport> reports = run_experiment(cfg);
    for (const RoundReport& r : reports) {
        CHECK(r.accepted_count + r.rejected_count == 9);
        CHECK(r.ba >= 0.0);
        CHECK(r.ba <= 1.0);
        CHECK(r.ma >= 0.0);
        CHECK(r.ma <= 1.0);
    }
}

TEST_CASE("with no compromised clients the defense does not hurt training") {
    ExperimentConfig cfg = small_scenario(17);
    cfg.federation.pmr = 0.0;
    cfg.rounds = 6;
    cfg.attack_start_round = 99;

    cfg.defense.mode = DefenseMode::none;
    double ma_plain = run_experiment(cfg).back().ma;
    cfg.defense.mode = DefenseMode::deepsight;
    double ma_defended = run_experiment(cfg).back().ma;
    CHECK(ma_defended >= ma_plain - 0.02);
}

TEST_CASE("no-attack neutrality holds on the reference scenario") {
    ExperimentConfig cfg = reference_scenario(20220314);
    cfg.federation.pmr = 0.0;
    cfg.attack_start_round = cfg.rounds + 1;

    cfg.defense.mode = DefenseMode::none;
    double ma_plain = run_experiment(cfg).back().ma;
    cfg.defense.mode = DefenseMode::deepsight;
    double ma_defended = run_experiment(cfg).back().ma;
    CHECK(ma_defended >= ma_plain - 0.02);
}

TEST_CASE("config parsing builds a consistent experiment") {
    Config c = Config::from_string(
        "federation.n_clients = 24\n"
        "federation.pmr = 0.25\n"
        "federation.group_weights = 0.5, 0.5\n"
        "federation.group_skews = 3.0\n"
        "model.hidden_dims = 8, 8\n"
        "train.learning_rate = 0.05\n"
        "attack.strategy = noise_injection\n"
        "attack.noise_sigma = 0.25\n"
        "attack.complexity = 2\n"
        "defense.mode = clipping_only\n"
        "run.rounds = 3\n"
        "run.clients_per_round = 10\n"
        "run.seed = 9\n");
    ExperimentConfig cfg = experiment_from_config(c);
    CHECK(cfg.federation.n_clients == 24);
    CHECK(cfg.federation.groups.size() == 2);
    CHECK(cfg.federation.groups[1].skew == 3.0);
    CHECK(cfg.hidden_dims == std::vector<std::size_t>{8, 8});
    CHECK(cfg.benign_train.learning_rate == 0.05);
    CHECK(cfg.attack.strategy == AttackStrategy::noise_injection);
    CHECK(cfg.attack.noise_sigma == 0.25);
    CHECK(cfg.triggers.size() == 2);
    CHECK(cfg.triggers[0].target_class != cfg.triggers[1].target_class);
    CHECK(cfg.defense.mode == DefenseMode::clipping_only);
    CHECK(cfg.rounds == 3);
    CHECK(cfg.clients_per_round == 10);
    CHECK(cfg.seed == 9);

    CHECK_THROWS(Config::from_string("no equals sign here"));
    CHECK_THROWS(parse_defense_mode("bogus"));
    CHECK_THROWS(parse_attack_strategy("bogus"));
}

TEST_CASE("config errors surface before round zero") {
    ExperimentConfig cfg = small_scenario(19);
    cfg.clients_per_round = 99;  // > N
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
    cfg = small_scenario(19);
    cfg.rounds = 0;
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("gap bridging assigns ladder PDRs per subgroup") {
    ExperimentConfig cfg = small_scenario(23);
    cfg.federation.n_clients = 16;
    cfg.federation.pmr = 0.25;  // 4 compromised
    cfg.clients_per_round = 16;
    cfg.attack.strategy = AttackStrategy::gap_bridging;
    cfg.attack.gap_pdrs = {0.05, 0.2};
    cfg.rounds = 3;
    cfg.attack_start_round = 2;
    std::vector<RoundReport> reports = run_experiment(cfg);
    CHECK(reports.size() == 3);
}

TEST_CASE("split triggers hand each subgroup part of the composite pattern") {
    ExperimentConfig cfg = small_scenario(29);
    cfg.split_trigger = true;
    cfg.split_parts = 2;
    cfg.triggers[0].pattern = {{0, 0.9}, {1, 0.05}, {2, 0.9}, {3, 0.05}};
    std::vector<RoundReport> reports = run_experiment(cfg);
    CHECK(reports.size() == static_cast<std::size_t>(cfg.rounds));
}

TEST_CASE("threshold-factor sweep reports one row per factor") {
    ExperimentConfig cfg = small_scenario(31);
    std::vector<double> tfs{0.001, 0.01, 0.1};
    std::vector<TfSweepRow> rows = sweep_threshold_factors(cfg, tfs);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].tf == tfs[i]);
        CHECK(rows[i].boundary >= 0.0);
        CHECK(rows[i].mean_te_benign >= rows[i].mean_te_poisoned);
    }
    // Lowering the factor can only raise TE counts.
    CHECK(rows[0].mean_te_benign >= rows[2].mean_te_benign);
}

TEST_CASE("round reports serialize to single JSON lines with stable nulls") {
    RoundReport r;
    r.round = 3;
    r.ba = 0.25;
    r.ma = 0.75;
    r.bpr = 0.9;
    r.s_bound = 1.5;
    std::string line = round_report_json(r);
    CHECK(line.find("\"ppr\":null") != std::string::npos);
    CHECK(line.find("\"bpr\":0.9") != std::string::npos);
    CHECK(line.find('\n') == std::string::npos);

    std::ostringstream csv;
    write_summary_csv({r}, csv);
    CHECK(csv.str().find("3,0.25,0.75,,0.9,1.5") != std::string::npos);
}
