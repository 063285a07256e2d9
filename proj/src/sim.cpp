#include "deepsight/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "deepsight/rng.hpp"

namespace deepsight {

namespace {

// Stream tags for seed derivation.
constexpr std::uint64_t kInit = 0x696e6974ULL;
constexpr std::uint64_t kSample = 0x73616d706cULL;
constexpr std::uint64_t kTrain = 0x747261696eULL;
constexpr std::uint64_t kAdv = 0x616476ULL;
constexpr std::uint64_t kEvalBenign = 0x6576616c62ULL;
constexpr std::uint64_t kEvalTrigger = 0x6576616c74ULL;

}  // namespace

std::pair<double, double> evaluate(const ModelParams& model,
                                   const std::vector<Sample>& benign_test,
                                   const std::vector<Sample>& trigger_test, int target_class) {
    if (benign_test.empty() || trigger_test.empty())
        throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0;
    for (const Sample& s : benign_test)
        if (static_cast<int>(argmax(forward(model, s.x))) == s.y) ++correct;
    std::size_t hits = 0;
    for (const Sample& s : trigger_test)
        if (static_cast<int>(argmax(forward(model, s.x))) == target_class) ++hits;
    return {static_cast<double>(correct) / static_cast<double>(benign_test.size()),
            static_cast<double>(hits) / static_cast<double>(trigger_test.size())};
}

std::pair<std::optional<double>, std::optional<double>> filter_metrics(
    const FilterVerdict& verdict, const std::vector<bool>& truth) {
    if (verdict.accepted.size() + verdict.rejected.size() != truth.size())
        throw std::invalid_argument("filter_metrics: verdict/truth size mismatch");
    int tp = 0, fp = 0;  // rejected and poisoned / rejected but benign
    for (int i : verdict.rejected)
        truth[static_cast<std::size_t>(i)] ? ++tp : ++fp;
    int tn = 0, fn = 0;  // accepted and benign / accepted but poisoned
    for (int i : verdict.accepted)
        truth[static_cast<std::size_t>(i)] ? ++fn : ++tn;
    std::optional<double> ppr, bpr;
    if (tp + fp > 0) ppr = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tn + fn > 0) bpr = static_cast<double>(tn) / static_cast<double>(tn + fn);
    return {ppr, bpr};
}

std::string round_report_json(const RoundReport& r) {
    nlohmann::json j;
    j["round"] = r.round;
    j["ba"] = r.ba;
    j["ma"] = r.ma;
    if (r.ppr)
        j["ppr"] = *r.ppr;
    else
        j["ppr"] = nullptr;
    if (r.bpr)
        j["bpr"] = *r.bpr;
    else
        j["bpr"] = nullptr;
    j["s_bound"] = r.s_bound;
    j["accepted_count"] = r.accepted_count;
    j["rejected_count"] = r.rejected_count;
    j["n_clusters"] = r.n_clusters;
    j["boundary"] = r.boundary;
    j["accepted"] = r.accepted;
    j["rejected"] = r.rejected;
    j["labels"] = r.labels;
    j["cluster_labels"] = r.cluster_labels;
    j["te"] = r.te;
    return j.dump();
}

void write_summary_csv(const std::vector<RoundReport>& reports, std::ostream& out) {
    out << "round,ba,ma,ppr,bpr,s_bound,accepted,rejected,clusters,boundary\n";
    for (const RoundReport& r : reports) {
        out << r.round << ',' << r.ba << ',' << r.ma << ',';
        if (r.ppr) out << *r.ppr;
        out << ',';
        if (r.bpr) out << *r.bpr;
        out << ',' << r.s_bound << ',' << r.accepted_count << ',' << r.rejected_count << ','
            << r.n_clusters << ',' << r.boundary << '\n';
    }
}

namespace {

std::vector<int> sample_clients(int n_clients, int k, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n_clients));
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<TriggerSpec> client_triggers(const ExperimentConfig& cfg, std::size_t rank) {
    if (!cfg.split_trigger || cfg.triggers.size() != 1 || cfg.split_parts < 2)
        return cfg.triggers;
    // DBA-style: each compromised subgroup poisons with one contiguous chunk
    // of the composite pattern.
    const TriggerSpec& full = cfg.triggers.front();
    const std::size_t parts = static_cast<std::size_t>(cfg.split_parts);
    const std::size_t len = full.pattern.size();
    if (len < parts) return cfg.triggers;
    const std::size_t chunk = (len + parts - 1) / parts;
    const std::size_t part = rank % parts;
    TriggerSpec sub;
    sub.target_class = full.target_class;
    for (std::size_t i = part * chunk; i < std::min(len, (part + 1) * chunk); ++i)
        sub.pattern.push_back(full.pattern[i]);
    return {sub};
}

ClientDataset make_poisoned(const ExperimentConfig& cfg, const ClientDataset& data,
                            std::size_t rank, std::size_t n_compromised) {
    double pdr = cfg.attack.pdr;
    if (cfg.attack.strategy == AttackStrategy::gap_bridging && !cfg.attack.gap_pdrs.empty()) {
        std::size_t g = gap_subgroup(rank, n_compromised, cfg.attack.gap_pdrs.size());
        pdr = cfg.attack.gap_pdrs[std::min(g, cfg.attack.gap_pdrs.size() - 1)];
    }
    return poison(data, client_triggers(cfg, rank), pdr);
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.rounds < 1) throw std::invalid_argument("experiment: rounds must be >= 1");
    if (cfg.clients_per_round < 1 || cfg.clients_per_round > cfg.federation.n_clients)
        throw std::invalid_argument("experiment: clients_per_round must be in [1, N]");
    if (cfg.attack_start_round < 0)
        throw std::invalid_argument("experiment: attack_start_round must be >= 0");
    if (cfg.eval_benign < 1 || cfg.eval_trigger < 1)
        throw std::invalid_argument("experiment: eval set sizes must be >= 1");
}

}  // namespace

std::vector<RoundReport> run_experiment(const ExperimentConfig& cfg, std::ostream* jsonl) {
    validate(cfg);
    Federation fed = make_federation(cfg.federation);

    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(cfg.federation.input_dim));
    for (std::size_t h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(cfg.federation.classes));
    ModelParams global = init_model(dims, derive_seed(cfg.seed, kInit));

    const std::vector<Sample> benign_test =
        benign_testset(cfg.eval_benign, fed.mixture, derive_seed(cfg.seed, kEvalBenign));
    std::vector<std::vector<Sample>> trigger_tests;
    for (std::size_t t = 0; t < cfg.triggers.size(); ++t)
        trigger_tests.push_back(trigger_testset(cfg.triggers[t], cfg.eval_trigger, fed.mixture,
                                                derive_seed(cfg.seed, kEvalTrigger, t)));

    // Rank compromised clients by index; the rank drives gap-bridging PDRs
    // and split-trigger assignment.
    std::vector<std::size_t> rank_of(fed.clients.size(), 0);
    std::size_t n_compromised = 0;
    for (std::size_t c = 0; c < fed.clients.size(); ++c)
        if (fed.clients[c].compromised) rank_of[c] = n_compromised++;

    std::vector<std::optional<ClientDataset>> poisoned(fed.clients.size());

    if (!cfg.datasets_dir.empty()) {
        std::filesystem::create_directories(cfg.datasets_dir);
        for (std::size_t c = 0; c < fed.clients.size(); ++c) {
            std::ofstream out(cfg.datasets_dir + "/client_" + std::to_string(c) + ".csv");
            export_dataset_csv(fed.clients[c], out);
        }
    }
    std::ofstream features_out;
    if (!cfg.features_path.empty()) {
        features_out.open(cfg.features_path);
        if (!features_out)
            throw std::runtime_error("experiment: cannot open " + cfg.features_path);
    }
    if (!cfg.merged_matrix_dir.empty())
        std::filesystem::create_directories(cfg.merged_matrix_dir);

    DefenseConfig defense = cfg.defense;
    defense.keep_merged_matrix = defense.keep_merged_matrix || !cfg.merged_matrix_dir.empty();

    std::vector<RoundReport> reports;
    for (int t = 0; t < cfg.rounds; ++t) {
        const std::vector<int> selected =
            sample_clients(cfg.federation.n_clients, cfg.clients_per_round,
                           derive_seed(cfg.seed, kSample, static_cast<std::uint64_t>(t)));
        const bool attack_active =
            t >= cfg.attack_start_round && n_compromised > 0 && !cfg.triggers.empty();

        // Benign clients train first; the adversary, who watches the round,
        // needs their norms (median cap) and their mean model (DDif target).
        std::vector<ModelParams> locals(selected.size());
        std::vector<std::size_t> adv_positions;
        std::vector<ParamUpdate> benign_updates;
        std::vector<double> benign_norms;
        for (std::size_t pos = 0; pos < selected.size(); ++pos) {
            const int c = selected[pos];
            const ClientDataset& data = fed.clients[static_cast<std::size_t>(c)];
            if (data.compromised && attack_active) {
                adv_positions.push_back(pos);
                continue;
            }
            locals[pos] = train_local(global, data, cfg.benign_train,
                                      derive_seed(cfg.seed, kTrain, static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(c)));
            benign_updates.push_back(diff(locals[pos], global));
            benign_norms.push_back(benign_updates.back().l2);
        }

        AttackConfig attack = cfg.attack;
        switch (cfg.norm_cap_mode) {
            case NormCapMode::median_benign:
                if (!benign_norms.empty()) attack.norm_cap = median(benign_norms);
                break;
            case NormCapMode::fixed:
                break;  // keep the configured cap
            case NormCapMode::unbounded:
                attack.norm_cap.reset();
                break;
        }

        ModelParams ddif_reference = global;
        if (!adv_positions.empty() && cfg.attack.strategy == AttackStrategy::ddif_evasion &&
            !benign_updates.empty())
            ddif_reference = fedavg(global, benign_updates);

        for (std::size_t pos : adv_positions) {
            const int c = selected[pos];
            const std::size_t uc = static_cast<std::size_t>(c);
            if (!poisoned[uc])
                poisoned[uc] = make_poisoned(cfg, fed.clients[uc], rank_of[uc], n_compromised);
            ParamUpdate u = adversarial_round(
                global, *poisoned[uc], attack, cfg.federation,
                derive_seed(cfg.seed, kAdv, static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(c)),
                &ddif_reference);
            locals[pos] = apply_scaled(global, u, 1.0);
        }

        AggregationResult agg =
            deepsight_aggregate(global, locals, defense, t == cfg.rounds - 1);

        double ma = 0.0, ba = 0.0;
        if (trigger_tests.empty()) {
            std::size_t correct = 0;
            for (const Sample& s : benign_test)
                if (static_cast<int>(argmax(forward(agg.global, s.x))) == s.y) ++correct;
            ma = static_cast<double>(correct) / static_cast<double>(benign_test.size());
        } else {
            double ba_sum = 0.0;
            for (std::size_t k = 0; k < trigger_tests.size(); ++k) {
                auto [m, b] = evaluate(agg.global, benign_test, trigger_tests[k],
                                       cfg.triggers[k].target_class);
                ma = m;
                ba_sum += b;
            }
            ba = ba_sum / static_cast<double>(trigger_tests.size());
        }

        std::vector<bool> truth(selected.size(), false);
        for (std::size_t pos = 0; pos < selected.size(); ++pos)
            truth[pos] =
                attack_active && fed.clients[static_cast<std::size_t>(selected[pos])].compromised;
        auto [ppr, bpr] = filter_metrics(agg.verdict, truth);

        RoundReport r;
        r.round = t;
        r.ba = ba;
        r.ma = ma;
        r.ppr = ppr;
        r.bpr = bpr;
        r.s_bound = agg.s_bound;
        r.accepted_count = static_cast<int>(agg.verdict.accepted.size());
        r.rejected_count = static_cast<int>(agg.verdict.rejected.size());
        r.n_clusters = agg.verdict.clusters.n_clusters;
        r.boundary = agg.verdict.boundary;
        r.accepted = agg.verdict.accepted;
        r.rejected = agg.verdict.rejected;
        r.labels = agg.verdict.labels;
        r.cluster_labels = agg.verdict.clusters.labels;
        r.te = agg.verdict.te;
        reports.push_back(r);

        if (jsonl) {
            *jsonl << round_report_json(r) << '\n';
            jsonl->flush();
        }
        if (features_out.is_open())
            for (std::size_t i = 0; i < agg.features.size(); ++i)
                features_out << feature_bundle_json(agg.features[i], t, selected[i]) << '\n';
        if (!cfg.merged_matrix_dir.empty() && agg.merged_distances) {
            std::ofstream mout(cfg.merged_matrix_dir + "/round_" + std::to_string(t) + ".csv");
            const DistanceMatrix& m = *agg.merged_distances;
            for (std::size_t i = 0; i < m.n; ++i) {
                for (std::size_t j = 0; j < m.n; ++j)
                    mout << m.at(i, j) << (j + 1 < m.n ? ',' : '\n');
            }
        }

        global = agg.global;
    }

    if (!cfg.save_model_path.empty()) save_model(global, cfg.save_model_path);
    return reports;
}

std::vector<TfSweepRow> sweep_threshold_factors(const ExperimentConfig& cfg,
                                                const std::vector<double>& factors) {
    validate(cfg);
    if (factors.empty()) throw std::invalid_argument("sweep: no threshold factors given");
    Federation fed = make_federation(cfg.federation);

    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(cfg.federation.input_dim));
    for (std::size_t h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(cfg.federation.classes));
    ModelParams global = init_model(dims, derive_seed(cfg.seed, kInit));

    std::vector<std::size_t> rank_of(fed.clients.size(), 0);
    std::size_t n_compromised = 0;
    for (std::size_t c = 0; c < fed.clients.size(); ++c)
        if (fed.clients[c].compromised) rank_of[c] = n_compromised++;

    // Warm up benignly to the first attack round with plain FedAvg.
    for (int t = 0; t < cfg.attack_start_round; ++t) {
        const std::vector<int> selected =
            sample_clients(cfg.federation.n_clients, cfg.clients_per_round,
                           derive_seed(cfg.seed, kSample, static_cast<std::uint64_t>(t)));
        std::vector<ParamUpdate> updates;
        for (int c : selected) {
            ModelParams m = train_local(global, fed.clients[static_cast<std::size_t>(c)],
                                        cfg.benign_train,
                                        derive_seed(cfg.seed, kTrain,
                                                    static_cast<std::uint64_t>(t),
                                                    static_cast<std::uint64_t>(c)));
            updates.push_back(diff(m, global));
        }
        global = fedavg(global, updates);
    }

    // One attack round, scored under each factor.
    const int t = cfg.attack_start_round;
    const std::vector<int> selected =
        sample_clients(cfg.federation.n_clients, cfg.clients_per_round,
                       derive_seed(cfg.seed, kSample, static_cast<std::uint64_t>(t)));
    std::vector<std::vector<double>> neup_vectors(selected.size());
    std::vector<bool> truth(selected.size(), false);
    std::vector<double> benign_norms;
    std::vector<std::size_t> adv_positions;
    for (std::size_t pos = 0; pos < selected.size(); ++pos) {
        const int c = selected[pos];
        const ClientDataset& data = fed.clients[static_cast<std::size_t>(c)];
        if (data.compromised && n_compromised > 0 && !cfg.triggers.empty()) {
            adv_positions.push_back(pos);
            truth[pos] = true;
            continue;
        }
        ModelParams m = train_local(global, data, cfg.benign_train,
                                    derive_seed(cfg.seed, kTrain, static_cast<std::uint64_t>(t),
                                                static_cast<std::uint64_t>(c)));
        neup_vectors[pos] = neups(update_energy(global, m));
        benign_norms.push_back(diff(m, global).l2);
    }
    AttackConfig attack = cfg.attack;
    if (cfg.norm_cap_mode == NormCapMode::median_benign && !benign_norms.empty())
        attack.norm_cap = median(benign_norms);
    else if (cfg.norm_cap_mode == NormCapMode::unbounded)
        attack.norm_cap.reset();
    for (std::size_t pos : adv_positions) {
        const int c = selected[pos];
        const std::size_t uc = static_cast<std::size_t>(c);
        ClientDataset pd = make_poisoned(cfg, fed.clients[uc], rank_of[uc], n_compromised);
        ParamUpdate u = adversarial_round(global, pd, attack, cfg.federation,
                                          derive_seed(cfg.seed, kAdv,
                                                      static_cast<std::uint64_t>(t),
                                                      static_cast<std::uint64_t>(c)));
        neup_vectors[pos] = neups(update_energy(global, apply_scaled(global, u, 1.0)));
    }

    std::size_t n_poisoned = adv_positions.size();
    std::size_t n_benign = selected.size() - n_poisoned;
    std::vector<TfSweepRow> rows;
    for (double tf : factors) {
        TfSweepRow row;
        row.tf = tf;
        std::vector<int> te(selected.size());
        for (std::size_t i = 0; i < selected.size(); ++i)
            te[i] = threshold_exceedings(neup_vectors[i], tf);
        auto [labels, boundary] = classify(te);
        row.boundary = boundary;
        int flagged_poisoned = 0, flagged_benign = 0;
        double te_benign = 0.0, te_poisoned = 0.0;
        for (std::size_t i = 0; i < selected.size(); ++i) {
            if (truth[i]) {
                te_poisoned += te[i];
                if (labels[i]) ++flagged_poisoned;
            } else {
                te_benign += te[i];
                if (labels[i]) ++flagged_benign;
            }
        }
        row.mean_te_benign = n_benign ? te_benign / static_cast<double>(n_benign) : 0.0;
        row.mean_te_poisoned = n_poisoned ? te_poisoned / static_cast<double>(n_poisoned) : 0.0;
        row.tpr = n_poisoned ? static_cast<double>(flagged_poisoned) /
                                   static_cast<double>(n_poisoned)
                             : 0.0;
        row.fpr = n_benign ? static_cast<double>(flagged_benign) /
                                 static_cast<double>(n_benign)
                           : 0.0;
        rows.push_back(row);
    }
    return rows;
}

ExperimentConfig reference_scenario(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.federation.n_clients = 60;
    cfg.federation.pmr = 0.25;
    cfg.federation.groups = {{0.4, 5.0}, {0.3, 5.0}, {0.3, 5.0}};
    cfg.federation.samples_min = 250;
    cfg.federation.samples_max = 350;
    cfg.federation.input_dim = 16;
    cfg.federation.classes = 10;
    cfg.federation.class_std = 0.08;
    cfg.federation.rng_seed = derive_seed(seed, 0x666564ULL);

    cfg.hidden_dims = {32, 32};

    cfg.benign_train.learning_rate = 0.2;
    cfg.benign_train.epochs = 2;
    cfg.benign_train.batch_size = 32;

    cfg.attack.strategy = AttackStrategy::constrain_and_scale;
    cfg.attack.pdr = 0.5;
    cfg.attack.alpha = 0.7;
    cfg.attack.adv_learning_rate = 0.1;
    cfg.attack.adv_epochs = 1;
    cfg.attack.adv_batch_size = 32;
    cfg.norm_cap_mode = NormCapMode::median_benign;

    // Out-of-range patch on the negative side: free of natural collisions
    // with the target class, and deep enough that a well-trained backdoor
    // survives pure clipping while a weakly-trained one decays.
    TriggerSpec trig;
    trig.pattern = {{0, -1.15}, {1, -1.15}, {2, -1.15}, {3, -1.15}};
    trig.target_class = 7;
    cfg.triggers = {trig};

    cfg.defense.mode = DefenseMode::deepsight;
    cfg.defense.ddif_samples = 1500;
    cfg.defense.ddif_seeds = {101, 202, 303};

    cfg.rounds = 15;
    cfg.clients_per_round = 60;
    cfg.attack_start_round = 5;
    cfg.eval_benign = 2000;
    cfg.eval_trigger = 1000;
    cfg.seed = seed;
    return cfg;
}

DefenseMode parse_defense_mode(const std::string& s) {
    if (s == "deepsight") return DefenseMode::deepsight;
    if (s == "filtering_only") return DefenseMode::filtering_only;
    if (s == "clipping_only") return DefenseMode::clipping_only;
    if (s == "none") return DefenseMode::none;
    throw std::invalid_argument("unknown defense mode: " + s);
}

AttackStrategy parse_attack_strategy(const std::string& s) {
    if (s == "data_poison_only") return AttackStrategy::data_poison_only;
    if (s == "constrain_and_scale") return AttackStrategy::constrain_and_scale;
    if (s == "freeze_output") return AttackStrategy::freeze_output;
    if (s == "noise_injection") return AttackStrategy::noise_injection;
    if (s == "gap_bridging") return AttackStrategy::gap_bridging;
    if (s == "ddif_evasion") return AttackStrategy::ddif_evasion;
    throw std::invalid_argument("unknown attack strategy: " + s);
}

ExperimentConfig experiment_from_config(const Config& c) {
    ExperimentConfig cfg = reference_scenario(c.get_u64("run.seed", 1));

    cfg.federation.n_clients = c.get_int("federation.n_clients", cfg.federation.n_clients);
    cfg.federation.pmr = c.get_double("federation.pmr", cfg.federation.pmr);
    {
        std::vector<double> w, s;
        for (const GroupSpec& g : cfg.federation.groups) {
            w.push_back(g.weight);
            s.push_back(g.skew);
        }
        w = c.get_doubles("federation.group_weights", w);
        s = c.get_doubles("federation.group_skews", s);
        if (s.size() == 1 && w.size() > 1) s.assign(w.size(), s[0]);
        if (w.size() != s.size())
            throw std::runtime_error("config: group_weights and group_skews sizes differ");
        cfg.federation.groups.clear();
        for (std::size_t i = 0; i < w.size(); ++i)
            cfg.federation.groups.push_back({w[i], s[i]});
    }
    cfg.federation.samples_min = c.get_int("federation.samples_min", cfg.federation.samples_min);
    cfg.federation.samples_max = c.get_int("federation.samples_max", cfg.federation.samples_max);
    cfg.federation.input_dim = c.get_int("federation.input_dim", cfg.federation.input_dim);
    cfg.federation.classes = c.get_int("federation.classes", cfg.federation.classes);
    cfg.federation.class_std = c.get_double("federation.class_std", cfg.federation.class_std);
    cfg.federation.group_mean_jitter =
        c.get_double("federation.group_mean_jitter", cfg.federation.group_mean_jitter);

    {
        std::vector<int> hidden;
        for (std::size_t h : cfg.hidden_dims) hidden.push_back(static_cast<int>(h));
        hidden = c.get_ints("model.hidden_dims", hidden);
        cfg.hidden_dims.clear();
        for (int h : hidden) cfg.hidden_dims.push_back(static_cast<std::size_t>(h));
    }

    cfg.benign_train.learning_rate =
        c.get_double("train.learning_rate", cfg.benign_train.learning_rate);
    cfg.benign_train.epochs = c.get_int("train.epochs", cfg.benign_train.epochs);
    cfg.benign_train.batch_size = c.get_int("train.batch_size", cfg.benign_train.batch_size);

    cfg.attack.strategy =
        parse_attack_strategy(c.get_string("attack.strategy", "constrain_and_scale"));
    cfg.attack.pdr = c.get_double("attack.pdr", cfg.attack.pdr);
    cfg.attack.alpha = c.get_double("attack.alpha", cfg.attack.alpha);
    cfg.attack.adv_learning_rate =
        c.get_double("attack.learning_rate", cfg.attack.adv_learning_rate);
    cfg.attack.adv_epochs = c.get_int("attack.epochs", cfg.attack.adv_epochs);
    cfg.attack.adv_batch_size = c.get_int("attack.batch_size", cfg.attack.adv_batch_size);
    cfg.attack.noise_sigma = c.get_double("attack.noise_sigma", cfg.attack.noise_sigma);
    cfg.attack.gap_pdrs = c.get_doubles("attack.gap_pdrs", cfg.attack.gap_pdrs);
    cfg.attack.ddif_samples = c.get_int("attack.ddif_samples", cfg.attack.ddif_samples);
    {
        std::string mode = c.get_string("attack.norm_cap_mode", "median_benign");
        if (mode == "median_benign")
            cfg.norm_cap_mode = NormCapMode::median_benign;
        else if (mode == "fixed")
            cfg.norm_cap_mode = NormCapMode::fixed;
        else if (mode == "none")
            cfg.norm_cap_mode = NormCapMode::unbounded;
        else
            throw std::runtime_error("config: unknown attack.norm_cap_mode: " + mode);
        if (c.has("attack.norm_cap")) cfg.attack.norm_cap = c.get_double("attack.norm_cap", 1.0);
    }

    // Triggers: a base pattern, replicated with shifted coordinates and
    // distinct targets when attack.complexity > 1.
    {
        std::vector<int> coords{0, 1, 2, 3};
        std::vector<double> values{0.9, 0.05, 0.9, 0.05};
        if (!cfg.triggers.empty()) {
            coords.clear();
            values.clear();
            for (const auto& [coord, value] : cfg.triggers.front().pattern) {
                coords.push_back(coord);
                values.push_back(value);
            }
        }
        coords = c.get_ints("attack.trigger_coords", coords);
        if (c.has("attack.trigger_value"))
            values.assign(coords.size(), c.get_double("attack.trigger_value", 0.9));
        while (values.size() < coords.size()) values.push_back(values.back());
        int target = c.get_int("attack.target_class",
                               cfg.triggers.empty() ? 0 : cfg.triggers.front().target_class);
        int complexity = c.get_int("attack.complexity", 1);
        if (complexity < 1) throw std::runtime_error("config: attack.complexity must be >= 1");
        cfg.triggers.clear();
        const int in_dim = cfg.federation.input_dim;
        const int classes = cfg.federation.classes;
        for (int k = 0; k < complexity; ++k) {
            TriggerSpec trig;
            trig.target_class = (target + k) % classes;
            for (std::size_t i = 0; i < coords.size(); ++i)
                trig.pattern.push_back(
                    {(coords[i] + k * static_cast<int>(coords.size())) % in_dim, values[i]});
            cfg.triggers.push_back(trig);
        }
    }
    cfg.split_trigger = c.get_bool("attack.split_trigger", cfg.split_trigger);
    cfg.split_parts = c.get_int("attack.split_parts", cfg.split_parts);

    cfg.defense.mode = parse_defense_mode(c.get_string("defense.mode", "deepsight"));
    cfg.defense.tau = c.get_double("defense.tau", cfg.defense.tau);
    if (c.has("defense.tf_override"))
        cfg.defense.tf_override = c.get_double("defense.tf_override", 0.01);
    cfg.defense.final_round_clusterwise =
        c.get_bool("defense.final_round_clusterwise", cfg.defense.final_round_clusterwise);
    cfg.defense.ddif_samples = c.get_int("defense.ddif_samples", cfg.defense.ddif_samples);
    {
        std::vector<int> seeds;
        for (std::uint64_t s : cfg.defense.ddif_seeds) seeds.push_back(static_cast<int>(s));
        seeds = c.get_ints("defense.ddif_seeds", seeds);
        if (seeds.size() != 3) throw std::runtime_error("config: defense.ddif_seeds needs 3 values");
        for (std::size_t i = 0; i < 3; ++i)
            cfg.defense.ddif_seeds[i] = static_cast<std::uint64_t>(seeds[i]);
    }
    cfg.defense.min_cluster_size =
        c.get_int("defense.min_cluster_size", cfg.defense.min_cluster_size);
    cfg.defense.min_samples = c.get_int("defense.min_samples", cfg.defense.min_samples);
    cfg.defense.cosine_full_update =
        c.get_bool("defense.cosine_full_update", cfg.defense.cosine_full_update);

    cfg.rounds = c.get_int("run.rounds", cfg.rounds);
    cfg.clients_per_round = c.get_int("run.clients_per_round", cfg.clients_per_round);
    cfg.attack_start_round = c.get_int("run.attack_start_round", cfg.attack_start_round);
    cfg.eval_benign = c.get_int("run.eval_benign", cfg.eval_benign);
    cfg.eval_trigger = c.get_int("run.eval_trigger", cfg.eval_trigger);
    cfg.seed = c.get_u64("run.seed", cfg.seed);
    cfg.federation.rng_seed = derive_seed(cfg.seed, 0x666564ULL);

    return cfg;
}

}  // namespace deepsight
