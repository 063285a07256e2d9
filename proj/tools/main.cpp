#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "deepsight/config.hpp"
#include "deepsight/properties.hpp"
#include "deepsight/sim.hpp"

namespace {

deepsight::Config load_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
    deepsight::Config cfg = deepsight::Config::from_file(path);
    for (const std::string& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated-learning backdoor simulation with deep-inspection filtering"};
    app.require_subcommand(1);

    std::string config_path, out_path, mode = "deepsight";
    std::uint64_t seed = 1;
    std::vector<std::string> overrides;

    // run: one experiment, JSONL per round plus a summary CSV.
    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--seed", seed, "root RNG seed")->required();
    run->add_option("--out", out_path, "output JSONL path (summary CSV written alongside)")
        ->required();
    run->add_option("--mode", mode, "defense mode: deepsight|filtering_only|clipping_only|none")
        ->required();
    run->add_option("--set", overrides, "override a config key, key=value (repeatable)");
    std::string save_model_path, features_path, merged_dir, datasets_dir;
    run->add_option("--save-model", save_model_path, "write the final global model snapshot");
    run->add_option("--dump-features", features_path, "write per-client feature JSONL");
    run->add_option("--dump-merged", merged_dir, "write merged distance matrices (CSV per round)");
    run->add_option("--dump-datasets", datasets_dir, "export client datasets as CSV");

    // ablate: defense modes x backdoor complexities x PDRs, one CSV row each.
    auto* ablate = app.add_subcommand("ablate", "Sweep defense modes and attack settings");
    ablate->add_option("--config", config_path, "experiment config file")->required();
    ablate->add_option("--seed", seed, "root RNG seed")->required();
    ablate->add_option("--out", out_path, "output CSV path")->required();
    std::vector<std::string> modes{"none", "clipping_only", "filtering_only", "deepsight"};
    std::vector<int> complexities{1};
    std::vector<double> pdrs;
    ablate->add_option("--modes", modes, "defense modes to sweep");
    ablate->add_option("--complexities", complexities, "backdoor complexities (trigger counts)");
    ablate->add_option("--pdrs", pdrs, "PDR values to sweep (default: configured PDR)");
    ablate->add_option("--set", overrides, "override a config key, key=value (repeatable)");

    // sweep-tf: threshold-factor sweep on the first attack round.
    auto* sweep = app.add_subcommand("sweep-tf", "Threshold-factor sweep");
    sweep->add_option("--config", config_path, "experiment config file")->required();
    sweep->add_option("--seed", seed, "root RNG seed")->required();
    sweep->add_option("--out", out_path, "output CSV path")->required();
    std::vector<double> tfs{0.001, 0.005, 0.01, 0.02, 0.05, 0.1};
    sweep->add_option("--tfs", tfs, "threshold factors to score");
    sweep->add_option("--set", overrides, "override a config key, key=value (repeatable)");

    // prove: randomized invariant suites; nonzero exit on any failure.
    auto* prove = app.add_subcommand("prove", "Run the scale-invariance property suites");
    int trials = 1000;
    std::uint64_t prove_seed = 2024;
    prove->add_option("--trials", trials, "trials per suite");
    prove->add_option("--seed", prove_seed, "suite RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            deepsight::Config file_cfg = load_config(config_path, overrides);
            deepsight::ExperimentConfig cfg = deepsight::experiment_from_config(file_cfg);
            cfg.seed = seed;
            cfg.federation.rng_seed = deepsight::derive_seed(seed, 0x666564ULL);
            cfg.defense.mode = deepsight::parse_defense_mode(mode);
            cfg.save_model_path = save_model_path;
            cfg.features_path = features_path;
            cfg.merged_matrix_dir = merged_dir;
            cfg.datasets_dir = datasets_dir;

            std::ofstream jsonl = open_out(out_path);
            std::vector<deepsight::RoundReport> reports = deepsight::run_experiment(cfg, &jsonl);
            std::ofstream csv = open_out(out_path + ".summary.csv");
            deepsight::write_summary_csv(reports, csv);
            const deepsight::RoundReport& last = reports.back();
            std::cout << "final round " << last.round << ": ba=" << last.ba << " ma=" << last.ma
                      << " accepted=" << last.accepted_count
                      << " rejected=" << last.rejected_count << "\n";
        } else if (*ablate) {
            deepsight::Config file_cfg = load_config(config_path, overrides);
            std::ofstream csv = open_out(out_path);
            csv << "mode,complexity,pdr,final_ba,final_ma\n";
            deepsight::ExperimentConfig base = deepsight::experiment_from_config(file_cfg);
            if (pdrs.empty()) pdrs = {base.attack.pdr};
            for (const std::string& m : modes) {
                for (int complexity : complexities) {
                    for (double pdr : pdrs) {
                        deepsight::Config c = file_cfg;
                        c.set("attack.complexity", std::to_string(complexity));
                        c.set("attack.pdr", std::to_string(pdr));
                        deepsight::ExperimentConfig cfg = deepsight::experiment_from_config(c);
                        cfg.seed = seed;
                        cfg.federation.rng_seed = deepsight::derive_seed(seed, 0x666564ULL);
                        cfg.defense.mode = deepsight::parse_defense_mode(m);
                        std::vector<deepsight::RoundReport> reports =
                            deepsight::run_experiment(cfg);
                        csv << m << ',' << complexity << ',' << pdr << ','
                            << reports.back().ba << ',' << reports.back().ma << '\n';
                        csv.flush();
                        std::cout << m << " complexity=" << complexity << " pdr=" << pdr
                                  << " ba=" << reports.back().ba << " ma=" << reports.back().ma
                                  << "\n";
                    }
                }
            }
        } else if (*sweep) {
            deepsight::Config file_cfg = load_config(config_path, overrides);
            deepsight::ExperimentConfig cfg = deepsight::experiment_from_config(file_cfg);
            cfg.seed = seed;
            cfg.federation.rng_seed = deepsight::derive_seed(seed, 0x666564ULL);
            std::vector<deepsight::TfSweepRow> rows =
                deepsight::sweep_threshold_factors(cfg, tfs);
            std::ofstream csv = open_out(out_path);
            csv << "tf,mean_te_benign,mean_te_poisoned,boundary,tpr,fpr\n";
            for (const deepsight::TfSweepRow& r : rows)
                csv << r.tf << ',' << r.mean_te_benign << ',' << r.mean_te_poisoned << ','
                    << r.boundary << ',' << r.tpr << ',' << r.fpr << '\n';
            std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
        } else if (*prove) {
            int failures = 0;
            failures += deepsight::check_neup_scale_invariance(prove_seed, trials, &std::cerr);
            std::cout << "neup scale invariance: "
                      << (failures == 0 ? "pass" : "FAIL") << "\n";
            int f2 = deepsight::check_te_scale_invariance(prove_seed, trials, &std::cerr);
            std::cout << "te scale invariance: " << (f2 == 0 ? "pass" : "FAIL") << "\n";
            int f3 = deepsight::check_cosine_scale_stability(prove_seed, trials, &std::cerr);
            std::cout << "cosine scale stability: " << (f3 == 0 ? "pass" : "FAIL") << "\n";
            int f4 = deepsight::check_tf_monotonicity(prove_seed, trials / 10 + 1, &std::cerr);
            std::cout << "threshold-factor monotonicity: " << (f4 == 0 ? "pass" : "FAIL") << "\n";
            failures += f2 + f3 + f4;
            if (failures > 0) {
                std::cerr << failures << " property failures\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
