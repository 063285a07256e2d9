#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deepsight/attack.hpp"
#include "deepsight/config.hpp"
#include "deepsight/data.hpp"
#include "deepsight/defense.hpp"
#include "deepsight/model.hpp"
#include "deepsight/train.hpp"

namespace deepsight {

// How the adversary chooses the L2 cap S fed into the scaling factor.
enum class NormCapMode {
    median_benign,  // median of the current round's benign update norms
    fixed,          // attack.norm_cap as configured
    unbounded       // no cap; the factor is limited by N/n alone
};

struct ExperimentConfig {
    FederationSpec federation;
    std::vector<std::size_t> hidden_dims{32, 32};
    TrainConfig benign_train;
    AttackConfig attack;
    NormCapMode norm_cap_mode = NormCapMode::median_benign;
    std::vector<TriggerSpec> triggers;  // backdoor complexity = number of triggers
    // Split one composite trigger across compromised subgroups; the full
    // pattern is only ever assembled at evaluation time.
    bool split_trigger = false;
    int split_parts = 2;
    DefenseConfig defense;
    int rounds = 15;
    int clients_per_round = 60;
    int attack_start_round = 5;  // rounds before this train benignly everywhere
    int eval_benign = 2000;
    int eval_trigger = 1000;
    std::uint64_t seed = 1;
    // Optional debug sinks (empty = off).
    std::string features_path;
    std::string merged_matrix_dir;
    std::string datasets_dir;
    std::string save_model_path;
};

struct RoundReport {
    int round = 0;
    double ba = 0.0;
    double ma = 0.0;
    std::optional<double> ppr;
    std::optional<double> bpr;
    double s_bound = 0.0;
    int accepted_count = 0;
    int rejected_count = 0;
    int n_clusters = 0;
    double boundary = 0.0;
    std::vector<int> accepted;
    std::vector<int> rejected;
    std::vector<bool> labels;
    std::vector<int> cluster_labels;
    std::vector<int> te;
};

// MA on the benign test set and BA on the trigger test set (fraction
// predicted as the trigger's target class).
std::pair<double, double> evaluate(const ModelParams& model,
                                   const std::vector<Sample>& benign_test,
                                   const std::vector<Sample>& trigger_test, int target_class);

// Precision of the rejected set / negative predictive value of the accepted
// set against ground truth; null when the respective set is empty.
std::pair<std::optional<double>, std::optional<double>> filter_metrics(
    const FilterVerdict& verdict, const std::vector<bool>& truth);

// Full multi-round federated loop. One JSONL line per round is flushed to
// *jsonl as it completes, so a failed round still leaves a partial report.
std::vector<RoundReport> run_experiment(const ExperimentConfig& cfg,
                                        std::ostream* jsonl = nullptr);

std::string round_report_json(const RoundReport& r);
void write_summary_csv(const std::vector<RoundReport>& reports, std::ostream& out);

// The desk-scale reference scenario: 3-group federation, N = 60 clients all
// sampled each round, 10 classes, PMR 25%, PDR 50%, constrain-and-scale with
// S at the benign median, 10 attack rounds after 5 benign ones.
ExperimentConfig reference_scenario(std::uint64_t seed);

// Threshold-factor sweep: trains up to the first attack round, then rescores
// that round's NEUP vectors under each candidate factor.
struct TfSweepRow {
    double tf = 0.0;
    double mean_te_benign = 0.0;
    double mean_te_poisoned = 0.0;
    double boundary = 0.0;
    double tpr = 0.0;  // flagged poisoned / poisoned
    double fpr = 0.0;  // flagged benign / benign
};
std::vector<TfSweepRow> sweep_threshold_factors(const ExperimentConfig& cfg,
                                                const std::vector<double>& factors);

// Build an ExperimentConfig from a parsed key-value config.
ExperimentConfig experiment_from_config(const Config& cfg);

DefenseMode parse_defense_mode(const std::string& s);
AttackStrategy parse_attack_strategy(const std::string& s);

}  // namespace deepsight
