#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "deepsight/rng.hpp"

namespace deepsight {

struct Sample {
    std::vector<double> x;
    int y = 0;
    bool is_attack = false;
};

// One client's labeled data plus poisoning metadata.
struct ClientDataset {
    std::vector<Sample> samples;
    int group_id = 0;
    bool is_poisoned = false;
    double pdr = 0.0;       // realized attack fraction when is_poisoned
    bool compromised = false;  // adversary-controlled client (data may still be clean)
};

// Backdoor trigger: fixed values written into a subset of input coordinates,
// relabeled to the target class.
struct TriggerSpec {
    std::vector<std::pair<int, double>> pattern;  // (coordinate, value)
    int target_class = 0;
};

struct GroupSpec {
    double weight = 1.0;
    // Dirichlet concentration for the group's class proportions.
    // skew <= 0 means exactly uniform proportions.
    double skew = 1.0;
};

struct FederationSpec {
    int n_clients = 0;
    double pmr = 0.0;  // fraction of compromised clients, in [0, 0.5)
    std::vector<GroupSpec> groups;
    int samples_min = 100;
    int samples_max = 100;
    int input_dim = 16;
    int classes = 10;
    double class_std = 0.08;
    // Optional per-group offset of the shared class means; 0 keeps groups
    // distinguished by label proportions only.
    double group_mean_jitter = 0.0;
    std::uint64_t rng_seed = 1;
};

// Class-conditional Gaussian mixture: class c ~ class_probs, then
// x = mean[c] + class_std * N(0, I).
struct SampleDistribution {
    std::vector<std::vector<double>> class_means;
    std::vector<double> class_probs;
    double class_std = 0.08;

    Sample draw(SplitMix64& rng) const;
};

struct Federation {
    std::vector<ClientDataset> clients;
    std::vector<SampleDistribution> group_dists;
    SampleDistribution mixture;  // population mixture, for evaluation sets
};

// Build the synthetic federation: N clients assigned to groups by weight,
// each with its group's label distribution, floor(pmr * N) of them flagged
// compromised. Fully determined by spec.rng_seed.
Federation make_federation(const FederationSpec& spec);

// Replace a fraction of the samples with triggered copies labeled with the
// target class. Dataset size is preserved; at least one sample is poisoned.
ClientDataset poison(const ClientDataset& data, const TriggerSpec& trig, double pdr);

// Same, with the attack budget split round-robin across several triggers.
ClientDataset poison(const ClientDataset& data, const std::vector<TriggerSpec>& triggers,
                     double pdr);

// n inputs drawn from the base distribution with the trigger applied; every
// label is the trigger's target class.
std::vector<Sample> trigger_testset(const TriggerSpec& trig, int n,
                                    const SampleDistribution& base, std::uint64_t seed);

std::vector<Sample> benign_testset(int n, const SampleDistribution& base, std::uint64_t seed);

void apply_trigger(Sample& s, const TriggerSpec& trig);

// Columnar debug dump: header line, then one row per sample
// (x0..x{d-1}, label, attack flag).
void export_dataset_csv(const ClientDataset& data, std::ostream& out);

}  // namespace deepsight
