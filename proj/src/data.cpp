#include "deepsight/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace deepsight {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Dirichlet(alpha, ..., alpha) via normalized Gamma(alpha) draws
// (Marsaglia-Tsang, boosted for alpha < 1).
std::vector<double> dirichlet_uniform_alpha(int k, double alpha, SplitMix64& rng) {
    std::vector<double> g(k);
    auto gamma_draw = [&rng](double a) {
        double boost = 1.0;
        if (a < 1.0) {
            double u = 1.0 - rng.next_double();
            boost = std::pow(u, 1.0 / a);
            a += 1.0;
        }
        double d = a - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = rng.next_normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = 1.0 - rng.next_double();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
                return boost * d * v;
        }
    };
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        g[i] = gamma_draw(alpha);
        sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
}

int draw_categorical(const std::vector<double>& probs, SplitMix64& rng) {
    double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Sample SampleDistribution::draw(SplitMix64& rng) const {
    Sample s;
    s.y = draw_categorical(class_probs, rng);
    const std::vector<double>& mean = class_means[static_cast<std::size_t>(s.y)];
    s.x.resize(mean.size());
    for (std::size_t j = 0; j < mean.size(); ++j)
        s.x[j] = mean[j] + class_std * rng.next_normal();
    return s;
}

Federation make_federation(const FederationSpec& spec) {
    require(spec.n_clients >= 1, "federation: n_clients must be >= 1");
    require(spec.pmr >= 0.0 && spec.pmr < 0.5, "federation: pmr must be in [0, 0.5)");
    require(!spec.groups.empty(), "federation: at least one group required");
    require(spec.samples_min >= 1 && spec.samples_max >= spec.samples_min,
            "federation: invalid samples_per_client range");
    require(spec.input_dim >= 1, "federation: input_dim must be positive");
    require(spec.classes >= 2, "federation: need at least 2 classes");
    for (const GroupSpec& g : spec.groups)
        require(g.weight > 0.0, "federation: group weights must be positive");

    Federation fed;
    const int P = spec.classes;
    const int d = spec.input_dim;

    // Shared class means, drawn once per federation.
    SplitMix64 mean_rng(derive_seed(spec.rng_seed, 0x6d65616e73ULL));
    std::vector<std::vector<double>> base_means(static_cast<std::size_t>(P));
    for (auto& m : base_means) {
        m.resize(static_cast<std::size_t>(d));
        for (double& v : m) v = mean_rng.next_double();
    }

    // Per-group label distributions (and optional mean jitter).
    double wsum = 0.0;
    for (const GroupSpec& g : spec.groups) wsum += g.weight;
    fed.group_dists.resize(spec.groups.size());
    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) {
        SplitMix64 grng(derive_seed(spec.rng_seed, 0x67726f7570ULL, gi));
        SampleDistribution& dist = fed.group_dists[gi];
        dist.class_std = spec.class_std;
        dist.class_means = base_means;
        if (spec.group_mean_jitter > 0.0)
            for (auto& m : dist.class_means)
                for (double& v : m) v += spec.group_mean_jitter * grng.next_normal();
        if (spec.groups[gi].skew > 0.0)
            dist.class_probs = dirichlet_uniform_alpha(P, spec.groups[gi].skew, grng);
        else
            dist.class_probs.assign(static_cast<std::size_t>(P), 1.0 / P);
    }

    // Population mixture for evaluation: group-weighted average of the group
    // label distributions over the shared means (jitter ignored for eval).
    fed.mixture.class_std = spec.class_std;
    fed.mixture.class_means = base_means;
    fed.mixture.class_probs.assign(static_cast<std::size_t>(P), 0.0);
    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi)
        for (int c = 0; c < P; ++c)
            fed.mixture.class_probs[static_cast<std::size_t>(c)] +=
                spec.groups[gi].weight / wsum *
                fed.group_dists[gi].class_probs[static_cast<std::size_t>(c)];

    // Client -> group assignment follows the group weights.
    std::vector<double> gw(spec.groups.size());
    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) gw[gi] = spec.groups[gi].weight / wsum;

    fed.clients.resize(static_cast<std::size_t>(spec.n_clients));
    for (int i = 0; i < spec.n_clients; ++i) {
        SplitMix64 crng(derive_seed(spec.rng_seed, 0x636c69656e74ULL, static_cast<std::uint64_t>(i)));
        ClientDataset& ds = fed.clients[static_cast<std::size_t>(i)];
        ds.group_id = draw_categorical(gw, crng);
        int n = spec.samples_min;
        if (spec.samples_max > spec.samples_min)
            n += static_cast<int>(crng.next_below(
                static_cast<std::uint64_t>(spec.samples_max - spec.samples_min + 1)));
        const SampleDistribution& dist = fed.group_dists[static_cast<std::size_t>(ds.group_id)];
        ds.samples.reserve(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) ds.samples.push_back(dist.draw(crng));
    }

    // floor(pmr * N) compromised clients, chosen by seeded shuffle.
    int n_compromised = static_cast<int>(std::floor(spec.pmr * spec.n_clients));
    std::vector<int> order(static_cast<std::size_t>(spec.n_clients));
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 prng(derive_seed(spec.rng_seed, 0x61647673656cULL));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[prng.next_below(i)]);
    for (int k = 0; k < n_compromised; ++k)
        fed.clients[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])].compromised = true;

    return fed;
}

void apply_trigger(Sample& s, const TriggerSpec& trig) {
    for (const auto& [coord, value] : trig.pattern) {
        if (coord < 0 || static_cast<std::size_t>(coord) >= s.x.size())
            throw std::invalid_argument("trigger: coordinate out of range");
        s.x[static_cast<std::size_t>(coord)] = value;
    }
    s.y = trig.target_class;
    s.is_attack = true;
}

ClientDataset poison(const ClientDataset& data, const std::vector<TriggerSpec>& triggers,
                     double pdr) {
    require(pdr > 0.0 && pdr <= 1.0, "poison: pdr must be in (0, 1]");
    require(!triggers.empty(), "poison: need at least one trigger");
    for (const TriggerSpec& t : triggers)
        require(!t.pattern.empty(), "poison: trigger pattern must touch >= 1 coordinate");
    require(!data.samples.empty(), "poison: empty dataset");

    const std::size_t total = data.samples.size();
    std::size_t n_attack = static_cast<std::size_t>(
        std::llround(pdr * static_cast<double>(total)));
    if (n_attack < 1) n_attack = 1;
    if (n_attack > total) n_attack = total;

    ClientDataset out = data;
    // Samples were generated in random order, so poisoning the prefix is an
    // unbiased deterministic choice.
    for (std::size_t i = 0; i < n_attack; ++i)
        apply_trigger(out.samples[i], triggers[i % triggers.size()]);
    out.is_poisoned = true;
    out.pdr = static_cast<double>(n_attack) / static_cast<double>(total);
    return out;
}

ClientDataset poison(const ClientDataset& data, const TriggerSpec& trig, double pdr) {
    return poison(data, std::vector<TriggerSpec>{trig}, pdr);
}

std::vector<Sample> trigger_testset(const TriggerSpec& trig, int n,
                                    const SampleDistribution& base, std::uint64_t seed) {
    require(n >= 1, "trigger_testset: n must be >= 1");
    SplitMix64 rng(derive_seed(seed, 0x747269676765ULL));
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Sample s = base.draw(rng);
        apply_trigger(s, trig);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> benign_testset(int n, const SampleDistribution& base, std::uint64_t seed) {
    require(n >= 1, "benign_testset: n must be >= 1");
    SplitMix64 rng(derive_seed(seed, 0x62656e69676eULL));
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(base.draw(rng));
    return out;
}

void export_dataset_csv(const ClientDataset& data, std::ostream& out) {
    out << "# group_id=" << data.group_id << " poisoned=" << (data.is_poisoned ? 1 : 0)
        << " pdr=" << data.pdr << " compromised=" << (data.compromised ? 1 : 0) << "\n";
    if (data.samples.empty()) return;
    for (std::size_t j = 0; j < data.samples[0].x.size(); ++j) out << "x" << j << ",";
    out << "label,attack\n";
    for (const Sample& s : data.samples) {
        for (double v : s.x) out << v << ",";
        out << s.y << "," << (s.is_attack ? 1 : 0) << "\n";
    }
}

}  // namespace deepsight
