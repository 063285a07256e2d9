#include "deepsight/properties.hpp"

#include <cmath>
#include <ostream>
#include <vector>

#include "deepsight/features.hpp"
#include "deepsight/model.hpp"
#include "deepsight/rng.hpp"

namespace deepsight {

namespace {

std::vector<std::size_t> random_dims(SplitMix64& rng) {
    std::size_t in = 3 + rng.next_below(6);
    std::size_t hidden = 4 + rng.next_below(12);
    std::size_t classes = 2 + rng.next_below(11);
    return {in, hidden, classes};
}

ParamUpdate random_update(const ModelParams& shape, SplitMix64& rng) {
    ParamUpdate u;
    for (const Layer& l : shape.layers) {
        Layer d(l.out, l.in);
        for (double& v : d.w) v = rng.next_normal();
        for (double& v : d.b) v = rng.next_normal();
        u.deltas.push_back(std::move(d));
    }
    u.l2 = update_norm(u.deltas);
    return u;
}

double random_lambda(SplitMix64& rng, bool positive_only) {
    int k = static_cast<int>(rng.next_below(13)) - 6;  // [-6, 6]
    double lambda = std::pow(10.0, k);
    if (!positive_only && rng.next_below(2) == 1) lambda = -lambda;
    return lambda;
}

}  // namespace

int check_neup_scale_invariance(std::uint64_t seed, int trials, std::ostream* log) {
    SplitMix64 rng(derive_seed(seed, 0x7468656f31ULL));
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
        ModelParams global = init_model(random_dims(rng), rng.next());
        ParamUpdate u = random_update(global, rng);
        double lambda = random_lambda(rng, /*positive_only=*/false);
        std::vector<double> base = neups(update_energy(global, apply_scaled(global, u, 1.0)));
        std::vector<double> scaled =
            neups(update_energy(global, apply_scaled(global, u, lambda)));
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (std::abs(base[i] - scaled[i]) > 1e-9) {
                ++failures;
                if (log)
                    *log << "neup invariance failed: trial " << t << " entry " << i
                         << " lambda " << lambda << " delta "
                         << std::abs(base[i] - scaled[i]) << '\n';
                break;
            }
        }
    }
    return failures;
}

int check_te_scale_invariance(std::uint64_t seed, int trials, std::ostream* log) {
    SplitMix64 rng(derive_seed(seed, 0x7468656f32ULL));
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
        ModelParams global = init_model(random_dims(rng), rng.next());
        ParamUpdate u = random_update(global, rng);
        double lambda = random_lambda(rng, /*positive_only=*/false);
        int te_base = threshold_exceedings(
            neups(update_energy(global, apply_scaled(global, u, 1.0))));
        int te_scaled = threshold_exceedings(
            neups(update_energy(global, apply_scaled(global, u, lambda))));
        if (te_base != te_scaled) {
            ++failures;
            if (log)
                *log << "te invariance failed: trial " << t << " lambda " << lambda << " "
                     << te_base << " vs " << te_scaled << '\n';
        }
    }
    return failures;
}

int check_cosine_scale_stability(std::uint64_t seed, int trials, std::ostream* log) {
    SplitMix64 rng(derive_seed(seed, 0x636f73696eULL));
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
        std::size_t dim = 2 + rng.next_below(30);
        std::vector<double> u(dim), v(dim);
        for (double& x : u) x = rng.next_normal();
        for (double& x : v) x = rng.next_normal();
        double lambda = random_lambda(rng, /*positive_only=*/true);
        std::vector<double> su(dim), nu(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            su[i] = lambda * u[i];
            nu[i] = -u[i];
        }
        double d0 = cosine_distance(u, v);
        bool bad = std::abs(cosine_distance(su, v) - d0) > 1e-12 ||
                   std::abs(cosine_distance(nu, v) - (2.0 - d0)) > 1e-12;
        if (bad) {
            ++failures;
            if (log) *log << "cosine stability failed: trial " << t << " lambda " << lambda << '\n';
        }
    }
    return failures;
}

int check_tf_monotonicity(std::uint64_t seed, int vectors, std::ostream* log) {
    static const double kFactors[] = {0.001, 0.005, 0.01, 0.02, 0.05, 0.1};
    SplitMix64 rng(derive_seed(seed, 0x74666d6f6eULL));
    int failures = 0;
    for (int t = 0; t < vectors; ++t) {
        std::size_t classes = 2 + rng.next_below(199);
        std::vector<double> energies(classes);
        for (double& e : energies) e = std::abs(rng.next_normal());
        std::vector<double> neup = neups(energies);
        int prev = -1;
        for (std::size_t f = 0; f < 6; ++f) {
            int te = threshold_exceedings(neup, kFactors[f]);
            if (prev >= 0 && te > prev) {
                ++failures;
                if (log)
                    *log << "tf monotonicity failed: vector " << t << " tf " << kFactors[f]
                         << " te " << te << " > " << prev << '\n';
                break;
            }
            prev = te;
        }
    }
    // Branch point of max(0.01, 1/P): 1/P down to exactly P = 100, constant
    // 0.01 afterwards.
    bool branch_ok = te_factor(50) == 1.0 / 50 && te_factor(99) == 1.0 / 99 &&
                     te_factor(100) == 0.01 && te_factor(101) == 0.01 &&
                     te_factor(200) == 0.01 && te_factor(99) > 0.01;
    if (!branch_ok) {
        ++failures;
        if (log) *log << "tf factor branch does not flip at P=100\n";
    }
    return failures;
}

}  // namespace deepsight
