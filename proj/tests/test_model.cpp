#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "deepsight/model.hpp"
#include "deepsight/rng.hpp"

using namespace deepsight;

namespace {

ParamUpdate random_update(const ModelParams& shape, std::uint64_t seed) {
    SplitMix64 rng(seed);
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

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (a.layers[k].w != b.layers[k].w) return false;
        if (a.layers[k].b != b.layers[k].b) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("forward on the all-zero model is uniform") {
    ModelParams m = make_model({4, 8, 5});
    std::vector<double> p = forward(m, {0.3, -0.2, 0.9, 0.1});
    for (double v : p) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("forward is deterministic") {
    ModelParams m = init_model({6, 12, 4}, 77);
    std::vector<double> x{0.1, 0.5, -0.4, 0.2, 0.9, -1.1};
    CHECK(forward(m, x) == forward(m, x));
}

TEST_CASE("dominant logit wins: softmax of (20, 0, 0)") {
    // One linear layer, zero weights, bias = logits; input is irrelevant.
    ModelParams m = make_model({3, 3});
    m.layers[0].b = {20.0, 0.0, 0.0};
    std::vector<double> p = forward(m, {0.0, 0.0, 0.0});
    const double expected = 1.0 / (1.0 + 2.0 * std::exp(-20.0));
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p[0] > 0.99);
}

TEST_CASE("softmax outputs sum to one and stay positive") {
    for (int t = 0; t < 10000; ++t) {
        ModelParams m = init_model({4, 6, 3}, 1000 + static_cast<std::uint64_t>(t));
        SplitMix64 rng(derive_seed(9, static_cast<std::uint64_t>(t)));
        std::vector<double> x(4);
        for (double& v : x) v = 4.0 * rng.next_normal();
        std::vector<double> p = forward(m, x);
        double sum = std::accumulate(p.begin(), p.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        for (double v : p) CHECK(v > 0.0);
    }
}

TEST_CASE("forward rejects wrong input dimension") {
    ModelParams m = make_model({4, 8, 3});
    CHECK_THROWS_AS(forward(m, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("model construction validates shape chain and P") {
    CHECK_THROWS_AS(make_model({4}), std::invalid_argument);
    CHECK_THROWS_AS(make_model({4, 8, 1}), std::invalid_argument);
    CHECK_THROWS_AS(make_model({4, 0, 3}), std::invalid_argument);
}

TEST_CASE("diff of a model with itself is zero") {
    ModelParams m = init_model({5, 7, 3}, 3);
    ParamUpdate u = diff(m, m);
    CHECK(u.l2 == 0.0);
    for (const Layer& l : u.deltas) {
        for (double v : l.w) CHECK(v == 0.0);
        for (double v : l.b) CHECK(v == 0.0);
    }
}

TEST_CASE("3-4-5 norm") {
    // Two-parameter model: 1x1 weight and one bias.
    ModelParams g = make_model({1, 2});
    ModelParams w = g;
    w.layers[0].w[0] = 3.0;
    w.layers[0].b[1] = 4.0;
    CHECK(diff(w, g).l2 == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("diff then apply with factor 1 reconstructs the local model bitwise") {
    ModelParams g = init_model({6, 9, 4}, 11);
    ModelParams w = apply_scaled(g, random_update(g, 123), 1.0);
    ModelParams rebuilt = apply_scaled(g, diff(w, g), 1.0);
    CHECK(bitwise_equal(rebuilt, w));
}

TEST_CASE("apply_scaled endpoints") {
    ModelParams g = init_model({4, 5, 3}, 21);
    ParamUpdate u = random_update(g, 22);
    CHECK(bitwise_equal(apply_scaled(g, u, 0.0), g));
    ModelParams w = apply_scaled(g, u, 1.0);
    CHECK(diff(w, g).l2 == doctest::Approx(u.l2).epsilon(1e-12));
}

TEST_CASE("doubling an update doubles the observed norm") {
    ModelParams g = init_model({4, 5, 3}, 31);
    ParamUpdate u = random_update(g, 32);
    double twice = diff(apply_scaled(g, u, 2.0), g).l2;
    CHECK(twice == doctest::Approx(2.0 * u.l2).epsilon(1e-9));
}

TEST_CASE("norm homogeneity of scale_update") {
    ModelParams g = init_model({5, 8, 4}, 41);
    for (double lambda : {-3.0, -0.5, 0.0, 0.25, 7.0}) {
        ParamUpdate u = random_update(g, 42);
        ParamUpdate s = scale_update(u, lambda);
        CHECK(s.l2 == doctest::Approx(std::abs(lambda) * u.l2).epsilon(1e-9));
    }
}

TEST_CASE("cached l2 matches the norm of the deltas") {
    ModelParams g = init_model({5, 8, 4}, 51);
    ParamUpdate u = random_update(g, 52);
    CHECK(u.l2 == doctest::Approx(update_norm(u.deltas)).epsilon(1e-9));
}

TEST_CASE("fedavg basics") {
    ModelParams g = init_model({4, 6, 3}, 61);
    ParamUpdate u = random_update(g, 62);

    SUBCASE("single update equals apply_scaled with factor 1") {
        CHECK(bitwise_equal(fedavg(g, {u}), apply_scaled(g, u, 1.0)));
    }
    SUBCASE("an update and its negation cancel") {
        ParamUpdate neg = scale_update(u, -1.0);
        ModelParams r = fedavg(g, {u, neg});
        CHECK(diff(r, g).l2 == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("mean of first coordinates 1,2,3 is 2") {
        std::vector<ParamUpdate> ups;
        for (double v : {1.0, 2.0, 3.0}) {
            ParamUpdate w;
            for (const Layer& l : g.layers) w.deltas.emplace_back(l.out, l.in);
            w.deltas[0].w[0] = v;
            w.l2 = update_norm(w.deltas);
            ups.push_back(std::move(w));
        }
        ModelParams r = fedavg(g, ups);
        CHECK(r.layers[0].w[0] - g.layers[0].w[0] == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("empty list rejected") {
        CHECK_THROWS_AS(fedavg(g, {}), std::invalid_argument);
    }
}

TEST_CASE("fedavg is permutation invariant once inputs are canonically ordered") {
    ModelParams g = init_model({4, 6, 3}, 71);
    std::vector<ParamUpdate> ups;
    for (std::uint64_t s = 0; s < 5; ++s) ups.push_back(random_update(g, 100 + s));
    std::vector<ParamUpdate> shuffled{ups[3], ups[0], ups[4], ups[2], ups[1]};
    auto canonical = [](std::vector<ParamUpdate> v) {
        std::sort(v.begin(), v.end(),
                  [](const ParamUpdate& a, const ParamUpdate& b) {
                      return a.deltas[0].w < b.deltas[0].w;
                  });
        return v;
    };
    CHECK(bitwise_equal(fedavg(g, canonical(ups)), fedavg(g, canonical(shuffled))));
}

TEST_CASE("output layer view") {
    ModelParams m = init_model({4, 6, 2}, 81);
    m.layers.back().b = {0.1, -0.2};
    OutputLayerView v = output_layer_view(m);
    CHECK(v.bias[0] == 0.1);
    CHECK(v.bias[1] == -0.2);
    CHECK(v.classes == 2);
    CHECK(v.fan_in == 6);  // second-to-last layer width

    std::vector<double> copy = v.bias;
    copy[0] = 99.0;
    CHECK(m.layers.back().b[0] == 0.1);
}

TEST_CASE("model snapshot round-trips bitwise") {
    ModelParams m = init_model({7, 13, 5}, 91);
    auto path = std::filesystem::temp_directory_path() / "ds_model_roundtrip.bin";
    save_model(m, path.string());
    ModelParams loaded = load_model(path.string());
    CHECK(bitwise_equal(m, loaded));
    std::filesystem::remove(path);
}

TEST_CASE("snapshot loader rejects garbage") {
    auto path = std::filesystem::temp_directory_path() / "ds_model_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "not a model";
    }
    CHECK_THROWS_AS(load_model(path.string()), std::runtime_error);
    std::filesystem::remove(path);
}
