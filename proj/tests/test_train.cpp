#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "deepsight/features.hpp"
#include "deepsight/model.hpp"
#include "deepsight/rng.hpp"
#include "deepsight/train.hpp"

using namespace deepsight;

namespace {

ClientDataset toy_dataset(std::uint64_t seed, int n, int in_dim, int classes) {
    SplitMix64 rng(seed);
    ClientDataset ds;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.y = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
        s.x.resize(static_cast<std::size_t>(in_dim));
        for (double& v : s.x) v = 0.2 * rng.next_normal() + 0.1 * s.y;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
    for (std::size_t k = 0; k < a.layers.size(); ++k)
        if (a.layers[k].w != b.layers[k].w || a.layers[k].b != b.layers[k].b) return false;
    return true;
}

double cross_entropy(const ModelParams& m, const ClientDataset& ds) {
    double total = 0.0;
    for (const Sample& s : ds.samples)
        total += -std::log(forward(m, s.x)[static_cast<std::size_t>(s.y)]);
    return total / static_cast<double>(ds.samples.size());
}

double param_cosine(const ModelParams& a, const ModelParams& b) {
    std::vector<double> u = flatten(a), v = flatten(b);
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Mutates one flat parameter coordinate in place.
double* flat_param(ModelParams& m, std::size_t idx) {
    for (Layer& l : m.layers) {
        if (idx < l.w.size()) return &l.w[idx];
        idx -= l.w.size();
        if (idx < l.b.size()) return &l.b[idx];
        idx -= l.b.size();
    }
    return nullptr;
}

}  // namespace

TEST_CASE("a zero learning rate leaves the model unchanged") {
    ModelParams m = init_model({6, 10, 4}, 5);
    ClientDataset ds = toy_dataset(7, 40, 6, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    ModelParams out = train_local(m, ds, cfg, 99);
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
        for (std::size_t i = 0; i < m.layers[k].w.size(); ++i)
            CHECK(out.layers[k].w[i] == m.layers[k].w[i]);
        for (std::size_t i = 0; i < m.layers[k].b.size(); ++i)
            CHECK(out.layers[k].b[i] == m.layers[k].b[i]);
    }
}

TEST_CASE("zero epochs are rejected") {
    ModelParams m = init_model({6, 10, 4}, 5);
    ClientDataset ds = toy_dataset(7, 20, 6, 4);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_local(m, ds, cfg, 1), std::invalid_argument);
}

TEST_CASE("empty dataset is rejected") {
    ModelParams m = init_model({6, 10, 4}, 5);
    ClientDataset empty;
    TrainConfig cfg;
    CHECK_THROWS_AS(train_local(m, empty, cfg, 1), std::invalid_argument);
}

TEST_CASE("freezing the output layer keeps it bitwise identical") {
    ModelParams m = init_model({6, 10, 4}, 15);
    ClientDataset ds = toy_dataset(17, 60, 6, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.2;
    cfg.epochs = 3;
    cfg.freeze_output_layer = true;
    ModelParams out = train_local(m, ds, cfg, 3);
    CHECK(out.layers.back().w == m.layers.back().w);
    CHECK(out.layers.back().b == m.layers.back().b);
    // Hidden layers did move.
    CHECK(diff(out, m).l2 > 0.0);
}

TEST_CASE("alpha = 1 evasion follows the plain trajectory bitwise") {
    ModelParams m = init_model({6, 10, 4}, 25);
    ClientDataset ds = toy_dataset(27, 50, 6, 4);
    TrainConfig plain;
    plain.learning_rate = 0.1;
    plain.epochs = 2;
    TrainConfig evasion = plain;
    evasion.loss_mode = LossMode::anomaly_evasion;
    evasion.alpha = 1.0;
    ModelParams a = train_local(m, ds, plain, 7);
    ModelParams b = train_local(m, ds, evasion, 7, &m);
    CHECK(bitwise_equal(a, b));
}

TEST_CASE("evasion mode demands a reference model") {
    ModelParams m = init_model({6, 10, 4}, 25);
    ClientDataset ds = toy_dataset(27, 20, 6, 4);
    TrainConfig cfg;
    cfg.loss_mode = LossMode::anomaly_evasion;
    cfg.alpha = 0.5;
    CHECK_THROWS_AS(train_local(m, ds, cfg, 7), std::invalid_argument);
}

TEST_CASE("training is deterministic under a fixed seed") {
    ModelParams m = init_model({6, 10, 4}, 35);
    ClientDataset ds = toy_dataset(37, 80, 6, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.15;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    CHECK(bitwise_equal(train_local(m, ds, cfg, 42), train_local(m, ds, cfg, 42)));
    CHECK_FALSE(bitwise_equal(train_local(m, ds, cfg, 42), train_local(m, ds, cfg, 43)));
}

TEST_CASE("training reduces the loss on learnable data") {
    ModelParams m = init_model({6, 10, 4}, 45);
    ClientDataset ds = toy_dataset(47, 120, 6, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.2;
    cfg.epochs = 8;
    ModelParams out = train_local(m, ds, cfg, 5);
    CHECK(dataset_loss(out, ds) < dataset_loss(m, ds));
}

TEST_CASE("one full-batch step matches the finite-difference gradient (cosine evasion)") {
    const double alpha = 0.6, lr = 1e-3;
    ModelParams m = init_model({4, 6, 3}, 55);
    // Move away from the reference so the cosine term has a nonzero gradient.
    ModelParams ref = init_model({4, 6, 3}, 56);
    ClientDataset ds = toy_dataset(57, 16, 4, 3);
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = 1;
    cfg.batch_size = 64;  // one batch
    cfg.loss_mode = LossMode::anomaly_evasion;
    cfg.alpha = alpha;
    ModelParams stepped = train_local(m, ds, cfg, 1, &ref);

    auto loss_at = [&](const ModelParams& w) {
        return alpha * cross_entropy(w, ds) + (1.0 - alpha) * (1.0 - param_cosine(w, ref));
    };
    const double eps = 1e-6;
    SplitMix64 pick(58);
    for (int check = 0; check < 8; ++check) {
        std::size_t idx = pick.next_below(m.num_params());
        ModelParams up = m, down = m;
        *flat_param(up, idx) += eps;
        *flat_param(down, idx) -= eps;
        double fd = (loss_at(up) - loss_at(down)) / (2.0 * eps);
        double step = (*flat_param(m, idx) - *flat_param(stepped, idx)) / lr;
        CHECK(step == doctest::Approx(fd).epsilon(5e-4).scale(1.0));
    }
}

TEST_CASE("one full-batch step matches the finite-difference gradient (ddif evasion)") {
    const double alpha = 0.4, lr = 1e-3;
    const int n_ddif = 16;
    ModelParams m = init_model({4, 6, 3}, 65);
    ModelParams ref = init_model({4, 6, 3}, 66);
    ClientDataset ds = toy_dataset(67, 12, 4, 3);
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.loss_mode = LossMode::anomaly_evasion;
    cfg.anomaly_kind = AnomalyKind::ddif_l2;
    cfg.alpha = alpha;
    cfg.ddif_samples = n_ddif;
    cfg.ddif_seed = 9;
    ModelParams stepped = train_local(m, ds, cfg, 1, &ref);

    std::vector<double> target = ddif(m, ref, 9, n_ddif, 4);
    auto loss_at = [&](const ModelParams& w) {
        std::vector<double> cur = ddif(m, w, 9, n_ddif, 4);
        double sq = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i)
            sq += (cur[i] - target[i]) * (cur[i] - target[i]);
        return alpha * cross_entropy(w, ds) + (1.0 - alpha) * std::sqrt(sq);
    };
    const double eps = 1e-6;
    SplitMix64 pick(68);
    for (int check = 0; check < 8; ++check) {
        std::size_t idx = pick.next_below(m.num_params());
        ModelParams up = m, down = m;
        *flat_param(up, idx) += eps;
        *flat_param(down, idx) -= eps;
        double fd = (loss_at(up) - loss_at(down)) / (2.0 * eps);
        double step = (*flat_param(m, idx) - *flat_param(stepped, idx)) / lr;
        CHECK(step == doctest::Approx(fd).epsilon(5e-4).scale(1.0));
    }
}
