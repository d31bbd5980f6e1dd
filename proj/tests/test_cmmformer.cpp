#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "pestsim/cmmformer.hpp"
#include "pestsim/errors.hpp"

using namespace pestsim;
using namespace pestsim::cmm;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.T = 24;
    c.C_prime = 6;
    c.d_model = 8;
    c.heads = 2;
    c.head_hidden = 6;
    c.k_ref = 3;
    c.pool_capacity = 10;
    return c;
}

Matrix random_wave(std::size_t T, std::uint64_t seed, double level = 2000.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 50.0);
    Matrix x(static_cast<Eigen::Index>(T), 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = level + g(rng);
    return x;
}

Vector stats_for(std::uint64_t seed) {
    std::vector<Matrix> pool;
    for (std::uint64_t k = 0; k < 4; ++k) pool.push_back(random_wave(24, seed + k, 1500.0 + 100.0 * seed));
    return pool_statistics(sample_refwaves(pool, 3, seed), 2, 4095.0);
}

}  // namespace

TEST_CASE("normalize is a per-channel z-score") {
    Matrix x(4, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5;
    const auto z = normalize(x);
    const double sd = std::sqrt(1.25);
    CHECK(z(0, 0) == doctest::Approx(-1.5 / (sd + 1e-6)));
    CHECK(z(3, 0) == doctest::Approx(1.5 / (sd + 1e-6)));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(z(i, 1) == 0.0);
}

TEST_CASE("pool statistics by hand") {
    Matrix a(2, 2), b(2, 2);
    a << 0, 10, 2, 10;
    b << 4, 10, 6, 10;
    const auto s = pool_statistics({&a, &b}, 2, 2.0);
    REQUIRE(s.size() == 4);
    CHECK(s(0) == doctest::Approx(3.0 / 2.0));
    CHECK(s(1) == doctest::Approx(10.0 / 2.0));
    CHECK(s(2) == doctest::Approx(std::sqrt(5.0) / 2.0));
    CHECK(s(3) == doctest::Approx(0.0));
    CHECK_THROWS_AS(pool_statistics({}, 2, 1.0), ContractError);
}

TEST_CASE("ref-wave sampling enforces k <= N") {
    std::vector<Matrix> pool;
    for (std::uint64_t k = 0; k < 10; ++k) pool.push_back(random_wave(8, k));
    const auto a = sample_refwaves(pool, 10, 5);
    CHECK(std::set<const Matrix*>(a.begin(), a.end()).size() == 10);
    const auto b = sample_refwaves(pool, 4, 5);
    CHECK(b == sample_refwaves(pool, 4, 5));
    CHECK_FALSE(b == sample_refwaves(pool, 4, 6));
    CHECK_THROWS_AS(sample_refwaves(pool, 11, 5), ContractError);
    CHECK_THROWS_AS(sample_refwaves(pool, 0, 5), ContractError);
    // every member is reachable
    std::set<const Matrix*> seen;
    for (std::uint64_t s = 0; s < 200; ++s) seen.insert(sample_refwaves(pool, 1, s)[0]);
    CHECK(seen.size() == 10);
}

TEST_CASE("config and ablation parsing") {
    auto c = small_config();
    CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.k_ref = 11;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(Ablation::parse("cmm").cmm);
    CHECK(Ablation::parse("aggregation").aggregation);
    CHECK_FALSE(Ablation::parse("none").attention);
    CHECK_THROWS_AS(Ablation::parse("heads"), ConfigError);
    const auto a = Ablation::parse("pos_enc");
    CHECK(Ablation::from_json(a.to_json()).pos_enc);
}

TEST_CASE("projection is conditioned on the pool statistics") {
    Model m(small_config());
    m.init(3);
    const auto s1 = stats_for(1), s2 = stats_for(2);
    CHECK((m.projection(0, s1) - m.projection(0, s2)).norm() > 1e-6);
    Model fixed(small_config(), Ablation::parse("cmm"));
    fixed.init(3);
    const auto w = fixed.projection(0, s1);
    CHECK(w == fixed.projection(0, s2));
    CHECK(w(0, 0) == 1.0);
    CHECK(w(1, 1) == 1.0);
    CHECK(w.sum() == 2.0);
}

TEST_CASE("zeroed channel merge makes every layer an exact identity") {
    for (const char* ab : {"none", "cmm", "pos_enc", "attention", "aggregation"}) {
        Model m(small_config(), Ablation::parse(ab));
        m.init(9);
        m.zero_channel_merge();
        const Matrix x = random_wave(24, 4);
        const Matrix h = normalize(x);
        const auto s = stats_for(1);
        CHECK(m.cmm_forward(0, h, s) == h);
        CHECK(m.encode(x, s) == h);
    }
}

TEST_CASE("attention rows are probability distributions") {
    Model m(small_config());
    m.init(4);
    const Matrix h = normalize(random_wave(24, 2));
    const auto w = m.attention_weights(1, h, stats_for(3));
    REQUIRE(w.size() == 2);
    for (const auto& a : w) {
        CHECK(a.rows() == 24);
        CHECK(a.cols() == 24);
        CHECK(a.minCoeff() >= 0.0);
        for (Eigen::Index i = 0; i < a.rows(); ++i) CHECK(std::abs(a.row(i).sum() - 1.0) <= 1e-9);
    }
}

TEST_CASE("positional encoding breaks time-permutation invariance") {
    const Matrix x = random_wave(24, 7);
    Matrix px(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) px.row(t) = x.row((t * 5 + 3) % x.rows());
    const auto s = stats_for(2);

    // Attention is permutation-equivariant and the head pools over time, so
    // with no positional embedding and no convolution the output is invariant.
    Ablation bag;
    bag.pos_enc = true;
    bag.aggregation = true;
    Model inv(small_config(), bag);
    inv.init(5);
    CHECK((inv.forward(x, s) - inv.forward(px, s)).cwiseAbs().maxCoeff() < 1e-9);

    Ablation with_pos;
    with_pos.aggregation = true;
    Model pos(small_config(), with_pos);
    pos.init(5);
    CHECK((pos.forward(x, s) - pos.forward(px, s)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("analytic gradients match central differences") {
    std::vector<Matrix> xs;
    for (std::uint64_t k = 0; k < 3; ++k) xs.push_back(random_wave(24, 20 + k));
    std::vector<Model::Example> batch;
    for (std::size_t k = 0; k < xs.size(); ++k) batch.push_back({&xs[k], stats_for(k), static_cast<int>(k)});
    for (const char* ab : {"none", "cmm", "pos_enc", "attention", "aggregation"}) {
        CAPTURE(ab);
        Model m(small_config(), Ablation::parse(ab));
        m.init(17);
        const auto r = grad_check(m, batch, 200, 1e-5, 3);
        CHECK(r.checked == 200);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("save and load reproduce the model") {
    Model m(small_config(), Ablation::parse("attention"));
    m.init(8);
    const auto dir = std::filesystem::temp_directory_path() / "pestsim_test_cmm";
    std::filesystem::create_directories(dir);
    m.save(dir / "m.pstm");
    const auto back = Model::load(dir / "m.pstm");
    CHECK(back.params == m.params);
    CHECK(back.ablation().attention);
    CHECK(back.config().to_json() == m.config().to_json());
    const Matrix x = random_wave(24, 1);
    const auto s = stats_for(1);
    CHECK(back.forward(x, s) == m.forward(x, s));
    CHECK_THROWS_AS(Model::load(dir / "absent.pstm"), DataError);
}

TEST_CASE("training fits a small problem deterministically") {
    auto cfg = small_config();
    cfg.classes = 2;
    cfg.layers = 1;
    Pools pools;
    for (const char* d : {"a", "b"})
        for (std::uint64_t k = 0; k < 5; ++k) pools[d].push_back(random_wave(24, 100 + k, d[0] == 'a' ? 1800 : 2300));
    std::vector<LabeledWave> set;
    for (std::uint64_t k = 0; k < 24; ++k) {
        Matrix x = random_wave(24, 200 + k);
        const int label = static_cast<int>(k % 2);
        if (label == 1)  // a centred bump
            for (Eigen::Index t = 9; t < 15; ++t) x(t, 0) += 600.0;
        set.push_back({x, k % 3 ? "a" : "b", label, "w" + std::to_string(k)});
    }
    TrainConfig tc;
    tc.max_epochs = 15;
    tc.batch = 8;
    tc.lr = 1e-2;
    tc.patience = 15;
    History h;
    const auto m = train(cfg, {}, set, set, pools, tc, &h);
    CHECK(h.epochs_run == 15);
    CHECK(h.train_loss.back() < h.train_loss.front());
    CHECK(h.step_ref_seeds.size() == 15 * 3);
    const auto pred = predict(m, set, pools, 1);
    int right = 0;
    for (std::size_t k = 0; k < set.size(); ++k) right += pred[k] == set[k].label;
    CHECK(right >= 22);
    const auto again = train(cfg, {}, set, set, pools, tc);
    CHECK(again.params == m.params);
    CHECK(predict(m, set, pools, 1) == pred);

    Pools missing = {{"a", pools["a"]}};
    CHECK_THROWS_AS(train(cfg, {}, set, set, missing, tc), DataError);
}
