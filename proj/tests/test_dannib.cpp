#include <cmath>

#include "doctest.h"
#include "frida/dannib.hpp"
#include "frida/errors.hpp"
#include "frida/synthgen.hpp"
#include "oracles.hpp"

using namespace frida;

namespace {

DannArchitecture tiny_arch() {
    DannArchitecture a;
    a.encoder_hidden = {16, 16};
    a.latent_dim = 4;
    return a;
}

}  // namespace

TEST_CASE("zero encoder gives a standard normal latent") {
    DannIbModel m = DannIbModel::zeros(tiny_arch(), DannMode::dann_ib, 3, 5);
    RngStream rng(1);
    Encoding e = encode(m, gauss_sample(rng, 2000, 5), rng, true);
    CHECK(e.mu == Tensor2(2000, 4));
    CHECK(e.logvar == Tensor2(2000, 4));
    double mean = 0, sq = 0;
    for (double v : e.sample.values()) mean += v;
    mean /= 8000.0;
    for (double v : e.sample.values()) sq += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(sq / 7999.0 - 1) < 0.08);
}

TEST_CASE("deterministic encoding returns the mean") {
    RngStream rng(2);
    DannIbModel m = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 3, 5, rng);
    Encoding e = encode(m, gauss_sample(rng, 3, 5), rng, false);
    CHECK(e.sample == e.mu);
    CHECK_THROWS_AS(encode(m, Tensor2(3, 4), rng, false), ShapeError);
}

TEST_CASE("KL regularizer closed form") {
    CHECK(kl_regularizer(Tensor2(1, 2), Tensor2(1, 2)) == 0.0);
    CHECK(std::abs(kl_regularizer(Tensor2::from_rows({{1, 0}}), Tensor2(1, 2)) - 0.5) < 1e-12);
    RngStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        Tensor2 mu = gauss_sample(rng, 3, 2), lv = gauss_sample(rng, 3, 2);
        double k = kl_regularizer(mu, lv);
        CHECK(k >= 0.0);
        if (i < 50) CHECK(k == doctest::Approx(oracle::kl_ref(oracle::rows_of(mu), oracle::rows_of(lv))).epsilon(1e-12));
    }
}

TEST_CASE("KL regularizer ignores row order") {
    RngStream rng(4);
    Tensor2 mu = gauss_sample(rng, 5, 3), lv = gauss_sample(rng, 5, 3);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    CHECK(kl_regularizer(take_rows(mu, perm), take_rows(lv, perm)) ==
          doctest::Approx(kl_regularizer(mu, lv)).epsilon(1e-14));
}

TEST_CASE("lambda schedule") {
    CHECK(lambda_schedule(0.0) == 0.0);
    CHECK(lambda_schedule(1.0) == doctest::Approx(2.0 / (1.0 + std::exp(-10.0)) - 1.0).epsilon(1e-15));
    CHECK(lambda_schedule(1.0) == doctest::Approx(0.99991).epsilon(1e-5));
    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
        double l = lambda_schedule(i / 100.0);
        CHECK(l >= prev);
        prev = l;
    }
    CHECK_THROWS_AS(lambda_schedule(1.5), ContractError);
}

TEST_CASE("zero model loss terms") {
    DannIbModel m = DannIbModel::zeros(tiny_arch(), DannMode::dann_ib, 4, 5);
    RngStream rng(5);
    Tensor2 xs = gauss_sample(rng, 6, 5), xt = gauss_sample(rng, 6, 5);
    std::vector<int> ys{0, 1, 2, 3, 0, 1};
    DannNoise zero_noise{Tensor2(6, 4), Tensor2(6, 4)};
    auto src_only = dannib_loss(m, xs, ys, Tensor2(0, 5), 0.5, 0.01, zero_noise);
    CHECK(src_only.report.l_task == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(src_only.report.l_dom == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(src_only.report.r_ib == 0.0);
    // With a target batch the domain term sums the two halves.
    auto both = dannib_loss(m, xs, ys, xt, 0.5, 0.01, zero_noise);
    CHECK(both.report.l_dom == doctest::Approx(2 * std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("lambda 0 and beta 0 reduce to supervised training") {
    RngStream rng(6);
    auto d = oracle::dann_instance(rng, DannMode::dann_multiclass);
    auto g = dannib_loss(d.model, d.xs, d.ys, d.xt, 0.0, 0.0, d.noise);
    CHECK(g.report.total == doctest::Approx(g.report.l_task).epsilon(1e-15));
    // Encoder gradient from the task head alone.
    ForwardTrace enc = forward_trace(d.model.encoder, d.xs);
    Tensor2 mu = slice_cols(enc.output, 0, d.model.latent_dim);
    ForwardTrace head = forward_trace(d.model.head_task, mu);
    GradList hg = zero_grads(d.model.head_task), eg = zero_grads(d.model.encoder);
    Tensor2 dmu = backward(d.model.head_task, head, softmax_xent(head.output, d.ys).grad, hg);
    backward(d.model.encoder, enc, hconcat(dmu, Tensor2(dmu.rows(), d.model.latent_dim)), eg);
    for (std::size_t i = 0; i < eg.size(); ++i)
        for (std::size_t k = 0; k < eg[i].size(); ++k)
            CHECK(g.grads[i].values()[k] == doctest::Approx(eg[i].values()[k]).epsilon(1e-12));
}

TEST_CASE("dannib_loss gradients match finite differences in every mode") {
    RngStream rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        for (DannMode mode : {DannMode::dann_binary, DannMode::dann_multiclass, DannMode::dann_ib}) {
            auto d = oracle::dann_instance(rng, mode, trial % 4 != 3);
            CHECK(oracle::dann_fd_error(d, 0.3 + 0.03 * trial, 0.5) < 1e-4);
        }
    }
}

TEST_CASE("binary mode with beta 0 is plain DANN") {
    RngStream rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto d = oracle::dann_instance(rng, DannMode::dann_binary);
        double lambda = rng.uniform();
        auto g = dannib_loss(d.model, d.xs, d.ys, d.xt, lambda, 0.0, d.noise);
        double want = oracle::plain_dann(d.model, d.xs, d.ys, d.xt, lambda);
        CHECK(oracle::rel_err(g.report.total, want) < 1e-10);
    }
}

TEST_CASE("reversed encoder step raises the domain loss") {
    RngStream rng(9);
    int up = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto d = oracle::dann_instance(rng, DannMode::dann_ib);
        auto g = dannib_loss(d.model, d.xs, d.ys, d.xt, 1.0, 0.0, d.noise);
        // Only the reversed domain gradient reaches the encoder: subtract the
        // task contribution computed with lambda = 0.
        auto t = dannib_loss(d.model, d.xs, d.ys, d.xt, 0.0, 0.0, d.noise);
        auto params = d.model.parameters();
        const std::size_t ne = d.model.encoder.parameters().size();
        for (std::size_t i = 0; i < ne; ++i)
            for (std::size_t k = 0; k < params[i]->size(); ++k)
                params[i]->values()[k] -= 1e-3 * (g.grads[i].values()[k] - t.grads[i].values()[k]);
        auto after = dannib_loss(d.model, d.xs, d.ys, d.xt, 1.0, 0.0, d.noise);
        up += after.report.l_dom > g.report.l_dom;
    }
    CHECK(up >= 15);
}

TEST_CASE("lambda outside [0, 1] is rejected") {
    RngStream rng(10);
    auto d = oracle::dann_instance(rng, DannMode::dann_ib);
    CHECK_THROWS_AS(dannib_loss(d.model, d.xs, d.ys, d.xt, 1.5, 0.0, d.noise), ContractError);
}

TEST_CASE("train_dannib with lr 0 leaves parameters unchanged") {
    RngStream rng(11);
    DannIbModel m = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 2, 3, rng);
    DannIbModel before = m;
    FeatureDataset src;
    src.features = gauss_sample(rng, 20, 3);
    src.labels = std::vector<int>(20, 0);
    (*src.labels)[3] = 1;
    src.num_classes = 2;
    FeatureDataset tgt = src.unlabeled();
    DannTrainConfig cfg;
    cfg.epochs = 2;
    cfg.adam.lr = 0;
    auto h = train_dannib(m, src, &tgt, cfg, rng);
    CHECK(h.size() == 2);
    CHECK(m == before);
    CHECK_THROWS_AS(train_dannib(m, src, &src, cfg, rng), ContractError);
}

TEST_CASE("classify tie-break and posteriors") {
    DannIbModel m = DannIbModel::zeros(tiny_arch(), DannMode::dann_ib, 3, 2);
    RngStream rng(12);
    Classification c = classify(m, gauss_sample(rng, 4, 2));
    for (int y : c.classes) CHECK(y == 0);
    RngStream r2(13);
    DannIbModel n = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 3, 2, r2);
    Classification d = classify(n, gauss_sample(r2, 50, 2), 3);
    for (std::size_t i = 0; i < 50; ++i) {
        double s = 0;
        for (double p : d.posteriors.row(i)) s += p;
        CHECK(std::abs(s - 1) < 1e-12);
    }
    CHECK(classify(n, gauss_sample(r2, 50, 2), 1).classes.size() == 50);
}

TEST_CASE("separable data is learned and parallel classification agrees") {
    RngStream rng(14);
    FeatureDataset ds;
    ds.num_classes = 2;
    ds.features = gauss_sample(rng, 200, 2);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = static_cast<int>(i % 2);
        ds.features(i, 0) += y[i] ? 3.0 : -3.0;
    }
    ds.labels = y;
    DannIbModel m = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 2, 2, rng);
    DannTrainConfig cfg;
    cfg.epochs = 30;
    train_dannib(m, ds, nullptr, cfg, rng);
    Classification c = classify(m, ds.features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 200; ++i) hits += c.classes[i] == y[i];
    CHECK(hits >= 198);
    CHECK(classify(m, ds.features, 4).classes == c.classes);
    CHECK(classify(m, ds.features, 4).posteriors == c.posteriors);
}

TEST_CASE("no shift keeps target accuracy near source accuracy") {
    BenchmarkSpec spec = default_benchmark(5, 1);
    for (auto& s : spec.shifts) {
        s.rotation_angle = 0;
        s.translation.clear();
    }
    auto doms = make_benchmark(spec);
    RngStream rng(15);
    Split s0 = split(doms[0].evaluation_view(), 0.3, rng);
    Split s1 = split(doms[1].evaluation_view(), 0.3, rng);
    DannIbModel m = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 4, 16, rng);
    DannTrainConfig cfg;
    cfg.epochs = 30;
    cfg.lambda_max = 0.1;
    cfg.adam.epsilon = 0.01;
    FeatureDataset tgt = s1.train.unlabeled();
    train_dannib(m, s0.train, &tgt, cfg, rng);
    auto acc = [&](const FeatureDataset& t) {
        auto c = classify(m, t.features);
        std::size_t h = 0;
        for (std::size_t i = 0; i < t.size(); ++i) h += c.classes[i] == (*t.labels)[i];
        return static_cast<double>(h) / static_cast<double>(t.size());
    };
    CHECK(std::abs(acc(s0.test) - acc(s1.test)) <= 0.03);
}

TEST_CASE("pseudo-labeling threshold, fallback and monotonicity") {
    DannIbModel zero = DannIbModel::zeros(tiny_arch(), DannMode::dann_ib, 4, 3);
    RngStream rng(16);
    FeatureDataset data;
    data.num_classes = 4;
    data.features = gauss_sample(rng, 10, 3);
    auto none = pseudo_label(zero, data, 0.26, false);
    CHECK(none.selected.size() == 0);
    CHECK(none.rejected == 10);
    auto fb = pseudo_label(zero, data, 0.26, true);
    CHECK(fb.selected.size() == 4);
    CHECK(fb.fallback_classes.size() == 4);
    CHECK(pseudo_label(zero, data, 0.25, false).selected.size() == 10);

    DannIbModel m = DannIbModel::create(tiny_arch(), DannMode::dann_ib, 4, 3, rng);
    oracle::jitter(m.parameters(), rng, 0.5);
    data.features = gauss_sample(rng, 300, 3);
    std::size_t prev = 301;
    for (double th : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        auto r = pseudo_label(m, data, th, false);
        CHECK(r.selected.size() <= prev);
        prev = r.selected.size();
        CHECK(r.selected.size() + r.rejected == 300);
        CHECK(r.selected.domain == data.domain);
    }
}
