#include <cmath>
#include <vector>

#include "doctest.h"
#include "frida/errors.hpp"
#include "frida/numcore.hpp"

using namespace frida;

namespace {

double act_ref(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0 ? x : 0.0;
        case Activation::leaky_relu: return x > 0 ? x : 0.2 * x;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

// Straight-line forward pass, row by row, no shared helpers.
Tensor2 forward_ref(const DenseNet& net, const Tensor2& x) {
    Tensor2 cur = x;
    for (const auto& l : net.layers) {
        Tensor2 next(cur.rows(), l.weight.cols());
        for (std::size_t r = 0; r < cur.rows(); ++r)
            for (std::size_t j = 0; j < l.weight.cols(); ++j) {
                double s = l.bias(0, j);
                for (std::size_t i = 0; i < l.weight.rows(); ++i) s += cur(r, i) * l.weight(i, j);
                next(r, j) = act_ref(l.activation, s);
            }
        cur = next;
    }
    return cur;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

DenseNet random_net(RngStream& rng, std::size_t in, std::size_t out) {
    std::size_t depth = 1 + rng.uniform_index(3);
    std::vector<std::size_t> widths;
    std::vector<Activation> acts;
    const Activation choices[] = {Activation::tanh, Activation::leaky_relu, Activation::relu};
    for (std::size_t i = 0; i + 1 < depth; ++i) {
        widths.push_back(2 + rng.uniform_index(7));
        acts.push_back(choices[rng.uniform_index(3)]);
    }
    widths.push_back(out);
    acts.push_back(Activation::identity);
    DenseNet net = DenseNet::create(in, widths, acts, rng);
    for (auto* p : net.parameters())
        for (auto& v : p->values()) v += 0.1 * rng.normal();
    return net;
}

}  // namespace

TEST_CASE("forward of an all-zero identity net is zero") {
    DenseNet net = DenseNet::zeros(3, {4, 2}, {Activation::identity, Activation::identity});
    Tensor2 x = Tensor2::from_rows({{1, -2, 3}, {0.5, 7, -1}});
    Tensor2 y = forward(net, x);
    CHECK(y == Tensor2(2, 2));
}

TEST_CASE("forward of a 1x1 affine net") {
    DenseNet net = DenseNet::zeros(1, {1}, {Activation::identity});
    net.layers[0].weight(0, 0) = 2;
    net.layers[0].bias(0, 0) = 1;
    CHECK(forward(net, Tensor2::from_rows({{3}}))(0, 0) == 7.0);
}

TEST_CASE("forward matches a straight-line recomputation") {
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        DenseNet net = random_net(rng, 4, 3);
        Tensor2 x = gauss_sample(rng, 5, 4);
        Tensor2 a = forward(net, x), b = forward_ref(net, x);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
        CHECK(forward(net, x) == a);
    }
}

TEST_CASE("forward rejects mismatched input width") {
    RngStream rng(1);
    DenseNet net = DenseNet::create(3, {2}, {Activation::identity}, rng);
    CHECK_THROWS_AS(forward(net, Tensor2(1, 4)), ShapeError);
}

TEST_CASE("validate rejects broken chaining") {
    RngStream rng(1);
    DenseNet net = DenseNet::create(3, {4, 2}, {Activation::relu, Activation::identity}, rng);
    net.layers[1].weight = Tensor2(5, 2);
    CHECK_THROWS_AS(validate(net), ShapeError);
}

TEST_CASE("softmax_xent on equal logits is ln C") {
    Tensor2 logits(3, 4, 0.7);
    std::vector<int> t{0, 3, 2};
    CHECK(softmax_xent(logits, t).loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("softmax_xent on a confident logit pair") {
    Tensor2 logits = Tensor2::from_rows({{10, -10}});
    std::vector<int> t{0};
    double want = std::log1p(std::exp(-20.0));
    CHECK(softmax_xent(logits, t).loss == doctest::Approx(want).epsilon(1e-10));
    CHECK(softmax_xent(logits, t).loss == doctest::Approx(2.06e-9).epsilon(0.01));
}

TEST_CASE("softmax_xent rejects bad input") {
    std::vector<int> t{5};
    CHECK_THROWS(softmax_xent(Tensor2(1, 3), t));
    Tensor2 bad(1, 3);
    bad(0, 1) = std::nan("");
    std::vector<int> t0{0};
    CHECK_THROWS_AS(softmax_xent(bad, t0), NumericError);
}

TEST_CASE("softmax_xent gradient matches finite differences") {
    RngStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor2 logits = gauss_sample(rng, 3, 5);
        std::vector<int> t{static_cast<int>(rng.uniform_index(5)), static_cast<int>(rng.uniform_index(5)),
                           static_cast<int>(rng.uniform_index(5))};
        LossGrad lg = softmax_xent(logits, t);
        const double h = 1e-5;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            Tensor2 p = logits, m = logits;
            p.values()[i] += h;
            m.values()[i] -= h;
            double fd = (softmax_xent(p, t).loss - softmax_xent(m, t).loss) / (2 * h);
            CHECK(rel_err(fd, lg.grad.values()[i]) < 1e-6);
        }
    }
}

TEST_CASE("binary_xent matches log-sigmoid and finite differences") {
    RngStream rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor2 logits = gauss_sample(rng, 4, 1);
        for (auto& v : logits.values()) v *= 3;
        std::vector<int> t{0, 1, 1, 0};
        LossGrad lg = binary_xent(logits, t);
        double want = 0;
        for (std::size_t i = 0; i < 4; ++i) want -= t[i] ? log_sigmoid(logits(i, 0)) : log_sigmoid(-logits(i, 0));
        CHECK(lg.loss == doctest::Approx(want / 4).epsilon(1e-12));
        const double h = 1e-5;
        for (std::size_t i = 0; i < 4; ++i) {
            Tensor2 p = logits, m = logits;
            p(i, 0) += h;
            m(i, 0) -= h;
            double fd = (binary_xent(p, t).loss - binary_xent(m, t).loss) / (2 * h);
            CHECK(rel_err(fd, lg.grad(i, 0)) < 1e-6);
        }
    }
    CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
    CHECK(std::isfinite(log_sigmoid(800.0)));
}

TEST_CASE("backward matches finite differences on random small nets") {
    RngStream rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t in = 1 + rng.uniform_index(6), out = 2 + rng.uniform_index(4);
        DenseNet net = random_net(rng, in, out);
        Tensor2 x = gauss_sample(rng, 4, in);
        std::vector<int> t;
        for (int i = 0; i < 4; ++i) t.push_back(static_cast<int>(rng.uniform_index(out)));
        auto loss_of = [&](const DenseNet& n, const Tensor2& xx) { return softmax_xent(forward(n, xx), t).loss; };

        ForwardTrace tr = forward_trace(net, x);
        LossGrad lg = softmax_xent(tr.output, t);
        GradList grads = zero_grads(net);
        Tensor2 gx = backward(net, tr, lg.grad, grads);

        const double h = 1e-5;
        auto params = net.parameters();
        for (std::size_t p = 0; p < params.size(); ++p)
            for (std::size_t i = 0; i < params[p]->size(); ++i) {
                double keep = params[p]->values()[i];
                params[p]->values()[i] = keep + h;
                double lp = loss_of(net, x);
                params[p]->values()[i] = keep - h;
                double lm = loss_of(net, x);
                params[p]->values()[i] = keep;
                double fd = (lp - lm) / (2 * h);
                // near-zero gradients compare in absolute terms
                if (std::abs(fd - grads[p].values()[i]) > 1e-7) CHECK(rel_err(fd, grads[p].values()[i]) < 1e-4);
            }
        for (std::size_t i = 0; i < x.size(); ++i) {
            Tensor2 p = x, m = x;
            p.values()[i] += h;
            m.values()[i] -= h;
            double fd = (loss_of(net, p) - loss_of(net, m)) / (2 * h);
            if (std::abs(fd - gx.values()[i]) > 1e-7) CHECK(rel_err(fd, gx.values()[i]) < 1e-4);
        }
    }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Tensor2 w = Tensor2::from_rows({{1.5, -2}});
    AdamState st(AdamConfig{}, {&w});
    adam_step({&w}, {Tensor2(1, 2)}, st);
    CHECK(w == Tensor2::from_rows({{1.5, -2}}));
    CHECK(st.step == 1);
    st.first_moment[0](0, 0) = 0.4;
    st.second_moment[0](0, 0) = 0.5;
    adam_step({&w}, {Tensor2(1, 2)}, st);
    CHECK(st.first_moment[0](0, 0) == doctest::Approx(0.2));
    CHECK(st.second_moment[0](0, 0) == doctest::Approx(0.45));
}

TEST_CASE("adam first step moves by about -lr") {
    Tensor2 w = Tensor2::from_rows({{0.25}});
    AdamState st(AdamConfig{}, {&w});
    adam_step({&w}, {Tensor2::from_rows({{1.0}})}, st);
    CHECK(w(0, 0) - 0.25 == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam with lr 0 is the identity and runs are bit-identical") {
    RngStream rng(9);
    DenseNet a = DenseNet::create(3, {4, 2}, {Activation::relu, Activation::identity}, rng);
    DenseNet frozen = a;
    AdamConfig zero;
    zero.lr = 0;
    AdamState st(zero, std::as_const(a).parameters());
    GradList g = zero_grads(a);
    for (auto& t : g) t.fill(0.3);
    adam_step(a.parameters(), g, st);
    for (std::size_t i = 0; i < a.layers.size(); ++i) CHECK(a.layers[i].weight == frozen.layers[i].weight);

    auto run = [&] {
        DenseNet n = frozen;
        AdamState s(AdamConfig{}, std::as_const(n).parameters());
        RngStream r(77);
        for (int k = 0; k < 10; ++k) {
            Tensor2 x = gauss_sample(r, 6, 3);
            std::vector<int> t{0, 1, 0, 1, 1, 0};
            ForwardTrace tr = forward_trace(n, x);
            GradList gg = zero_grads(n);
            backward(n, tr, softmax_xent(tr.output, t).grad, gg);
            adam_step(n.parameters(), gg, s);
        }
        return n;
    };
    DenseNet r1 = run(), r2 = run();
    for (std::size_t i = 0; i < r1.layers.size(); ++i) {
        CHECK(r1.layers[i].weight == r2.layers[i].weight);
        CHECK(r1.layers[i].bias == r2.layers[i].bias);
    }
}

TEST_CASE("adam rejects shape mismatch") {
    Tensor2 w(2, 2);
    AdamState st(AdamConfig{}, {&w});
    CHECK_THROWS_AS(adam_step({&w}, {Tensor2(1, 2)}, st), ShapeError);
}

TEST_CASE("gauss_sample moments and determinism") {
    RngStream rng(123);
    Tensor2 z = gauss_sample(rng, 1000, 100);
    double mean = 0, sq = 0;
    for (double v : z.values()) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : z.values()) sq += (v - mean) * (v - mean);
    double var = sq / static_cast<double>(z.size() - 1);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1) < 0.05);

    RngStream a(5, 17), b(5, 17);
    CHECK(gauss_sample(a, 3, 4) == gauss_sample(b, 3, 4));
    CHECK(a == b);
}

TEST_CASE("rng substream does not advance, split does") {
    RngStream r(42);
    RngStream s1 = r.substream(7), s2 = r.substream(7);
    CHECK(r.counter() == 0);
    CHECK(s1 == s2);
    CHECK(!(r.substream(8) == s1));
    RngStream f = r.split();
    CHECK(r.counter() == 1);
    RngStream g = r.split();
    CHECK(!(f == g));
    RngStream u(42);
    for (int i = 0; i < 1000; ++i) {
        double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        CHECK(u.uniform_index(3) < 3);
    }
}

TEST_CASE("rng draws are a fixed function of seed and counter") {
    RngStream a(1);
    std::uint64_t first = a.next_u64();
    std::uint64_t second = a.next_u64();
    RngStream b(1, 1);
    CHECK(b.next_u64() == second);
    CHECK(first != second);
}

TEST_CASE("matmul variants agree with an explicit loop") {
    RngStream rng(8);
    Tensor2 a = gauss_sample(rng, 3, 4), b = gauss_sample(rng, 4, 2);
    Tensor2 c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-13));
        }
    Tensor2 at(4, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) at(k, i) = a(i, k);
    Tensor2 c2 = matmul_tn(at, b);
    Tensor2 bt(2, 4);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < 2; ++j) bt(j, k) = b(k, j);
    Tensor2 c3 = matmul_nt(a, bt);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c2.values()[i] == doctest::Approx(c.values()[i]).epsilon(1e-13));
        CHECK(c3.values()[i] == doctest::Approx(c.values()[i]).epsilon(1e-13));
    }
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}
