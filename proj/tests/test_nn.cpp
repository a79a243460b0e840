#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "craftrl/nn.hpp"

using namespace craftrl;
using namespace craftrl::nn;

TEST_CASE("grad_check on a quadratic loss is exact to 1e-6") {
    Param p;
    p.resize("p", {16});
    Rng rng(1);
    for (auto& v : p.w) v = rng.gaussian();

    auto loss = [&]() {
        p.zero_grad();
        double L = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            L += p.w[i] * p.w[i];
            p.g[i] = 2.0 * p.w[i];
        }
        return L;
    };
    Rng check_rng(2);
    auto report = grad_check(loss, {&p}, check_rng, 16);
    CHECK(report.max_rel_error < 1e-6);
    CHECK(report.checked == 16);
}

TEST_CASE("linear layer gradients match finite differences") {
    Linear lin("lin", 5, 3);
    Rng rng(3);
    lin.init(rng);
    std::vector<double> x(2 * 5), target(2 * 3);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : target) v = rng.gaussian();

    auto loss = [&]() {
        zero_grads(lin.params());
        std::vector<double> y(2 * 3), cache;
        lin.forward(x.data(), 2, y.data(), &cache);
        double L = 0.0;
        std::vector<double> dy(y.size());
        for (size_t i = 0; i < y.size(); ++i) {
            double d = y[i] - target[i];
            L += 0.5 * d * d;
            dy[i] = d;
        }
        lin.backward(cache, 2, dy.data(), nullptr);
        return L;
    };
    Rng check_rng(4);
    auto report = grad_check(loss, lin.params(), check_rng, 10);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("conv layer gradients (params and input) match finite differences") {
    Conv2d conv("conv", 2, 3, 3, 2, 1);
    Rng rng(5);
    conv.init(rng);
    const int h = 8, w = 8;
    const int ho = conv.out_dim(h), wo = conv.out_dim(w);
    std::vector<double> x(2 * h * w);
    for (auto& v : x) v = rng.gaussian();

    auto loss = [&]() {
        zero_grads(conv.params());
        std::vector<double> y(3 * ho * wo);
        Conv2d::Cache cache;
        conv.forward(x.data(), h, w, y.data(), &cache);
        double L = 0.0;
        std::vector<double> dy(y.size());
        for (size_t i = 0; i < y.size(); ++i) {
            L += std::sin(0.1 * i) * y[i];
            dy[i] = std::sin(0.1 * i);
        }
        conv.backward(cache, dy.data(), nullptr);
        return L;
    };
    Rng check_rng(6);
    auto report = grad_check(loss, conv.params(), check_rng, 12);
    CHECK(report.max_rel_error < 1e-5);

    // input gradient: compare conv backward dx against FD on the input
    std::vector<double> y(3 * ho * wo), dy(3 * ho * wo);
    Conv2d::Cache cache;
    conv.forward(x.data(), h, w, y.data(), &cache);
    for (size_t i = 0; i < dy.size(); ++i) dy[i] = std::sin(0.1 * i);
    std::vector<double> dx(x.size());
    conv.backward(cache, dy.data(), dx.data(), false);
    Rng pick(7);
    for (int trial = 0; trial < 10; ++trial) {
        size_t i = pick.index(x.size());
        double orig = x[i];
        double hstep = 1e-6;
        auto eval = [&]() {
            std::vector<double> yy(3 * ho * wo);
            conv.forward(x.data(), h, w, yy.data(), nullptr);
            double L = 0.0;
            for (size_t j = 0; j < yy.size(); ++j) L += std::sin(0.1 * j) * yy[j];
            return L;
        };
        x[i] = orig + hstep;
        double lp = eval();
        x[i] = orig - hstep;
        double lm = eval();
        x[i] = orig;
        double fd = (lp - lm) / (2 * hstep);
        CHECK(std::abs(fd - dx[i]) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("mlp gradients match finite differences") {
    Mlp mlp("mlp", {7, 6, 4});
    Rng rng(8);
    mlp.init(rng);
    std::vector<double> x(3 * 7);
    for (auto& v : x) v = rng.gaussian();

    auto loss = [&]() {
        zero_grads(mlp.params());
        std::vector<double> y(3 * 4);
        Mlp::Cache cache;
        mlp.forward(x.data(), 3, y.data(), &cache);
        double L = 0.0;
        std::vector<double> dy(y.size());
        for (size_t i = 0; i < y.size(); ++i) {
            L += std::cos(0.3 * i) * y[i] + 0.05 * y[i] * y[i];
            dy[i] = std::cos(0.3 * i) + 0.1 * y[i];
        }
        mlp.backward(cache, dy.data(), nullptr);
        return L;
    };
    Rng check_rng(9);
    auto report = grad_check(loss, mlp.params(), check_rng, 10);
    CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("feature extractor: deterministic init, finite outputs, gradcheck") {
    FeatureDims dims;
    dims.n_items = 9;
    FeatureExtractor fe1(dims), fe2(dims);
    Rng r1(42), r2(42);
    fe1.init(r1);
    fe2.init(r2);
    CHECK(params_hash(fe1.params()) == params_hash(fe2.params()));
    Rng r3(43);
    FeatureExtractor fe3(dims);
    fe3.init(r3);
    CHECK(params_hash(fe1.params()) != params_hash(fe3.params()));

    // zero image -> finite nonnegative outputs
    std::vector<double> img(3 * 32 * 32, 0.0), inv(9, 0.0), f(64);
    fe1.forward(img.data(), inv.data(), f.data(), nullptr);
    for (double v : f) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }

    Rng rng(10);
    for (auto& v : img) v = rng.uniform();
    for (auto& v : inv) v = rng.uniform();
    auto loss = [&]() {
        zero_grads(fe1.params());
        std::vector<double> ff(64);
        FeatureExtractor::Cache cache;
        fe1.forward(img.data(), inv.data(), ff.data(), &cache);
        double L = 0.0;
        std::vector<double> df(64);
        for (int i = 0; i < 64; ++i) {
            L += std::sin(0.2 * i) * ff[i] + 0.01 * ff[i] * ff[i];
            df[i] = std::sin(0.2 * i) + 0.02 * ff[i];
        }
        fe1.backward(cache, df.data(), nullptr);
        return L;
    };
    Rng check_rng(11);
    auto report = grad_check(loss, fe1.params(), check_rng, 6);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("mask net output in [0,1], gradcheck incl. input path") {
    MaskNet mask(5);
    Rng rng(12);
    mask.init(rng);
    std::vector<double> f(FeatureDims::state_channels * 64);
    for (auto& v : f) v = rng.uniform();
    std::vector<double> m(64);
    mask.forward(f.data(), 2, m.data(), nullptr);
    for (double v : m) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(mask.forward(f.data(), 7, m.data(), nullptr), ValueError);

    auto loss = [&]() {
        zero_grads(mask.params());
        std::vector<double> mm(64);
        MaskNet::Cache cache;
        mask.forward(f.data(), 3, mm.data(), &cache);
        double L = 0.0;
        std::vector<double> dm(64);
        for (int i = 0; i < 64; ++i) {
            L += (i % 3 == 0 ? 1.0 : -0.5) * mm[i];
            dm[i] = (i % 3 == 0 ? 1.0 : -0.5);
        }
        mask.backward(cache, dm.data(), nullptr);
        return L;
    };
    Rng check_rng(13);
    auto report = grad_check(loss, mask.params(), check_rng, 8);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("projection identity init maps f to f") {
    Projection proj(3);
    proj.init_identity();
    Rng rng(14);
    std::vector<double> f(64), out(64);
    for (auto& v : f) v = rng.gaussian();
    proj.forward(f.data(), 1, out.data());
    for (int i = 0; i < 64; ++i) CHECK(out[i] == doctest::Approx(f[i]));
    CHECK_THROWS_AS(proj.forward(f.data(), 5, out.data()), ValueError);
}

TEST_CASE("adam reduces a simple quadratic") {
    Param p;
    p.resize("p", {4});
    p.w = {1.0, -2.0, 3.0, -4.0};
    Adam opt({&p}, {.lr = 0.1});
    for (int it = 0; it < 400; ++it) {
        for (size_t i = 0; i < p.size(); ++i) p.g[i] = 2.0 * p.w[i];
        opt.step();
    }
    for (double v : p.w) CHECK(std::abs(v) < 1e-3);
}

TEST_CASE("checkpoint round trip preserves tensors and metadata") {
    Mlp mlp("roundtrip", {4, 3});
    Rng rng(15);
    mlp.init(rng);
    std::string path = "/tmp/craftrl_test_ck.bin";
    save_checkpoint(path, named(mlp.params()), {{"seed", 15}, {"format", 1}});

    Mlp other("roundtrip", {4, 3});
    Rng rng2(99);
    other.init(rng2);
    CHECK(params_hash(mlp.params()) != params_hash(other.params()));
    auto ck = load_checkpoint(path);
    CHECK(ck.meta.at("seed") == 15);
    restore_params(ck, other.params());
    CHECK(params_hash(mlp.params()) == params_hash(other.params()));
    std::remove(path.c_str());
}

TEST_CASE("softmax produces a simplex distribution") {
    std::vector<double> logits = {1.0, 2.0, -1.0, 400.0, 0.0};
    std::vector<double> probs(5);
    softmax(logits.data(), 5, probs.data());
    double total = 0.0;
    for (double p : probs) {
        CHECK(p >= 0.0);
        total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(probs[3] == doctest::Approx(1.0));
}
