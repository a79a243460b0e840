#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "craftrl/a2rl.hpp"
#include "helpers.hpp"

using namespace craftrl;
using namespace craftrl::a2rl;

namespace {

MaskModel small_model(int k = 3, uint64_t seed = 1) {
    nn::FeatureDims dims;
    MaskModel model(k, dims, 0.1);
    model.init(seed);
    return model;
}

void force_mask_constant(MaskModel& model, double bias) {
    for (nn::Param* p : model.mask.params()) {
        if (p->name == "mask.conv2.b")
            std::fill(p->w.begin(), p->w.end(), bias);
        else if (p->name == "mask.conv2.W")
            std::fill(p->w.begin(), p->w.end(), 0.0);
    }
}

}  // namespace

TEST_CASE("identity projections on static transitions give zero loss") {
    auto ds = testutil::make_patch_dataset(8, 3);
    MaskModel model = small_model();
    model.projections.init_identity();
    // use s == s' so f(s) == f(s')
    std::vector<TransitionSample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back({ds.samples[i].s, i % 3, ds.samples[i].s});
    CHECK(projection_loss_and_grads(model, batch) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("projection training loss trends down on a fixed batch") {
    auto ds = testutil::make_patch_dataset(16, 4);
    MaskModel model = small_model(2, 7);
    std::vector<TransitionSample> batch(ds.samples.begin(), ds.samples.begin() + 16);
    nn::Adam opt(model.projections.params(), {.lr = 1e-3});
    double first = projection_loss_and_grads(model, batch);
    std::vector<double> losses;
    for (int i = 0; i < 100; ++i) losses.push_back(train_projection(model, batch, opt));
    CHECK(losses.back() < first);
    // monotone trend within noise: most consecutive steps do not increase
    int non_increasing = 0;
    for (size_t i = 1; i < losses.size(); ++i)
        if (losses[i] <= losses[i - 1] + 1e-6) ++non_increasing;
    CHECK(non_increasing >= 95);
}

TEST_CASE("projection gradients match finite differences") {
    auto ds = testutil::make_patch_dataset(6, 5);
    MaskModel model = small_model(2, 9);
    std::vector<TransitionSample> batch(ds.samples.begin(), ds.samples.begin() + 6);
    auto loss_fn = [&]() { return projection_loss_and_grads(model, batch); };
    Rng rng(11);
    auto report = nn::grad_check(loss_fn, model.projections.params(), rng, 4);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("mask loss decomposition is exact and eta-weighted") {
    auto ds = testutil::make_patch_dataset(12, 6);
    MaskModel model = small_model(2, 13);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<TransitionSample> batch(ds.samples.begin() + trial,
                                            ds.samples.begin() + trial + 6);
        auto losses = mask_loss_and_grads(model, batch);
        CHECK(std::abs(losses.total - (losses.l1 + 0.1 * losses.l2)) < 1e-6);
        CHECK(losses.l2 <= 0.0);  // negative of a norm
    }
}

TEST_CASE("forcing m == 0 reduces the L1 term to the projection loss") {
    auto ds = testutil::make_patch_dataset(10, 7);
    MaskModel model = small_model(2, 17);
    force_mask_constant(model, -40.0);  // sigmoid(-40) ~ 0
    std::vector<TransitionSample> batch(ds.samples.begin(), ds.samples.begin() + 10);
    auto mask_losses = mask_loss_and_grads(model, batch);
    double proj_loss = projection_loss_and_grads(model, batch);
    CHECK(mask_losses.l1 == doctest::Approx(proj_loss).epsilon(1e-9));
}

TEST_CASE("mask gradients match finite differences") {
    auto ds = testutil::make_patch_dataset(6, 8);
    MaskModel model = small_model(2, 19);
    std::vector<TransitionSample> batch(ds.samples.begin(), ds.samples.begin() + 6);
    auto loss_fn = [&]() { return mask_loss_and_grads(model, batch).total; };
    Rng rng(21);
    auto report = nn::grad_check(loss_fn, model.mask.params(), rng, 6);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("train_mask never touches theta or psi; train_projection never touches phi") {
    auto ds = testutil::make_patch_dataset(8, 9);
    MaskModel model = small_model(2, 23);
    std::vector<TransitionSample> batch(ds.samples.begin(), ds.samples.begin() + 8);
    nn::Adam mask_opt(model.mask.params(), {.lr = 1e-3});
    nn::Adam proj_opt(model.projections.params(), {.lr = 1e-3});

    uint64_t theta = nn::params_hash(model.feature.params());
    uint64_t psi = nn::params_hash(model.projections.params());
    uint64_t phi = nn::params_hash(model.mask.params());

    train_mask(model, batch, mask_opt);
    CHECK(nn::params_hash(model.feature.params()) == theta);
    CHECK(nn::params_hash(model.projections.params()) == psi);
    CHECK(nn::params_hash(model.mask.params()) != phi);

    phi = nn::params_hash(model.mask.params());
    train_projection(model, batch, proj_opt);
    CHECK(nn::params_hash(model.feature.params()) == theta);
    CHECK(nn::params_hash(model.mask.params()) == phi);
    CHECK(nn::params_hash(model.projections.params()) != psi);
}

TEST_CASE("masked features: identity at m=0, doubling at m=1, bounded between") {
    auto ds = testutil::make_patch_dataset(3, 10);
    MaskModel model = small_model(2, 29);
    const auto& obs = *ds.samples[0].s;
    auto f = model.features(obs);

    force_mask_constant(model, -40.0);
    auto lo = masked_features(model, obs, 0);
    for (int i = 0; i < 64; ++i) CHECK(lo[i] == doctest::Approx(f[i]).epsilon(1e-9));

    force_mask_constant(model, 40.0);
    auto hi = masked_features(model, obs, 0);
    for (int i = 0; i < 64; ++i) CHECK(hi[i] == doctest::Approx(2.0 * f[i]).epsilon(1e-9));

    MaskModel fresh = small_model(2, 31);
    auto f2 = fresh.features(obs);
    auto mid = masked_features(fresh, obs, 1);
    for (int i = 0; i < 64; ++i) {
        CHECK(mid[i] >= f2[i] - 1e-12);
        CHECK(mid[i] <= 2.0 * f2[i] + 1e-12);
    }
}

TEST_CASE("mask outputs stay in [0,1] throughout training") {
    auto ds = testutil::make_patch_dataset(24, 11);
    MaskModel model = small_model(2, 37);
    nn::Adam proj_opt(model.projections.params(), {.lr = 1e-3});
    nn::Adam mask_opt(model.mask.params(), {.lr = 1e-3});
    Rng rng(41);
    std::vector<double> m(64);
    for (int round = 0; round < 5; ++round) {
        train_projection_rounds(model, ds.samples, proj_opt, rng, 20, 8);
        train_mask_rounds(model, ds.samples, mask_opt, rng, 20, 8);
        for (int i = 0; i < 4; ++i) {
            auto state = model.state_forward(*ds.samples[i].s);
            model.mask.forward(state.mask_input(), ds.samples[i].action, m.data(), nullptr);
            for (double v : m) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("saliency: zero mask net gives zero map; shape matches the image") {
    auto ds = testutil::make_patch_dataset(2, 12);
    MaskModel model = small_model(2, 43);
    for (nn::Param* p : model.mask.params()) std::fill(p->w.begin(), p->w.end(), 0.0);
    auto sal = saliency(model, *ds.samples[0].s, 0);
    CHECK(sal.size() == static_cast<size_t>(3 * 32 * 32));
    for (double v : sal) CHECK(v == 0.0);

    MaskModel fresh = small_model(2, 47);
    auto sal2 = saliency(fresh, *ds.samples[0].s, 0);
    CHECK(sal2.size() == static_cast<size_t>(3 * 32 * 32));
    double mx = 0;
    for (double v : sal2) {
        CHECK(v >= 0.0);
        mx = std::max(mx, v);
    }
    CHECK(mx == doctest::Approx(1.0));
}

TEST_CASE("trained mask saliency concentrates on the changed patch") {
    auto ds = testutil::make_patch_dataset(160, 13);
    MaskModel model = small_model(2, 53);
    nn::Adam proj_opt(model.projections.params(), {.lr = 3e-3});
    nn::Adam mask_opt(model.mask.params(), {.lr = 3e-3});
    Rng rng(59);
    for (int round = 0; round < 4; ++round) {
        train_projection_rounds(model, ds.samples, proj_opt, rng, 200, 32);
        train_mask_rounds(model, ds.samples, mask_opt, rng, 200, 32);
    }

    double in_total = 0, out_total = 0;
    int evaluated = 0;
    for (size_t i = 0; i < ds.samples.size() && evaluated < 40; i += 2) {  // attack samples
        auto sal = saliency(model, *ds.samples[i].s, testutil::PatchDataset::kAttack);
        auto [in_mean, out_mean] = testutil::saliency_region_means(
            sal, ds.res, ds.patch, ds.patch_origin[i].first, ds.patch_origin[i].second);
        in_total += in_mean;
        out_total += out_mean;
        ++evaluated;
    }
    CAPTURE(in_total);
    CAPTURE(out_total);
    CHECK(in_total > 2.0 * out_total);
}
