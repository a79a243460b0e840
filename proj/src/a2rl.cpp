#include "craftrl/a2rl.hpp"

#include <cmath>

#include "craftrl/common.hpp"
#include "craftrl/kernels.hpp"

namespace craftrl::a2rl {

namespace K = craftrl::kernels;
using nn::FeatureDims;

constexpr int kF = FeatureDims::feat_size;
constexpr double kNormFloor = 1e-12;

MaskModel::MaskModel(int k_actions, const FeatureDims& dims, double eta_tradeoff)
    : feature(dims), mask(k_actions), projections(k_actions), eta(eta_tradeoff), k(k_actions) {
    if (eta < 0) throw ConfigError("a2rl eta must be >= 0");
    encoder.image_res = dims.image_res;
    encoder.n_items = dims.n_items;
}

void MaskModel::init(uint64_t seed) {
    Rng rng(derive_seed(seed, "a2rl"));
    feature.init(rng);
    mask.init(rng);
    projections.init(rng);
}

std::vector<double> MaskModel::features(const env::Observation& obs) const {
    auto img = encoder.image(obs);
    auto inv = encoder.inventory(obs);
    std::vector<double> f(kF);
    feature.forward(img.data(), inv.data(), f.data(), nullptr);
    return f;
}

MaskModel::StateForward MaskModel::state_forward(const env::Observation& obs) const {
    StateForward out;
    auto img = encoder.image(obs);
    auto inv = encoder.inventory(obs);
    out.f.resize(kF);
    feature.forward(img.data(), inv.data(), out.f.data(), &out.cache);
    return out;
}

double projection_loss_and_grads(MaskModel& model, const std::vector<TransitionSample>& batch) {
    if (batch.empty()) throw ValueError("projection loss: empty batch");
    nn::zero_grads(model.projections.params());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> pred(kF), residual(kF), dpred(kF);
    for (const auto& sample : batch) {
        if (sample.action < 0 || sample.action >= model.k)
            throw ValueError("projection loss: action index out of range");
        auto f_s = model.features(*sample.s);
        auto f_sp = model.features(*sample.next);
        model.projections.forward(f_s.data(), sample.action, pred.data());
        K::active().sub(residual.data(), pred.data(), f_sp.data(), kF);
        double n = std::sqrt(K::active().dot(residual.data(), residual.data(), kF));
        loss += n * inv_b;
        if (n < kNormFloor) continue;
        K::active().scale(dpred.data(), residual.data(), inv_b / n, kF);
        model.projections.backward(f_s.data(), sample.action, dpred.data(), nullptr, true);
    }
    return loss;
}

double train_projection(MaskModel& model, const std::vector<TransitionSample>& batch,
                        nn::Adam& proj_opt) {
    double loss = projection_loss_and_grads(model, batch);
    proj_opt.step();
    return loss;
}

MaskLosses mask_loss_and_grads(MaskModel& model, const std::vector<TransitionSample>& batch) {
    if (batch.empty()) throw ValueError("mask loss: empty batch");
    nn::zero_grads(model.mask.params());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    MaskLosses out;
    std::vector<double> m(kF), u(kF), v(kF), pred(kF), residual(kF), dpred(kF), du(kF), dv(kF),
        dm(kF), one_minus_m(kF);
    for (const auto& sample : batch) {
        auto state = model.state_forward(*sample.s);
        const auto& f_s = state.f;
        auto f_sp = model.features(*sample.next);
        nn::MaskNet::Cache cache;
        model.mask.forward(state.mask_input(), sample.action, m.data(), &cache);

        std::fill(dm.begin(), dm.end(), 0.0);

        // L1: predict f(s') from (1 - m) (.) f(s) through the frozen g_a
        for (int i = 0; i < kF; ++i) one_minus_m[i] = 1.0 - m[i];
        K::active().hadamard(u.data(), one_minus_m.data(), f_s.data(), kF);
        model.projections.forward(u.data(), sample.action, pred.data());
        K::active().sub(residual.data(), pred.data(), f_sp.data(), kF);
        double n1 = std::sqrt(K::active().dot(residual.data(), residual.data(), kF));
        out.l1 += n1 * inv_b;
        if (n1 >= kNormFloor) {
            K::active().scale(dpred.data(), residual.data(), inv_b / n1, kF);
            model.projections.backward(u.data(), sample.action, dpred.data(), du.data(), false);
            for (int i = 0; i < kF; ++i) dm[i] += -du[i] * f_s[i];
        }

        // L2: negative prediction error from m (.) f(s)
        K::active().hadamard(v.data(), m.data(), f_s.data(), kF);
        model.projections.forward(v.data(), sample.action, pred.data());
        K::active().sub(residual.data(), pred.data(), f_sp.data(), kF);
        double n2 = std::sqrt(K::active().dot(residual.data(), residual.data(), kF));
        out.l2 += -n2 * inv_b;
        if (n2 >= kNormFloor) {
            K::active().scale(dpred.data(), residual.data(), -inv_b / n2, kF);
            model.projections.backward(v.data(), sample.action, dpred.data(), dv.data(), false);
            for (int i = 0; i < kF; ++i) dm[i] += model.eta * dv[i] * f_s[i];
        }

        model.mask.backward(cache, dm.data(), nullptr, true);
    }
    out.total = out.l1 + model.eta * out.l2;
    return out;
}

MaskLosses train_mask(MaskModel& model, const std::vector<TransitionSample>& batch,
                      nn::Adam& mask_opt) {
    MaskLosses losses = mask_loss_and_grads(model, batch);
    mask_opt.step();
    return losses;
}

namespace {

std::vector<TransitionSample> sample_batch(const std::vector<TransitionSample>& data,
                                           int batch_size, Rng& rng) {
    std::vector<TransitionSample> batch;
    batch.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i) batch.push_back(data[rng.index(data.size())]);
    return batch;
}

}  // namespace

double train_projection_rounds(MaskModel& model, const std::vector<TransitionSample>& data,
                               nn::Adam& opt, Rng& rng, int max_steps, int batch_size,
                               double plateau) {
    if (data.empty()) throw ValueError("train_projection_rounds: no data");
    double last = 0.0;
    double window_best = 1e300;
    int since_best = 0;
    for (int step = 0; step < max_steps; ++step) {
        last = train_projection(model, sample_batch(data, batch_size, rng), opt);
        if (last < window_best - plateau) {
            window_best = last;
            since_best = 0;
        } else if (++since_best >= 20) {
            break;
        }
    }
    return last;
}

MaskLosses train_mask_rounds(MaskModel& model, const std::vector<TransitionSample>& data,
                             nn::Adam& opt, Rng& rng, int max_steps, int batch_size) {
    if (data.empty()) throw ValueError("train_mask_rounds: no data");
    MaskLosses last;
    for (int step = 0; step < max_steps; ++step)
        last = train_mask(model, sample_batch(data, batch_size, rng), opt);
    return last;
}

std::vector<double> masked_features_from(const MaskModel& model,
                                         const MaskModel::StateForward& state, int action) {
    std::vector<double> m(kF), out(kF);
    model.mask.forward(state.mask_input(), action, m.data(), nullptr);
    for (int i = 0; i < kF; ++i) out[i] = (1.0 + m[i]) * state.f[i];
    return out;
}

std::vector<double> masked_features(const MaskModel& model, const env::Observation& obs,
                                    int action) {
    return masked_features_from(model, model.state_forward(obs), action);
}

std::vector<double> saliency(MaskModel& model, const env::Observation& obs, int action) {
    auto state = model.state_forward(obs);
    std::vector<double> m(kF);
    nn::MaskNet::Cache mc;
    model.mask.forward(state.mask_input(), action, m.data(), &mc);

    std::vector<double> dm(kF, 1.0);
    std::vector<double> dconcat(static_cast<size_t>(nn::FeatureDims::state_channels) * kF, 0.0);
    std::vector<double> dimg(model.encoder.image_size(), 0.0);
    model.mask.backward(mc, dm.data(), dconcat.data(), false);
    model.feature.backward_from_concat(state.cache, dconcat.data(), dimg.data(), false);

    double mx = 0.0;
    for (auto& v : dimg) {
        v = std::abs(v);
        mx = std::max(mx, v);
    }
    if (mx > 0)
        for (auto& v : dimg) v /= mx;
    return dimg;
}

}  // namespace craftrl::a2rl
