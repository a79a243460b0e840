#pragma once

// Action-aware representation learning: per-action linear projections trained
// by one-step latent prediction, mask nets trained by the two-part masked
// prediction loss on top of frozen projections, masked-feature integration
// for policy/value heads, and input-gradient saliency maps.

#include <vector>

#include "craftrl/nn.hpp"

namespace craftrl::a2rl {

struct TransitionSample {
    const env::Observation* s = nullptr;
    int action = 0;  // cluster index
    const env::Observation* next = nullptr;
};

struct MaskModel {
    nn::FeatureExtractor feature;   // theta
    nn::MaskNet mask;               // phi
    nn::Projection projections;     // psi_a
    double eta = 0.1;
    int k = 0;
    nn::ObsEncoder encoder;

    MaskModel() = default;
    MaskModel(int k_actions, const nn::FeatureDims& dims, double eta_tradeoff = 0.1);
    void init(uint64_t seed);

    std::vector<double> features(const env::Observation& obs) const;

    // f plus the trunk cache whose concat plane feeds the mask net
    struct StateForward {
        std::vector<double> f;
        nn::FeatureExtractor::Cache cache;
        const double* mask_input() const { return cache.concat.data(); }
    };
    StateForward state_forward(const env::Observation& obs) const;
};

// Mean L2-norm prediction loss of the projections; fills psi grads only.
double projection_loss_and_grads(MaskModel& model, const std::vector<TransitionSample>& batch);

// One optimizer step on psi; returns batch loss.
double train_projection(MaskModel& model, const std::vector<TransitionSample>& batch,
                        nn::Adam& proj_opt);

struct MaskLosses {
    double total = 0.0;  // total == l1 + eta * l2 exactly
    double l1 = 0.0;
    double l2 = 0.0;
};

// Two-part mask loss with psi and theta frozen; fills phi grads only.
MaskLosses mask_loss_and_grads(MaskModel& model, const std::vector<TransitionSample>& batch);

// One optimizer step on phi; returns the three loss values.
MaskLosses train_mask(MaskModel& model, const std::vector<TransitionSample>& batch,
                      nn::Adam& mask_opt);

// Fixed-budget stand-ins for "train until convergence": run up to `max_steps`
// minibatch steps, stopping early when improvement over a window falls below
// `plateau`. Returns the last batch loss.
double train_projection_rounds(MaskModel& model, const std::vector<TransitionSample>& data,
                               nn::Adam& opt, Rng& rng, int max_steps = 200, int batch_size = 32,
                               double plateau = 1e-4);
MaskLosses train_mask_rounds(MaskModel& model, const std::vector<TransitionSample>& data,
                             nn::Adam& opt, Rng& rng, int max_steps = 200, int batch_size = 32);

// (1 + m(s,a)) (.) f(s) — the policy-side integration. The value-based (Q)
// integration shares this kernel.
std::vector<double> masked_features(const MaskModel& model, const env::Observation& obs,
                                    int action);
// Same, reusing a precomputed state forward pass.
std::vector<double> masked_features_from(const MaskModel& model,
                                         const MaskModel::StateForward& state, int action);

// |d(sum m)/d(image)| per pixel, max-normalized to [0,1]; image-shaped (CHW).
std::vector<double> saliency(MaskModel& model, const env::Observation& obs, int action);

}  // namespace craftrl::a2rl
