#pragma once

// Differentiable parametric functions used by the pipeline: linear and conv
// layers with explicit forward caches, small composites (feature extractor,
// mask net, per-action projections, MLP heads), Adam, a finite-difference
// gradient checker, and self-describing binary checkpoints. All math is
// double precision on top of the kernels layer.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "craftrl/env.hpp"
#include "craftrl/rng.hpp"

namespace craftrl::nn {

struct Param {
    std::string name;
    std::vector<size_t> shape;
    std::vector<double> w;
    std::vector<double> g;

    void resize(std::string n, std::vector<size_t> s);
    size_t size() const { return w.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
    uint64_t value_hash() const;
};

using ParamRefs = std::vector<Param*>;

void zero_grads(const ParamRefs& params);
uint64_t params_hash(const ParamRefs& params);
size_t param_count(const ParamRefs& params);

// ---------------------------------------------------------------------------

class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out);
    void init(Rng& rng);

    // y[batch x out] = x[batch x in] * W^T + b; cache_x receives a copy of x
    void forward(const double* x, size_t batch, double* y, std::vector<double>* cache_x) const;
    // accumulates into W.g/b.g when param_grads; writes dx when non-null
    void backward(const std::vector<double>& cache_x, size_t batch, const double* dy, double* dx,
                  bool param_grads = true);

    int in() const { return in_; }
    int out() const { return out_; }
    ParamRefs params() { return {&W, &b}; }
    Param W, b;

private:
    int in_ = 0, out_ = 0;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int cin, int cout, int ksize, int stride, int pad);
    void init(Rng& rng);

    int out_dim(int in_dim) const { return (in_dim + 2 * pad_ - k_) / stride_ + 1; }

    struct Cache {
        std::vector<double> cols;
        int hin = 0, win = 0;
    };

    // single sample: x[cin x h x w] -> y[cout x ho x wo]
    void forward(const double* x, int h, int w, double* y, Cache* cache) const;
    void backward(const Cache& cache, const double* dy, double* dx, bool param_grads = true);

    int cin() const { return cin_; }
    int cout() const { return cout_; }
    ParamRefs params() { return {&W, &b}; }
    Param W, b;

private:
    int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 0, pad_ = 0;
};

// Fully connected stack with ReLU between layers, linear output.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::string name, const std::vector<int>& dims);
    void init(Rng& rng);

    struct Cache {
        std::vector<std::vector<double>> xs;   // input to each layer
        std::vector<std::vector<double>> pre;  // pre-activation outputs
        size_t batch = 0;
    };

    void forward(const double* x, size_t batch, double* y, Cache* cache) const;
    void backward(const Cache& cache, const double* dy, double* dx, bool param_grads = true);

    int in() const { return layers_.front().in(); }
    int out() const { return layers_.back().out(); }
    ParamRefs params();

private:
    std::vector<Linear> layers_;
};

// ---------------------------------------------------------------------------
// Observation encodings

struct ObsEncoder {
    int image_channels = 3, image_res = 32, n_items = 9;

    size_t image_size() const {
        return static_cast<size_t>(image_channels) * image_res * image_res;
    }
    // CHW in [0,1]
    std::vector<double> image(const env::Observation& obs) const;
    // counts scaled by 1/8
    std::vector<double> inventory(const env::Observation& obs) const;
    // channel-mean image average-pooled to 8x8 (64) + inventory: the compact
    // state vector consumed by the discriminator and craft-stage policies
    std::vector<double> pooled(const env::Observation& obs) const;
    int pooled_dim() const { return 64 + n_items; }
};

// ---------------------------------------------------------------------------
// Feature extractor f_theta: conv stack over the image + broadcast inventory
// embedding -> spatial map H x W (8 x 8), nonnegative.

struct FeatureDims {
    int image_res = 32;  // 32 or 64
    int n_items = 9;
    static constexpr int feat_h = 8;
    static constexpr int feat_w = 8;
    static constexpr int feat_size = feat_h * feat_w;
    // channels of the pre-mix spatial state features (conv trunk + broadcast
    // inventory embedding); the mask net conditions on these
    static constexpr int state_channels = 12;
};

class FeatureExtractor {
public:
    FeatureExtractor() = default;
    explicit FeatureExtractor(const FeatureDims& dims);
    void init(Rng& rng);

    struct Cache {
        Conv2d::Cache c1, c2, c3;
        std::vector<double> h1, h2, pool, concat, inv_x, pre_f;
        std::vector<double> image;  // kept for completeness
    };

    // image: CHW double in [0,1]; inventory: scaled counts; f: 64 values >= 0
    void forward(const double* image, const double* inventory, double* f, Cache* cache) const;
    // df -> param grads (optional) and d(image) (optional, for saliency)
    void backward(const Cache& cache, const double* df, double* dimage, bool param_grads = true);
    // gradient entry for consumers of the pre-mix state features
    void backward_from_concat(const Cache& cache, const double* dconcat, double* dimage,
                              bool param_grads = true);

    const FeatureDims& dims() const { return dims_; }
    ParamRefs params();

private:
    FeatureDims dims_;
    Conv2d conv1_, conv2_, mix_;
    Linear inv_embed_;
    bool pool2_ = false;  // res 64 -> extra 2x2 average pool
};

// ---------------------------------------------------------------------------
// Mask net m_phi(s, a): reads the pre-mix spatial state features, conditions
// on the action by a one-hot cluster embedding broadcast channel-wise, and
// squashes through a sigmoid to [0,1]^{HxW}. 1x1 convolutions keep each mask
// cell's input gradient confined to that cell's image receptive field.

class MaskNet {
public:
    MaskNet() = default;
    MaskNet(int k_actions, int in_channels = FeatureDims::state_channels, int embed = 4,
            int hidden = 8);
    void init(Rng& rng);

    struct Cache {
        Conv2d::Cache c1, c2;
        std::vector<double> x, h, pre, m;
        std::vector<double> onehot;
    };

    // state: in_channels x 64 spatial features; action in [0, k)
    void forward(const double* state, int action, double* m, Cache* cache) const;
    void backward(const Cache& cache, const double* dm, double* dstate, bool param_grads = true);

    int k() const { return k_; }
    int in_channels() const { return in_ch_; }
    ParamRefs params();

private:
    int k_ = 0, in_ch_ = FeatureDims::state_channels, embed_ = 4;
    Linear act_embed_;
    Conv2d conv1_, conv2_;
};

// ---------------------------------------------------------------------------
// Per-action linear projections g_{psi_a} on the flattened feature vector.

class Projection {
public:
    Projection() = default;
    explicit Projection(int k_actions, int dim = FeatureDims::feat_size);
    void init(Rng& rng);
    void init_identity();  // W_a = I, b_a = 0

    void forward(const double* f, int action, double* out) const;
    // accumulates param grads for action a; optionally writes df
    void backward(const double* f, int action, const double* dout, double* df,
                  bool param_grads = true);

    int k() const { return k_; }
    int dim() const { return dim_; }
    ParamRefs params();
    ParamRefs params_for(int action);

private:
    int k_ = 0, dim_ = 0;
    std::vector<Linear> maps_;
};

// ---------------------------------------------------------------------------
// Optimizer config + Adam ("all models optimized with Adam").

struct OptimizerConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(ParamRefs params, OptimizerConfig cfg);
    void step();
    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }

private:
    ParamRefs params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking: analytic gradients vs central finite differences on a
// random parameter subsample. loss_fn must zero grads, recompute the loss and
// fill analytic grads. Throws NumericError on non-finite loss.

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    size_t checked = 0;
    std::string worst_param;
};

GradCheckReport grad_check(const std::function<double()>& loss_fn, const ParamRefs& params,
                           Rng& rng, size_t samples_per_param = 8);

// ---------------------------------------------------------------------------
// Checkpoints: magic, format version, metadata (name -> u64), named tensors.

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Param*>>& tensors,
                     const std::map<std::string, uint64_t>& meta);

struct Checkpoint {
    std::map<std::string, uint64_t> meta;
    std::map<std::string, Param> tensors;
};
Checkpoint load_checkpoint(const std::string& path);

// convenience: gather named params from refs
std::vector<std::pair<std::string, const Param*>> named(const ParamRefs& refs);
void restore_params(const Checkpoint& ck, const ParamRefs& refs);

// ---------------------------------------------------------------------------
// math helpers

void softmax(const double* logits, size_t n, double* probs);
double log_sum_exp(const double* logits, size_t n);
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

}  // namespace craftrl::nn
