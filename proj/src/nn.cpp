#include "craftrl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "craftrl/common.hpp"
#include "craftrl/kernels.hpp"

namespace craftrl::nn {

namespace K = craftrl::kernels;

void Param::resize(std::string n, std::vector<size_t> s) {
    name = std::move(n);
    shape = std::move(s);
    size_t total = 1;
    for (size_t d : shape) total *= d;
    w.assign(total, 0.0);
    g.assign(total, 0.0);
}

uint64_t Param::value_hash() const { return fnv1a(w.data(), w.size() * sizeof(double)); }

void zero_grads(const ParamRefs& params) {
    for (Param* p : params) p->zero_grad();
}

uint64_t params_hash(const ParamRefs& params) {
    uint64_t h = 1469598103934665603ULL;
    for (const Param* p : params) h = fnv1a(p->w.data(), p->w.size() * sizeof(double), h);
    return h;
}

size_t param_count(const ParamRefs& params) {
    size_t n = 0;
    for (const Param* p : params) n += p->size();
    return n;
}

namespace {

void init_fan_in(Param& W, Param& b, size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : W.w) v = rng.uniform(-bound, bound);
    std::fill(b.w.begin(), b.w.end(), 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in, int out) : in_(in), out_(out) {
    W.resize(name + ".W", {static_cast<size_t>(out), static_cast<size_t>(in)});
    b.resize(name + ".b", {static_cast<size_t>(out)});
}

void Linear::init(Rng& rng) { init_fan_in(W, b, static_cast<size_t>(in_), rng); }

void Linear::forward(const double* x, size_t batch, double* y, std::vector<double>* cache_x) const {
    if (cache_x != nullptr) cache_x->assign(x, x + batch * in_);
    K::active().gemm_nt(y, x, W.w.data(), batch, in_, out_, false);
    for (size_t i = 0; i < batch; ++i) K::active().axpy(y + i * out_, b.w.data(), 1.0, out_);
}

void Linear::backward(const std::vector<double>& cache_x, size_t batch, const double* dy,
                      double* dx, bool param_grads) {
    if (param_grads) {
        // dW[out x in] += dy^T[out x batch] * x[batch x in]
        K::active().gemm_tn(W.g.data(), dy, cache_x.data(), out_, batch, in_, true);
        for (size_t i = 0; i < batch; ++i) K::active().axpy(b.g.data(), dy + i * out_, 1.0, out_);
    }
    if (dx != nullptr) K::active().gemm_nn(dx, dy, W.w.data(), batch, out_, in_, false);
}

// ---------------------------------------------------------------------------
// Conv2d (im2col + gemm)

Conv2d::Conv2d(std::string name, int cin, int cout, int ksize, int stride, int pad)
    : cin_(cin), cout_(cout), k_(ksize), stride_(stride), pad_(pad) {
    W.resize(name + ".W", {static_cast<size_t>(cout), static_cast<size_t>(cin * ksize * ksize)});
    b.resize(name + ".b", {static_cast<size_t>(cout)});
}

void Conv2d::init(Rng& rng) { init_fan_in(W, b, static_cast<size_t>(cin_ * k_ * k_), rng); }

namespace {

void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad, double* cols,
            int ho, int wo) {
    const int patch = cin * k * k;
    for (int pr = 0; pr < patch; ++pr) {
        const int c = pr / (k * k);
        const int kr = (pr / k) % k;
        const int kc = pr % k;
        double* row = cols + static_cast<size_t>(pr) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + kr;
            for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kc;
                row[oy * wo + ox] =
                    (iy >= 0 && ix >= 0 && iy < h && ix < w)
                        ? x[(static_cast<size_t>(c) * h + iy) * w + ix]
                        : 0.0;
            }
        }
    }
}

void col2im(const double* cols, int cin, int h, int w, int k, int stride, int pad, double* dx,
            int ho, int wo) {
    std::memset(dx, 0, static_cast<size_t>(cin) * h * w * sizeof(double));
    const int patch = cin * k * k;
    for (int pr = 0; pr < patch; ++pr) {
        const int c = pr / (k * k);
        const int kr = (pr / k) % k;
        const int kc = pr % k;
        const double* row = cols + static_cast<size_t>(pr) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + kr;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kc;
                if (ix < 0 || ix >= w) continue;
                dx[(static_cast<size_t>(c) * h + iy) * w + ix] += row[oy * wo + ox];
            }
        }
    }
}

}  // namespace

void Conv2d::forward(const double* x, int h, int w, double* y, Cache* cache) const {
    const int ho = out_dim(h), wo = out_dim(w);
    const int patch = cin_ * k_ * k_;
    std::vector<double> local_cols;
    std::vector<double>& cols = cache != nullptr ? cache->cols : local_cols;
    cols.resize(static_cast<size_t>(patch) * ho * wo);
    if (cache != nullptr) {
        cache->hin = h;
        cache->win = w;
    }
    im2col(x, cin_, h, w, k_, stride_, pad_, cols.data(), ho, wo);
    K::active().gemm_nn(y, W.w.data(), cols.data(), cout_, patch, ho * wo, false);
    for (int c = 0; c < cout_; ++c) {
        double bias = b.w[c];
        double* plane = y + static_cast<size_t>(c) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) plane[i] += bias;
    }
}

void Conv2d::backward(const Cache& cache, const double* dy, double* dx, bool param_grads) {
    const int ho = out_dim(cache.hin), wo = out_dim(cache.win);
    const int patch = cin_ * k_ * k_;
    if (param_grads) {
        // dW[cout x patch] += dy[cout x howo] * cols^T
        K::active().gemm_nt(W.g.data(), dy, cache.cols.data(), cout_, ho * wo, patch, true);
        for (int c = 0; c < cout_; ++c)
            b.g[c] += K::active().sum(dy + static_cast<size_t>(c) * ho * wo, ho * wo);
    }
    if (dx != nullptr) {
        std::vector<double> dcols(static_cast<size_t>(patch) * ho * wo);
        // dcols[patch x howo] = W^T[patch x cout] * dy[cout x howo]
        K::active().gemm_tn(dcols.data(), W.w.data(), dy, patch, cout_, ho * wo, false);
        col2im(dcols.data(), cin_, cache.hin, cache.win, k_, stride_, pad_, dx, ho, wo);
    }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::string name, const std::vector<int>& dims) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.emplace_back(name + ".fc" + std::to_string(i), dims[i], dims[i + 1]);
}

void Mlp::init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
}

ParamRefs Mlp::params() {
    ParamRefs out;
    for (auto& l : layers_)
        for (Param* p : l.params()) out.push_back(p);
    return out;
}

void Mlp::forward(const double* x, size_t batch, double* y, Cache* cache) const {
    if (cache != nullptr) {
        cache->xs.assign(layers_.size(), {});
        cache->pre.assign(layers_.size(), {});
        cache->batch = batch;
    }
    std::vector<double> cur(x, x + batch * layers_.front().in());
    for (size_t i = 0; i < layers_.size(); ++i) {
        std::vector<double> next(batch * layers_[i].out());
        layers_[i].forward(cur.data(), batch, next.data(),
                           cache != nullptr ? &cache->xs[i] : nullptr);
        if (cache != nullptr) cache->pre[i] = next;
        if (i + 1 < layers_.size())
            for (auto& v : next) v = v > 0 ? v : 0.0;
        cur = std::move(next);
    }
    std::copy(cur.begin(), cur.end(), y);
}

void Mlp::backward(const Cache& cache, const double* dy, double* dx, bool param_grads) {
    const size_t batch = cache.batch;
    std::vector<double> cur(dy, dy + batch * layers_.back().out());
    for (size_t i = layers_.size(); i-- > 0;) {
        if (i + 1 < layers_.size()) {
            // relu mask from the cached pre-activations of this layer's output
            const auto& pre = cache.pre[i];
            for (size_t j = 0; j < cur.size(); ++j)
                if (pre[j] <= 0) cur[j] = 0.0;
        }
        std::vector<double> prev;
        double* dprev = nullptr;
        if (i > 0) {
            prev.assign(batch * static_cast<size_t>(layers_[i].in()), 0.0);
            dprev = prev.data();
        } else if (dx != nullptr) {
            dprev = dx;
        }
        const_cast<Linear&>(layers_[i]).backward(cache.xs[i], batch, cur.data(), dprev,
                                                 param_grads);
        if (i > 0) cur = std::move(prev);
    }
}

// ---------------------------------------------------------------------------
// ObsEncoder

std::vector<double> ObsEncoder::image(const env::Observation& obs) const {
    return obs.image.to_double();
}

std::vector<double> ObsEncoder::inventory(const env::Observation& obs) const {
    std::vector<double> out(obs.inventory.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = obs.inventory[i] / 8.0;
    return out;
}

std::vector<double> ObsEncoder::pooled(const env::Observation& obs) const {
    const int res = obs.image.height;
    const int pool = res / 8;
    std::vector<double> out(64 + obs.inventory.size(), 0.0);
    const auto& px = obs.image.pixels;
    const size_t plane = static_cast<size_t>(res) * res;
    for (int py = 0; py < 8; ++py)
        for (int px_i = 0; px_i < 8; ++px_i) {
            double acc = 0.0;
            int count = 0;
            for (int ch = 0; ch < obs.image.channels; ++ch)
                for (int y = py * pool; y < (py + 1) * pool; ++y)
                    for (int x = px_i * pool; x < (px_i + 1) * pool; ++x) {
                        acc += px[ch * plane + static_cast<size_t>(y) * res + x] / 255.0;
                        ++count;
                    }
            out[py * 8 + px_i] = acc / count;
        }
    for (size_t i = 0; i < obs.inventory.size(); ++i) out[64 + i] = obs.inventory[i] / 8.0;
    return out;
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(const FeatureDims& dims)
    : dims_(dims),
      conv1_("feat.conv1", 3, 8, 3, 2, 1),
      conv2_("feat.conv2", 8, 8, 3, 2, 1),
      mix_("feat.mix", 12, 1, 1, 1, 0),
      inv_embed_("feat.inv_embed", dims.n_items, 4) {
    if (dims.image_res == 64)
        pool2_ = true;
    else if (dims.image_res != 32)
        throw ConfigError("feature extractor requires image_resolution 32 or 64");
}

void FeatureExtractor::init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    mix_.init(rng);
    inv_embed_.init(rng);
}

ParamRefs FeatureExtractor::params() {
    ParamRefs out;
    for (auto* layer : {&conv1_, &conv2_, &mix_})
        for (Param* p : layer->params()) out.push_back(p);
    for (Param* p : inv_embed_.params()) out.push_back(p);
    return out;
}

void FeatureExtractor::forward(const double* image, const double* inventory, double* f,
                               Cache* cache) const {
    const int res = dims_.image_res;
    const int r1 = res / 2, r2 = res / 4;
    Cache local;
    Cache& cc = cache != nullptr ? *cache : local;

    cc.h1.resize(static_cast<size_t>(8) * r1 * r1);
    conv1_.forward(image, res, res, cc.h1.data(), &cc.c1);
    for (auto& v : cc.h1) v = v > 0 ? v : 0.0;

    cc.h2.resize(static_cast<size_t>(8) * r2 * r2);
    conv2_.forward(cc.h1.data(), r1, r1, cc.h2.data(), &cc.c2);
    for (auto& v : cc.h2) v = v > 0 ? v : 0.0;

    const int fh = FeatureDims::feat_h, fw = FeatureDims::feat_w;
    if (pool2_) {
        cc.pool.assign(static_cast<size_t>(8) * fh * fw, 0.0);
        for (int c = 0; c < 8; ++c)
            for (int y = 0; y < fh; ++y)
                for (int x = 0; x < fw; ++x) {
                    double acc = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            acc += cc.h2[(static_cast<size_t>(c) * r2 + 2 * y + dy) * r2 + 2 * x +
                                         dx];
                    cc.pool[(static_cast<size_t>(c) * fh + y) * fw + x] = acc / 4.0;
                }
    } else {
        cc.pool = cc.h2;
    }

    std::vector<double> embed(4);
    inv_embed_.forward(inventory, 1, embed.data(), &cc.inv_x);

    cc.concat.resize(static_cast<size_t>(12) * fh * fw);
    std::copy(cc.pool.begin(), cc.pool.end(), cc.concat.begin());
    for (int j = 0; j < 4; ++j)
        std::fill_n(cc.concat.begin() + static_cast<size_t>(8 + j) * fh * fw, fh * fw, embed[j]);

    cc.pre_f.resize(static_cast<size_t>(fh) * fw);
    mix_.forward(cc.concat.data(), fh, fw, cc.pre_f.data(), &cc.c3);
    for (int i = 0; i < fh * fw; ++i) f[i] = cc.pre_f[i] > 0 ? cc.pre_f[i] : 0.0;
}

void FeatureExtractor::backward(const Cache& cache, const double* df, double* dimage,
                                bool param_grads) {
    const int fh = FeatureDims::feat_h, fw = FeatureDims::feat_w;
    std::vector<double> dpre(static_cast<size_t>(fh) * fw);
    for (int i = 0; i < fh * fw; ++i) dpre[i] = cache.pre_f[i] > 0 ? df[i] : 0.0;

    std::vector<double> dconcat(static_cast<size_t>(12) * fh * fw);
    mix_.backward(cache.c3, dpre.data(), dconcat.data(), param_grads);
    backward_from_concat(cache, dconcat.data(), dimage, param_grads);
}

void FeatureExtractor::backward_from_concat(const Cache& cache, const double* dconcat,
                                            double* dimage, bool param_grads) {
    const int res = dims_.image_res;
    const int r1 = res / 2, r2 = res / 4;
    const int fh = FeatureDims::feat_h, fw = FeatureDims::feat_w;

    std::vector<double> dembed(4);
    for (int j = 0; j < 4; ++j)
        dembed[j] = K::active().sum(dconcat + static_cast<size_t>(8 + j) * fh * fw, fh * fw);
    inv_embed_.backward(cache.inv_x, 1, dembed.data(), nullptr, param_grads);

    std::vector<double> dh2(static_cast<size_t>(8) * r2 * r2, 0.0);
    if (pool2_) {
        for (int c = 0; c < 8; ++c)
            for (int y = 0; y < fh; ++y)
                for (int x = 0; x < fw; ++x) {
                    double v = dconcat[(static_cast<size_t>(c) * fh + y) * fw + x] / 4.0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            dh2[(static_cast<size_t>(c) * r2 + 2 * y + dy) * r2 + 2 * x + dx] = v;
                }
    } else {
        std::copy_n(dconcat, dh2.size(), dh2.begin());
    }
    for (size_t i = 0; i < dh2.size(); ++i)
        if (cache.h2[i] <= 0) dh2[i] = 0.0;

    std::vector<double> dh1(static_cast<size_t>(8) * r1 * r1);
    conv2_.backward(cache.c2, dh2.data(), dh1.data(), param_grads);
    for (size_t i = 0; i < dh1.size(); ++i)
        if (cache.h1[i] <= 0) dh1[i] = 0.0;

    conv1_.backward(cache.c1, dh1.data(), dimage, param_grads);
}

// ---------------------------------------------------------------------------
// MaskNet

MaskNet::MaskNet(int k_actions, int in_channels, int embed, int hidden)
    : k_(k_actions),
      in_ch_(in_channels),
      embed_(embed),
      act_embed_("mask.embed", k_actions, embed),
      conv1_("mask.conv1", in_channels + embed, hidden, 1, 1, 0),
      conv2_("mask.conv2", hidden, 1, 1, 1, 0) {}

void MaskNet::init(Rng& rng) {
    act_embed_.init(rng);
    conv1_.init(rng);
    conv2_.init(rng);
    // start masks mostly closed (sigmoid(-2) ~ 0.12): the two-part loss then
    // opens cells whose dynamics resist prediction and keeps closing the
    // predictable ones, instead of sweeping everything through saturation
    std::fill(conv2_.b.w.begin(), conv2_.b.w.end(), -2.0);
}

ParamRefs MaskNet::params() {
    ParamRefs out;
    for (Param* p : act_embed_.params()) out.push_back(p);
    for (auto* layer : {&conv1_, &conv2_})
        for (Param* p : layer->params()) out.push_back(p);
    return out;
}

void MaskNet::forward(const double* state, int action, double* m, Cache* cache) const {
    if (action < 0 || action >= k_)
        throw ValueError("mask action index " + std::to_string(action) + " out of range [0," +
                         std::to_string(k_) + ")");
    const int fh = FeatureDims::feat_h, fw = FeatureDims::feat_w;
    Cache local;
    Cache& cc = cache != nullptr ? *cache : local;

    cc.onehot.assign(k_, 0.0);
    cc.onehot[action] = 1.0;
    std::vector<double> embed(embed_);
    act_embed_.forward(cc.onehot.data(), 1, embed.data(), nullptr);

    cc.x.resize(static_cast<size_t>(in_ch_ + embed_) * fh * fw);
    std::copy_n(state, static_cast<size_t>(in_ch_) * fh * fw, cc.x.begin());
    for (int j = 0; j < embed_; ++j)
        std::fill_n(cc.x.begin() + static_cast<size_t>(in_ch_ + j) * fh * fw, fh * fw, embed[j]);

    cc.h.resize(static_cast<size_t>(conv1_.cout()) * fh * fw);
    conv1_.forward(cc.x.data(), fh, fw, cc.h.data(), &cc.c1);
    for (auto& v : cc.h) v = v > 0 ? v : 0.0;

    cc.pre.resize(static_cast<size_t>(fh) * fw);
    conv2_.forward(cc.h.data(), fh, fw, cc.pre.data(), &cc.c2);
    cc.m.resize(cc.pre.size());
    for (size_t i = 0; i < cc.pre.size(); ++i) cc.m[i] = sigmoid(cc.pre[i]);
    std::copy(cc.m.begin(), cc.m.end(), m);
}

void MaskNet::backward(const Cache& cache, const double* dm, double* dstate, bool param_grads) {
    const int fh = FeatureDims::feat_h, fw = FeatureDims::feat_w;
    std::vector<double> dpre(cache.m.size());
    for (size_t i = 0; i < cache.m.size(); ++i) dpre[i] = dm[i] * cache.m[i] * (1.0 - cache.m[i]);

    std::vector<double> dh(cache.h.size());
    conv2_.backward(cache.c2, dpre.data(), dh.data(), param_grads);
    for (size_t i = 0; i < dh.size(); ++i)
        if (cache.h[i] <= 0) dh[i] = 0.0;

    std::vector<double> dx(static_cast<size_t>(in_ch_ + embed_) * fh * fw);
    conv1_.backward(cache.c1, dh.data(), dx.data(), param_grads);

    if (dstate != nullptr) std::copy_n(dx.begin(), static_cast<size_t>(in_ch_) * fh * fw, dstate);
    if (param_grads) {
        std::vector<double> dembed(embed_);
        for (int j = 0; j < embed_; ++j)
            dembed[j] = K::active().sum(dx.data() + static_cast<size_t>(in_ch_ + j) * fh * fw,
                                        fh * fw);
        act_embed_.backward(cache.onehot, 1, dembed.data(), nullptr, true);
    }
}

// ---------------------------------------------------------------------------
// Projection

Projection::Projection(int k_actions, int dim) : k_(k_actions), dim_(dim) {
    for (int a = 0; a < k_actions; ++a)
        maps_.emplace_back("proj." + std::to_string(a), dim, dim);
}

void Projection::init(Rng& rng) {
    for (auto& m : maps_) m.init(rng);
}

void Projection::init_identity() {
    for (auto& m : maps_) {
        std::fill(m.W.w.begin(), m.W.w.end(), 0.0);
        for (int i = 0; i < dim_; ++i) m.W.w[static_cast<size_t>(i) * dim_ + i] = 1.0;
        std::fill(m.b.w.begin(), m.b.w.end(), 0.0);
    }
}

void Projection::forward(const double* f, int action, double* out) const {
    if (action < 0 || action >= k_)
        throw ValueError("projection action index " + std::to_string(action) + " out of range");
    maps_[action].forward(f, 1, out, nullptr);
}

void Projection::backward(const double* f, int action, const double* dout, double* df,
                          bool param_grads) {
    std::vector<double> x(f, f + dim_);
    maps_[action].backward(x, 1, dout, df, param_grads);
}

ParamRefs Projection::params() {
    ParamRefs out;
    for (auto& m : maps_)
        for (Param* p : m.params()) out.push_back(p);
    return out;
}

ParamRefs Projection::params_for(int action) { return maps_[action].params(); }

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParamRefs params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param& p = *params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < p.size(); ++i) {
            double g = p.g[i];
            m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// grad_check

GradCheckReport grad_check(const std::function<double()>& loss_fn, const ParamRefs& params,
                           Rng& rng, size_t samples_per_param) {
    double base = loss_fn();
    if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite");

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Param* p : params) analytic.push_back(p->g);

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        if (p.size() == 0) continue;
        std::vector<size_t> idx;
        if (p.size() <= samples_per_param) {
            for (size_t i = 0; i < p.size(); ++i) idx.push_back(i);
        } else {
            for (size_t s = 0; s < samples_per_param; ++s) idx.push_back(rng.index(p.size()));
        }
        for (size_t i : idx) {
            const double orig = p.w[i];
            const double h = 1e-5 * std::max(1.0, std::abs(orig));
            p.w[i] = orig + h;
            double lp = loss_fn();
            p.w[i] = orig - h;
            double lm = loss_fn();
            p.w[i] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("grad_check: perturbed loss is not finite");
            const double fd = (lp - lm) / (2.0 * h);
            const double g = analytic[pi][i];
            const double abs_err = std::abs(fd - g);
            const double denom = std::max(std::abs(fd), std::abs(g));
            double rel = denom < 1e-7 ? 0.0 : abs_err / denom;
            ++report.checked;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    // restore analytic grads for the caller
    loss_fn();
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw FormatError("truncated checkpoint", -1);
    return v;
}

void write_string(std::ofstream& f, const std::string& s) {
    write_pod<uint32_t>(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& f) {
    uint32_t n = read_pod<uint32_t>(f);
    if (n > (1u << 20)) throw FormatError("implausible string length in checkpoint", -1);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw FormatError("truncated checkpoint string", -1);
    return s;
}

constexpr uint32_t kCheckpointMagic = 0x4b435743;  // "CWCK"
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Param*>>& tensors,
                     const std::map<std::string, uint64_t>& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open checkpoint for writing: " + path);
    write_pod<uint32_t>(f, kCheckpointMagic);
    write_pod<uint32_t>(f, kCheckpointVersion);
    write_pod<uint32_t>(f, static_cast<uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        write_string(f, k);
        write_pod<uint64_t>(f, v);
    }
    write_pod<uint32_t>(f, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, p] : tensors) {
        write_string(f, name);
        write_pod<uint32_t>(f, static_cast<uint32_t>(p->shape.size()));
        for (size_t d : p->shape) write_pod<uint64_t>(f, d);
        f.write(reinterpret_cast<const char*>(p->w.data()),
                static_cast<std::streamsize>(p->w.size() * sizeof(double)));
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot open checkpoint: " + path);
    if (read_pod<uint32_t>(f) != kCheckpointMagic)
        throw FormatError("bad checkpoint magic", -1);
    uint32_t version = read_pod<uint32_t>(f);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), -1);
    Checkpoint ck;
    uint32_t meta_n = read_pod<uint32_t>(f);
    for (uint32_t i = 0; i < meta_n; ++i) {
        std::string k = read_string(f);
        ck.meta[k] = read_pod<uint64_t>(f);
    }
    uint32_t tensor_n = read_pod<uint32_t>(f);
    for (uint32_t i = 0; i < tensor_n; ++i) {
        std::string name = read_string(f);
        uint32_t ndim = read_pod<uint32_t>(f);
        std::vector<size_t> shape;
        size_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<size_t>(read_pod<uint64_t>(f)));
            total *= shape.back();
        }
        Param p;
        p.resize(name, shape);
        f.read(reinterpret_cast<char*>(p.w.data()),
               static_cast<std::streamsize>(total * sizeof(double)));
        if (!f) throw FormatError("truncated tensor data for " + name, static_cast<long>(i));
        ck.tensors[name] = std::move(p);
    }
    return ck;
}

std::vector<std::pair<std::string, const Param*>> named(const ParamRefs& refs) {
    std::vector<std::pair<std::string, const Param*>> out;
    for (const Param* p : refs) out.emplace_back(p->name, p);
    return out;
}

void restore_params(const Checkpoint& ck, const ParamRefs& refs) {
    for (Param* p : refs) {
        auto it = ck.tensors.find(p->name);
        if (it == ck.tensors.end())
            throw FormatError("checkpoint missing tensor " + p->name, -1);
        if (it->second.w.size() != p->w.size())
            throw FormatError("checkpoint shape mismatch for " + p->name, -1);
        p->w = it->second.w;
    }
}

// ---------------------------------------------------------------------------

void softmax(const double* logits, size_t n, double* probs) {
    double mx = logits[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (size_t i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        z += probs[i];
    }
    for (size_t i = 0; i < n; ++i) probs[i] /= z;
}

double log_sum_exp(const double* logits, size_t n) {
    double mx = logits[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
    return mx + std::log(z);
}

}  // namespace craftrl::nn
