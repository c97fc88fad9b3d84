// SPDX-License-Identifier: Apache-2.0
//
// airsl — split learning over MIMO wireless channels via over-the-air computation
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <functional>
#include <memory>

#include "beamform.hpp"
#include "oac.hpp"

namespace airsl {

// ---------------------------------------------------------------------------
// Constellation quantizer activation
// ---------------------------------------------------------------------------

/// Square QAM-style constellation used as an activation function: each axis
/// carries `levels` equispaced points {-delta, ..., +delta}. levels = 2 per
/// axis is BPSK-like snapping, levels = 4 gives 16QAM.
struct Constellation {
    std::size_t levels = 4;
    double delta = 1.0;
    double delta_r = 1.0;  // per-axis extremes; both equal delta for square QAM
    double delta_i = 1.0;

    Constellation() = default;

    Constellation(std::size_t levels_per_axis, double delta_extreme)
        : levels(levels_per_axis), delta(delta_extreme), delta_r(delta_extreme),
          delta_i(delta_extreme)
    {
        if (levels < 2)
            throw std::invalid_argument("Constellation: need at least 2 levels per axis");
        if (delta <= 0.0)
            throw std::invalid_argument("Constellation: delta must be positive");
    }

    double level(std::size_t m, double extreme) const
    {
        const double n1 = static_cast<double>(levels - 1);
        return extreme * (2.0 * static_cast<double>(m) - n1) / n1;
    }

    /// Nearest axis level. Exact-midpoint ties go to the level of smaller
    /// magnitude; the one doubly tied point (0 between two mirrored levels)
    /// goes to the non-negative level.
    double snap_axis(double x, double extreme) const
    {
        const double n1 = static_cast<double>(levels - 1);
        double t = (x + extreme) * n1 / (2.0 * extreme);
        t = std::max(0.0, std::min(n1, t));
        const std::size_t lo = static_cast<std::size_t>(t);
        const std::size_t hi = std::min(lo + 1, levels - 1);
        const double level_lo = level(lo, extreme);
        const double level_hi = level(hi, extreme);
        const double d_lo = std::abs(x - level_lo);
        const double d_hi = std::abs(x - level_hi);
        if (d_lo < d_hi)
            return level_lo;
        if (d_hi < d_lo)
            return level_hi;
        if (std::abs(level_lo) < std::abs(level_hi))
            return level_lo;
        if (std::abs(level_hi) < std::abs(level_lo))
            return level_hi;
        return std::max(level_lo, level_hi);
    }
};

/// Snaps every entry to the nearest constellation point, axes independently.
inline ComplexMatrix qam_activate(const ComplexMatrix &x, const Constellation &c)
{
    ComplexMatrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data()[i] = Complex(c.snap_axis(x.data()[i].real(), c.delta_r),
                              c.snap_axis(x.data()[i].imag(), c.delta_i));
    return y;
}

/// Straight-through gate: each axis passes its output gradient unchanged
/// where the pre-quantization input lies within the constellation extremes
/// and zeroes it outside. Gradients are never scaled.
inline ComplexMatrix qam_backward(const ComplexMatrix &x_pre, const ComplexMatrix &g_out,
                                  const Constellation &c)
{
    if (!x_pre.same_shape(g_out))
        throw_shape_error("qam_backward", x_pre, g_out);
    ComplexMatrix g(x_pre.rows(), x_pre.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double xr = x_pre.data()[i].real();
        const double xi = x_pre.data()[i].imag();
        const double gr = (xr >= -c.delta_r && xr <= c.delta_r) ? g_out.data()[i].real() : 0.0;
        const double gi = (xi >= -c.delta_i && xi <= c.delta_i) ? g_out.data()[i].imag() : 0.0;
        g.data()[i] = Complex(gr, gi);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Complex ReLU
// ---------------------------------------------------------------------------

inline ComplexMatrix crelu(const ComplexMatrix &x)
{
    ComplexMatrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data()[i] = Complex(std::max(x.data()[i].real(), 0.0),
                              std::max(x.data()[i].imag(), 0.0));
    return y;
}

inline ComplexMatrix crelu_backward(const ComplexMatrix &x, const ComplexMatrix &g_out)
{
    if (!x.same_shape(g_out))
        throw_shape_error("crelu_backward", x, g_out);
    ComplexMatrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = Complex(x.data()[i].real() > 0.0 ? g_out.data()[i].real() : 0.0,
                              x.data()[i].imag() > 0.0 ? g_out.data()[i].imag() : 0.0);
    return g;
}

// ---------------------------------------------------------------------------
// Parameter registry and Adam
// ---------------------------------------------------------------------------

/// A flat view of one parameter tensor as real components, paired with its
/// gradient buffer. Complex tensors expose 2x their entry count.
struct ParamRef {
    std::string name;
    double *value = nullptr;
    double *grad = nullptr;
    std::size_t count = 0;
};

inline void add_param(std::vector<ParamRef> &out, const std::string &name, ComplexMatrix &value,
                      ComplexMatrix &grad)
{
    out.push_back(ParamRef{name, reinterpret_cast<double *>(value.data().data()),
                           reinterpret_cast<double *>(grad.data().data()), 2 * value.size()});
}

inline void add_param(std::vector<ParamRef> &out, const std::string &name,
                      std::vector<double> &value, std::vector<double> &grad)
{
    out.push_back(ParamRef{name, value.data(), grad.data(), value.size()});
}

/// Bias-corrected Adam over the real components of all registered
/// parameters. A non-finite gradient anywhere rejects the whole step, so a
/// single blown-up noisy backward pass cannot poison the model.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
    {
    }

    void step(const std::vector<ParamRef> &params)
    {
        for (const auto &p : params)
            for (std::size_t i = 0; i < p.count; ++i)
                if (!std::isfinite(p.grad[i]))
                    throw std::runtime_error("adam_step: non-finite gradient in '" + p.name +
                                             "' component " + std::to_string(i) +
                                             "; step rejected");
        if (m_.empty()) {
            for (const auto &p : params) {
                m_.emplace_back(p.count, 0.0);
                v_.emplace_back(p.count, 0.0);
            }
        }
        if (m_.size() != params.size())
            throw std::invalid_argument("adam_step: parameter registry changed size");
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            const auto &p = params[pi];
            if (m_[pi].size() != p.count)
                throw std::invalid_argument("adam_step: parameter '" + p.name +
                                            "' changed size");
            for (std::size_t i = 0; i < p.count; ++i) {
                const double g = p.grad[i];
                m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
                v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g * g;
                const double m_hat = m_[pi][i] / bc1;
                const double v_hat = v_[pi][i] / bc2;
                p.value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
            }
        }
    }

    long step_count() const { return step_; }
    double learning_rate() const { return lr_; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Batch normalization (real and imaginary components normalized separately)
// ---------------------------------------------------------------------------

class BatchNorm {
  public:
    explicit BatchNorm(std::size_t features)
        : features_(features), scale_(2 * features, 1.0), shift_(2 * features, 0.0),
          g_scale_(2 * features, 0.0), g_shift_(2 * features, 0.0),
          running_mean_(2 * features, 0.0), running_var_(2 * features, 1.0)
    {
    }

    std::size_t features() const { return features_; }
    double momentum = 0.9;
    double eps = 1e-5;

    /// Layout of the real-component vectors: index f is the real part of
    /// feature f, index features + f its imaginary part.
    std::vector<double> &scale() { return scale_; }
    std::vector<double> &shift() { return shift_; }
    std::vector<double> &scale_grad() { return g_scale_; }
    std::vector<double> &shift_grad() { return g_shift_; }
    std::vector<double> &running_mean() { return running_mean_; }
    std::vector<double> &running_var() { return running_var_; }

    ComplexMatrix forward(const ComplexMatrix &x, bool training)
    {
        if (x.rows() != features_)
            throw std::invalid_argument("batchnorm: expected " + std::to_string(features_) +
                                        " features, got " + std::to_string(x.rows()));
        const std::size_t batch = x.cols();
        if (training && batch < 2)
            throw std::invalid_argument("batchnorm: training mode needs a batch of at least 2");
        ComplexMatrix y(features_, batch);
        if (training) {
            xhat_ = ComplexMatrix(features_, batch);
            inv_std_.assign(2 * features_, 0.0);
            clamped_.assign(2 * features_, 0);
            trained_forward_ = true;
        }
        for (std::size_t comp = 0; comp < 2; ++comp) {
            for (std::size_t f = 0; f < features_; ++f) {
                const std::size_t idx = comp * features_ + f;
                double mean, var;
                if (training) {
                    double s = 0.0;
                    for (std::size_t b = 0; b < batch; ++b)
                        s += component(x(f, b), comp);
                    mean = s / static_cast<double>(batch);
                    double sv = 0.0;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double d = component(x(f, b), comp) - mean;
                        sv += d * d;
                    }
                    var = sv / static_cast<double>(batch);
                    running_mean_[idx] = momentum * running_mean_[idx] + (1.0 - momentum) * mean;
                    running_var_[idx] = momentum * running_var_[idx] + (1.0 - momentum) * var;
                } else {
                    mean = running_mean_[idx];
                    var = running_var_[idx];
                }
                // 1/max(sigma, eps): keeps the normalized output exactly
                // invariant under positive rescaling of the batch, which is
                // the amplification-cancelling property the OAC chain needs.
                const double sigma = std::sqrt(var);
                const double inv_std = 1.0 / std::max(sigma, eps);
                if (training) {
                    inv_std_[idx] = inv_std;
                    clamped_[idx] = (sigma <= eps) ? 1 : 0;
                }
                for (std::size_t b = 0; b < batch; ++b) {
                    const double xh = (component(x(f, b), comp) - mean) * inv_std;
                    if (training)
                        set_component(xhat_(f, b), comp, xh);
                    set_component(y(f, b), comp, scale_[idx] * xh + shift_[idx]);
                }
            }
        }
        return y;
    }

    /// Backward through the training-mode statistics. Must follow a
    /// training forward on the same batch.
    ComplexMatrix backward(const ComplexMatrix &g_out)
    {
        if (!trained_forward_)
            throw std::logic_error("batchnorm: backward without a training-mode forward");
        if (g_out.rows() != features_ || g_out.cols() != xhat_.cols())
            throw_shape_error("batchnorm backward", xhat_, g_out);
        const std::size_t batch = g_out.cols();
        const double inv_b = 1.0 / static_cast<double>(batch);
        ComplexMatrix g_in(features_, batch);
        for (std::size_t comp = 0; comp < 2; ++comp) {
            for (std::size_t f = 0; f < features_; ++f) {
                const std::size_t idx = comp * features_ + f;
                double sum_g = 0.0, sum_gx = 0.0, sum_gy_x = 0.0, sum_gy = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double gy = component(g_out(f, b), comp);
                    const double xh = component(xhat_(f, b), comp);
                    const double gxh = gy * scale_[idx];
                    sum_g += gxh;
                    sum_gx += gxh * xh;
                    sum_gy += gy;
                    sum_gy_x += gy * xh;
                }
                g_scale_[idx] += sum_gy_x;
                g_shift_[idx] += sum_gy;
                // When sigma is clamped to eps the normalizer is a constant,
                // so the variance term of the gradient disappears.
                const double var_term = clamped_[idx] ? 0.0 : 1.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double gy = component(g_out(f, b), comp);
                    const double xh = component(xhat_(f, b), comp);
                    const double gxh = gy * scale_[idx];
                    const double gx =
                        inv_std_[idx] * inv_b *
                        (static_cast<double>(batch) * gxh - sum_g - var_term * xh * sum_gx);
                    set_component(g_in(f, b), comp, gx);
                }
            }
        }
        return g_in;
    }

    void zero_grads()
    {
        std::fill(g_scale_.begin(), g_scale_.end(), 0.0);
        std::fill(g_shift_.begin(), g_shift_.end(), 0.0);
    }

  private:
    static double component(const Complex &z, std::size_t comp)
    {
        return comp == 0 ? z.real() : z.imag();
    }
    static void set_component(Complex &z, std::size_t comp, double v)
    {
        if (comp == 0)
            z = Complex(v, z.imag());
        else
            z = Complex(z.real(), v);
    }

    std::size_t features_;
    std::vector<double> scale_, shift_, g_scale_, g_shift_;
    std::vector<double> running_mean_, running_var_;
    ComplexMatrix xhat_;
    std::vector<double> inv_std_;
    std::vector<char> clamped_;
    bool trained_forward_ = false;
};

// ---------------------------------------------------------------------------
// Classification head
// ---------------------------------------------------------------------------

struct HeadLossResult {
    double loss = 0.0;
    ComplexMatrix g_z;
    std::vector<std::size_t> predictions;
};

/// Softmax cross-entropy over the real parts of the logits. The gradient is
/// (softmax - onehot)/batch in the real component, zero in the imaginary.
inline HeadLossResult head_loss(const ComplexMatrix &z, const std::vector<int> &labels)
{
    const std::size_t classes = z.rows();
    const std::size_t batch = z.cols();
    if (labels.size() != batch)
        throw std::invalid_argument("head_loss: " + std::to_string(labels.size()) +
                                    " labels for a batch of " + std::to_string(batch));
    HeadLossResult out;
    out.g_z = ComplexMatrix(classes, batch);
    out.predictions.resize(batch);
    const double inv_b = 1.0 / static_cast<double>(batch);
    std::vector<double> p(classes);
    for (std::size_t b = 0; b < batch; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes)
            throw std::invalid_argument("head_loss: label " + std::to_string(labels[b]) +
                                        " out of range for " + std::to_string(classes) +
                                        " classes");
        double zmax = z(0, b).real();
        std::size_t arg = 0;
        for (std::size_t i = 1; i < classes; ++i) {
            if (z(i, b).real() > zmax) {
                zmax = z(i, b).real();
                arg = i;
            }
        }
        out.predictions[b] = arg;
        double denom = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
            p[i] = std::exp(z(i, b).real() - zmax);
            denom += p[i];
        }
        for (std::size_t i = 0; i < classes; ++i)
            p[i] /= denom;
        out.loss -= inv_b * std::log(p[static_cast<std::size_t>(labels[b])]);
        for (std::size_t i = 0; i < classes; ++i) {
            const double onehot = (static_cast<std::size_t>(labels[b]) == i) ? 1.0 : 0.0;
            out.g_z(i, b) = Complex((p[i] - onehot) * inv_b, 0.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

struct MimoParams {
    std::size_t n_t = 8;
    std::size_t n_r = 8;
    std::size_t r = 4;
    std::size_t n_paths = 8;
    double gain_low = 0.5;
    double gain_high = 1.5;

    PathParams path_params() const { return PathParams{n_paths, gain_low, gain_high}; }

    void validate() const
    {
        if (n_t < 1 || n_r < 1 || r < 1 || n_paths < 1)
            throw std::invalid_argument("mimo: all counts must be at least 1");
        if (r > std::min(n_t, n_r))
            throw std::invalid_argument("mimo.r: r = " + std::to_string(r) +
                                        " exceeds min(n_t, n_r) = " +
                                        std::to_string(std::min(n_t, n_r)));
        if (gain_low <= 0.0 || gain_high < gain_low)
            throw std::invalid_argument("mimo: invalid path gain range");
    }
};

enum class LayerKind { OacLinear, OacConv, Conv, Dense, CRelu, Qam, BatchNorm, Residual };

struct LayerDesc {
    LayerKind kind = LayerKind::CRelu;
    std::size_t out = 0;           // oac_linear / dense output width
    std::size_t out_channels = 0;  // conv kinds
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t padding = 0;
    std::size_t stride = 1;
    Constellation constellation;   // qam
    std::vector<LayerDesc> inner;  // residual
};

struct ModelSpec {
    std::vector<LayerDesc> layers;
};

inline std::size_t flatten_size(const std::vector<std::size_t> &shape)
{
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

// ---------------------------------------------------------------------------
// Runtime graph
// ---------------------------------------------------------------------------

/// One OAC link instance inside a model: the layer, its own channel, its own
/// noise/mobility streams, gradient buffers, and the per-batch covariance
/// statistics the subspace regularizers feed on.
struct OacCore {
    OacLinearLayer layer;
    ChannelState channel;
    Rng noise_rng;
    Rng evolve_rng;
    PathParams paths;
    std::string name;

    ComplexMatrix g_p, g_c, g_b;
    std::vector<ComplexMatrix> g_w;

    std::vector<ForwardTrace> traces;
    CovarianceAccumulator acc_f;
    CovarianceAccumulator acc_b;
    bool training_batch = false;
    bool collect_f = false;
    bool collect_b = false;

    OacCore(std::size_t n_i, std::size_t n_o, const MimoParams &mimo, std::uint64_t master_seed,
            std::size_t oac_ordinal, std::uint64_t init_seed, std::string node_name)
        : layer(make_layer(n_i, n_o, mimo, init_seed)),
          channel(make_channel(mimo, master_seed, oac_ordinal)),
          noise_rng(derive_seed(master_seed, 0x30000 + oac_ordinal)),
          evolve_rng(derive_seed(master_seed, 0x40000 + oac_ordinal)),
          paths(mimo.path_params()), name(std::move(node_name)),
          acc_f(mimo.n_r), acc_b(mimo.n_t)
    {
        zero_grads();
    }

    static OacLinearLayer make_layer(std::size_t n_i, std::size_t n_o, const MimoParams &mimo,
                                     std::uint64_t init_seed)
    {
        Rng rng(init_seed);
        return OacLinearLayer::init(n_i, n_o, mimo.n_t, mimo.n_r, mimo.r, rng);
    }

    static ChannelState make_channel(const MimoParams &mimo, std::uint64_t master_seed,
                                     std::size_t oac_ordinal)
    {
        Rng rng(derive_seed(master_seed, 0x20000 + oac_ordinal));
        return gen_channel(mimo.path_params(), mimo.n_t, mimo.n_r, rng);
    }

    void begin_batch(bool training, bool want_f, bool want_b)
    {
        traces.clear();
        training_batch = training;
        collect_f = training && want_f;
        collect_b = training && want_b;
        if (collect_f)
            acc_f.reset();
        if (collect_b)
            acc_b.reset();
    }

    ComplexMatrix forward_column(const ComplexMatrix &x)
    {
        auto [y, trace] = layer.forward(channel, x, noise_rng);
        if (collect_f)
            for (const auto &yr : trace.y_r)
                acc_f.accumulate(yr);
        if (training_batch)
            traces.push_back(std::move(trace));
        return std::move(y);
    }

    ComplexMatrix backward_column(std::size_t idx, const ComplexMatrix &g_y)
    {
        if (idx >= traces.size())
            throw std::logic_error("OacCore: backward column index out of range");
        BackwardTrace bt = layer.backward_ota(channel, traces[idx], g_y, noise_rng);
        g_p += bt.g_p;
        g_c += bt.g_c;
        g_b += bt.g_b;
        for (std::size_t k = 0; k < g_w.size(); ++k)
            g_w[k] += bt.g_w_tilde[k];
        if (collect_b)
            for (const auto &gxt : bt.g_xt)
                acc_b.accumulate(gxt);
        return std::move(bt.g_x);
    }

    /// Computes both subspace losses from the batch statistics and folds the
    /// weighted gradients into the parameter buffers. l_f steers C; l_b
    /// reaches P and W~_k through the transmitted signals. Neither flows
    /// further upstream.
    std::pair<double, double> apply_subspace_losses(double lambda_f, double lambda_b)
    {
        double lf = 0.0, lb = 0.0;
        if (collect_f && lambda_f > 0.0 && acc_f.n_samples() > 0) {
            const SubspaceLoss sl = forward_subspace_loss(layer.c, acc_f, layer.streams());
            lf = sl.loss;
            g_c += lambda_f * sl.grad;
        }
        if (collect_b && lambda_b > 0.0 && acc_b.n_samples() > 0 && !traces.empty()) {
            std::vector<const ComplexMatrix *> cols;
            cols.reserve(traces.size() * layer.rounds());
            for (const auto &t : traces)
                for (const auto &xt : t.x_t)
                    cols.push_back(&xt);
            const BackwardSubspaceLoss bl = backward_subspace_loss(acc_b, cols, layer.streams());
            lb = bl.loss;
            std::size_t idx = 0;
            const ComplexMatrix p_adj = adjoint(layer.p);
            for (const auto &t : traces) {
                const ComplexMatrix x_adj = adjoint(t.x);
                for (std::size_t k = 0; k < layer.rounds(); ++k) {
                    const ComplexMatrix &gxt = bl.grads[idx++];
                    const ComplexMatrix u = matmul(layer.w_tilde[k], t.x);
                    g_p += lambda_b * matmul(gxt, adjoint(u));
                    g_w[k] += lambda_b * matmul(matmul(p_adj, gxt), x_adj);
                }
            }
        }
        return {lf, lb};
    }

    void zero_grads()
    {
        g_p = ComplexMatrix(layer.p.rows(), layer.p.cols());
        g_c = ComplexMatrix(layer.c.rows(), layer.c.cols());
        g_b = ComplexMatrix(layer.bias.rows(), 1);
        g_w.assign(layer.rounds(), ComplexMatrix(layer.streams(), layer.n_i()));
    }

    void collect_params(std::vector<ParamRef> &out)
    {
        add_param(out, name + ".p", layer.p, g_p);
        for (std::size_t k = 0; k < layer.w_tilde.size(); ++k)
            add_param(out, name + ".w" + std::to_string(k), layer.w_tilde[k], g_w[k]);
        add_param(out, name + ".c", layer.c, g_c);
        add_param(out, name + ".bias", layer.bias, g_b);
    }

    void evolve(const MobilityConfig &config)
    {
        channel = evolve_channel(channel, config, paths, evolve_rng);
    }
};

class Node {
  public:
    virtual ~Node() = default;
    virtual ComplexMatrix forward(const ComplexMatrix &in, bool training) = 0;
    virtual ComplexMatrix backward(const ComplexMatrix &g_out) = 0;
    virtual void collect_params(std::vector<ParamRef> &) {}
    virtual void zero_grads() {}
    virtual void for_each_oac(const std::function<void(OacCore &)> &) {}
};

class OacLinearNode final : public Node {
  public:
    OacLinearNode(std::size_t n_i, std::size_t n_o, const MimoParams &mimo,
                  std::uint64_t master_seed, std::size_t oac_ordinal, std::uint64_t init_seed,
                  std::string name, const double *lambda_f, const double *lambda_b)
        : core_(n_i, n_o, mimo, master_seed, oac_ordinal, init_seed, std::move(name)),
          lambda_f_(lambda_f), lambda_b_(lambda_b)
    {
    }

    ComplexMatrix forward(const ComplexMatrix &in, bool training) override
    {
        core_.begin_batch(training, *lambda_f_ > 0.0, *lambda_b_ > 0.0);
        ComplexMatrix out(core_.layer.n_o(), in.cols());
        for (std::size_t b = 0; b < in.cols(); ++b)
            out.set_column(b, core_.forward_column(in.column(b)));
        return out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        ComplexMatrix g_in(core_.layer.n_i(), g_out.cols());
        for (std::size_t b = 0; b < g_out.cols(); ++b)
            g_in.set_column(b, core_.backward_column(b, g_out.column(b)));
        return g_in;
    }

    void collect_params(std::vector<ParamRef> &out) override { core_.collect_params(out); }
    void zero_grads() override { core_.zero_grads(); }
    void for_each_oac(const std::function<void(OacCore &)> &f) override { f(core_); }

    OacCore &core() { return core_; }

  private:
    OacCore core_;
    const double *lambda_f_;
    const double *lambda_b_;
};

class OacConvNode final : public Node {
  public:
    OacConvNode(const ConvGeometry &geom, std::size_t out_channels, const MimoParams &mimo,
                std::uint64_t master_seed, std::size_t oac_ordinal, std::uint64_t init_seed,
                std::string name, const double *lambda_f, const double *lambda_b)
        : geom_(geom), out_channels_(out_channels),
          core_(geom.patch_len(), out_channels, mimo, master_seed, oac_ordinal, init_seed,
                std::move(name)),
          lambda_f_(lambda_f), lambda_b_(lambda_b)
    {
        geom_.validate();
    }

    ComplexMatrix forward(const ComplexMatrix &in, bool training) override
    {
        core_.begin_batch(training, *lambda_f_ > 0.0, *lambda_b_ > 0.0);
        const std::size_t out_len = out_channels_ * geom_.out_h() * geom_.out_w();
        ComplexMatrix out(out_len, in.cols());
        for (std::size_t b = 0; b < in.cols(); ++b) {
            const auto patches = conv_rearrange(in.column(b), geom_);
            std::vector<ComplexMatrix> outputs;
            outputs.reserve(patches.size());
            for (const auto &patch : patches)
                outputs.push_back(core_.forward_column(patch));
            out.set_column(b, conv_assemble(outputs, out_channels_, geom_.out_h(),
                                            geom_.out_w()));
        }
        return out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        const std::size_t locs = geom_.out_h() * geom_.out_w();
        ComplexMatrix g_in(geom_.channels * geom_.height * geom_.width, g_out.cols());
        for (std::size_t b = 0; b < g_out.cols(); ++b) {
            std::vector<ComplexMatrix> patch_grads;
            patch_grads.reserve(locs);
            for (std::size_t loc = 0; loc < locs; ++loc) {
                const std::size_t i = loc / geom_.out_w();
                const std::size_t j = loc % geom_.out_w();
                ComplexMatrix g_col(out_channels_, 1);
                for (std::size_t ch = 0; ch < out_channels_; ++ch)
                    g_col(ch, 0) = g_out((ch * geom_.out_h() + i) * geom_.out_w() + j, b);
                patch_grads.push_back(core_.backward_column(b * locs + loc, g_col));
            }
            g_in.set_column(b, conv_scatter(patch_grads, geom_));
        }
        return g_in;
    }

    void collect_params(std::vector<ParamRef> &out) override { core_.collect_params(out); }
    void zero_grads() override { core_.zero_grads(); }
    void for_each_oac(const std::function<void(OacCore &)> &f) override { f(core_); }

  private:
    ConvGeometry geom_;
    std::size_t out_channels_;
    OacCore core_;
    const double *lambda_f_;
    const double *lambda_b_;
};

/// Plain complex dense layer computed locally (the classification head and
/// any other layer that does not cross a wireless link).
class DenseNode final : public Node {
  public:
    DenseNode(std::size_t in, std::size_t out, std::uint64_t init_seed, std::string name)
        : name_(std::move(name))
    {
        Rng rng(init_seed);
        w_ = random_complex_gaussian(out, in, 1.0 / static_cast<double>(in), rng);
        b_ = ComplexMatrix(out, 1);
        g_w_ = ComplexMatrix(out, in);
        g_b_ = ComplexMatrix(out, 1);
    }

    ComplexMatrix forward(const ComplexMatrix &in, bool) override
    {
        in_cache_ = in;
        ComplexMatrix out = matmul(w_, in);
        for (std::size_t b = 0; b < out.cols(); ++b)
            for (std::size_t i = 0; i < out.rows(); ++i)
                out(i, b) += b_(i, 0);
        return out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        g_w_ += matmul(g_out, adjoint(in_cache_));
        for (std::size_t b = 0; b < g_out.cols(); ++b)
            for (std::size_t i = 0; i < g_out.rows(); ++i)
                g_b_(i, 0) += g_out(i, b);
        return matmul(adjoint(w_), g_out);
    }

    void collect_params(std::vector<ParamRef> &out) override
    {
        add_param(out, name_ + ".w", w_, g_w_);
        add_param(out, name_ + ".bias", b_, g_b_);
    }

    void zero_grads() override
    {
        g_w_ = ComplexMatrix(w_.rows(), w_.cols());
        g_b_ = ComplexMatrix(b_.rows(), 1);
    }

    ComplexMatrix &weight() { return w_; }
    ComplexMatrix &bias() { return b_; }

  private:
    std::string name_;
    ComplexMatrix w_, b_, g_w_, g_b_, in_cache_;
};

/// Local convolution: the same rearrangement as the OAC variant but the
/// per-patch linear map is computed in place.
class ConvNode final : public Node {
  public:
    ConvNode(const ConvGeometry &geom, std::size_t out_channels, std::uint64_t init_seed,
             std::string name)
        : geom_(geom), out_channels_(out_channels), name_(std::move(name))
    {
        geom_.validate();
        Rng rng(init_seed);
        w_ = random_complex_gaussian(out_channels, geom.patch_len(),
                                     1.0 / static_cast<double>(geom.patch_len()), rng);
        b_ = ComplexMatrix(out_channels, 1);
        g_w_ = ComplexMatrix(out_channels, geom.patch_len());
        g_b_ = ComplexMatrix(out_channels, 1);
    }

    ComplexMatrix forward(const ComplexMatrix &in, bool) override
    {
        patches_.assign(in.cols(), {});
        const std::size_t out_len = out_channels_ * geom_.out_h() * geom_.out_w();
        ComplexMatrix out(out_len, in.cols());
        for (std::size_t b = 0; b < in.cols(); ++b) {
            patches_[b] = conv_rearrange(in.column(b), geom_);
            std::vector<ComplexMatrix> outputs;
            outputs.reserve(patches_[b].size());
            for (const auto &patch : patches_[b]) {
                ComplexMatrix y = matmul(w_, patch);
                y += b_;
                outputs.push_back(std::move(y));
            }
            out.set_column(b, conv_assemble(outputs, out_channels_, geom_.out_h(),
                                            geom_.out_w()));
        }
        return out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        const std::size_t locs = geom_.out_h() * geom_.out_w();
        const ComplexMatrix w_adj = adjoint(w_);
        ComplexMatrix g_in(geom_.channels * geom_.height * geom_.width, g_out.cols());
        for (std::size_t b = 0; b < g_out.cols(); ++b) {
            std::vector<ComplexMatrix> patch_grads;
            patch_grads.reserve(locs);
            for (std::size_t loc = 0; loc < locs; ++loc) {
                const std::size_t i = loc / geom_.out_w();
                const std::size_t j = loc % geom_.out_w();
                ComplexMatrix g_col(out_channels_, 1);
                for (std::size_t ch = 0; ch < out_channels_; ++ch)
                    g_col(ch, 0) = g_out((ch * geom_.out_h() + i) * geom_.out_w() + j, b);
                g_w_ += matmul(g_col, adjoint(patches_[b][loc]));
                g_b_ += g_col;
                patch_grads.push_back(matmul(w_adj, g_col));
            }
            g_in.set_column(b, conv_scatter(patch_grads, geom_));
        }
        return g_in;
    }

    void collect_params(std::vector<ParamRef> &out) override
    {
        add_param(out, name_ + ".w", w_, g_w_);
        add_param(out, name_ + ".bias", b_, g_b_);
    }

    void zero_grads() override
    {
        g_w_ = ComplexMatrix(w_.rows(), w_.cols());
        g_b_ = ComplexMatrix(b_.rows(), 1);
    }

  private:
    ConvGeometry geom_;
    std::size_t out_channels_;
    std::string name_;
    ComplexMatrix w_, b_, g_w_, g_b_;
    std::vector<std::vector<ComplexMatrix>> patches_;
};

class CReluNode final : public Node {
  public:
    ComplexMatrix forward(const ComplexMatrix &in, bool) override
    {
        in_cache_ = in;
        return crelu(in);
    }
    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        return crelu_backward(in_cache_, g_out);
    }

  private:
    ComplexMatrix in_cache_;
};

class QamNode final : public Node {
  public:
    explicit QamNode(const Constellation &c) : constellation_(c) {}
    ComplexMatrix forward(const ComplexMatrix &in, bool) override
    {
        in_cache_ = in;
        return qam_activate(in, constellation_);
    }
    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        return qam_backward(in_cache_, g_out, constellation_);
    }

  private:
    Constellation constellation_;
    ComplexMatrix in_cache_;
};

class BatchNormNode final : public Node {
  public:
    BatchNormNode(std::size_t features, std::string name)
        : bn_(features), name_(std::move(name))
    {
    }
    ComplexMatrix forward(const ComplexMatrix &in, bool training) override
    {
        return bn_.forward(in, training);
    }
    ComplexMatrix backward(const ComplexMatrix &g_out) override { return bn_.backward(g_out); }
    void collect_params(std::vector<ParamRef> &out) override
    {
        add_param(out, name_ + ".scale", bn_.scale(), bn_.scale_grad());
        add_param(out, name_ + ".shift", bn_.shift(), bn_.shift_grad());
    }
    void zero_grads() override { bn_.zero_grads(); }
    BatchNorm &bn() { return bn_; }

  private:
    BatchNorm bn_;
    std::string name_;
};

class ResidualNode final : public Node {
  public:
    explicit ResidualNode(std::vector<std::unique_ptr<Node>> inner) : inner_(std::move(inner)) {}

    ComplexMatrix forward(const ComplexMatrix &in, bool training) override
    {
        ComplexMatrix out = in;
        for (auto &n : inner_)
            out = n->forward(out, training);
        return in + out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out) override
    {
        ComplexMatrix g = g_out;
        for (auto it = inner_.rbegin(); it != inner_.rend(); ++it)
            g = (*it)->backward(g);
        return g + g_out;
    }

    void collect_params(std::vector<ParamRef> &out) override
    {
        for (auto &n : inner_)
            n->collect_params(out);
    }
    void zero_grads() override
    {
        for (auto &n : inner_)
            n->zero_grads();
    }
    void for_each_oac(const std::function<void(OacCore &)> &f) override
    {
        for (auto &n : inner_)
            n->for_each_oac(f);
    }

  private:
    std::vector<std::unique_ptr<Node>> inner_;
};

/// A full network instance: the layer graph built from a ModelSpec, one
/// channel per OAC layer, and the seed bookkeeping that keeps every stream
/// independently derived from the master seed. Layers without their own
/// randomness never consume seed material, so inserting or removing an
/// activation leaves every other layer's parameters and channels untouched.
class Model {
  public:
    Model(const ModelSpec &spec, const MimoParams &mimo,
          const std::vector<std::size_t> &input_shape, std::uint64_t master_seed)
        : mimo_(mimo)
    {
        mimo_.validate();
        std::size_t param_ordinal = 0;
        std::size_t oac_ordinal = 0;
        std::vector<std::size_t> shape = input_shape;
        nodes_ = build(spec.layers, shape, master_seed, param_ordinal, oac_ordinal,
                       "model.layers");
        output_width_ = flatten_size(shape);
    }

    ComplexMatrix forward(const ComplexMatrix &batch, bool training)
    {
        ComplexMatrix out = batch;
        for (auto &n : nodes_)
            out = n->forward(out, training);
        return out;
    }

    ComplexMatrix backward(const ComplexMatrix &g_out)
    {
        ComplexMatrix g = g_out;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            g = (*it)->backward(g);
        return g;
    }

    std::vector<ParamRef> params()
    {
        std::vector<ParamRef> out;
        for (auto &n : nodes_)
            n->collect_params(out);
        return out;
    }

    void zero_grads()
    {
        for (auto &n : nodes_)
            n->zero_grads();
    }

    void set_loss_weights(double lambda_f, double lambda_b)
    {
        lambda_f_ = lambda_f;
        lambda_b_ = lambda_b;
    }

    /// Folds the subspace-regularizer gradients into the parameter buffers
    /// and returns the summed (l_f, l_b) across all OAC layers. Call after
    /// backward, before the optimizer step.
    std::pair<double, double> apply_subspace_losses()
    {
        double lf = 0.0, lb = 0.0;
        for_each_oac([&](OacCore &core) {
            auto [f, b] = core.apply_subspace_losses(lambda_f_, lambda_b_);
            lf += f;
            lb += b;
        });
        return {lf, lb};
    }

    void for_each_oac(const std::function<void(OacCore &)> &f)
    {
        for (auto &n : nodes_)
            n->for_each_oac(f);
    }

    void evolve_channels(const MobilityConfig &config)
    {
        for_each_oac([&](OacCore &core) { core.evolve(config); });
    }

    void calibrate_noise(double snr_db)
    {
        for_each_oac([&](OacCore &core) {
            if (core.channel.signal_power_ema() > 0.0)
                core.channel.calibrate_noise(snr_db);
        });
    }

    void set_noise_variance(double v)
    {
        for_each_oac([&](OacCore &core) { core.channel.set_noise_variance(v); });
    }

    double mean_measured_snr_db()
    {
        double sum = 0.0;
        std::size_t count = 0;
        for_each_oac([&](OacCore &core) {
            sum += core.channel.measured_snr_db();
            ++count;
        });
        return count == 0 ? std::numeric_limits<double>::infinity()
                          : sum / static_cast<double>(count);
    }

    std::size_t output_width() const { return output_width_; }
    double lambda_f() const { return lambda_f_; }
    double lambda_b() const { return lambda_b_; }

  private:
    std::vector<std::unique_ptr<Node>> build(const std::vector<LayerDesc> &descs,
                                             std::vector<std::size_t> &shape,
                                             std::uint64_t master_seed,
                                             std::size_t &param_ordinal,
                                             std::size_t &oac_ordinal, const std::string &path)
    {
        std::vector<std::unique_ptr<Node>> nodes;
        for (std::size_t li = 0; li < descs.size(); ++li) {
            const LayerDesc &d = descs[li];
            const std::string here = path + "[" + std::to_string(li) + "]";
            switch (d.kind) {
            case LayerKind::OacLinear: {
                if (d.out < 1)
                    throw std::invalid_argument(here + ": oac_linear needs a positive width");
                const std::size_t in = flatten_size(shape);
                const std::uint64_t init = derive_seed(master_seed, 0x10000 + param_ordinal++);
                nodes.push_back(std::make_unique<OacLinearNode>(in, d.out, mimo_, master_seed,
                                                                oac_ordinal++, init, here,
                                                                &lambda_f_, &lambda_b_));
                shape = {d.out};
                break;
            }
            case LayerKind::Dense: {
                if (d.out < 1)
                    throw std::invalid_argument(here + ": dense needs a positive width");
                const std::size_t in = flatten_size(shape);
                const std::uint64_t init = derive_seed(master_seed, 0x10000 + param_ordinal++);
                nodes.push_back(std::make_unique<DenseNode>(in, d.out, init, here));
                shape = {d.out};
                break;
            }
            case LayerKind::OacConv:
            case LayerKind::Conv: {
                if (shape.size() != 3)
                    throw std::invalid_argument(here +
                                                ": conv layers need a channels x height x "
                                                "width input, got rank " +
                                                std::to_string(shape.size()));
                if (d.out_channels < 1)
                    throw std::invalid_argument(here + ": conv needs positive out_channels");
                ConvGeometry geom;
                geom.channels = shape[0];
                geom.height = shape[1];
                geom.width = shape[2];
                geom.kernel_h = d.kernel_h;
                geom.kernel_w = d.kernel_w;
                geom.padding = d.padding;
                geom.stride = d.stride;
                geom.validate();
                const std::uint64_t init = derive_seed(master_seed, 0x10000 + param_ordinal++);
                if (d.kind == LayerKind::OacConv)
                    nodes.push_back(std::make_unique<OacConvNode>(geom, d.out_channels, mimo_,
                                                                  master_seed, oac_ordinal++,
                                                                  init, here, &lambda_f_,
                                                                  &lambda_b_));
                else
                    nodes.push_back(std::make_unique<ConvNode>(geom, d.out_channels, init,
                                                               here));
                shape = {d.out_channels, geom.out_h(), geom.out_w()};
                break;
            }
            case LayerKind::CRelu:
                nodes.push_back(std::make_unique<CReluNode>());
                break;
            case LayerKind::Qam:
                nodes.push_back(std::make_unique<QamNode>(d.constellation));
                break;
            case LayerKind::BatchNorm:
                nodes.push_back(std::make_unique<BatchNormNode>(flatten_size(shape), here));
                break;
            case LayerKind::Residual: {
                std::vector<std::size_t> inner_shape = shape;
                auto inner = build(d.inner, inner_shape, master_seed, param_ordinal,
                                   oac_ordinal, here + ".layers");
                if (inner_shape != shape)
                    throw std::invalid_argument(here +
                                                ": residual inner layers must preserve the "
                                                "input shape");
                nodes.push_back(std::make_unique<ResidualNode>(std::move(inner)));
                break;
            }
            }
        }
        return nodes;
    }

    MimoParams mimo_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::size_t output_width_ = 0;
    double lambda_f_ = 1.0;
    double lambda_b_ = 1.0;
};

} // namespace airsl
