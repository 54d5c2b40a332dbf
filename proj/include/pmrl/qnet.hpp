#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pmrl/rng.hpp"

namespace pmrl {

struct ConvSpec {
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    bool operator==(const ConvSpec&) const = default;
};

struct NetworkConfig {
    std::size_t input_side = 128;
    std::size_t in_channels = 3;
    std::array<ConvSpec, 3> conv{};
    std::size_t fc_dim = 512;
    std::size_t n_actions = 1;

    bool operator==(const NetworkConfig&) const = default;

    // side of the feature map after conv stage `stage` (0 = input)
    std::size_t side_after(std::size_t stage) const {
        std::size_t side = input_side;
        for (std::size_t i = 0; i < stage; ++i) {
            const ConvSpec& c = conv[i];
            const std::size_t padded = side + 2 * c.padding;
            if (c.kernel == 0 || c.stride == 0 || padded < c.kernel ||
                (padded - c.kernel) % c.stride != 0) {
                throw std::invalid_argument("network config: conv stage " + std::to_string(i) +
                                            " does not tile a " + std::to_string(side) +
                                            " input");
            }
            side = (padded - c.kernel) / c.stride + 1;
        }
        return side;
    }

    std::size_t channels_after(std::size_t stage) const {
        return stage == 0 ? in_channels : conv[stage - 1].out_channels;
    }

    std::size_t flat_dim() const { return conv[2].out_channels * side_after(3) * side_after(3); }

    void validate() const {
        if (input_side == 0 || in_channels == 0 || fc_dim == 0 || n_actions == 0) {
            throw std::invalid_argument("network config: zero-sized dimension");
        }
        for (const auto& c : conv) {
            if (c.out_channels == 0) throw std::invalid_argument("network config: empty conv stage");
        }
        (void)side_after(3);
        if (side_after(3) == 0) throw std::invalid_argument("network config: feature map vanishes");
    }
};

inline NetworkConfig full_network(std::size_t n_actions) {
    NetworkConfig cfg;
    cfg.input_side = 128;
    cfg.in_channels = 3;
    cfg.conv = {ConvSpec{32, 8, 4, 2}, ConvSpec{64, 6, 2, 0}, ConvSpec{64, 3, 1, 0}};
    cfg.fc_dim = 512;
    cfg.n_actions = n_actions;
    cfg.validate();
    if (cfg.side_after(1) != 32 || cfg.side_after(2) != 14 || cfg.side_after(3) != 12 ||
        cfg.flat_dim() != 9216) {
        throw std::logic_error("full_network: layer chain drifted from 32/14/12");
    }
    return cfg;
}

inline NetworkConfig reduced_network(std::size_t n_actions) {
    NetworkConfig cfg;
    cfg.input_side = 16;
    cfg.in_channels = 3;
    cfg.conv = {ConvSpec{8, 4, 2, 1}, ConvSpec{16, 4, 2, 1}, ConvSpec{16, 3, 1, 0}};
    cfg.fc_dim = 64;
    cfg.n_actions = n_actions;
    cfg.validate();
    return cfg;
}

// Small enough for finite-difference sweeps.
inline NetworkConfig probe_network(std::size_t n_actions) {
    NetworkConfig cfg;
    cfg.input_side = 8;
    cfg.in_channels = 3;
    cfg.conv = {ConvSpec{4, 4, 2, 1}, ConvSpec{8, 3, 1, 0}, ConvSpec{8, 2, 1, 0}};
    cfg.fc_dim = 16;
    cfg.n_actions = n_actions;
    cfg.validate();
    return cfg;
}

template <class T>
struct ParamTensor {
    std::vector<std::uint32_t> shape;
    std::vector<T> v;

    static ParamTensor zeros(std::vector<std::uint32_t> dims) {
        ParamTensor t;
        std::size_t count = 1;
        for (std::uint32_t d : dims) count *= d;
        t.shape = std::move(dims);
        t.v.assign(count, T(0));
        return t;
    }

    std::size_t count() const { return v.size(); }
};

template <class T>
struct NetParams {
    NetworkConfig cfg;
    std::array<ParamTensor<T>, 3> conv_w, conv_b, bn_gamma, bn_beta, bn_mean, bn_var;
    ParamTensor<T> fc1_w, fc1_b, fc_gamma, fc_beta, fc_mean, fc_var;
    ParamTensor<T> fc2_w, fc2_b;
};

namespace qdetail {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
}  // namespace qdetail

// Order is load-bearing: optimizer slots and checkpoints index into it.
template <class T>
std::vector<ParamTensor<T>*> trainable_tensors(NetParams<T>& p) {
    std::vector<ParamTensor<T>*> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.push_back(&p.conv_w[i]);
        out.push_back(&p.conv_b[i]);
        out.push_back(&p.bn_gamma[i]);
        out.push_back(&p.bn_beta[i]);
    }
    out.push_back(&p.fc1_w);
    out.push_back(&p.fc1_b);
    out.push_back(&p.fc_gamma);
    out.push_back(&p.fc_beta);
    out.push_back(&p.fc2_w);
    out.push_back(&p.fc2_b);
    return out;
}

template <class T>
std::vector<const ParamTensor<T>*> trainable_tensors(const NetParams<T>& p) {
    auto mutable_list = trainable_tensors(const_cast<NetParams<T>&>(p));
    return {mutable_list.begin(), mutable_list.end()};
}

template <class T>
std::vector<ParamTensor<T>*> all_tensors(NetParams<T>& p) {
    std::vector<ParamTensor<T>*> out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.push_back(&p.conv_w[i]);
        out.push_back(&p.conv_b[i]);
        out.push_back(&p.bn_gamma[i]);
        out.push_back(&p.bn_beta[i]);
        out.push_back(&p.bn_mean[i]);
        out.push_back(&p.bn_var[i]);
    }
    out.push_back(&p.fc1_w);
    out.push_back(&p.fc1_b);
    out.push_back(&p.fc_gamma);
    out.push_back(&p.fc_beta);
    out.push_back(&p.fc_mean);
    out.push_back(&p.fc_var);
    out.push_back(&p.fc2_w);
    out.push_back(&p.fc2_b);
    return out;
}

template <class T>
std::vector<const ParamTensor<T>*> all_tensors(const NetParams<T>& p) {
    auto mutable_list = all_tensors(const_cast<NetParams<T>&>(p));
    return {mutable_list.begin(), mutable_list.end()};
}

template <class T>
NetParams<T> make_params(const NetworkConfig& cfg) {
    cfg.validate();
    NetParams<T> p;
    p.cfg = cfg;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::uint32_t oc = static_cast<std::uint32_t>(cfg.conv[i].out_channels);
        const std::uint32_t ic = static_cast<std::uint32_t>(cfg.channels_after(i));
        const std::uint32_t k = static_cast<std::uint32_t>(cfg.conv[i].kernel);
        p.conv_w[i] = ParamTensor<T>::zeros({oc, ic, k, k});
        p.conv_b[i] = ParamTensor<T>::zeros({oc});
        p.bn_gamma[i] = ParamTensor<T>::zeros({oc});
        p.bn_beta[i] = ParamTensor<T>::zeros({oc});
        p.bn_mean[i] = ParamTensor<T>::zeros({oc});
        p.bn_var[i] = ParamTensor<T>::zeros({oc});
    }
    const std::uint32_t flat = static_cast<std::uint32_t>(cfg.flat_dim());
    const std::uint32_t fc = static_cast<std::uint32_t>(cfg.fc_dim);
    const std::uint32_t actions = static_cast<std::uint32_t>(cfg.n_actions);
    p.fc1_w = ParamTensor<T>::zeros({fc, flat});
    p.fc1_b = ParamTensor<T>::zeros({fc});
    p.fc_gamma = ParamTensor<T>::zeros({fc});
    p.fc_beta = ParamTensor<T>::zeros({fc});
    p.fc_mean = ParamTensor<T>::zeros({fc});
    p.fc_var = ParamTensor<T>::zeros({fc});
    p.fc2_w = ParamTensor<T>::zeros({actions, fc});
    p.fc2_b = ParamTensor<T>::zeros({actions});
    return p;
}

template <class T>
NetParams<T> init_params(const NetworkConfig& cfg, Rng& rng) {
    NetParams<T> p = make_params<T>(cfg);
    auto fill_uniform = [&](ParamTensor<T>& t, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (T& x : t.v) x = static_cast<T>(rng.uniform(-bound, bound));
    };
    for (std::size_t i = 0; i < 3; ++i) {
        fill_uniform(p.conv_w[i],
                     p.cfg.channels_after(i) * p.cfg.conv[i].kernel * p.cfg.conv[i].kernel);
        for (T& x : p.bn_gamma[i].v) x = T(1);
        for (T& x : p.bn_var[i].v) x = T(1);
    }
    fill_uniform(p.fc1_w, cfg.flat_dim());
    for (T& x : p.fc_gamma.v) x = T(1);
    for (T& x : p.fc_var.v) x = T(1);
    fill_uniform(p.fc2_w, cfg.fc_dim);
    return p;
}

enum class Mode { train, infer };

template <class T>
struct ForwardCache {
    std::size_t batch = 0;
    Mode mode = Mode::infer;
    std::vector<T> x;  // input, NCHW
    std::array<std::vector<T>, 3> conv_out;   // pre-batchnorm
    std::array<std::vector<T>, 3> bn_out;     // pre-relu
    std::array<std::vector<T>, 3> relu_out;
    std::array<std::vector<T>, 3> bn_batch_mean, bn_batch_var;
    std::vector<T> fc1_out, fc_bn_out, fc_relu_out;
    std::vector<T> fc_batch_mean, fc_batch_var;
    std::vector<T> q;  // batch x n_actions
};

namespace qdetail {

template <class T>
void conv_forward(const std::vector<T>& in, std::size_t batch, std::size_t in_ch,
                  std::size_t in_side, const ParamTensor<T>& w, const ParamTensor<T>& bias,
                  const ConvSpec& spec, std::size_t out_side, std::vector<T>& out) {
    const std::size_t oc_n = spec.out_channels;
    out.assign(batch * oc_n * out_side * out_side, T(0));
    const long pad = static_cast<long>(spec.padding);
    const long side = static_cast<long>(in_side);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            for (std::size_t oy = 0; oy < out_side; ++oy) {
                for (std::size_t ox = 0; ox < out_side; ++ox) {
                    T acc = bias.v[oc];
                    for (std::size_t ic = 0; ic < in_ch; ++ic) {
                        for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                            const long iy = static_cast<long>(oy * spec.stride + ky) - pad;
                            if (iy < 0 || iy >= side) continue;
                            for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                                const long ix = static_cast<long>(ox * spec.stride + kx) - pad;
                                if (ix < 0 || ix >= side) continue;
                                acc += w.v[((oc * in_ch + ic) * spec.kernel + ky) * spec.kernel + kx] *
                                       in[((b * in_ch + ic) * in_side + iy) * in_side + ix];
                            }
                        }
                    }
                    out[((b * oc_n + oc) * out_side + oy) * out_side + ox] = acc;
                }
            }
        }
    }
}

template <class T>
void conv_backward(const std::vector<T>& in, const std::vector<T>& dout, std::size_t batch,
                   std::size_t in_ch, std::size_t in_side, const ParamTensor<T>& w,
                   const ConvSpec& spec, std::size_t out_side, ParamTensor<T>& dw,
                   ParamTensor<T>& db, std::vector<T>* din) {
    const std::size_t oc_n = spec.out_channels;
    if (din) din->assign(in.size(), T(0));
    const long pad = static_cast<long>(spec.padding);
    const long side = static_cast<long>(in_side);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            for (std::size_t oy = 0; oy < out_side; ++oy) {
                for (std::size_t ox = 0; ox < out_side; ++ox) {
                    const T g = dout[((b * oc_n + oc) * out_side + oy) * out_side + ox];
                    db.v[oc] += g;
                    for (std::size_t ic = 0; ic < in_ch; ++ic) {
                        for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                            const long iy = static_cast<long>(oy * spec.stride + ky) - pad;
                            if (iy < 0 || iy >= side) continue;
                            for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                                const long ix = static_cast<long>(ox * spec.stride + kx) - pad;
                                if (ix < 0 || ix >= side) continue;
                                const std::size_t wi =
                                    ((oc * in_ch + ic) * spec.kernel + ky) * spec.kernel + kx;
                                const std::size_t ii =
                                    ((b * in_ch + ic) * in_side + iy) * in_side + ix;
                                dw.v[wi] += g * in[ii];
                                if (din) (*din)[ii] += g * w.v[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Layout [batch][channels][spatial]; fc layers use spatial == 1.
template <class T>
void bn_forward(const std::vector<T>& x, std::size_t batch, std::size_t channels,
                std::size_t spatial, const ParamTensor<T>& gamma, const ParamTensor<T>& beta,
                const ParamTensor<T>& run_mean, const ParamTensor<T>& run_var, Mode mode,
                std::vector<T>& mean_out, std::vector<T>& var_out, std::vector<T>& y) {
    y.assign(x.size(), T(0));
    const T eps = static_cast<T>(kBnEps);
    if (mode == Mode::train) {
        mean_out.assign(channels, T(0));
        var_out.assign(channels, T(0));
        const T m = static_cast<T>(batch * spatial);
        for (std::size_t c = 0; c < channels; ++c) {
            T sum = T(0);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* px = &x[(b * channels + c) * spatial];
                for (std::size_t s = 0; s < spatial; ++s) sum += px[s];
            }
            const T mu = sum / m;
            T acc = T(0);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* px = &x[(b * channels + c) * spatial];
                for (std::size_t s = 0; s < spatial; ++s) {
                    const T d = px[s] - mu;
                    acc += d * d;
                }
            }
            const T var = acc / m;
            mean_out[c] = mu;
            var_out[c] = var;
            const T inv = T(1) / std::sqrt(var + eps);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* px = &x[(b * channels + c) * spatial];
                T* py = &y[(b * channels + c) * spatial];
                for (std::size_t s = 0; s < spatial; ++s) {
                    py[s] = gamma.v[c] * ((px[s] - mu) * inv) + beta.v[c];
                }
            }
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            const T inv = T(1) / std::sqrt(run_var.v[c] + eps);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* px = &x[(b * channels + c) * spatial];
                T* py = &y[(b * channels + c) * spatial];
                for (std::size_t s = 0; s < spatial; ++s) {
                    py[s] = gamma.v[c] * ((px[s] - run_mean.v[c]) * inv) + beta.v[c];
                }
            }
        }
    }
}

template <class T>
void bn_backward(const std::vector<T>& x, const std::vector<T>& dy, std::size_t batch,
                 std::size_t channels, std::size_t spatial, const ParamTensor<T>& gamma,
                 const std::vector<T>& mean, const std::vector<T>& var, ParamTensor<T>& dgamma,
                 ParamTensor<T>& dbeta, std::vector<T>& dx) {
    dx.assign(x.size(), T(0));
    const T eps = static_cast<T>(kBnEps);
    const T m = static_cast<T>(batch * spatial);
    for (std::size_t c = 0; c < channels; ++c) {
        const T mu = mean[c];
        const T inv = T(1) / std::sqrt(var[c] + eps);
        T sum_dy = T(0), sum_dy_xhat = T(0), sum_centered = T(0);
        for (std::size_t b = 0; b < batch; ++b) {
            const T* px = &x[(b * channels + c) * spatial];
            const T* pdy = &dy[(b * channels + c) * spatial];
            for (std::size_t s = 0; s < spatial; ++s) {
                sum_dy += pdy[s];
                sum_dy_xhat += pdy[s] * ((px[s] - mu) * inv);
                sum_centered += px[s] - mu;
            }
        }
        dgamma.v[c] += sum_dy_xhat;
        dbeta.v[c] += sum_dy;
        const T g = gamma.v[c];
        // dvar and dmean folded into one pass over the channel
        T dvar = T(0);
        for (std::size_t b = 0; b < batch; ++b) {
            const T* px = &x[(b * channels + c) * spatial];
            const T* pdy = &dy[(b * channels + c) * spatial];
            for (std::size_t s = 0; s < spatial; ++s) {
                dvar += pdy[s] * g * (px[s] - mu);
            }
        }
        dvar *= static_cast<T>(-0.5) * inv * inv * inv;
        const T dmean = -inv * g * sum_dy + dvar * (static_cast<T>(-2) / m) * sum_centered;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* px = &x[(b * channels + c) * spatial];
            const T* pdy = &dy[(b * channels + c) * spatial];
            T* pdx = &dx[(b * channels + c) * spatial];
            for (std::size_t s = 0; s < spatial; ++s) {
                pdx[s] = pdy[s] * g * inv + dvar * T(2) * (px[s] - mu) / m + dmean / m;
            }
        }
    }
}

template <class T>
void relu_forward(const std::vector<T>& x, std::vector<T>& y) {
    y.assign(x.size(), T(0));
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const std::vector<T>& pre, const std::vector<T>& dy, std::vector<T>& dx) {
    dx.assign(pre.size(), T(0));
    for (std::size_t i = 0; i < pre.size(); ++i) dx[i] = pre[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void fc_forward(const std::vector<T>& in, std::size_t batch, std::size_t in_dim,
                const ParamTensor<T>& w, const ParamTensor<T>& bias, std::size_t out_dim,
                std::vector<T>& out) {
    out.assign(batch * out_dim, T(0));
    for (std::size_t b = 0; b < batch; ++b) {
        const T* px = &in[b * in_dim];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const T* pw = &w.v[o * in_dim];
            T acc = bias.v[o];
            for (std::size_t i = 0; i < in_dim; ++i) acc += pw[i] * px[i];
            out[b * out_dim + o] = acc;
        }
    }
}

template <class T>
void fc_backward(const std::vector<T>& in, const std::vector<T>& dout, std::size_t batch,
                 std::size_t in_dim, const ParamTensor<T>& w, std::size_t out_dim,
                 ParamTensor<T>& dw, ParamTensor<T>& db, std::vector<T>* din) {
    if (din) din->assign(in.size(), T(0));
    for (std::size_t b = 0; b < batch; ++b) {
        const T* px = &in[b * in_dim];
        const T* pdy = &dout[b * out_dim];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const T g = pdy[o];
            db.v[o] += g;
            T* pdw = &dw.v[o * in_dim];
            for (std::size_t i = 0; i < in_dim; ++i) pdw[i] += g * px[i];
        }
        if (din) {
            T* pdx = &(*din)[b * in_dim];
            for (std::size_t o = 0; o < out_dim; ++o) {
                const T g = pdy[o];
                const T* pw = &w.v[o * in_dim];
                for (std::size_t i = 0; i < in_dim; ++i) pdx[i] += g * pw[i];
            }
        }
    }
}

}  // namespace qdetail

// states_hwc holds `batch` stacked (side, side, 3) tensors in row/col/channel
// order; the network works in channel-major planes internally.
template <class T>
std::vector<T> forward(const NetParams<T>& params, const std::vector<T>& states_hwc,
                       std::size_t batch, Mode mode, ForwardCache<T>* cache = nullptr) {
    const NetworkConfig& cfg = params.cfg;
    const std::size_t side = cfg.input_side;
    const std::size_t ch = cfg.in_channels;
    if (batch == 0) throw std::invalid_argument("forward: empty batch");
    if (states_hwc.size() != batch * side * side * ch) {
        throw std::invalid_argument("forward: state size does not match network input");
    }
    ForwardCache<T> local;
    ForwardCache<T>& cc = cache ? *cache : local;
    cc.batch = batch;
    cc.mode = mode;

    cc.x.assign(states_hwc.size(), T(0));
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t r = 0; r < side; ++r) {
            for (std::size_t c = 0; c < side; ++c) {
                for (std::size_t k = 0; k < ch; ++k) {
                    cc.x[((b * ch + k) * side + r) * side + c] =
                        states_hwc[((b * side + r) * side + c) * ch + k];
                }
            }
        }
    }

    const std::vector<T>* stage_in = &cc.x;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t in_side = cfg.side_after(i);
        const std::size_t out_side = cfg.side_after(i + 1);
        const std::size_t in_ch = cfg.channels_after(i);
        qdetail::conv_forward(*stage_in, batch, in_ch, in_side, params.conv_w[i],
                              params.conv_b[i], cfg.conv[i], out_side, cc.conv_out[i]);
        qdetail::bn_forward(cc.conv_out[i], batch, cfg.conv[i].out_channels, out_side * out_side,
                            params.bn_gamma[i], params.bn_beta[i], params.bn_mean[i],
                            params.bn_var[i], mode, cc.bn_batch_mean[i], cc.bn_batch_var[i],
                            cc.bn_out[i]);
        qdetail::relu_forward(cc.bn_out[i], cc.relu_out[i]);
        stage_in = &cc.relu_out[i];
    }

    qdetail::fc_forward(cc.relu_out[2], batch, cfg.flat_dim(), params.fc1_w, params.fc1_b,
                        cfg.fc_dim, cc.fc1_out);
    qdetail::bn_forward(cc.fc1_out, batch, cfg.fc_dim, std::size_t{1}, params.fc_gamma,
                        params.fc_beta, params.fc_mean, params.fc_var, mode, cc.fc_batch_mean,
                        cc.fc_batch_var, cc.fc_bn_out);
    qdetail::relu_forward(cc.fc_bn_out, cc.fc_relu_out);
    qdetail::fc_forward(cc.fc_relu_out, batch, cfg.fc_dim, params.fc2_w, params.fc2_b,
                        cfg.n_actions, cc.q);
    return cc.q;
}

// Folds the batch statistics of a training-mode pass into the running
// estimates. Kept separate from forward so finite-difference sweeps stay pure.
template <class T>
void commit_running_stats(NetParams<T>& params, const ForwardCache<T>& cache) {
    if (cache.mode != Mode::train) {
        throw std::invalid_argument("commit_running_stats: cache is not from a training pass");
    }
    const T mom = static_cast<T>(qdetail::kBnMomentum);
    auto blend = [&](ParamTensor<T>& run, const std::vector<T>& batch_stat) {
        for (std::size_t i = 0; i < run.v.size(); ++i) {
            run.v[i] = (T(1) - mom) * run.v[i] + mom * batch_stat[i];
        }
    };
    for (std::size_t i = 0; i < 3; ++i) {
        blend(params.bn_mean[i], cache.bn_batch_mean[i]);
        blend(params.bn_var[i], cache.bn_batch_var[i]);
    }
    blend(params.fc_mean, cache.fc_batch_mean);
    blend(params.fc_var, cache.fc_batch_var);
}

template <class T>
NetParams<T> backward(const NetParams<T>& params, const ForwardCache<T>& cache,
                      const std::vector<T>& dq) {
    const NetworkConfig& cfg = params.cfg;
    const std::size_t batch = cache.batch;
    if (cache.mode != Mode::train) {
        throw std::invalid_argument("backward: cache is not from a training pass");
    }
    if (dq.size() != batch * cfg.n_actions) {
        throw std::invalid_argument("backward: output gradient size mismatch");
    }
    NetParams<T> grads = make_params<T>(cfg);

    std::vector<T> d_fc_relu;
    qdetail::fc_backward(cache.fc_relu_out, dq, batch, cfg.fc_dim, params.fc2_w, cfg.n_actions,
                         grads.fc2_w, grads.fc2_b, &d_fc_relu);
    std::vector<T> d_fc_bn;
    qdetail::relu_backward(cache.fc_bn_out, d_fc_relu, d_fc_bn);
    std::vector<T> d_fc1;
    qdetail::bn_backward(cache.fc1_out, d_fc_bn, batch, cfg.fc_dim, std::size_t{1},
                         params.fc_gamma, cache.fc_batch_mean, cache.fc_batch_var, grads.fc_gamma,
                         grads.fc_beta, d_fc1);
    std::vector<T> d_flat;
    qdetail::fc_backward(cache.relu_out[2], d_fc1, batch, cfg.flat_dim(), params.fc1_w,
                         cfg.fc_dim, grads.fc1_w, grads.fc1_b, &d_flat);

    std::vector<T> d_stage = std::move(d_flat);
    for (std::size_t stage = 3; stage-- > 0;) {
        const std::size_t out_side = cfg.side_after(stage + 1);
        const std::size_t in_side = cfg.side_after(stage);
        const std::size_t in_ch = cfg.channels_after(stage);
        std::vector<T> d_bn;
        qdetail::relu_backward(cache.bn_out[stage], d_stage, d_bn);
        std::vector<T> d_conv;
        qdetail::bn_backward(cache.conv_out[stage], d_bn, batch, cfg.conv[stage].out_channels,
                             out_side * out_side, params.bn_gamma[stage],
                             cache.bn_batch_mean[stage], cache.bn_batch_var[stage],
                             grads.bn_gamma[stage], grads.bn_beta[stage], d_conv);
        const std::vector<T>& stage_in = stage == 0 ? cache.x : cache.relu_out[stage - 1];
        std::vector<T> d_in;
        qdetail::conv_backward(stage_in, d_conv, batch, in_ch, in_side, params.conv_w[stage],
                               cfg.conv[stage], out_side, grads.conv_w[stage],
                               grads.conv_b[stage], stage == 0 ? nullptr : &d_in);
        d_stage = std::move(d_in);
    }
    return grads;
}

template <class T>
struct OptState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<ParamTensor<T>> m, v;
};

template <class T>
OptState<T> make_opt_state(const NetParams<T>& params, double learning_rate = 1e-4,
                           double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
    if (learning_rate <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw std::invalid_argument("adam: betas must lie in [0, 1)");
    }
    if (epsilon <= 0.0) throw std::invalid_argument("adam: epsilon must be positive");
    OptState<T> opt;
    opt.learning_rate = learning_rate;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.epsilon = epsilon;
    for (const ParamTensor<T>* t : trainable_tensors(params)) {
        opt.m.push_back(ParamTensor<T>::zeros(t->shape));
        opt.v.push_back(ParamTensor<T>::zeros(t->shape));
    }
    return opt;
}

template <class T>
void adam_step(NetParams<T>& params, const NetParams<T>& grads, OptState<T>& opt) {
    auto p_list = trainable_tensors(params);
    auto g_list = trainable_tensors(grads);
    if (opt.m.size() != p_list.size()) throw std::invalid_argument("adam_step: state mismatch");
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t k = 0; k < p_list.size(); ++k) {
        ParamTensor<T>& p = *p_list[k];
        const ParamTensor<T>& g = *g_list[k];
        if (g.v.size() != p.v.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
        ParamTensor<T>& m = opt.m[k];
        ParamTensor<T>& v = opt.v[k];
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            const double gi = static_cast<double>(g.v[i]);
            if (!std::isfinite(gi)) throw std::runtime_error("adam_step: non-finite gradient");
            double mi = opt.beta1 * static_cast<double>(m.v[i]) + (1.0 - opt.beta1) * gi;
            double vi = opt.beta2 * static_cast<double>(v.v[i]) + (1.0 - opt.beta2) * gi * gi;
            m.v[i] = static_cast<T>(mi);
            v.v[i] = static_cast<T>(vi);
            const double update =
                opt.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + opt.epsilon);
            p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - update);
        }
    }
}

template <class T>
void sync_target(const NetParams<T>& policy, NetParams<T>& target) {
    if (!(policy.cfg == target.cfg)) {
        throw std::invalid_argument("sync_target: network configurations differ");
    }
    auto src = all_tensors(policy);
    auto dst = all_tensors(target);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k]->v = src[k]->v;
}

template <class T>
std::size_t argmax_index(const T* values, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

struct TrainBatch {
    std::size_t batch = 0;
    std::size_t side = 0;
    std::vector<double> states;       // batch stacked (side, side, 3) tensors
    std::vector<double> next_states;
    std::vector<std::size_t> actions;
    std::vector<double> rewards;
    std::vector<std::uint8_t> terminal;
};

inline double td_loss(const std::vector<double>& q, std::size_t n_actions,
                      const std::vector<std::size_t>& actions,
                      const std::vector<double>& targets) {
    if (actions.size() != targets.size() || actions.empty() ||
        q.size() != actions.size() * n_actions) {
        throw std::invalid_argument("td_loss: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (actions[i] >= n_actions) throw std::invalid_argument("td_loss: action out of range");
        const double d = q[i * n_actions + actions[i]] - targets[i];
        acc += d * d;
    }
    return acc / static_cast<double>(actions.size());
}

template <class T>
std::vector<double> td_targets(const TrainBatch& batch, const NetParams<T>& target,
                               double gamma) {
    if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("td_targets: gamma not in [0, 1]");
    std::vector<double> y(batch.batch, 0.0);
    if (batch.batch == 0) return y;
    bool any_open = false;
    for (std::uint8_t t : batch.terminal) {
        if (!t) any_open = true;
    }
    std::vector<double> max_next(batch.batch, 0.0);
    if (any_open && gamma > 0.0) {
        std::vector<T> next(batch.next_states.size());
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] = static_cast<T>(batch.next_states[i]);
        }
        const std::vector<T> q = forward(target, next, batch.batch, Mode::infer);
        const std::size_t n_actions = target.cfg.n_actions;
        for (std::size_t i = 0; i < batch.batch; ++i) {
            const T* row = &q[i * n_actions];
            max_next[i] = static_cast<double>(row[argmax_index(row, n_actions)]);
        }
    }
    for (std::size_t i = 0; i < batch.batch; ++i) {
        y[i] = batch.terminal[i] ? batch.rewards[i]
                                 : batch.rewards[i] + gamma * max_next[i];
    }
    return y;
}

struct TrainStepResult {
    double loss = 0.0;
    std::vector<double> abs_td;
};

// One batched update: targets from the frozen net, squared TD error loss,
// Adam on the policy. Importance weights, when given, scale per-sample
// gradients; the reported loss stays unweighted.
template <class T>
TrainStepResult train_step(NetParams<T>& policy, OptState<T>& opt, const NetParams<T>& target,
                           const TrainBatch& batch, double gamma,
                           const std::vector<double>* importance = nullptr) {
    if (batch.batch == 0) throw std::invalid_argument("train_step: empty batch");
    if (importance && importance->size() != batch.batch) {
        throw std::invalid_argument("train_step: importance weight count mismatch");
    }
    const std::size_t n_actions = policy.cfg.n_actions;
    const std::vector<double> targets = td_targets(batch, target, gamma);

    std::vector<T> states(batch.states.size());
    for (std::size_t i = 0; i < states.size(); ++i) states[i] = static_cast<T>(batch.states[i]);

    ForwardCache<T> cache;
    const std::vector<T> q_t = forward(policy, states, batch.batch, Mode::train, &cache);
    commit_running_stats(policy, cache);

    std::vector<double> q(q_t.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<double>(q_t[i]);

    TrainStepResult result;
    result.loss = td_loss(q, n_actions, batch.actions, targets);
    result.abs_td.resize(batch.batch);

    std::vector<T> dq(q.size(), T(0));
    const double scale = 2.0 / static_cast<double>(batch.batch);
    for (std::size_t i = 0; i < batch.batch; ++i) {
        const double delta = q[i * n_actions + batch.actions[i]] - targets[i];
        result.abs_td[i] = std::abs(delta);
        const double w = importance ? (*importance)[i] : 1.0;
        dq[i * n_actions + batch.actions[i]] = static_cast<T>(scale * w * delta);
    }
    NetParams<T> grads = backward(policy, cache, dq);
    adam_step(policy, grads, opt);
    return result;
}

template <class To, class From>
NetParams<To> convert_params(const NetParams<From>& in) {
    NetParams<To> out = make_params<To>(in.cfg);
    auto src = all_tensors(in);
    auto dst = all_tensors(out);
    for (std::size_t k = 0; k < src.size(); ++k) {
        for (std::size_t i = 0; i < src[k]->v.size(); ++i) {
            dst[k]->v[i] = static_cast<To>(src[k]->v[i]);
        }
    }
    return out;
}

template <class To, class From>
OptState<To> convert_opt(const OptState<From>& in) {
    OptState<To> out;
    out.learning_rate = in.learning_rate;
    out.beta1 = in.beta1;
    out.beta2 = in.beta2;
    out.epsilon = in.epsilon;
    out.step = in.step;
    for (const auto& t : in.m) {
        ParamTensor<To> c = ParamTensor<To>::zeros(t.shape);
        for (std::size_t i = 0; i < t.v.size(); ++i) c.v[i] = static_cast<To>(t.v[i]);
        out.m.push_back(std::move(c));
    }
    for (const auto& t : in.v) {
        ParamTensor<To> c = ParamTensor<To>::zeros(t.shape);
        for (std::size_t i = 0; i < t.v.size(); ++i) c.v[i] = static_cast<To>(t.v[i]);
        out.v.push_back(std::move(c));
    }
    return out;
}

namespace qdetail {

constexpr char kMagic[4] = {'P', 'M', 'Q', 'C'};
constexpr char kOptMagic[4] = {'O', 'P', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(char* dst, std::size_t n) {
        need(n);
        data.copy(dst, n, pos);
        pos += n;
    }
};

inline void put_tensor(std::string& out, const ParamTensor<double>& t) {
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint32_t d : t.shape) put_u32(out, d);
    for (double x : t.v) put_f64(out, x);
}

inline void read_tensor_into(ByteReader& r, ParamTensor<double>& t) {
    const std::uint32_t ndims = r.u32();
    if (ndims != t.shape.size()) throw std::runtime_error("checkpoint: tensor rank mismatch");
    for (std::uint32_t d : t.shape) {
        if (r.u32() != d) throw std::runtime_error("checkpoint: tensor shape mismatch");
    }
    for (double& x : t.v) x = r.f64();
}

inline void put_config(std::string& out, const NetworkConfig& cfg) {
    put_u32(out, static_cast<std::uint32_t>(cfg.input_side));
    put_u32(out, static_cast<std::uint32_t>(cfg.in_channels));
    for (const auto& c : cfg.conv) {
        put_u32(out, static_cast<std::uint32_t>(c.out_channels));
        put_u32(out, static_cast<std::uint32_t>(c.kernel));
        put_u32(out, static_cast<std::uint32_t>(c.stride));
        put_u32(out, static_cast<std::uint32_t>(c.padding));
    }
    put_u32(out, static_cast<std::uint32_t>(cfg.fc_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.n_actions));
}

inline NetworkConfig read_config(ByteReader& r) {
    NetworkConfig cfg;
    cfg.input_side = r.u32();
    cfg.in_channels = r.u32();
    for (auto& c : cfg.conv) {
        c.out_channels = r.u32();
        c.kernel = r.u32();
        c.stride = r.u32();
        c.padding = r.u32();
    }
    cfg.fc_dim = r.u32();
    cfg.n_actions = r.u32();
    return cfg;
}

}  // namespace qdetail

inline void save_checkpoint(const NetParams<double>& params, const OptState<double>& opt,
                            const std::string& path) {
    std::string out;
    out.append(qdetail::kMagic, 4);
    qdetail::put_u32(out, qdetail::kVersion);
    qdetail::put_config(out, params.cfg);
    auto tensors = all_tensors(params);
    qdetail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const ParamTensor<double>* t : tensors) qdetail::put_tensor(out, *t);

    out.append(qdetail::kOptMagic, 4);
    qdetail::put_u64(out, opt.step);
    qdetail::put_f64(out, opt.learning_rate);
    qdetail::put_f64(out, opt.beta1);
    qdetail::put_f64(out, opt.beta2);
    qdetail::put_f64(out, opt.epsilon);
    qdetail::put_u32(out, static_cast<std::uint32_t>(opt.m.size() + opt.v.size()));
    for (const auto& t : opt.m) qdetail::put_tensor(out, t);
    for (const auto& t : opt.v) qdetail::put_tensor(out, t);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::pair<NetParams<double>, OptState<double>> load_checkpoint(
    const std::string& path, const NetworkConfig& expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    qdetail::ByteReader r{data};

    char magic[4];
    r.raw(magic, 4);
    if (std::string_view(magic, 4) != std::string_view(qdetail::kMagic, 4)) {
        throw std::runtime_error("load_checkpoint: not a checkpoint file");
    }
    if (r.u32() != qdetail::kVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version");
    }
    const NetworkConfig stored = qdetail::read_config(r);
    if (!(stored == expected)) {
        throw std::runtime_error(
            "load_checkpoint: stored network shape does not match the requested configuration "
            "(stored " +
            std::to_string(stored.n_actions) + " actions, requested " +
            std::to_string(expected.n_actions) + ")");
    }

    NetParams<double> params = make_params<double>(expected);
    auto tensors = all_tensors(params);
    if (r.u32() != tensors.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (ParamTensor<double>* t : tensors) qdetail::read_tensor_into(r, *t);

    char opt_magic[4];
    r.raw(opt_magic, 4);
    if (std::string_view(opt_magic, 4) != std::string_view(qdetail::kOptMagic, 4)) {
        throw std::runtime_error("checkpoint: optimizer block missing");
    }
    OptState<double> opt;
    opt.step = r.u64();
    opt.learning_rate = r.f64();
    opt.beta1 = r.f64();
    opt.beta2 = r.f64();
    opt.epsilon = r.f64();
    auto slots = trainable_tensors(params);
    if (r.u32() != 2 * slots.size()) {
        throw std::runtime_error("checkpoint: optimizer tensor count mismatch");
    }
    for (const ParamTensor<double>* t : slots) {
        ParamTensor<double> m = ParamTensor<double>::zeros(t->shape);
        qdetail::read_tensor_into(r, m);
        opt.m.push_back(std::move(m));
    }
    for (const ParamTensor<double>* t : slots) {
        ParamTensor<double> v = ParamTensor<double>::zeros(t->shape);
        qdetail::read_tensor_into(r, v);
        opt.v.push_back(std::move(v));
    }
    return {std::move(params), std::move(opt)};
}

}  // namespace pmrl
