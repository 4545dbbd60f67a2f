#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "qpole/rng.hpp"

namespace qpole::neural {

enum class Activation { relu, identity };

struct DenseLayer {
    int in = 0;
    int out = 0;
    Activation act = Activation::identity;
    std::vector<double> weights;  // row-major, out x in
    std::vector<double> biases;   // out
};

struct Mlp {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.front().in; }
    int output_dim() const { return layers.back().out; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) {
            n += l.weights.size() + l.biases.size();
        }
        return n;
    }
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
inline Mlp make_mlp(const std::vector<int>& dims, const std::vector<Activation>& acts,
                    rng::Engine& gen) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1) {
        throw std::invalid_argument("make_mlp: inconsistent layer spec");
    }
    Mlp net;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer l;
        l.in = dims[i];
        l.out = dims[i + 1];
        l.act = acts[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        l.weights.resize(static_cast<std::size_t>(l.in) * l.out);
        for (auto& w : l.weights) {
            w = dist(gen);
        }
        l.biases.assign(l.out, 0.0);
        net.layers.push_back(std::move(l));
    }
    return net;
}

// Pre-activations and layer inputs retained for backward.
struct ForwardCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // per layer, before activation
    std::vector<std::vector<double>> post;  // per layer, after activation
};

inline std::vector<double> forward(const Mlp& net, std::span<const double> input,
                                   ForwardCache* cache = nullptr) {
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    std::vector<double> x(input.begin(), input.end());
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
    }
    for (const auto& l : net.layers) {
        std::vector<double> z(l.out);
        for (int o = 0; o < l.out; ++o) {
            const double* wrow = &l.weights[static_cast<std::size_t>(o) * l.in];
            double acc = l.biases[o];
            for (int i = 0; i < l.in; ++i) {
                acc += wrow[i] * x[i];
            }
            z[o] = acc;
        }
        if (cache) {
            cache->pre.push_back(z);
        }
        if (l.act == Activation::relu) {
            for (auto& v : z) {
                v = std::max(v, 0.0);
            }
        }
        if (cache) {
            cache->post.push_back(z);
        }
        x = std::move(z);
    }
    return x;
}

struct Gradients {
    std::vector<std::vector<double>> d_weights;  // mirrors net layers
    std::vector<std::vector<double>> d_biases;
    std::vector<double> d_input;
};

inline Gradients make_zero_gradients(const Mlp& net) {
    Gradients g;
    for (const auto& l : net.layers) {
        g.d_weights.emplace_back(l.weights.size(), 0.0);
        g.d_biases.emplace_back(l.biases.size(), 0.0);
    }
    g.d_input.assign(net.input_dim(), 0.0);
    return g;
}

// Reverse-mode gradients for one cached forward pass, accumulated into g.
inline void backward_accumulate(const Mlp& net, const ForwardCache& cache,
                                std::span<const double> output_grad, Gradients& g) {
    if (cache.pre.size() != net.layers.size()) {
        throw std::invalid_argument("backward: cache does not match network");
    }
    std::vector<double> delta(output_grad.begin(), output_grad.end());
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const DenseLayer& l = net.layers[li];
        if (l.act == Activation::relu) {
            for (int o = 0; o < l.out; ++o) {
                if (cache.pre[li][o] <= 0.0) {
                    delta[o] = 0.0;
                }
            }
        }
        const std::vector<double>& layer_in =
            (li == 0) ? cache.input : cache.post[li - 1];
        for (int o = 0; o < l.out; ++o) {
            const double d = delta[o];
            double* dw = &g.d_weights[li][static_cast<std::size_t>(o) * l.in];
            for (int i = 0; i < l.in; ++i) {
                dw[i] += d * layer_in[i];
            }
            g.d_biases[li][o] += d;
        }
        std::vector<double> prev(l.in, 0.0);
        for (int o = 0; o < l.out; ++o) {
            const double d = delta[o];
            const double* wrow = &l.weights[static_cast<std::size_t>(o) * l.in];
            for (int i = 0; i < l.in; ++i) {
                prev[i] += d * wrow[i];
            }
        }
        delta = std::move(prev);
    }
    for (int i = 0; i < net.input_dim(); ++i) {
        g.d_input[i] += delta[i];
    }
}

inline Gradients backward(const Mlp& net, const ForwardCache& cache,
                          std::span<const double> output_grad) {
    Gradients g = make_zero_gradients(net);
    backward_accumulate(net, cache, output_grad, g);
    return g;
}

struct SoftmaxResult {
    std::vector<double> probs;
    double log_prob = 0.0;
};

// Max-subtracted softmax; log_prob = logit[a] - logsumexp(logits).
inline SoftmaxResult softmax_logprob(std::span<const double> logits, int action) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(logits[i] - m);
        sum += e[i];
    }
    SoftmaxResult r;
    r.probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        r.probs[i] = e[i] / sum;
    }
    r.log_prob = logits[action] - (m + std::log(sum));
    return r;
}

inline double huber(double e, double delta) {
    if (delta <= 0.0) {
        throw std::invalid_argument("huber: delta must be positive");
    }
    const double a = std::abs(e);
    return a < delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_grad(double e, double delta) {
    const double a = std::abs(e);
    return a < delta ? e : (e > 0.0 ? delta : -delta);
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0, double learning_rate = 0.001)
        : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

// Standard bias-corrected Adam update over a flat parameter view.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.t);
    const double bc2 = 1.0 - std::pow(state.beta2, state.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

// Applies one Adam step to every parameter of the network, matching the flat
// layout of the per-layer gradient arrays.
inline void adam_step(Mlp& net, const Gradients& g, AdamState& state) {
    std::size_t off = 0;
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.t);
    const double bc2 = 1.0 - std::pow(state.beta2, state.t);
    auto update = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i, ++off) {
            state.m[off] = state.beta1 * state.m[off] + (1.0 - state.beta1) * grads[i];
            state.v[off] =
                state.beta2 * state.v[off] + (1.0 - state.beta2) * grads[i] * grads[i];
            params[i] -= state.lr * (state.m[off] / bc1) /
                         (std::sqrt(state.v[off] / bc2) + state.epsilon);
        }
    };
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        update(net.layers[li].weights, g.d_weights[li]);
        update(net.layers[li].biases, g.d_biases[li]);
    }
    if (off != state.m.size()) {
        throw std::invalid_argument("adam_step: optimizer state does not match network");
    }
}

}  // namespace qpole::neural
