#include "coopshap/diffnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coopshap::net {

namespace {

void check_dims(const NetSpec& spec, const Vec& params, const Vec& input) {
    spec.validate();
    if (static_cast<int>(params.size()) != spec.param_count())
        throw std::invalid_argument("net: param vector length " + std::to_string(params.size()) +
                                    " != expected " + std::to_string(spec.param_count()));
    if (static_cast<int>(input.size()) != spec.input_size())
        throw std::invalid_argument("net: input length " + std::to_string(input.size()) +
                                    " != first layer size " + std::to_string(spec.input_size()));
}

// Runs the forward pass storing every layer's post-activation vector.
std::vector<Vec> forward_activations(const NetSpec& spec, const Vec& params, const Vec& input) {
    const int L = static_cast<int>(spec.layers.size());
    std::vector<Vec> act(L);
    act[0] = input;
    std::size_t off = 0;
    for (int l = 1; l < L; ++l) {
        const int in = spec.layers[l - 1], out = spec.layers[l];
        const bool last = l == L - 1;
        Vec& y = act[l];
        y.assign(out, 0.0);
        for (int r = 0; r < out; ++r) {
            double z = params[off + std::size_t(in) * out + r];  // bias
            const double* w = &params[off + std::size_t(r) * in];
            for (int c = 0; c < in; ++c) z += w[c] * act[l - 1][c];
            y[r] = last ? z : std::tanh(z);
        }
        off += std::size_t(in) * out + out;
    }
    return act;
}

}  // namespace

int NetSpec::param_count() const {
    int total = 0;
    for (std::size_t l = 1; l < layers.size(); ++l)
        total += layers[l - 1] * layers[l] + layers[l];
    return total;
}

void NetSpec::validate() const {
    if (layers.size() < 2) throw std::invalid_argument("net spec: need at least 2 layers");
    for (int s : layers)
        if (s < 1) throw std::invalid_argument("net spec: layer size must be >= 1");
}

Vec forward(const NetSpec& spec, const Vec& params, const Vec& input) {
    check_dims(spec, params, input);
    return forward_activations(spec, params, input).back();
}

Grads backward(const NetSpec& spec, const Vec& params, const Vec& input, const Vec& upstream) {
    check_dims(spec, params, input);
    if (static_cast<int>(upstream.size()) != spec.output_size())
        throw std::invalid_argument("net: upstream length != output size");

    const int L = static_cast<int>(spec.layers.size());
    const std::vector<Vec> act = forward_activations(spec, params, input);

    Grads g;
    g.params.assign(params.size(), 0.0);
    g.output = act.back();

    // Per-layer parameter offsets.
    std::vector<std::size_t> offs(L, 0);
    for (int l = 1; l + 1 < L; ++l)
        offs[l + 1] = offs[l] + std::size_t(spec.layers[l - 1]) * spec.layers[l] + spec.layers[l];

    Vec delta = upstream;  // d/d(pre-activation) of the current layer, output first
    for (int l = L - 1; l >= 1; --l) {
        const int in = spec.layers[l - 1], out = spec.layers[l];
        const std::size_t off = offs[l];
        if (l != L - 1) {
            // tanh'(z) = 1 - y^2 on the stored post-activation
            for (int r = 0; r < out; ++r) delta[r] *= 1.0 - act[l][r] * act[l][r];
        }
        Vec prev(in, 0.0);
        for (int r = 0; r < out; ++r) {
            const double d = delta[r];
            double* gw = &g.params[off + std::size_t(r) * in];
            const double* w = &params[off + std::size_t(r) * in];
            for (int c = 0; c < in; ++c) {
                gw[c] += d * act[l - 1][c];
                prev[c] += d * w[c];
            }
            g.params[off + std::size_t(in) * out + r] += d;  // bias
        }
        delta = std::move(prev);
    }
    g.input = std::move(delta);
    return g;
}

Vec init_params(const NetSpec& spec, Rng& rng) {
    spec.validate();
    Vec p(spec.param_count(), 0.0);
    std::size_t off = 0;
    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        const int in = spec.layers[l - 1], out = spec.layers[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (int k = 0; k < in * out; ++k) p[off + k] = rng.uniform(-bound, bound);
        off += std::size_t(in) * out + out;  // biases stay zero
    }
    return p;
}

double clip_global_norm(Vec& grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
    return norm;
}

void Adam::apply(Vec& params, const Vec& grad) {
    if (params.size() != m.size() || grad.size() != m.size())
        throw std::invalid_argument("adam: size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw std::runtime_error("adam: non-finite gradient at index " + std::to_string(i));
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

}  // namespace coopshap::net
