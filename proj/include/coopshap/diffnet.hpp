#ifndef COOPSHAP_DIFFNET_HPP
#define COOPSHAP_DIFFNET_HPP

#include <stdexcept>
#include <vector>

#include "coopshap/rng.hpp"

namespace coopshap::net {

using Vec = std::vector<double>;

// Fully connected net: tanh hidden layers, identity output. Parameters are a
// flat vector laid out layer by layer, weights row-major then biases.
struct NetSpec {
    std::vector<int> layers;  // input..output sizes, >= 2 entries

    int input_size() const { return layers.front(); }
    int output_size() const { return layers.back(); }
    int param_count() const;
    void validate() const;

    bool operator==(const NetSpec&) const = default;
};

struct Grads {
    Vec params;
    Vec input;
    Vec output;  // forward result of the same pass, for free
};

Vec forward(const NetSpec& spec, const Vec& params, const Vec& input);

// Reverse-mode gradients of dot(upstream, output) w.r.t. params and input.
Grads backward(const NetSpec& spec, const Vec& params, const Vec& input, const Vec& upstream);

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
Vec init_params(const NetSpec& spec, Rng& rng);

// Scales grad in place so its global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(Vec& grad, double max_norm);

// Adam with bias correction. Throws on non-finite gradient entries, naming
// the offending index.
struct Adam {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    Vec m, v;

    Adam() : lr(1e-3) {}
    Adam(int size, double lr_) : lr(lr_), m(size, 0.0), v(size, 0.0) {}

    void apply(Vec& params, const Vec& grad);
};

inline void soft_update(Vec& target, const Vec& online, double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau outside [0,1]");
    if (target.size() != online.size())
        throw std::invalid_argument("soft_update: length mismatch");
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = tau * online[i] + (1.0 - tau) * target[i];
}

}  // namespace coopshap::net

#endif
