#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semiforge/numcore.hpp"

namespace semiforge {

struct Layer {
    Mat W;
    std::vector<double> b;
};

// tanh(W2 tanh(W1 x + b1) + b2) -> embedding e, consumed by both linear heads.
struct ModelParams {
    Layer enc1;      // hidden x d
    Layer enc2;      // h x hidden
    Layer head_std;  // K x h
    Layer head_bal;  // K x h
    int d = 0, hidden = 0, h = 0, K = 0;

    // Seeded Gaussian init, std 1/sqrt(fan_in), zero biases.
    static ModelParams init(int d, int hidden, int h, int K, std::uint64_t seed);

    std::size_t param_count() const;
    bool all_finite() const;
};

struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> a1;         // tanh output of layer 1
    std::vector<double> embedding;  // tanh output of layer 2
    std::vector<double> logits_std;
    std::vector<double> logits_bal;
};

ForwardTrace forward(const ModelParams& params, std::span<const double> x);

// Upstream gradients for one sample; an empty vector means zero.
struct LossGrad {
    std::vector<double> d_logits_std;
    std::vector<double> d_logits_bal;
    std::vector<double> d_embedding;
};

struct Gradients {
    Layer enc1, enc2, head_std, head_bal;

    static Gradients zeros_like(const ModelParams& params);
    void accumulate(const Gradients& other, double scale = 1.0);
};

// Exact analytic gradients of the scalar loss whose per-sample upstream
// gradients are supplied; sums over the batch. Throws on shape mismatch.
Gradients backward(const ModelParams& params,
                   std::span<const ForwardTrace> traces,
                   std::span<const LossGrad> loss_grads);

struct OptState {
    double lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    Gradients velocity;  // zero-initialized lazily on first step
    bool initialized = false;
};

// v <- m*v + g + wd*theta ; theta <- theta - lr*v
void sgd_step(ModelParams& params, const Gradients& grads, OptState& opt);

// Flat parameter-vector view, fixed block order; used by gradient checks.
std::vector<double> flatten(const ModelParams& params);
void unflatten(ModelParams& params, std::span<const double> values);
std::vector<double> flatten(const Gradients& grads);

// Text checkpoint, exact round-trip.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace semiforge
