#ifndef FORECAST_CORE_MATH_HPP
#define FORECAST_CORE_MATH_HPP

#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "forecast/matrix.hpp"

namespace forecast {

/**
 * One affine map (out_dim x in_dim weight plus bias) with gradient
 * accumulators. Gradients accumulate across backward calls and are zeroed
 * by the optimizer step.
 */
struct AffineLayer {
    Matrix weight;       // out_dim x in_dim
    std::vector<double> bias;
    Matrix grad_weight;
    std::vector<double> grad_bias;

    AffineLayer() = default;
    AffineLayer(std::size_t in_dim, std::size_t out_dim);

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }

    // Uniform init in [-1/sqrt(in_dim), +1/sqrt(in_dim)], bias zero.
    void init(std::mt19937_64& rng);

    // input: batch x in_dim -> batch x out_dim
    Matrix forward(const Matrix& input) const;

    // Accumulates grad_weight += upstream^T * input, grad_bias += column sums
    // of upstream, and returns the gradient w.r.t. the input.
    Matrix backward(const Matrix& input, const Matrix& upstream);

    void zero_grad();
};

// Elementwise x * sigmoid(x) (Swish with beta = 1).
Matrix swish(const Matrix& x);

// Gradient of swish at the pre-activation x, multiplied by upstream.
Matrix swish_backward(const Matrix& x, const Matrix& upstream);

/**
 * Per-channel statistics of one input window, used to invert the
 * normalization on the forecast. stddev is the population standard
 * deviation clamped from below by epsilon.
 */
struct RevInState {
    std::vector<double> mean;
    std::vector<double> stddev;
    double epsilon = 1e-8;
};

// Normalizes each row of the window independently (rows are channels, or
// batch instances when rows are windows of a single channel). Requires at
// least 2 columns.
std::pair<Matrix, RevInState> revin_normalize(const Matrix& window, double epsilon = 1e-8);

Matrix revin_denormalize(const Matrix& forecast, const RevInState& state);

double mse(const Matrix& pred, const Matrix& target);
double mae(const Matrix& pred, const Matrix& target);

// d mse / d pred = 2 (pred - target) / count.
Matrix mse_backward(const Matrix& pred, const Matrix& target);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/**
 * Bias-corrected Adam state for one parameter tensor. step() applies the
 * update in place and zeroes the gradient buffer.
 */
class AdamState {
public:
    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg);

    void step(std::span<double> params, std::span<double> grads);
    long step_count() const { return t_; }

private:
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
    AdamConfig cfg_;
};

// Paired Adam states for one affine layer.
struct LayerAdam {
    AdamState weight_state;
    AdamState bias_state;

    LayerAdam() = default;
    LayerAdam(const AffineLayer& layer, AdamConfig cfg)
        : weight_state(layer.weight.size(), cfg), bias_state(layer.bias.size(), cfg) {}

    void step(AffineLayer& layer) {
        weight_state.step(layer.weight.data(), layer.grad_weight.data());
        bias_state.step(layer.bias, layer.grad_bias);
    }
};

} // namespace forecast

#endif // FORECAST_CORE_MATH_HPP
