#include "forecast/core_math.hpp"

#include <cmath>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"

namespace forecast {

AffineLayer::AffineLayer(std::size_t in_dim, std::size_t out_dim)
    : weight(out_dim, in_dim),
      bias(out_dim, 0.0),
      grad_weight(out_dim, in_dim),
      grad_bias(out_dim, 0.0) {}

void AffineLayer::init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
    for (double& w : weight.data()) {
        w = uniform(rng, -bound, bound);
    }
    for (double& b : bias) b = 0.0;
    zero_grad();
}

Matrix AffineLayer::forward(const Matrix& input) const {
    if (input.cols() != in_dim()) {
        throw DimensionError("affine_forward: input " + shape_str(input) +
                             " incompatible with weight " + shape_str(weight));
    }
    Matrix out(input.rows(), out_dim());
    for (std::size_t b = 0; b < input.rows(); ++b) {
        auto x = input.row(b);
        auto y = out.row(b);
        for (std::size_t o = 0; o < out_dim(); ++o) {
            double sum = bias[o];
            auto w = weight.row(o);
            for (std::size_t i = 0; i < in_dim(); ++i) {
                sum += w[i] * x[i];
            }
            y[o] = sum;
        }
    }
    return out;
}

Matrix AffineLayer::backward(const Matrix& input, const Matrix& upstream) {
    if (input.cols() != in_dim() || upstream.cols() != out_dim() ||
        input.rows() != upstream.rows()) {
        throw DimensionError("affine_backward: input " + shape_str(input) + ", upstream " +
                             shape_str(upstream) + ", weight " + shape_str(weight));
    }
    Matrix grad_input(input.rows(), in_dim());
    for (std::size_t b = 0; b < input.rows(); ++b) {
        auto x = input.row(b);
        auto g = upstream.row(b);
        auto gx = grad_input.row(b);
        for (std::size_t o = 0; o < out_dim(); ++o) {
            const double go = g[o];
            grad_bias[o] += go;
            auto w = weight.row(o);
            auto gw = grad_weight.row(o);
            for (std::size_t i = 0; i < in_dim(); ++i) {
                gw[i] += go * x[i];
                gx[i] += go * w[i];
            }
        }
    }
    return grad_input;
}

void AffineLayer::zero_grad() {
    for (double& g : grad_weight.data()) g = 0.0;
    for (double& g : grad_bias) g = 0.0;
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

Matrix swish(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    auto in = x.data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        o[i] = in[i] * sigmoid(in[i]);
    }
    return out;
}

Matrix swish_backward(const Matrix& x, const Matrix& upstream) {
    if (x.rows() != upstream.rows() || x.cols() != upstream.cols()) {
        throw DimensionError("swish_backward: x " + shape_str(x) + " vs upstream " +
                             shape_str(upstream));
    }
    Matrix out(x.rows(), x.cols());
    auto in = x.data();
    auto up = upstream.data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double s = sigmoid(in[i]);
        o[i] = up[i] * (s * (1.0 + in[i] * (1.0 - s)));
    }
    return out;
}

std::pair<Matrix, RevInState> revin_normalize(const Matrix& window, double epsilon) {
    if (window.cols() < 2) {
        throw DimensionError("revin_normalize: window length must be >= 2, got " +
                        std::to_string(window.cols()));
    }
    if (epsilon <= 0.0) {
        throw ConfigError("revin_normalize: epsilon must be positive");
    }
    const std::size_t d = window.rows();
    const std::size_t len = window.cols();
    RevInState state;
    state.epsilon = epsilon;
    state.mean.resize(d);
    state.stddev.resize(d);
    Matrix out(d, len);
    for (std::size_t c = 0; c < d; ++c) {
        auto x = window.row(c);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(len);  // population variance
        double sd = std::sqrt(var);
        if (sd < epsilon) sd = epsilon;
        state.mean[c] = mean;
        state.stddev[c] = sd;
        auto y = out.row(c);
        for (std::size_t t = 0; t < len; ++t) {
            y[t] = (x[t] - mean) / sd;
        }
    }
    return {std::move(out), std::move(state)};
}

Matrix revin_denormalize(const Matrix& forecast, const RevInState& state) {
    if (forecast.rows() != state.mean.size()) {
        throw DimensionError("revin_denormalize: forecast has " + std::to_string(forecast.rows()) +
                             " rows but state has " + std::to_string(state.mean.size()) +
                             " channels");
    }
    Matrix out(forecast.rows(), forecast.cols());
    for (std::size_t c = 0; c < forecast.rows(); ++c) {
        auto z = forecast.row(c);
        auto y = out.row(c);
        for (std::size_t t = 0; t < forecast.cols(); ++t) {
            y[t] = z[t] * state.stddev[c] + state.mean[c];
        }
    }
    return out;
}

namespace {
void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
    }
}
}

double mse(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mse");
    double sum = 0.0;
    auto p = pred.data();
    auto t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - t[i];
        sum += e * e;
    }
    return sum / static_cast<double>(p.size());
}

double mae(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mae");
    double sum = 0.0;
    auto p = pred.data();
    auto t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += std::abs(p[i] - t[i]);
    }
    return sum / static_cast<double>(p.size());
}

Matrix mse_backward(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mse_backward");
    Matrix out(pred.rows(), pred.cols());
    const double scale = 2.0 / static_cast<double>(pred.size());
    auto p = pred.data();
    auto t = target.data();
    auto o = out.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        o[i] = scale * (p[i] - t[i]);
    }
    return out;
}

AdamState::AdamState(std::size_t n, AdamConfig cfg)
    : m_(n, 0.0), v_(n, 0.0), cfg_(cfg) {}

void AdamState::step(std::span<double> params, std::span<double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw DimensionError("adam_step: parameter tensor has " + std::to_string(params.size()) +
                             " entries, state has " + std::to_string(m_.size()));
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        params[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
        grads[i] = 0.0;
    }
}

} // namespace forecast
