#include "forecast/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <functional>
#include <set>
#include <thread>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"

namespace forecast {

// ---- MappingVector ------------------------------------------------------

MappingVector MappingVector::identity(std::size_t d) {
    MappingVector m;
    m.assignment.resize(d);
    for (std::size_t i = 0; i < d; ++i) m.assignment[i] = i;
    return m;
}

MappingVector MappingVector::all_to(std::size_t d, std::size_t layer) {
    MappingVector m;
    m.assignment.assign(d, layer);
    return m;
}

std::size_t MappingVector::live_count() const {
    std::set<std::size_t> distinct(assignment.begin(), assignment.end());
    return distinct.size();
}

double MappingVector::rmp() const {
    if (assignment.empty()) return 0.0;
    return static_cast<double>(live_count()) / static_cast<double>(assignment.size());
}

std::vector<std::size_t> MappingVector::live_layers() const {
    std::set<std::size_t> distinct(assignment.begin(), assignment.end());
    return {distinct.begin(), distinct.end()};
}

// ---- model construction -------------------------------------------------

LinearBank LinearBank::make(LinearStrategy strategy, std::size_t d, std::size_t lookback,
                            std::size_t horizon, std::mt19937_64& rng, double revin_epsilon) {
    LinearBank bank;
    bank.strategy = strategy;
    bank.lookback = lookback;
    bank.horizon = horizon;
    bank.n_channels = d;
    bank.revin_epsilon = revin_epsilon;
    const std::size_t n_layers = (strategy == LinearStrategy::CD) ? 1 : d;
    bank.layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        AffineLayer layer(lookback, horizon);
        layer.init(rng);
        bank.layers.push_back(std::move(layer));
    }
    bank.mapping = (strategy == LinearStrategy::CD) ? MappingVector::all_to(d, 0)
                                                    : MappingVector::identity(d);
    return bank;
}

const AffineLayer& LinearBank::layer_for_channel(std::size_t channel) const {
    const std::size_t idx = mapping.assignment.at(channel);
    if (idx >= layers.size()) {
        throw InternalError("corrupted mapping: channel " + std::to_string(channel + 1) +
                            " maps to layer " + std::to_string(idx + 1) + " of " +
                            std::to_string(layers.size()));
    }
    return layers[idx];
}

MlpModel MlpModel::make(MlpStrategy strategy, std::size_t d, std::size_t lookback,
                        std::size_t horizon, std::size_t hidden, std::size_t embed_dim,
                        std::mt19937_64& rng, double revin_epsilon) {
    MlpModel model;
    model.strategy = strategy;
    model.lookback = lookback;
    model.horizon = horizon;
    model.hidden = hidden;
    model.n_channels = d;
    model.revin_epsilon = revin_epsilon;
    model.embed_dim = (strategy == MlpStrategy::CE) ? embed_dim : 0;

    AffineLayer encoder(lookback, hidden);
    encoder.init(rng);
    model.encoders.push_back(std::move(encoder));

    model.decoder = AffineLayer(hidden + model.embed_dim, horizon);
    model.decoder.init(rng);

    if (strategy == MlpStrategy::CE) {
        model.embeddings = Matrix(d, embed_dim);
        model.grad_embeddings = Matrix(d, embed_dim);
        const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
        for (double& v : model.embeddings.data()) {
            v = uniform(rng, -bound, bound);
        }
    }
    model.mapping = MappingVector::all_to(d, 0);
    return model;
}

void MlpModel::replicate_encoder() {
    if (encoders.size() != 1) {
        throw InternalError("replicate_encoder: model already has " +
                            std::to_string(encoders.size()) + " encoders");
    }
    const AffineLayer shared = encoders[0];
    encoders.assign(n_channels, shared);
    mapping = MappingVector::identity(n_channels);
}

MlpAdam::MlpAdam(const MlpModel& model, AdamConfig cfg) {
    for (const auto& enc : model.encoders) {
        encoder_states.emplace_back(enc, cfg);
    }
    decoder_state = LayerAdam(model.decoder, cfg);
    if (!model.embeddings.empty()) {
        embedding_state = AdamState(model.embeddings.size(), cfg);
    }
}

void MlpAdam::replicate(std::size_t d) {
    if (encoder_states.size() != 1) {
        throw InternalError("MlpAdam::replicate: expected a single encoder state");
    }
    const LayerAdam shared = encoder_states[0];
    encoder_states.assign(d, shared);
}

// ---- shared helpers -----------------------------------------------------

namespace {

// Rows of the batch for one channel: (B x L) inputs and (B x T) targets.
void gather_channel(const WindowBatch& batch, std::size_t channel, Matrix& inputs,
                    Matrix& targets) {
    const std::size_t b = batch.size();
    const std::size_t lookback = batch.inputs[0].cols();
    const std::size_t horizon = batch.targets[0].cols();
    inputs = Matrix(b, lookback);
    targets = Matrix(b, horizon);
    for (std::size_t k = 0; k < b; ++k) {
        auto in = batch.inputs[k].row(channel);
        auto out = batch.targets[k].row(channel);
        std::copy(in.begin(), in.end(), inputs.row(k).begin());
        std::copy(out.begin(), out.end(), targets.row(k).begin());
    }
}

double sum_squared_error(const Matrix& pred, const Matrix& target) {
    double sum = 0.0;
    auto p = pred.data();
    auto t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - t[i];
        sum += e * e;
    }
    return sum;
}

// Intermediates of one per-channel MLP forward, kept for the backward pass.
struct MlpChannelPass {
    Matrix xn;
    RevInState stats;
    Matrix pre_act;     // B x H, before Swish
    Matrix hidden;      // B x (H + embed_dim), decoder input
    Matrix forecast;    // B x T, data space
};

MlpChannelPass mlp_channel_forward(const MlpModel& model, const Matrix& raw_inputs,
                                   std::size_t channel, std::size_t encoder_idx) {
    if (encoder_idx >= model.encoders.size()) {
        throw InternalError("corrupted mapping: encoder index " + std::to_string(encoder_idx + 1) +
                            " of " + std::to_string(model.encoders.size()));
    }
    MlpChannelPass pass;
    auto [xn, stats] = revin_normalize(raw_inputs, model.revin_epsilon);
    pass.xn = std::move(xn);
    pass.stats = std::move(stats);
    pass.pre_act = model.encoders[encoder_idx].forward(pass.xn);
    Matrix activated = swish(pass.pre_act);
    if (model.strategy == MlpStrategy::CE) {
        if (model.embeddings.empty()) {
            throw ConfigError("CE model has no embedding table");
        }
        const std::size_t b = activated.rows();
        pass.hidden = Matrix(b, model.hidden + model.embed_dim);
        auto emb = model.embeddings.row(channel);
        for (std::size_t k = 0; k < b; ++k) {
            auto src = activated.row(k);
            auto dst = pass.hidden.row(k);
            std::copy(src.begin(), src.end(), dst.begin());
            std::copy(emb.begin(), emb.end(), dst.begin() + model.hidden);
        }
    } else {
        pass.hidden = std::move(activated);
    }
    Matrix z = model.decoder.forward(pass.hidden);
    pass.forecast = revin_denormalize(z, pass.stats);
    return pass;
}

// 2 (pred - target) / total_elements, then chained through the RevIN
// denormalization (multiply each row by its stored stddev).
Matrix loss_grad_through_revin(const Matrix& forecast, const Matrix& target,
                               const RevInState& stats, double total_elements) {
    Matrix grad(forecast.rows(), forecast.cols());
    const double scale = 2.0 / total_elements;
    for (std::size_t k = 0; k < forecast.rows(); ++k) {
        auto p = forecast.row(k);
        auto t = target.row(k);
        auto g = grad.row(k);
        const double sd = stats.stddev[k];
        for (std::size_t j = 0; j < forecast.cols(); ++j) {
            g[j] = scale * (p[j] - t[j]) * sd;
        }
    }
    return grad;
}

void parallel_over(std::size_t count, std::size_t n_threads,
                   const std::function<void(std::size_t)>& body) {
    if (n_threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min(n_threads, count);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) body(i);
        });
    }
    for (auto& t : threads) t.join();
}


double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

// ---- forward ------------------------------------------------------------

std::vector<Matrix> forward_linear(const LinearBank& bank, const WindowBatch& batch) {
    if (batch.size() == 0) return {};
    if (batch.inputs[0].cols() != bank.lookback || batch.inputs[0].rows() != bank.n_channels) {
        throw DimensionError("forward_linear: batch windows are " + shape_str(batch.inputs[0]) +
                             ", bank expects " + std::to_string(bank.n_channels) + "x" +
                             std::to_string(bank.lookback));
    }
    const std::size_t b = batch.size();
    const std::size_t d = bank.n_channels;
    std::vector<Matrix> forecasts(b, Matrix(d, bank.horizon));
    for (std::size_t c = 0; c < d; ++c) {
        Matrix inputs, targets;
        gather_channel(batch, c, inputs, targets);
        auto [xn, stats] = revin_normalize(inputs, bank.revin_epsilon);
        Matrix z = bank.layer_for_channel(c).forward(xn);
        Matrix y = revin_denormalize(z, stats);
        for (std::size_t k = 0; k < b; ++k) {
            auto src = y.row(k);
            std::copy(src.begin(), src.end(), forecasts[k].row(c).begin());
        }
    }
    return forecasts;
}

std::vector<Matrix> forward_mlp(const MlpModel& model, const WindowBatch& batch) {
    if (batch.size() == 0) return {};
    const std::size_t b = batch.size();
    const std::size_t d = model.n_channels;
    std::vector<Matrix> forecasts(b, Matrix(d, model.horizon));
    for (std::size_t c = 0; c < d; ++c) {
        Matrix inputs, targets;
        gather_channel(batch, c, inputs, targets);
        const std::size_t enc = model.mapping.assignment.at(c);
        MlpChannelPass pass = mlp_channel_forward(model, inputs, c, enc);
        for (std::size_t k = 0; k < b; ++k) {
            auto src = pass.forecast.row(k);
            std::copy(src.begin(), src.end(), forecasts[k].row(c).begin());
        }
    }
    return forecasts;
}

// ---- training epochs ----------------------------------------------------

double train_epoch_linear(LinearBank& bank, WindowStream& train, std::vector<LayerAdam>& opt) {
    if (opt.size() != bank.layers.size()) {
        throw DimensionError("train_epoch_linear: " + std::to_string(opt.size()) +
                             " optimizer states for " + std::to_string(bank.layers.size()) +
                             " layers");
    }
    const std::size_t d = bank.n_channels;
    double sq_sum = 0.0;
    std::size_t n_elems = 0;
    const auto live = bank.mapping.live_layers();
    while (auto batch = train.next()) {
        const double total = static_cast<double>(batch->size() * d * bank.horizon);
        for (std::size_t c = 0; c < d; ++c) {
            Matrix inputs, targets;
            gather_channel(*batch, c, inputs, targets);
            auto [xn, stats] = revin_normalize(inputs, bank.revin_epsilon);
            const std::size_t idx = bank.mapping.assignment[c];
            AffineLayer& layer = bank.layers.at(idx);
            Matrix z = layer.forward(xn);
            Matrix y = revin_denormalize(z, stats);
            sq_sum += sum_squared_error(y, targets);
            Matrix dz = loss_grad_through_revin(y, targets, stats, total);
            layer.backward(xn, dz);
        }
        n_elems += batch->size() * d * bank.horizon;
        for (std::size_t idx : live) {
            opt[idx].step(bank.layers[idx]);
        }
    }
    if (n_elems == 0) {
        throw DataError("train_epoch_linear: empty training stream");
    }
    return sq_sum / static_cast<double>(n_elems);
}

double train_epoch_mlp(MlpModel& model, WindowStream& train, MlpAdam& opt, bool train_decoder) {
    const std::size_t d = model.n_channels;
    double sq_sum = 0.0;
    std::size_t n_elems = 0;
    const auto live = model.mapping.live_layers();
    while (auto batch = train.next()) {
        const double total = static_cast<double>(batch->size() * d * model.horizon);
        for (std::size_t c = 0; c < d; ++c) {
            Matrix inputs, targets;
            gather_channel(*batch, c, inputs, targets);
            const std::size_t enc_idx = model.mapping.assignment[c];
            MlpChannelPass pass = mlp_channel_forward(model, inputs, c, enc_idx);
            sq_sum += sum_squared_error(pass.forecast, targets);

            Matrix dz = loss_grad_through_revin(pass.forecast, targets, pass.stats, total);
            Matrix d_hidden = model.decoder.backward(pass.hidden, dz);

            Matrix d_act;
            if (model.strategy == MlpStrategy::CE) {
                d_act = Matrix(d_hidden.rows(), model.hidden);
                auto grad_emb = model.grad_embeddings.row(c);
                for (std::size_t k = 0; k < d_hidden.rows(); ++k) {
                    auto src = d_hidden.row(k);
                    std::copy(src.begin(), src.begin() + model.hidden, d_act.row(k).begin());
                    for (std::size_t e = 0; e < model.embed_dim; ++e) {
                        grad_emb[e] += src[model.hidden + e];
                    }
                }
            } else {
                d_act = std::move(d_hidden);
            }
            Matrix d_pre = swish_backward(pass.pre_act, d_act);
            model.encoders[enc_idx].backward(pass.xn, d_pre);
        }
        n_elems += batch->size() * d * model.horizon;
        for (std::size_t idx : live) {
            opt.encoder_states.at(idx).step(model.encoders[idx]);
        }
        if (train_decoder) {
            opt.decoder_state.step(model.decoder);
        } else {
            model.decoder.zero_grad();
        }
        if (model.strategy == MlpStrategy::CE) {
            opt.embedding_state.step(model.embeddings.data(), model.grad_embeddings.data());
        }
    }
    if (n_elems == 0) {
        throw DataError("train_epoch_mlp: empty training stream");
    }
    return sq_sum / static_cast<double>(n_elems);
}

// ---- error matrices -----------------------------------------------------

ErrorMatrix compute_error_matrix(const LinearBank& bank, WindowStream& validation,
                                 std::size_t n_threads) {
    const std::size_t d = bank.n_channels;
    if (bank.layers.size() != d) {
        throw DimensionError("compute_error_matrix: bank has " +
                             std::to_string(bank.layers.size()) + " layers for " +
                             std::to_string(d) + " channels");
    }
    Matrix sums(d, d);
    std::size_t n_windows = 0;
    while (auto batch = validation.next()) {
        n_windows += batch->size();
        parallel_over(d, n_threads, [&](std::size_t j) {
            Matrix inputs, targets;
            gather_channel(*batch, j, inputs, targets);
            auto [xn, stats] = revin_normalize(inputs, bank.revin_epsilon);
            for (std::size_t i = 0; i < d; ++i) {
                Matrix z = bank.layers[i].forward(xn);
                Matrix y = revin_denormalize(z, stats);
                sums(i, j) += sum_squared_error(y, targets);
            }
        });
    }
    if (n_windows == 0) {
        throw DataError("compute_error_matrix: empty validation stream");
    }
    const double denom = static_cast<double>(n_windows * bank.horizon);
    for (double& v : sums.data()) v /= denom;
    return {std::move(sums), RowSemantics::Layer, SplitLabel::Validation};
}

ErrorMatrix encoder_error_matrix(const MlpModel& model, WindowStream& validation,
                                 std::size_t n_threads) {
    const std::size_t d = model.n_channels;
    if (model.encoders.size() != d) {
        throw DimensionError("encoder_error_matrix: model has " +
                             std::to_string(model.encoders.size()) + " encoders for " +
                             std::to_string(d) + " channels");
    }
    Matrix sums(d, d);
    std::size_t n_windows = 0;
    while (auto batch = validation.next()) {
        n_windows += batch->size();
        parallel_over(d, n_threads, [&](std::size_t j) {
            Matrix inputs, targets;
            gather_channel(*batch, j, inputs, targets);
            for (std::size_t i = 0; i < d; ++i) {
                MlpChannelPass pass = mlp_channel_forward(model, inputs, j, i);
                sums(i, j) += sum_squared_error(pass.forecast, targets);
            }
        });
    }
    if (n_windows == 0) {
        throw DataError("encoder_error_matrix: empty validation stream");
    }
    const double denom = static_cast<double>(n_windows * model.horizon);
    for (double& v : sums.data()) v /= denom;
    return {std::move(sums), RowSemantics::Layer, SplitLabel::Validation};
}

MappingVector select_layers(const ErrorMatrix& errors) {
    const Matrix& e = errors.values;
    if (e.rows() != e.cols() || e.rows() == 0) {
        throw DimensionError("select_layers: error matrix must be square, got " + shape_str(e));
    }
    if (!e.all_finite()) {
        throw InternalError("select_layers: error matrix contains non-finite entries");
    }
    const std::size_t d = e.rows();
    MappingVector mapping;
    mapping.assignment.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::size_t best = 0;
        double best_err = e(0, j);
        for (std::size_t i = 1; i < d; ++i) {
            if (e(i, j) < best_err) {
                best_err = e(i, j);
                best = i;
            }
        }
        mapping.assignment[j] = best;
    }
    return mapping;
}

// ---- schedules ----------------------------------------------------------

double stream_mse(const LinearBank& bank, WindowStream& stream) {
    double sq_sum = 0.0;
    std::size_t n_elems = 0;
    while (auto batch = stream.next()) {
        auto forecasts = forward_linear(bank, *batch);
        for (std::size_t k = 0; k < batch->size(); ++k) {
            sq_sum += sum_squared_error(forecasts[k], batch->targets[k]);
            n_elems += forecasts[k].size();
        }
    }
    if (n_elems == 0) {
        throw DataError("stream_mse: empty stream");
    }
    return sq_sum / static_cast<double>(n_elems);
}

double stream_mse(const MlpModel& model, WindowStream& stream) {
    double sq_sum = 0.0;
    std::size_t n_elems = 0;
    while (auto batch = stream.next()) {
        auto forecasts = forward_mlp(model, *batch);
        for (std::size_t k = 0; k < batch->size(); ++k) {
            sq_sum += sum_squared_error(forecasts[k], batch->targets[k]);
            n_elems += forecasts[k].size();
        }
    }
    if (n_elems == 0) {
        throw DataError("stream_mse: empty stream");
    }
    return sq_sum / static_cast<double>(n_elems);
}

ScheduleResult csc_schedule(LinearBank& bank, WindowStream& train, WindowStream& validation,
                            int total_epochs, const std::vector<int>& selection_epochs,
                            AdamConfig adam, std::size_t n_threads) {
    for (int e : selection_epochs) {
        if (e < 1 || e > total_epochs) {
            throw ConfigError("csc_schedule: selection epoch " + std::to_string(e) +
                              " outside 1.." + std::to_string(total_epochs));
        }
    }
    std::vector<LayerAdam> opt;
    opt.reserve(bank.layers.size());
    for (const auto& layer : bank.layers) opt.emplace_back(layer, adam);

    ScheduleResult result;
    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
        train.reset();
        const auto start = std::chrono::steady_clock::now();
        result.train_losses.push_back(train_epoch_linear(bank, train, opt));
        result.epoch_seconds.push_back(seconds_since(start));
        validation.reset();
        result.val_losses.push_back(stream_mse(bank, validation));
        if (std::find(selection_epochs.begin(), selection_epochs.end(), epoch) !=
            selection_epochs.end()) {
            validation.reset();
            ErrorMatrix errors = compute_error_matrix(bank, validation, n_threads);
            bank.mapping = select_layers(errors);
            bank.mapping.epoch_of_last_update = epoch;
            result.history.push_back({epoch, bank.mapping});
        }
    }
    return result;
}

ScheduleResult cr_schedule(MlpModel& model, WindowStream& train, WindowStream& validation,
                           int pretrain_epochs, int total_epochs,
                           const std::vector<int>& rearrange_epochs, AdamConfig adam,
                           bool train_decoder_after_replication, std::size_t n_threads) {
    if (pretrain_epochs < 0 || pretrain_epochs > total_epochs) {
        throw ConfigError("cr_schedule: pretrain epochs must lie in 0..total_epochs");
    }
    for (int e : rearrange_epochs) {
        if (e <= pretrain_epochs || e > total_epochs) {
            throw ConfigError("cr_schedule: rearrange epoch " + std::to_string(e) +
                              " outside the post-pretraining range");
        }
    }
    MlpAdam opt(model, adam);
    ScheduleResult result;
    for (int epoch = 1; epoch <= pretrain_epochs; ++epoch) {
        train.reset();
        const auto start = std::chrono::steady_clock::now();
        result.train_losses.push_back(train_epoch_mlp(model, train, opt, true));
        result.epoch_seconds.push_back(seconds_since(start));
        validation.reset();
        result.val_losses.push_back(stream_mse(model, validation));
    }
    model.replicate_encoder();
    opt.replicate(model.n_channels);
    model.mapping.epoch_of_last_update = pretrain_epochs;
    result.history.push_back({pretrain_epochs, model.mapping});
    for (int epoch = pretrain_epochs + 1; epoch <= total_epochs; ++epoch) {
        train.reset();
        const auto start = std::chrono::steady_clock::now();
        result.train_losses.push_back(
            train_epoch_mlp(model, train, opt, train_decoder_after_replication));
        result.epoch_seconds.push_back(seconds_since(start));
        validation.reset();
        result.val_losses.push_back(stream_mse(model, validation));
        if (std::find(rearrange_epochs.begin(), rearrange_epochs.end(), epoch) !=
            rearrange_epochs.end()) {
            validation.reset();
            ErrorMatrix errors = encoder_error_matrix(model, validation, n_threads);
            model.mapping = select_layers(errors);
            model.mapping.epoch_of_last_update = epoch;
            result.history.push_back({epoch, model.mapping});
        }
    }
    return result;
}

ScheduleResult plain_schedule(LinearBank& bank, WindowStream& train, WindowStream* validation,
                              int total_epochs, AdamConfig adam) {
    std::vector<LayerAdam> opt;
    opt.reserve(bank.layers.size());
    for (const auto& layer : bank.layers) opt.emplace_back(layer, adam);
    ScheduleResult result;
    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
        train.reset();
        const auto start = std::chrono::steady_clock::now();
        result.train_losses.push_back(train_epoch_linear(bank, train, opt));
        result.epoch_seconds.push_back(seconds_since(start));
        if (validation) {
            validation->reset();
            result.val_losses.push_back(stream_mse(bank, *validation));
        }
    }
    return result;
}

ScheduleResult plain_schedule(MlpModel& model, WindowStream& train, WindowStream* validation,
                              int total_epochs, AdamConfig adam) {
    MlpAdam opt(model, adam);
    ScheduleResult result;
    for (int epoch = 1; epoch <= total_epochs; ++epoch) {
        train.reset();
        const auto start = std::chrono::steady_clock::now();
        result.train_losses.push_back(train_epoch_mlp(model, train, opt, true));
        result.epoch_seconds.push_back(seconds_since(start));
        if (validation) {
            validation->reset();
            result.val_losses.push_back(stream_mse(model, *validation));
        }
    }
    return result;
}

} // namespace forecast
