#include "forecast/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"

namespace forecast {

std::string to_string(RowSemantics s) {
    return s == RowSemantics::Layer ? "layer" : "input-channel";
}

std::string to_string(SplitLabel s) {
    switch (s) {
        case SplitLabel::Train: return "train";
        case SplitLabel::Validation: return "validation";
        default: return "test";
    }
}

EvalResult evaluate(const Forecaster& forecaster, WindowStream& stream) {
    const std::size_t d = stream.n_channels();
    std::vector<double> sq(d, 0.0), ab(d, 0.0);
    std::size_t per_channel_elems = 0;
    bool any = false;
    while (auto batch = stream.next()) {
        auto forecasts = forecaster(*batch);
        for (std::size_t k = 0; k < batch->size(); ++k) {
            const Matrix& pred = forecasts[k];
            const Matrix& target = batch->targets[k];
            for (std::size_t c = 0; c < d; ++c) {
                auto p = pred.row(c);
                auto t = target.row(c);
                for (std::size_t j = 0; j < p.size(); ++j) {
                    const double e = p[j] - t[j];
                    sq[c] += e * e;
                    ab[c] += std::abs(e);
                }
            }
            per_channel_elems += pred.cols();
            any = true;
        }
    }
    if (!any) {
        throw DataError("evaluate: empty stream");
    }
    EvalResult result;
    result.per_channel_mse.resize(d);
    result.per_channel_mae.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        result.per_channel_mse[c] = sq[c] / static_cast<double>(per_channel_elems);
        result.per_channel_mae[c] = ab[c] / static_cast<double>(per_channel_elems);
        result.mse += result.per_channel_mse[c];
        result.mae += result.per_channel_mae[c];
    }
    result.mse /= static_cast<double>(d);
    result.mae /= static_cast<double>(d);
    return result;
}

EvalResult evaluate(const LinearBank& bank, WindowStream& stream) {
    return evaluate([&bank](const WindowBatch& b) { return forward_linear(bank, b); }, stream);
}

EvalResult evaluate(const MlpModel& model, WindowStream& stream) {
    return evaluate([&model](const WindowBatch& b) { return forward_mlp(model, b); }, stream);
}

namespace {

// Per-pair sums of squared error, evaluated over one chronological stream.
Matrix grid_mse(const std::vector<AffineLayer>& layers,
                const std::vector<std::size_t>& channels, WindowStream& stream,
                double revin_epsilon) {
    const std::size_t d = channels.size();
    Matrix sums(d, d);
    std::size_t n_windows = 0;
    const std::size_t horizon = stream.horizon();
    while (auto batch = stream.next()) {
        n_windows += batch->size();
        const std::size_t b = batch->size();
        // Per grid channel: normalized inputs (by own stats) and raw targets.
        std::vector<Matrix> xn(d);
        std::vector<RevInState> stats(d);
        std::vector<Matrix> targets(d);
        for (std::size_t g = 0; g < d; ++g) {
            const std::size_t ch = channels[g];
            Matrix in(b, stream.lookback());
            Matrix tgt(b, horizon);
            for (std::size_t k = 0; k < b; ++k) {
                auto src_in = batch->inputs[k].row(ch);
                auto src_t = batch->targets[k].row(ch);
                std::copy(src_in.begin(), src_in.end(), in.row(k).begin());
                std::copy(src_t.begin(), src_t.end(), tgt.row(k).begin());
            }
            auto [n, s] = revin_normalize(in, revin_epsilon);
            xn[g] = std::move(n);
            stats[g] = std::move(s);
            targets[g] = std::move(tgt);
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                Matrix z = layers[i * d + j].forward(xn[i]);
                Matrix y = revin_denormalize(z, stats[j]);
                auto p = y.data();
                auto t = targets[j].data();
                double sum = 0.0;
                for (std::size_t m = 0; m < p.size(); ++m) {
                    const double e = p[m] - t[m];
                    sum += e * e;
                }
                sums(i, j) += sum;
            }
        }
    }
    if (n_windows == 0) {
        throw DataError("cross_channel_grid: empty stream");
    }
    const double denom = static_cast<double>(n_windows * horizon);
    for (double& v : sums.data()) v /= denom;
    return sums;
}

} // namespace

CrossChannelResult cross_channel_grid(const TimeSeriesDataset& dataset, const SplitRanges& splits,
                                      const std::vector<std::size_t>& channels,
                                      const CrossChannelConfig& config) {
    if (channels.empty()) {
        throw ConfigError("cross_channel_grid: empty channel subset");
    }
    for (std::size_t ch : channels) {
        if (ch >= dataset.n_channels()) {
            throw ConfigError("cross_channel_grid: channel index " + std::to_string(ch + 1) +
                              " out of range (dataset has " +
                              std::to_string(dataset.n_channels()) + " channels)");
        }
    }
    const std::size_t d = channels.size();
    const std::size_t per_layer = config.lookback * config.horizon + config.horizon;
    // weights + grads + two Adam moment buffers
    const std::size_t bytes = d * d * per_layer * sizeof(double) * 4;
    if (bytes > config.memory_budget_bytes) {
        throw DataError("cross_channel_grid: " + std::to_string(d) + "x" + std::to_string(d) +
                        " layers need about " + std::to_string(bytes / (1 << 20)) +
                        " MiB, over the configured budget; sub-select channels");
    }

    std::mt19937_64 rng(mix_seed(config.seed, seed_tag::init));
    std::vector<AffineLayer> layers;
    layers.reserve(d * d);
    for (std::size_t i = 0; i < d * d; ++i) {
        AffineLayer layer(config.lookback, config.horizon);
        layer.init(rng);
        layers.push_back(std::move(layer));
    }
    std::vector<LayerAdam> opt;
    opt.reserve(layers.size());
    for (const auto& layer : layers) opt.emplace_back(layer, config.adam);

    WindowStream train(dataset, splits.train, config.lookback, config.horizon, config.batch_size,
                       mix_seed(config.seed, seed_tag::shuffle));
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        train.reset();
        while (auto batch = train.next()) {
            const std::size_t b = batch->size();
            std::vector<Matrix> xn(d);
            std::vector<RevInState> stats(d);
            std::vector<Matrix> targets(d);
            for (std::size_t g = 0; g < d; ++g) {
                const std::size_t ch = channels[g];
                Matrix in(b, config.lookback);
                Matrix tgt(b, config.horizon);
                for (std::size_t k = 0; k < b; ++k) {
                    auto src_in = batch->inputs[k].row(ch);
                    auto src_t = batch->targets[k].row(ch);
                    std::copy(src_in.begin(), src_in.end(), in.row(k).begin());
                    std::copy(src_t.begin(), src_t.end(), tgt.row(k).begin());
                }
                auto [n, s] = revin_normalize(in, config.revin_epsilon);
                xn[g] = std::move(n);
                stats[g] = std::move(s);
                targets[g] = std::move(tgt);
            }
            const double scale =
                2.0 / static_cast<double>(b * config.horizon);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    AffineLayer& layer = layers[i * d + j];
                    Matrix z = layer.forward(xn[i]);
                    Matrix y = revin_denormalize(z, stats[j]);
                    Matrix dz(b, config.horizon);
                    for (std::size_t k = 0; k < b; ++k) {
                        auto p = y.row(k);
                        auto t = targets[j].row(k);
                        auto g = dz.row(k);
                        const double sd = stats[j].stddev[k];
                        for (std::size_t m = 0; m < p.size(); ++m) {
                            g[m] = scale * (p[m] - t[m]) * sd;
                        }
                    }
                    layer.backward(xn[i], dz);
                    opt[i * d + j].step(layer);
                }
            }
        }
    }

    CrossChannelResult result;
    WindowStream train_eval(dataset, splits.train, config.lookback, config.horizon,
                            config.batch_size);
    result.train = {grid_mse(layers, channels, train_eval, config.revin_epsilon),
                    RowSemantics::InputChannel, SplitLabel::Train};
    WindowStream test_eval(dataset, splits.test, config.lookback, config.horizon,
                           config.batch_size);
    result.test = {grid_mse(layers, channels, test_eval, config.revin_epsilon),
                   RowSemantics::InputChannel, SplitLabel::Test};
    result.channels = channels;
    return result;
}

ErrorMatrix normalize_matrix(const ErrorMatrix& matrix) {
    const Matrix& m = matrix.values;
    if (!m.all_finite()) {
        throw InternalError("normalize_matrix: non-finite entries");
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double lo = m(0, j), hi = m(0, j);
        for (std::size_t i = 1; i < m.rows(); ++i) {
            lo = std::min(lo, m(i, j));
            hi = std::max(hi, m(i, j));
        }
        const double range = hi - lo;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            out(i, j) = (range > 0.0) ? (m(i, j) - lo) / range : 0.0;
        }
    }
    return {std::move(out), matrix.row_semantics, matrix.split};
}

namespace {
bool same_cluster(const std::vector<std::size_t>& part, std::size_t a, std::size_t b) {
    return part[a] == part[b];
}
}

double rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw DimensionError("rand_index: partitions must have the same size >= 2");
    }
    std::size_t agree = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            ++total;
            if (same_cluster(a, i, j) == same_cluster(b, i, j)) ++agree;
        }
    }
    return static_cast<double>(agree) / static_cast<double>(total);
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw DimensionError("adjusted_rand_index: partitions must have the same size >= 2");
    }
    // Contingency table over relabeled cluster ids.
    auto relabel = [](const std::vector<std::size_t>& p) {
        std::vector<std::size_t> out(p.size());
        std::vector<std::size_t> seen;
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto it = std::find(seen.begin(), seen.end(), p[i]);
            if (it == seen.end()) {
                seen.push_back(p[i]);
                out[i] = seen.size() - 1;
            } else {
                out[i] = static_cast<std::size_t>(it - seen.begin());
            }
        }
        return std::pair{out, seen.size()};
    };
    auto [ra, ka] = relabel(a);
    auto [rb, kb] = relabel(b);
    std::vector<std::vector<std::size_t>> table(ka, std::vector<std::size_t>(kb, 0));
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ++table[ra[i]][rb[i]];
    }
    auto choose2 = [](std::size_t n) { return static_cast<double>(n) * (n - 1) / 2.0; };
    double sum_ij = 0.0;
    std::vector<std::size_t> row_sums(ka, 0), col_sums(kb, 0);
    for (std::size_t i = 0; i < ka; ++i) {
        for (std::size_t j = 0; j < kb; ++j) {
            sum_ij += choose2(table[i][j]);
            row_sums[i] += table[i][j];
            col_sums[j] += table[i][j];
        }
    }
    double sum_a = 0.0, sum_b = 0.0;
    for (std::size_t n : row_sums) sum_a += choose2(n);
    for (std::size_t n : col_sums) sum_b += choose2(n);
    const double n2 = choose2(a.size());
    const double expected = sum_a * sum_b / n2;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_ij - expected) / (max_index - expected);
}

StabilityScores cluster_stability(const std::vector<ClusterPartition>& partitions) {
    if (partitions.size() < 2) {
        throw ConfigError("cluster_stability: need at least 2 partitions");
    }
    const std::size_t d = partitions[0].assignment.size();
    for (const auto& p : partitions) {
        if (p.assignment.size() != d) {
            throw DimensionError("cluster_stability: partitions over different channel counts (" +
                                 std::to_string(p.assignment.size()) + " vs " + std::to_string(d) +
                                 ")");
        }
    }
    const std::size_t n = partitions.size();
    StabilityScores scores;
    scores.rand = Matrix(n, n, 1.0);
    scores.adjusted_rand = Matrix(n, n, 1.0);
    double sum_r = 0.0, sum_ar = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double r = rand_index(partitions[i].assignment, partitions[j].assignment);
            const double ar =
                adjusted_rand_index(partitions[i].assignment, partitions[j].assignment);
            scores.rand(i, j) = scores.rand(j, i) = r;
            scores.adjusted_rand(i, j) = scores.adjusted_rand(j, i) = ar;
            sum_r += r;
            sum_ar += ar;
            ++pairs;
        }
    }
    scores.mean_rand = sum_r / static_cast<double>(pairs);
    scores.mean_adjusted_rand = sum_ar / static_cast<double>(pairs);
    return scores;
}

} // namespace forecast
