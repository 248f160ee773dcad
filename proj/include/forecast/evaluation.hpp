#ifndef FORECAST_EVALUATION_HPP
#define FORECAST_EVALUATION_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "forecast/dataset.hpp"
#include "forecast/error_matrix.hpp"
#include "forecast/strategies.hpp"

namespace forecast {

struct EvalResult {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> per_channel_mse;
    std::vector<double> per_channel_mae;
};

// Forecast function for one batch, letting linear banks and MLPs share the
// evaluation path.
using Forecaster = std::function<std::vector<Matrix>(const WindowBatch&)>;

// Means over all windows and elements; read-only. Throws DataError on an
// empty stream. The caller resets the stream beforehand.
EvalResult evaluate(const Forecaster& forecaster, WindowStream& stream);
EvalResult evaluate(const LinearBank& bank, WindowStream& stream);
EvalResult evaluate(const MlpModel& model, WindowStream& stream);

/**
 * The d x d cross-channel experiment: layer (i, j) is trained to forecast
 * channel j from channel i's look-back window. RevIN normalizes by the
 * input channel's window statistics and denormalizes with the target
 * channel's. Entry (i, j) of each returned matrix is the per-pair MSE.
 */
struct CrossChannelResult {
    ErrorMatrix train;
    ErrorMatrix test;
    std::vector<std::size_t> channels;  // dataset channel indices of the grid axes
};

struct CrossChannelConfig {
    std::size_t lookback = 336;
    std::size_t horizon = 96;
    int epochs = 10;
    std::size_t batch_size = 128;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double revin_epsilon = 1e-8;
    std::size_t memory_budget_bytes = std::size_t(2) << 30;
};

CrossChannelResult cross_channel_grid(const TimeSeriesDataset& dataset, const SplitRanges& splits,
                                      const std::vector<std::size_t>& channels,
                                      const CrossChannelConfig& config);

// Rescales each column to [0, 1] via (x - min) / (max - min); a constant
// column maps to all zeros. Preserves every column's argmin.
ErrorMatrix normalize_matrix(const ErrorMatrix& matrix);

// Pair-counting agreement between two partitions (label-permutation
// invariant). Assignments may use arbitrary cluster ids.
double rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct ClusterPartition {
    std::vector<std::size_t> assignment;
    std::uint64_t seed = 0;
};

struct StabilityScores {
    Matrix rand;           // pairwise Rand indices
    Matrix adjusted_rand;  // pairwise adjusted Rand indices
    double mean_rand = 0.0;
    double mean_adjusted_rand = 0.0;
};

// Requires >= 2 partitions over the same channel count.
StabilityScores cluster_stability(const std::vector<ClusterPartition>& partitions);

} // namespace forecast

#endif // FORECAST_EVALUATION_HPP
