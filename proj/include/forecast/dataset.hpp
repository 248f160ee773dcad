#ifndef FORECAST_DATASET_HPP
#define FORECAST_DATASET_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forecast/matrix.hpp"

#include "json.hpp"

namespace forecast {

/**
 * A multivariate series: d channels by N timesteps, channels as rows.
 * Immutable after load apart from the optional train-statistics
 * standardization applied before modeling.
 */
struct TimeSeriesDataset {
    Matrix values;  // d x N
    std::vector<std::string> channel_names;
    std::string granularity;
    bool had_timestamp_column = false;

    std::size_t n_channels() const { return values.rows(); }
    std::size_t n_steps() const { return values.cols(); }
};

// Loads a comma-separated file, one row per timestep, channels as columns.
// If timestamp_column is non-empty it must name a header column, which is
// dropped from the values.
TimeSeriesDataset load_csv(const std::string& path, bool has_header,
                           const std::string& timestamp_column = "");

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t length() const { return end - begin; }
};

struct SplitRanges {
    IndexRange train;
    IndexRange val;
    IndexRange test;
};

// Chronological split at floor(N*train) and floor(N*(train+val)). Every
// split must be able to hold at least one (lookback, horizon) window.
SplitRanges split(const TimeSeriesDataset& dataset, std::array<double, 3> ratios,
                  std::size_t lookback, std::size_t horizon);

/**
 * One minibatch of sliding windows. inputs[k] is d x L, targets[k] is the
 * immediately following d x T block of the same channels.
 */
struct WindowBatch {
    std::vector<Matrix> inputs;
    std::vector<Matrix> targets;
    std::vector<std::size_t> starts;

    std::size_t size() const { return inputs.size(); }
};

/**
 * Stride-1 sliding-window stream over one split. With a shuffle seed the
 * window order is reshuffled every epoch (deterministically from the seed
 * and epoch index); without one, windows come in chronological order. The
 * final partial batch is emitted. Tracks total windows consumed so tests
 * can assert split hygiene.
 */
class WindowStream {
public:
    WindowStream(const TimeSeriesDataset& dataset, IndexRange range, std::size_t lookback,
                 std::size_t horizon, std::size_t batch_size,
                 std::optional<std::uint64_t> shuffle_seed = std::nullopt);

    std::size_t window_count() const { return order_.size(); }
    std::size_t batch_count() const;
    std::size_t windows_consumed() const { return consumed_; }
    std::size_t lookback() const { return lookback_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t n_channels() const { return dataset_->n_channels(); }

    // Rewinds to the first batch; shuffled streams reshuffle for the next
    // epoch.
    void reset();

    std::optional<WindowBatch> next();

private:
    const TimeSeriesDataset* dataset_;
    IndexRange range_;
    std::size_t lookback_;
    std::size_t horizon_;
    std::size_t batch_size_;
    std::optional<std::uint64_t> shuffle_seed_;
    std::vector<std::size_t> order_;  // window start offsets
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
    std::size_t consumed_ = 0;
};

/**
 * Recipe for a clustered synthetic dataset: channel j in cluster k is
 * sin(2*pi*t/period_k + phase_j) + gaussian noise. Clusters are assigned
 * round-robin so every cluster mixes channels of different noise levels.
 */
struct SyntheticSpec {
    std::size_t n_channels = 0;
    std::size_t n_clusters = 0;
    std::vector<double> cluster_periods;
    std::vector<double> noise_std;  // one entry (broadcast) or one per channel
    std::size_t length = 0;
    std::uint64_t seed = 0;

    static SyntheticSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
};

struct SyntheticData {
    TimeSeriesDataset dataset;
    std::vector<std::size_t> cluster_of_channel;  // ground truth, 0-based
};

SyntheticData synthesize(const SyntheticSpec& spec);

// Standardizes every channel in place using mean/std computed on the train
// range only. Returns the per-channel (mean, std) pairs used.
std::vector<std::pair<double, double>> standardize_by_train(TimeSeriesDataset& dataset,
                                                            IndexRange train);

} // namespace forecast

#endif // FORECAST_DATASET_HPP
