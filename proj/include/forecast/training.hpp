#ifndef FORECAST_TRAINING_HPP
#define FORECAST_TRAINING_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "forecast/dataset.hpp"
#include "forecast/evaluation.hpp"
#include "forecast/report.hpp"
#include "forecast/strategies.hpp"

#include "json.hpp"

namespace forecast {

enum class Strategy { CD, CI, CSC, MlpCI, MlpCE, MlpCR };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);
bool is_mlp_strategy(Strategy s);

/**
 * Everything one run needs. Parsed from JSON with unknown keys rejected;
 * exactly one of dataset_csv / synthetic must be present.
 */
struct ExperimentConfig {
    std::string dataset_csv;
    bool csv_has_header = true;
    std::string timestamp_column;
    std::optional<SyntheticSpec> synthetic;

    std::size_t lookback = 336;
    std::size_t horizon = 96;
    Strategy strategy = Strategy::CI;
    int total_epochs = 10;
    std::vector<int> selection_epochs = {1, 2};  // CSC
    int pretrain_epochs = 15;                    // CR
    std::vector<int> rearrange_epochs = {16, 17, 18};
    bool train_decoder_after_replication = false;

    std::size_t batch_size = 128;
    AdamConfig optimizer;  // lr defaults to 1e-3 (linear) / 5e-4 (MLP)
    bool lr_explicit = false;
    std::uint64_t seed = 0;
    bool merged_set = false;
    bool standardize = true;
    std::size_t hidden = 512;
    std::size_t embed_dim = 16;
    std::array<double, 3> split_ratios = {0.7, 0.2, 0.1};
    double revin_epsilon = 1e-8;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    // Learning rate after the per-family default is applied.
    double effective_lr() const;
};

/**
 * Full record of a run. Everything except the wall-clock timings is
 * serialized into run.json (timings vary between identical runs, so they
 * go to the log instead).
 */
struct RunRecord {
    nlohmann::json config;
    std::vector<double> train_losses;
    std::vector<double> val_losses;
    std::vector<MappingEvent> mapping_history;
    std::vector<std::size_t> final_mapping;  // 0-based
    double test_mse = 0.0;
    double test_mae = 0.0;
    std::vector<double> per_channel_mse;
    std::vector<double> per_channel_mae;
    double rmp = 1.0;
    std::size_t live_params = 0;
    std::size_t allocated_params = 0;
    std::vector<double> epoch_seconds;  // not serialized

    nlohmann::json to_json() const;
};

// Executes one experiment end to end: data loading/synthesis, optional
// train-statistics standardization, the strategy schedule, and a single
// final pass over the untouched test split. Deterministic given the config
// (seed included) for any thread count. When checkpoint_out is given, the
// trained model's tensors are placed there for saving.
RunRecord run(const ExperimentConfig& config, Checkpoint* checkpoint_out = nullptr);

struct RunOutcome {
    bool ok = false;
    RunRecord record;
    std::string error;
};

// Independent runs; a failure is recorded in its slot without aborting the
// rest. n_threads = 0 means one worker per config up to hardware
// concurrency.
std::vector<RunOutcome> run_matrix(const std::vector<ExperimentConfig>& configs,
                                   std::size_t n_threads = 0);

std::size_t count_parameters(const LinearBank& bank, bool live_only);
std::size_t count_parameters(const MlpModel& model, bool live_only);

// FORECAST_THREADS, defaulting to hardware concurrency.
std::size_t configured_threads();

} // namespace forecast

#endif // FORECAST_TRAINING_HPP
