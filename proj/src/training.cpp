#include "forecast/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"

namespace forecast {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::CD: return "CD";
        case Strategy::CI: return "CI";
        case Strategy::CSC: return "CSC";
        case Strategy::MlpCI: return "MLP-CI";
        case Strategy::MlpCE: return "MLP-CE";
        default: return "MLP-CR";
    }
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "CD") return Strategy::CD;
    if (name == "CI") return Strategy::CI;
    if (name == "CSC") return Strategy::CSC;
    if (name == "MLP-CI") return Strategy::MlpCI;
    if (name == "MLP-CE") return Strategy::MlpCE;
    if (name == "MLP-CR") return Strategy::MlpCR;
    throw ConfigError("unknown strategy \"" + name +
                      "\" (expected CD, CI, CSC, MLP-CI, MLP-CE or MLP-CR)");
}

bool is_mlp_strategy(Strategy s) {
    return s == Strategy::MlpCI || s == Strategy::MlpCE || s == Strategy::MlpCR;
}

double ExperimentConfig::effective_lr() const {
    if (lr_explicit) return optimizer.lr;
    return is_mlp_strategy(strategy) ? 5e-4 : 1e-3;
}

void ExperimentConfig::validate() const {
    if (lookback == 0 || horizon == 0) {
        throw ConfigError("config: lookback and horizon must be positive");
    }
    if (total_epochs <= 0) {
        throw ConfigError("config: total_epochs must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("config: batch_size must be positive");
    }
    if (dataset_csv.empty() == !synthetic.has_value()) {
        throw ConfigError("config: exactly one of dataset_csv / synthetic is required");
    }
    if (synthetic) synthetic->validate();
    if (strategy == Strategy::CSC) {
        for (int e : selection_epochs) {
            if (e < 1 || e > total_epochs) {
                throw ConfigError("config: selection epoch " + std::to_string(e) +
                                  " outside 1.." + std::to_string(total_epochs));
            }
        }
    }
    if (strategy == Strategy::MlpCR) {
        if (pretrain_epochs < 0 || pretrain_epochs > total_epochs) {
            throw ConfigError("config: pretrain_epochs must lie in 0..total_epochs");
        }
        for (int e : rearrange_epochs) {
            if (e <= pretrain_epochs || e > total_epochs) {
                throw ConfigError("config: rearrange epoch " + std::to_string(e) +
                                  " outside the post-pretraining range");
            }
        }
    }
    if (merged_set && (strategy == Strategy::CSC || strategy == Strategy::MlpCR)) {
        throw ConfigError(
            "config: merged_set fuses train and validation, which selection-based "
            "strategies (CSC, MLP-CR) need separate");
    }
    const double ratio_sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
    if (split_ratios[0] <= 0 || split_ratios[1] <= 0 || split_ratios[2] <= 0 ||
        std::abs(ratio_sum - 1.0) > 1e-9) {
        throw ConfigError("config: split_ratios must be positive and sum to 1");
    }
    if (revin_epsilon <= 0.0) {
        throw ConfigError("config: revin_epsilon must be positive");
    }
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const char* known[] = {
        "dataset_csv",      "csv_has_header",   "timestamp_column",
        "synthetic",        "lookback",         "horizon",
        "strategy",         "total_epochs",     "selection_epochs",
        "pretrain_epochs",  "rearrange_epochs", "train_decoder_after_replication",
        "batch_size",       "learning_rate",    "beta1",
        "beta2",            "adam_epsilon",     "seed",
        "merged_set",       "standardize",      "hidden",
        "embed_dim",        "split_ratios",     "revin_epsilon"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
            throw ConfigError("config: unknown key \"" + it.key() + "\"");
        }
    }
    ExperimentConfig c;
    c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("dataset_csv")) c.dataset_csv = j["dataset_csv"].get<std::string>();
    if (j.contains("csv_has_header")) c.csv_has_header = j["csv_has_header"].get<bool>();
    if (j.contains("timestamp_column"))
        c.timestamp_column = j["timestamp_column"].get<std::string>();
    if (j.contains("synthetic")) c.synthetic = SyntheticSpec::from_json(j["synthetic"]);
    c.lookback = j.at("lookback").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    if (j.contains("total_epochs")) c.total_epochs = j["total_epochs"].get<int>();
    if (j.contains("selection_epochs")) {
        if (c.strategy != Strategy::CSC) {
            throw ConfigError("config: selection_epochs only applies to CSC");
        }
        c.selection_epochs = j["selection_epochs"].get<std::vector<int>>();
    }
    if (j.contains("pretrain_epochs")) {
        if (c.strategy != Strategy::MlpCR) {
            throw ConfigError("config: pretrain_epochs only applies to MLP-CR");
        }
        c.pretrain_epochs = j["pretrain_epochs"].get<int>();
    }
    if (j.contains("rearrange_epochs")) {
        if (c.strategy != Strategy::MlpCR) {
            throw ConfigError("config: rearrange_epochs only applies to MLP-CR");
        }
        c.rearrange_epochs = j["rearrange_epochs"].get<std::vector<int>>();
    }
    if (j.contains("train_decoder_after_replication")) {
        if (c.strategy != Strategy::MlpCR) {
            throw ConfigError("config: train_decoder_after_replication only applies to MLP-CR");
        }
        c.train_decoder_after_replication = j["train_decoder_after_replication"].get<bool>();
    }
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) {
        c.optimizer.lr = j["learning_rate"].get<double>();
        c.lr_explicit = true;
    }
    if (j.contains("beta1")) c.optimizer.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.optimizer.beta2 = j["beta2"].get<double>();
    if (j.contains("adam_epsilon")) c.optimizer.epsilon = j["adam_epsilon"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("merged_set")) c.merged_set = j["merged_set"].get<bool>();
    if (j.contains("standardize")) c.standardize = j["standardize"].get<bool>();
    if (j.contains("hidden")) c.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("embed_dim")) {
        if (c.strategy != Strategy::MlpCE) {
            throw ConfigError("config: embed_dim only applies to MLP-CE");
        }
        c.embed_dim = j["embed_dim"].get<std::size_t>();
    }
    if (j.contains("split_ratios")) {
        auto v = j["split_ratios"].get<std::vector<double>>();
        if (v.size() != 3) {
            throw ConfigError("config: split_ratios must have 3 entries");
        }
        c.split_ratios = {v[0], v[1], v[2]};
    }
    if (j.contains("revin_epsilon")) c.revin_epsilon = j["revin_epsilon"].get<double>();
    c.validate();
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["strategy"] = to_string(strategy);
    if (!dataset_csv.empty()) {
        j["dataset_csv"] = dataset_csv;
        j["csv_has_header"] = csv_has_header;
        if (!timestamp_column.empty()) j["timestamp_column"] = timestamp_column;
    }
    if (synthetic) j["synthetic"] = synthetic->to_json();
    j["lookback"] = lookback;
    j["horizon"] = horizon;
    j["total_epochs"] = total_epochs;
    if (strategy == Strategy::CSC) j["selection_epochs"] = selection_epochs;
    if (strategy == Strategy::MlpCR) {
        j["pretrain_epochs"] = pretrain_epochs;
        j["rearrange_epochs"] = rearrange_epochs;
        j["train_decoder_after_replication"] = train_decoder_after_replication;
    }
    j["batch_size"] = batch_size;
    j["learning_rate"] = effective_lr();
    j["beta1"] = optimizer.beta1;
    j["beta2"] = optimizer.beta2;
    j["adam_epsilon"] = optimizer.epsilon;
    j["seed"] = seed;
    j["merged_set"] = merged_set;
    j["standardize"] = standardize;
    if (is_mlp_strategy(strategy)) j["hidden"] = hidden;
    if (strategy == Strategy::MlpCE) j["embed_dim"] = embed_dim;
    j["split_ratios"] = split_ratios;
    j["revin_epsilon"] = revin_epsilon;
    return j;
}

nlohmann::json RunRecord::to_json() const {
    nlohmann::json j;
    j["config"] = config;
    j["train_losses"] = train_losses;
    j["val_losses"] = val_losses;
    nlohmann::json history = nlohmann::json::array();
    for (const auto& event : mapping_history) {
        nlohmann::json assignment = nlohmann::json::array();
        for (std::size_t idx : event.mapping.assignment) assignment.push_back(idx + 1);
        history.push_back({{"epoch", event.epoch},
                           {"assignment", assignment},
                           {"rmp", event.mapping.rmp()}});
    }
    j["mapping_history"] = history;
    nlohmann::json final_map = nlohmann::json::array();
    for (std::size_t idx : final_mapping) final_map.push_back(idx + 1);
    j["final_mapping"] = final_map;
    j["test_mse"] = test_mse;
    j["test_mae"] = test_mae;
    j["per_channel_mse"] = per_channel_mse;
    j["per_channel_mae"] = per_channel_mae;
    j["rmp"] = rmp;
    j["live_params"] = live_params;
    j["allocated_params"] = allocated_params;
    return j;
}

std::size_t count_parameters(const LinearBank& bank, bool live_only) {
    const std::size_t per_layer = bank.lookback * bank.horizon + bank.horizon;
    if (!live_only) return bank.layers.size() * per_layer;
    return bank.mapping.live_count() * per_layer;
}

std::size_t count_parameters(const MlpModel& model, bool live_only) {
    const std::size_t per_encoder = model.lookback * model.hidden + model.hidden;
    std::size_t encoders =
        live_only ? model.mapping.live_count() : model.encoders.size();
    if (!model.replicated() && !live_only) encoders = model.encoders.size();
    if (!model.replicated() && live_only) encoders = 1;
    std::size_t total = encoders * per_encoder;
    total += model.decoder.parameter_count();
    total += model.embeddings.size();
    return total;
}

std::size_t configured_threads() {
    if (const char* env = std::getenv("FORECAST_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

RunRecord run(const ExperimentConfig& config, Checkpoint* checkpoint_out) {
    config.validate();

    TimeSeriesDataset dataset;
    if (config.synthetic) {
        dataset = synthesize(*config.synthetic).dataset;
    } else {
        dataset = load_csv(config.dataset_csv, config.csv_has_header, config.timestamp_column);
    }
    SplitRanges splits = split(dataset, config.split_ratios, config.lookback, config.horizon);
    if (config.standardize) {
        standardize_by_train(dataset, splits.train);
    }

    AdamConfig adam = config.optimizer;
    adam.lr = config.effective_lr();
    const std::uint64_t shuffle_seed = mix_seed(config.seed, seed_tag::shuffle);
    std::mt19937_64 init_rng(mix_seed(config.seed, seed_tag::init));
    const std::size_t n_threads = configured_threads();
    const std::size_t d = dataset.n_channels();

    IndexRange train_range = splits.train;
    if (config.merged_set) {
        train_range = {splits.train.begin, splits.val.end};
    }
    WindowStream train(dataset, train_range, config.lookback, config.horizon, config.batch_size,
                       shuffle_seed);
    WindowStream validation(dataset, splits.val, config.lookback, config.horizon,
                            config.batch_size);
    // Under merged_set the validation windows are trained on, so a per-epoch
    // validation loss would be meaningless; skip it.
    WindowStream* validation_ptr = config.merged_set ? nullptr : &validation;

    RunRecord record;
    record.config = config.to_json();

    ScheduleResult schedule;
    std::optional<LinearBank> bank;
    std::optional<MlpModel> mlp;

    switch (config.strategy) {
        case Strategy::CD:
            bank = LinearBank::make(LinearStrategy::CD, d, config.lookback, config.horizon,
                                    init_rng, config.revin_epsilon);
            schedule = plain_schedule(*bank, train, validation_ptr, config.total_epochs, adam);
            break;
        case Strategy::CI:
            bank = LinearBank::make(LinearStrategy::CI, d, config.lookback, config.horizon,
                                    init_rng, config.revin_epsilon);
            schedule = plain_schedule(*bank, train, validation_ptr, config.total_epochs, adam);
            break;
        case Strategy::CSC:
            bank = LinearBank::make(LinearStrategy::CSC, d, config.lookback, config.horizon,
                                    init_rng, config.revin_epsilon);
            schedule = csc_schedule(*bank, train, validation, config.total_epochs,
                                    config.selection_epochs, adam, n_threads);
            break;
        case Strategy::MlpCI:
            mlp = MlpModel::make(MlpStrategy::CI, d, config.lookback, config.horizon,
                                 config.hidden, 0, init_rng, config.revin_epsilon);
            schedule = plain_schedule(*mlp, train, validation_ptr, config.total_epochs, adam);
            break;
        case Strategy::MlpCE:
            mlp = MlpModel::make(MlpStrategy::CE, d, config.lookback, config.horizon,
                                 config.hidden, config.embed_dim, init_rng,
                                 config.revin_epsilon);
            schedule = plain_schedule(*mlp, train, validation_ptr, config.total_epochs, adam);
            break;
        case Strategy::MlpCR:
            mlp = MlpModel::make(MlpStrategy::CR, d, config.lookback, config.horizon,
                                 config.hidden, 0, init_rng, config.revin_epsilon);
            schedule = cr_schedule(*mlp, train, validation, config.pretrain_epochs,
                                   config.total_epochs, config.rearrange_epochs, adam,
                                   config.train_decoder_after_replication, n_threads);
            break;
    }

    record.train_losses = std::move(schedule.train_losses);
    record.val_losses = std::move(schedule.val_losses);
    record.epoch_seconds = std::move(schedule.epoch_seconds);
    record.mapping_history = std::move(schedule.history);

    // The test split is touched exactly once, after all training and
    // selection events.
    WindowStream test(dataset, splits.test, config.lookback, config.horizon, config.batch_size);
    EvalResult eval = bank ? evaluate(*bank, test) : evaluate(*mlp, test);
    record.test_mse = eval.mse;
    record.test_mae = eval.mae;
    record.per_channel_mse = std::move(eval.per_channel_mse);
    record.per_channel_mae = std::move(eval.per_channel_mae);

    if (bank) {
        record.final_mapping = bank->mapping.assignment;
        record.live_params = count_parameters(*bank, true);
        record.allocated_params = count_parameters(*bank, false);
        const std::size_t per_layer = config.lookback * config.horizon + config.horizon;
        record.rmp = static_cast<double>(record.live_params) /
                     static_cast<double>(d * per_layer);  // vs the CI bank
    } else {
        record.final_mapping = mlp->mapping.assignment;
        record.live_params = count_parameters(*mlp, true);
        record.allocated_params = count_parameters(*mlp, false);
        record.rmp = mlp->replicated() ? mlp->mapping.rmp() : 1.0;
    }
    if (checkpoint_out) {
        *checkpoint_out = bank ? to_checkpoint(*bank) : to_checkpoint(*mlp);
    }
    return record;
}

std::vector<RunOutcome> run_matrix(const std::vector<ExperimentConfig>& configs,
                                   std::size_t n_threads) {
    std::vector<RunOutcome> outcomes(configs.size());
    if (configs.empty()) return outcomes;
    if (n_threads == 0) n_threads = configured_threads();
    n_threads = std::min(n_threads, configs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) break;
            try {
                outcomes[i].record = run(configs[i]);
                outcomes[i].ok = true;
            } catch (const std::exception& e) {
                outcomes[i].ok = false;
                outcomes[i].error = e.what();
            }
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return outcomes;
}

} // namespace forecast
