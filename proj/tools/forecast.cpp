// Command-line front end: train single runs, compare strategies in a grid,
// run the cross-channel d x d experiment, and score cluster stability
// across runs.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "forecast/errors.hpp"
#include "forecast/evaluation.hpp"
#include "forecast/report.hpp"
#include "forecast/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitInternalError = 2;

json load_json_file(const std::string& path) {
    std::ifstream file(path);
    if (!file.is_open()) {
        throw forecast::DataError("cannot open " + path);
    }
    return json::parse(file);
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::localtime(&t));
    return buf;
}

void append_log(const fs::path& dir, const std::string& line) {
    std::ofstream log(dir / "log.txt", std::ios::app);
    log << "[" << timestamp() << "] " << line << "\n";
}

// Parses "1-21", "3", or "1,2,5" (1-based) into 0-based indices.
std::vector<std::size_t> parse_channel_spec(const std::string& spec) {
    std::vector<std::size_t> out;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dash = part.find('-');
        auto parse_one = [](const std::string& s) {
            const long v = std::stol(s);
            if (v < 1) throw forecast::ConfigError("channel indices are 1-based");
            return static_cast<std::size_t>(v - 1);
        };
        if (dash == std::string::npos) {
            out.push_back(parse_one(part));
        } else {
            const std::size_t lo = parse_one(part.substr(0, dash));
            const std::size_t hi = parse_one(part.substr(dash + 1));
            if (hi < lo) throw forecast::ConfigError("descending channel range " + part);
            for (std::size_t c = lo; c <= hi; ++c) out.push_back(c);
        }
    }
    if (out.empty()) {
        throw forecast::ConfigError("empty channel spec \"" + spec + "\"");
    }
    return out;
}

void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir / "run.json") && !force) {
        throw forecast::ConfigError("output directory " + dir.string() +
                                    " already holds a run; use --force to overwrite");
    }
    fs::create_directories(dir);
}

std::string format3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// "42.8% (3)" style RMP cell.
std::string format_rmp(double rmp, std::size_t live_layers) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.1f%% (%zu)", rmp * 100.0, live_layers);
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, long seed_override,
              bool force) {
    json config_json = load_json_file(config_path);
    if (seed_override >= 0) {
        config_json["seed"] = static_cast<std::uint64_t>(seed_override);
    }
    forecast::ExperimentConfig config = forecast::ExperimentConfig::from_json(config_json);

    const fs::path dir(out_dir);
    prepare_out_dir(dir, force);
    append_log(dir, "train start: strategy " + forecast::to_string(config.strategy));

    forecast::Checkpoint checkpoint;
    forecast::RunRecord record = forecast::run(config, &checkpoint);

    forecast::write_file_atomic((dir / "config.json").string(), config.to_json().dump(2) + "\n");
    forecast::write_file_atomic((dir / "run.json").string(), record.to_json().dump(2) + "\n");
    forecast::write_file_atomic((dir / "mapping_history.json").string(),
                                forecast::mapping_history_to_json(record.mapping_history).dump(2) +
                                    "\n");
    forecast::save_checkpoint((dir / "model.ckpt").string(), checkpoint);

    for (std::size_t e = 0; e < record.epoch_seconds.size(); ++e) {
        char line[96];
        std::snprintf(line, sizeof(line), "epoch %zu: train %.6f, %.3f s", e + 1,
                      record.train_losses[e], record.epoch_seconds[e]);
        append_log(dir, line);
    }
    append_log(dir, "test mse " + format3(record.test_mse) + ", mae " + format3(record.test_mae));
    std::cout << "test_mse " << record.test_mse << "\ntest_mae " << record.test_mae << "\nrmp "
              << record.rmp << "\n";
    return kExitOk;
}

int cmd_grid(const std::string& configs_path, const std::string& out_dir) {
    json list = load_json_file(configs_path);
    if (!list.is_array() || list.empty()) {
        throw forecast::ConfigError("grid: config list must be a non-empty JSON array");
    }
    std::vector<forecast::ExperimentConfig> configs;
    for (const auto& item : list) {
        configs.push_back(forecast::ExperimentConfig::from_json(item));
    }
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    auto outcomes = forecast::run_matrix(configs);

    // Rows are (dataset, horizon); columns one strategy each.
    struct Cell {
        bool ok = false;
        double mse = 0, mae = 0, rmp = 1;
        std::size_t live_layers = 0;
        std::string error;
    };
    std::map<std::pair<std::string, std::size_t>, std::map<std::string, Cell>> rows;
    std::vector<std::string> strategies;
    bool any_ok = false;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& c = configs[i];
        const std::string dataset = c.dataset_csv.empty() ? "synthetic" : c.dataset_csv;
        const std::string strat = forecast::to_string(c.strategy);
        if (std::find(strategies.begin(), strategies.end(), strat) == strategies.end()) {
            strategies.push_back(strat);
        }
        Cell cell;
        if (outcomes[i].ok) {
            any_ok = true;
            cell.ok = true;
            cell.mse = outcomes[i].record.test_mse;
            cell.mae = outcomes[i].record.test_mae;
            cell.rmp = outcomes[i].record.rmp;
            forecast::MappingVector mv;
            mv.assignment = outcomes[i].record.final_mapping;
            cell.live_layers = mv.live_count();
            forecast::write_file_atomic((dir / ("run_" + std::to_string(i) + ".json")).string(),
                                        outcomes[i].record.to_json().dump(2) + "\n");
        } else {
            cell.error = outcomes[i].error;
            std::cerr << "run " << i << " failed: " << outcomes[i].error << "\n";
        }
        rows[{dataset, c.horizon}][strat] = cell;
    }

    std::ostringstream csv;
    csv << "dataset,horizon";
    for (const auto& s : strategies) {
        csv << "," << s << "_mse," << s << "_mae," << s << "_rmp";
    }
    csv << ",best\n";
    for (const auto& [key, cells] : rows) {
        csv << key.first << "," << key.second;
        std::string best;
        double best_mse = 0.0;
        for (const auto& s : strategies) {
            auto it = cells.find(s);
            if (it == cells.end() || !it->second.ok) {
                csv << ",,,";
                continue;
            }
            const Cell& cell = it->second;
            csv << "," << format3(cell.mse) << "," << format3(cell.mae) << ","
                << format_rmp(cell.rmp, cell.live_layers);
            if (best.empty() || cell.mse < best_mse) {
                best = s;
                best_mse = cell.mse;
            }
        }
        csv << "," << best << "\n";
    }
    forecast::write_file_atomic((dir / "table.csv").string(), csv.str());
    return any_ok ? kExitOk : kExitUserError;
}

int cmd_xchannel(const std::string& config_path, const std::string& channel_spec,
                 const std::string& out_dir) {
    json config_json = load_json_file(config_path);
    forecast::ExperimentConfig config = forecast::ExperimentConfig::from_json(config_json);

    forecast::TimeSeriesDataset dataset;
    if (config.synthetic) {
        dataset = forecast::synthesize(*config.synthetic).dataset;
    } else {
        dataset =
            forecast::load_csv(config.dataset_csv, config.csv_has_header, config.timestamp_column);
    }
    auto splits =
        forecast::split(dataset, config.split_ratios, config.lookback, config.horizon);
    if (config.standardize) {
        forecast::standardize_by_train(dataset, splits.train);
    }

    std::vector<std::size_t> channels;
    if (channel_spec.empty()) {
        for (std::size_t c = 0; c < dataset.n_channels(); ++c) channels.push_back(c);
    } else {
        channels = parse_channel_spec(channel_spec);
    }

    forecast::CrossChannelConfig grid_config;
    grid_config.lookback = config.lookback;
    grid_config.horizon = config.horizon;
    grid_config.epochs = config.total_epochs;
    grid_config.batch_size = config.batch_size;
    grid_config.adam = config.optimizer;
    grid_config.adam.lr = config.effective_lr();
    grid_config.seed = config.seed;
    grid_config.revin_epsilon = config.revin_epsilon;

    auto result = forecast::cross_channel_grid(dataset, splits, channels, grid_config);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    std::vector<std::string> labels;
    for (std::size_t c : channels) {
        labels.push_back(c < dataset.channel_names.size() ? dataset.channel_names[c]
                                                          : "ch" + std::to_string(c + 1));
    }
    forecast::write_matrix_csv((dir / "train_matrix.csv").string(), result.train.values, labels);
    forecast::write_matrix_csv((dir / "test_matrix.csv").string(), result.test.values, labels);
    forecast::write_svg_heatmap((dir / "train_heatmap.svg").string(),
                                forecast::normalize_matrix(result.train).values, labels, labels);
    forecast::write_svg_heatmap((dir / "test_heatmap.svg").string(),
                                forecast::normalize_matrix(result.test).values, labels, labels);

    // Per-target best input channel, read off the test matrix columns.
    json best = json::array();
    const forecast::Matrix& test = result.test.values;
    for (std::size_t j = 0; j < test.cols(); ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < test.rows(); ++i) {
            if (test(i, j) < test(arg, j)) arg = i;
        }
        best.push_back({{"target_channel", channels[j] + 1},
                        {"best_input_channel", channels[arg] + 1},
                        {"test_mse", test(arg, j)},
                        {"self_mse", test(j, j)}});
    }
    forecast::write_file_atomic((dir / "best_inputs.json").string(), best.dump(2) + "\n");
    return kExitOk;
}

int cmd_clusters(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.size() < 2) {
        throw forecast::ConfigError("clusters: need at least 2 run directories");
    }
    std::vector<forecast::ClusterPartition> partitions;
    for (const auto& run_dir : run_dirs) {
        json record = load_json_file((fs::path(run_dir) / "run.json").string());
        forecast::ClusterPartition part;
        part.seed = record.at("config").value("seed", std::uint64_t{0});
        for (const auto& idx : record.at("final_mapping")) {
            part.assignment.push_back(idx.get<std::size_t>());
        }
        partitions.push_back(std::move(part));
    }
    auto scores = forecast::cluster_stability(partitions);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    json out;
    out["mean_rand_index"] = scores.mean_rand;
    out["mean_adjusted_rand_index"] = scores.mean_adjusted_rand;
    json pairs = json::array();
    for (std::size_t i = 0; i < partitions.size(); ++i) {
        for (std::size_t j = i + 1; j < partitions.size(); ++j) {
            pairs.push_back({{"run_a", run_dirs[i]},
                             {"run_b", run_dirs[j]},
                             {"rand_index", scores.rand(i, j)},
                             {"adjusted_rand_index", scores.adjusted_rand(i, j)}});
        }
    }
    out["pairs"] = pairs;
    forecast::write_file_atomic((dir / "stability.json").string(), out.dump(2) + "\n");

    // channel x run cluster-assignment table
    std::ostringstream csv;
    csv << "channel";
    for (std::size_t r = 0; r < run_dirs.size(); ++r) csv << ",run" << (r + 1);
    csv << "\n";
    const std::size_t d = partitions[0].assignment.size();
    for (std::size_t c = 0; c < d; ++c) {
        csv << (c + 1);
        for (const auto& part : partitions) csv << "," << part.assignment[c];
        csv << "\n";
    }
    forecast::write_file_atomic((dir / "assignments.csv").string(), csv.str());

    std::cout << "mean_rand " << scores.mean_rand << "\nmean_adjusted_rand "
              << scores.mean_adjusted_rand << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel-strategy forecasting toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, channel_spec;
    std::vector<std::string> run_dirs;
    long seed_override = -1;
    bool force = false;

    auto* train = app.add_subcommand("train", "Train one model from a config file");
    train->add_option("--config", config_path, "experiment config JSON")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--seed", seed_override, "override the config seed");
    train->add_flag("--force", force, "overwrite an existing run directory");

    auto* grid = app.add_subcommand("grid", "Run a strategy comparison grid");
    grid->add_option("--configs", config_path, "JSON array of experiment configs")->required();
    grid->add_option("--out", out_dir, "output directory")->required();

    auto* xchannel = app.add_subcommand("xchannel", "Cross-channel d x d loss grid");
    xchannel->add_option("--config", config_path, "experiment config JSON")->required();
    xchannel->add_option("--channels", channel_spec, "channel subset, e.g. 1-21 (1-based)");
    xchannel->add_option("--out", out_dir, "output directory")->required();

    auto* clusters = app.add_subcommand("clusters", "Cluster stability across runs");
    clusters->add_option("--runs", run_dirs, "run directories")->required()->expected(-1);
    clusters->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUserError;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir, seed_override, force);
        if (grid->parsed()) return cmd_grid(config_path, out_dir);
        if (xchannel->parsed()) return cmd_xchannel(config_path, channel_spec, out_dir);
        if (clusters->parsed()) return cmd_clusters(run_dirs, out_dir);
    } catch (const forecast::InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    } catch (const forecast::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const forecast::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
    return kExitUserError;
}
