#include "forecast/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"

namespace forecast {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    // allow surrounding whitespace, nothing else
    while (end && *end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
    if (end == begin || (end && *end != '\0') || !std::isfinite(v)) {
        throw DataError("csv: cannot parse cell \"" + cell + "\" at row " + std::to_string(row) +
                        ", column " + std::to_string(col));
    }
    return v;
}

} // namespace

TimeSeriesDataset load_csv(const std::string& path, bool has_header,
                           const std::string& timestamp_column) {
    std::ifstream file(path);
    if (!file.is_open()) {
        throw DataError("csv: cannot open file " + path);
    }

    std::string line;
    std::vector<std::string> header;
    std::size_t timestamp_idx = static_cast<std::size_t>(-1);

    if (has_header) {
        if (!std::getline(file, line)) {
            throw DataError("csv: file " + path + " is empty");
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        header = split_line(line);
        if (!timestamp_column.empty()) {
            auto it = std::find(header.begin(), header.end(), timestamp_column);
            if (it == header.end()) {
                throw DataError("csv: timestamp column \"" + timestamp_column +
                                "\" not found in header");
            }
            timestamp_idx = static_cast<std::size_t>(it - header.begin());
        }
    } else if (!timestamp_column.empty()) {
        throw DataError("csv: timestamp column requires a header row");
    }

    std::vector<std::vector<double>> rows;  // per timestep
    std::size_t n_cols = 0;
    std::size_t data_row = 0;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++data_row;
        // Error messages use the physical 1-based file line, header included.
        const std::size_t file_row = data_row + (has_header ? 1 : 0);
        auto cells = split_line(line);
        if (n_cols == 0) {
            n_cols = cells.size();
            if (has_header && cells.size() != header.size()) {
                throw DataError("csv: row 1 has " + std::to_string(cells.size()) +
                                " cells but header has " + std::to_string(header.size()));
            }
        } else if (cells.size() != n_cols) {
            throw DataError("csv: ragged row " + std::to_string(file_row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(n_cols));
        }
        std::vector<double> values;
        values.reserve(n_cols);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == timestamp_idx) continue;
            values.push_back(parse_cell(cells[c], file_row, c + 1));
        }
        rows.push_back(std::move(values));
    }

    if (rows.empty()) {
        throw DataError("csv: file " + path + " has no data rows");
    }

    const std::size_t d = rows[0].size();
    const std::size_t n = rows.size();
    TimeSeriesDataset ds;
    ds.values = Matrix(d, n);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            ds.values(c, t) = rows[t][c];
        }
    }
    ds.had_timestamp_column = (timestamp_idx != static_cast<std::size_t>(-1));
    if (has_header) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == timestamp_idx) continue;
            ds.channel_names.push_back(header[c]);
        }
    } else {
        for (std::size_t c = 0; c < d; ++c) {
            ds.channel_names.push_back("ch" + std::to_string(c + 1));
        }
    }
    return ds;
}

SplitRanges split(const TimeSeriesDataset& dataset, std::array<double, 3> ratios,
                  std::size_t lookback, std::size_t horizon) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] <= 0.0 || ratios[1] <= 0.0 || ratios[2] <= 0.0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split: ratios must be positive and sum to 1");
    }
    const std::size_t n = dataset.n_steps();
    const auto b1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[0]));
    const auto b2 =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * (ratios[0] + ratios[1])));
    SplitRanges s;
    s.train = {0, b1};
    s.val = {b1, b2};
    s.test = {b2, n};
    const std::size_t need = lookback + horizon;
    const std::pair<const char*, IndexRange> parts[] = {
        {"train", s.train}, {"validation", s.val}, {"test", s.test}};
    for (const auto& [name, r] : parts) {
        if (r.length() < need) {
            throw DataError("split: " + std::string(name) + " split has " +
                            std::to_string(r.length()) + " timesteps, needs at least " +
                            std::to_string(need));
        }
    }
    return s;
}

WindowStream::WindowStream(const TimeSeriesDataset& dataset, IndexRange range,
                           std::size_t lookback, std::size_t horizon, std::size_t batch_size,
                           std::optional<std::uint64_t> shuffle_seed)
    : dataset_(&dataset),
      range_(range),
      lookback_(lookback),
      horizon_(horizon),
      batch_size_(batch_size),
      shuffle_seed_(shuffle_seed) {
    if (batch_size_ == 0) {
        throw ConfigError("windows: batch size must be positive");
    }
    const std::size_t need = lookback_ + horizon_;
    if (range_.length() < need) {
        throw DataError("windows: split of length " + std::to_string(range_.length()) +
                        " cannot hold a window of length " + std::to_string(need));
    }
    const std::size_t count = range_.length() - need + 1;
    order_.resize(count);
    std::iota(order_.begin(), order_.end(), range_.begin);
    if (shuffle_seed_) {
        std::mt19937_64 rng(mix_seed(*shuffle_seed_, epoch_));
        std::shuffle(order_.begin(), order_.end(), rng);
    }
}

std::size_t WindowStream::batch_count() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

void WindowStream::reset() {
    cursor_ = 0;
    if (shuffle_seed_) {
        ++epoch_;
        std::iota(order_.begin(), order_.end(), range_.begin);
        std::mt19937_64 rng(mix_seed(*shuffle_seed_, epoch_));
        std::shuffle(order_.begin(), order_.end(), rng);
    }
}

std::optional<WindowBatch> WindowStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
    WindowBatch batch;
    batch.inputs.reserve(count);
    batch.targets.reserve(count);
    batch.starts.reserve(count);
    const std::size_t d = dataset_->n_channels();
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t start = order_[cursor_ + k];
        Matrix in(d, lookback_);
        Matrix tgt(d, horizon_);
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t t = 0; t < lookback_; ++t) {
                in(c, t) = dataset_->values(c, start + t);
            }
            for (std::size_t t = 0; t < horizon_; ++t) {
                tgt(c, t) = dataset_->values(c, start + lookback_ + t);
            }
        }
        batch.inputs.push_back(std::move(in));
        batch.targets.push_back(std::move(tgt));
        batch.starts.push_back(start);
    }
    cursor_ += count;
    consumed_ += count;
    return batch;
}

void SyntheticSpec::validate() const {
    if (n_channels == 0 || n_clusters == 0 || length == 0) {
        throw ConfigError("synthetic: n_channels, n_clusters and length must be positive");
    }
    if (n_clusters > n_channels) {
        throw ConfigError("synthetic: n_clusters must not exceed n_channels");
    }
    if (cluster_periods.size() != n_clusters) {
        throw ConfigError("synthetic: cluster_periods must have n_clusters entries");
    }
    for (std::size_t i = 0; i < cluster_periods.size(); ++i) {
        if (cluster_periods[i] <= 0.0) {
            throw ConfigError("synthetic: cluster periods must be positive");
        }
        for (std::size_t j = i + 1; j < cluster_periods.size(); ++j) {
            if (cluster_periods[i] == cluster_periods[j]) {
                throw ConfigError("synthetic: cluster periods must be distinct");
            }
        }
    }
    if (noise_std.size() != 1 && noise_std.size() != n_channels) {
        throw ConfigError("synthetic: noise_std must have 1 or n_channels entries");
    }
    for (double s : noise_std) {
        if (s < 0.0) throw ConfigError("synthetic: noise_std entries must be nonnegative");
    }
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
    static const char* known[] = {"n_channels", "n_clusters", "cluster_periods",
                                  "noise_std",  "length",     "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
            throw ConfigError("synthetic: unknown key \"" + it.key() + "\"");
        }
    }
    SyntheticSpec spec;
    spec.n_channels = j.at("n_channels").get<std::size_t>();
    spec.n_clusters = j.at("n_clusters").get<std::size_t>();
    spec.cluster_periods = j.at("cluster_periods").get<std::vector<double>>();
    const auto& noise = j.at("noise_std");
    if (noise.is_number()) {
        spec.noise_std = {noise.get<double>()};
    } else {
        spec.noise_std = noise.get<std::vector<double>>();
    }
    spec.length = j.at("length").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

nlohmann::json SyntheticSpec::to_json() const {
    return {{"n_channels", n_channels},   {"n_clusters", n_clusters},
            {"cluster_periods", cluster_periods}, {"noise_std", noise_std},
            {"length", length},           {"seed", seed}};
}

SyntheticData synthesize(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData out;
    out.dataset.values = Matrix(spec.n_channels, spec.length);
    out.dataset.granularity = "synthetic";
    out.cluster_of_channel.resize(spec.n_channels);

    std::mt19937_64 rng(mix_seed(spec.seed, seed_tag::synthetic));
    for (std::size_t c = 0; c < spec.n_channels; ++c) {
        const std::size_t cluster = c % spec.n_clusters;
        out.cluster_of_channel[c] = cluster;
        out.dataset.channel_names.push_back("ch" + std::to_string(c + 1));
        const double period = spec.cluster_periods[cluster];
        const double phase = uniform(rng, 0.0, 2.0 * M_PI);
        const double noise =
            spec.noise_std.size() == 1 ? spec.noise_std[0] : spec.noise_std[c];
        for (std::size_t t = 0; t < spec.length; ++t) {
            double v = std::sin(2.0 * M_PI * static_cast<double>(t) / period + phase);
            if (noise > 0.0) v += noise * normal01(rng);
            out.dataset.values(c, t) = v;
        }
    }
    return out;
}

std::vector<std::pair<double, double>> standardize_by_train(TimeSeriesDataset& dataset,
                                                            IndexRange train) {
    std::vector<std::pair<double, double>> stats;
    stats.reserve(dataset.n_channels());
    const double len = static_cast<double>(train.length());
    for (std::size_t c = 0; c < dataset.n_channels(); ++c) {
        double mean = 0.0;
        for (std::size_t t = train.begin; t < train.end; ++t) mean += dataset.values(c, t);
        mean /= len;
        double var = 0.0;
        for (std::size_t t = train.begin; t < train.end; ++t) {
            const double e = dataset.values(c, t) - mean;
            var += e * e;
        }
        var /= len;
        double sd = std::sqrt(var);
        if (sd < 1e-12) sd = 1.0;  // constant channel stays constant
        for (std::size_t t = 0; t < dataset.n_steps(); ++t) {
            dataset.values(c, t) = (dataset.values(c, t) - mean) / sd;
        }
        stats.emplace_back(mean, sd);
    }
    return stats;
}

} // namespace forecast
