#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "forecast/dataset.hpp"
#include "forecast/errors.hpp"

using namespace forecast;
namespace fs = std::filesystem;

namespace {

struct TempFile {
    fs::path path;
    explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) {}
    ~TempFile() { std::error_code ec; fs::remove(path, ec); }
};

TimeSeriesDataset ramp_dataset(std::size_t d, std::size_t n) {
    TimeSeriesDataset ds;
    ds.values = Matrix(d, n);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t t = 0; t < n; ++t) ds.values(c, t) = double(c * 1000 + t);
        ds.channel_names.push_back("ch" + std::to_string(c + 1));
    }
    return ds;
}

// Naive DFT magnitude at a single frequency (cycles over the whole signal).
double dft_magnitude(std::span<const double> x, double cycles) {
    std::complex<double> acc{0.0, 0.0};
    const double w = 2.0 * M_PI * cycles / double(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        acc += x[t] * std::exp(std::complex<double>(0.0, -w * double(t)));
    }
    return std::abs(acc);
}

} // namespace

TEST_CASE("load_csv parses a headered file with a timestamp column") {
    TempFile tmp("fc_small.csv");
    {
        std::ofstream out(tmp.path);
        out << "date,HUFL,HULL,OT\n";
        out << "2016-07-01 00:00,1.0,2.0,3.0\n";
        out << "2016-07-01 00:15,4.0,5.0,6.0\n";
        out << "2016-07-01 00:30,7.0,8.0,9.0\n";
    }
    const auto ds = load_csv(tmp.path.string(), true, "date");
    CHECK(ds.n_channels() == 3);
    CHECK(ds.n_steps() == 3);
    CHECK(ds.had_timestamp_column);
    CHECK(ds.channel_names == std::vector<std::string>{"HUFL", "HULL", "OT"});
    // channels are rows, time is columns
    CHECK(ds.values(0, 2) == 7.0);
    CHECK(ds.values(2, 0) == 3.0);
}

TEST_CASE("load_csv reports the 1-based position of a bad field") {
    TempFile tmp("fc_bad.csv");
    {
        std::ofstream out(tmp.path);
        out << "a,b\n";
        out << "1,2\n2,3\n3,4\n";
        out << "4,oops\n";  // data row 4 = file row 5, column 2
        out << "5,6\n";
    }
    try {
        load_csv(tmp.path.string(), true);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 5") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects ragged rows and missing files") {
    TempFile tmp("fc_ragged.csv");
    {
        std::ofstream out(tmp.path);
        out << "a,b,c\n1,2,3\n4,5\n";
    }
    CHECK_THROWS_AS(load_csv(tmp.path.string(), true), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv", true), DataError);
}

TEST_CASE("load_csv handles a full-size hourly-shaped file") {
    // Same shape as a 7-channel electricity-transformer export: 69680 steps.
    TempFile tmp("fc_ett_shape.csv");
    {
        std::ofstream out(tmp.path);
        out << "date,c1,c2,c3,c4,c5,c6,OT\n";
        char line[160];
        for (int t = 0; t < 69680; ++t) {
            std::snprintf(line, sizeof(line), "t%d,%d,%d,%d,%d,%d,%d,%d\n", t, t % 7, t % 11,
                          t % 13, t % 17, t % 19, t % 23, t % 29);
            out << line;
        }
    }
    const auto ds = load_csv(tmp.path.string(), true, "date");
    REQUIRE(ds.n_channels() == 7);
    REQUIRE(ds.n_steps() == 69680);

    // 6:2:2 chronological split with the standard long-horizon window.
    const auto splits = split(ds, {0.6, 0.2, 0.2}, 336, 96);
    CHECK(splits.train.begin == 0);
    CHECK(splits.train.end == 41808);
    CHECK(splits.val.begin == 41808);
    CHECK(splits.val.end == 55744);
    CHECK(splits.test.end == 69680);

    WindowStream train(ds, splits.train, 336, 96, 128);
    CHECK(train.window_count() == 41808 - 336 - 96 + 1);  // 41377
}

TEST_CASE("split uses floor boundaries and validates window feasibility") {
    const auto ds = ramp_dataset(2, 100);
    const auto s = split(ds, {0.6, 0.2, 0.2}, 10, 5);
    CHECK(s.train.end == 60);
    CHECK(s.val.begin == 60);
    CHECK(s.val.end == 80);
    CHECK(s.test.begin == 80);
    CHECK(s.test.end == 100);

    // A split too short for one lookback+horizon window must be rejected.
    CHECK_THROWS_AS(split(ds, {0.6, 0.2, 0.2}, 30, 5), DataError);
    CHECK_THROWS_AS(split(ds, {0.5, 0.5, 0.5}, 10, 5), ConfigError);
}

TEST_CASE("window stream yields chronological stride-1 windows fully inside the split") {
    const auto ds = ramp_dataset(1, 50);
    const IndexRange range{10, 30};
    WindowStream stream(ds, range, 4, 2, 8);
    // starts 10..24 inclusive -> 15 windows
    REQUIRE(stream.window_count() == 15);

    std::vector<std::size_t> starts;
    while (auto batch = stream.next()) {
        for (std::size_t k = 0; k < batch->size(); ++k) {
            starts.push_back(batch->starts[k]);
            const Matrix& in = batch->inputs[k];
            const Matrix& tg = batch->targets[k];
            REQUIRE(in.cols() == 4);
            REQUIRE(tg.cols() == 2);
            // values are the ramp, so every element pins its own timestamp
            CHECK(in(0, 0) == double(batch->starts[k]));
            CHECK(tg(0, 1) == double(batch->starts[k] + 5));
            CHECK(batch->starts[k] + 6 <= range.end);  // no leak past the split
            CHECK(batch->starts[k] >= range.begin);
        }
    }
    CHECK(stream.windows_consumed() == 15);
    for (std::size_t i = 0; i < starts.size(); ++i) CHECK(starts[i] == 10 + i);
}

TEST_CASE("final partial batch is emitted") {
    const auto ds = ramp_dataset(1, 200);
    // 200 - 50 - 20 + 1 = 131 windows in the full range
    WindowStream stream(ds, {0, 200}, 50, 20, 64);
    std::vector<std::size_t> sizes;
    while (auto batch = stream.next()) sizes.push_back(batch->size());
    CHECK(sizes == std::vector<std::size_t>{64, 64, 3});
    CHECK(stream.batch_count() == 3);
}

TEST_CASE("shuffled stream is a permutation, reproducible, and changes per epoch") {
    const auto ds = ramp_dataset(1, 80);
    auto collect = [&](WindowStream& s) {
        std::vector<std::size_t> starts;
        while (auto b = s.next()) {
            starts.insert(starts.end(), b->starts.begin(), b->starts.end());
        }
        return starts;
    };

    WindowStream a(ds, {0, 80}, 8, 2, 16, 99);
    WindowStream b(ds, {0, 80}, 8, 2, 16, 99);
    const auto ea1 = collect(a);
    const auto eb1 = collect(b);
    CHECK(ea1 == eb1);  // same seed, same order

    std::vector<std::size_t> sorted = ea1;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);  // permutation

    a.reset();
    const auto ea2 = collect(a);
    CHECK(ea2 != ea1);  // epochs reshuffle

    WindowStream c(ds, {0, 80}, 8, 2, 16, 100);
    CHECK(collect(c) != ea1);  // different seed, different order
}

TEST_CASE("synthesize is deterministic and honors the round-robin cluster layout") {
    SyntheticSpec spec;
    spec.n_channels = 9;
    spec.n_clusters = 3;
    spec.cluster_periods = {24, 96, 168};
    spec.noise_std = {0.05};
    spec.length = 2000;
    spec.seed = 123;

    const auto a = synthesize(spec);
    const auto b = synthesize(spec);
    CHECK(a.dataset.values == b.dataset.values);
    REQUIRE(a.cluster_of_channel.size() == 9);
    for (std::size_t c = 0; c < 9; ++c) CHECK(a.cluster_of_channel[c] == c % 3);

    spec.seed = 124;
    const auto c = synthesize(spec);
    CHECK(!(c.dataset.values == a.dataset.values));
}

TEST_CASE("synthetic channels carry their cluster's period as the dominant frequency") {
    SyntheticSpec spec;
    spec.n_channels = 6;
    spec.n_clusters = 2;
    spec.cluster_periods = {24, 96};
    spec.noise_std = {0.05};
    spec.length = 960;  // multiple of both periods
    spec.seed = 5;
    const auto data = synthesize(spec);

    for (std::size_t ch = 0; ch < 6; ++ch) {
        const double own_period = spec.cluster_periods[data.cluster_of_channel[ch]];
        const double other_period = spec.cluster_periods[1 - data.cluster_of_channel[ch]];
        const auto row = data.dataset.values.row(ch);
        const double own = dft_magnitude(row, spec.length / own_period);
        const double other = dft_magnitude(row, spec.length / other_period);
        CHECK(own > 10.0 * other);
    }
}

TEST_CASE("per-channel noise levels are honored") {
    SyntheticSpec spec;
    spec.n_channels = 4;
    spec.n_clusters = 2;
    spec.cluster_periods = {24, 96};
    spec.noise_std = {0.0, 0.0, 1.0, 1.0};
    spec.length = 3000;
    spec.seed = 42;
    const auto data = synthesize(spec);

    auto roughness = [&](std::size_t ch) {
        // mean squared one-step difference; the sine part contributes little
        double acc = 0.0;
        const auto row = data.dataset.values.row(ch);
        for (std::size_t t = 1; t < row.size(); ++t) {
            acc += (row[t] - row[t - 1]) * (row[t] - row[t - 1]);
        }
        return acc / double(row.size() - 1);
    };
    CHECK(roughness(2) > 20.0 * roughness(0));
    CHECK(roughness(3) > 20.0 * roughness(1));
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.n_channels = 4;
    spec.n_clusters = 2;
    spec.cluster_periods = {24, 96};
    spec.noise_std = {0.1};
    spec.length = 100;
    spec.validate();  // fine

    SyntheticSpec bad = spec;
    bad.cluster_periods = {24};  // wrong count
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.noise_std = {0.1, 0.2, 0.3};  // neither 1 nor d entries
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.n_clusters = 5;  // more clusters than channels
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const auto j = spec.to_json();
    const auto round = SyntheticSpec::from_json(j);
    CHECK(round.n_channels == 4);
    CHECK(round.cluster_periods == spec.cluster_periods);
}

TEST_CASE("standardize_by_train uses train statistics only") {
    auto ds = ramp_dataset(1, 10);
    for (std::size_t t = 0; t < 10; ++t) ds.values(0, t) = double(t < 5 ? t : 100 + t);
    const auto stats = standardize_by_train(ds, {0, 5});
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].first == doctest::Approx(2.0));  // mean of 0..4
    // train part standardized to mean 0
    double train_mean = 0.0;
    for (std::size_t t = 0; t < 5; ++t) train_mean += ds.values(0, t);
    CHECK(std::abs(train_mean / 5) < 1e-12);
    // later values are transformed with the same stats, so they stay huge
    CHECK(ds.values(0, 9) > 10.0);
}
