#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "forecast/errors.hpp"
#include "forecast/rng.hpp"
#include "forecast/strategies.hpp"

using namespace forecast;

namespace {

SyntheticData make_data(std::size_t d, std::size_t length, std::uint64_t seed,
                        double noise = 0.1) {
    SyntheticSpec spec;
    spec.n_channels = d;
    spec.n_clusters = std::min<std::size_t>(d, 2);
    spec.cluster_periods.assign(spec.n_clusters, 24.0);
    if (spec.n_clusters == 2) spec.cluster_periods[1] = 96.0;
    spec.noise_std = {noise};
    spec.length = length;
    spec.seed = seed;
    return synthesize(spec);
}

// Reference forecast for one channel of one window: RevIN by the window's
// own statistics, affine map, denormalize. Written independently of the
// batched production path.
std::vector<double> reference_forecast(const AffineLayer& layer, std::span<const double> window,
                                       double epsilon) {
    double mean = 0.0;
    for (double v : window) mean += v;
    mean /= double(window.size());
    double var = 0.0;
    for (double v : window) var += (v - mean) * (v - mean);
    const double stddev = std::max(std::sqrt(var / double(window.size())), epsilon);

    std::vector<double> out(layer.out_dim(), 0.0);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < window.size(); ++i) {
            acc += layer.weight(o, i) * (window[i] - mean) / stddev;
        }
        out[o] = acc * stddev + mean;
    }
    return out;
}

} // namespace

TEST_CASE("mapping vector counts live layers and RMP") {
    MappingVector m;
    m.assignment = {0, 2, 0, 2, 4, 0};
    CHECK(m.live_count() == 3);
    CHECK(m.rmp() == doctest::Approx(0.5));
    CHECK(m.live_layers() == std::vector<std::size_t>{0, 2, 4});
    CHECK(MappingVector::identity(4).assignment == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(MappingVector::all_to(3, 0).rmp() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("linear bank allocation per strategy") {
    std::mt19937_64 rng(1);
    const auto cd = LinearBank::make(LinearStrategy::CD, 5, 24, 6, rng);
    CHECK(cd.layers.size() == 1);
    for (std::size_t c = 0; c < 5; ++c) CHECK(&cd.layer_for_channel(c) == &cd.layers[0]);

    const auto ci = LinearBank::make(LinearStrategy::CI, 5, 24, 6, rng);
    CHECK(ci.layers.size() == 5);
    CHECK(&ci.layer_for_channel(3) == &ci.layers[3]);

    auto csc = LinearBank::make(LinearStrategy::CSC, 5, 24, 6, rng);
    csc.mapping.assignment = {1, 1, 4, 4, 4};
    CHECK(&csc.layer_for_channel(0) == &csc.layers[1]);
    CHECK(&csc.layer_for_channel(4) == &csc.layers[4]);

    csc.mapping.assignment = {1, 1, 9, 4, 4};  // out of range
    CHECK_THROWS_AS(csc.layer_for_channel(2), InternalError);
}

TEST_CASE("forward_linear matches the per-channel reference path") {
    std::mt19937_64 rng(7);
    const auto data = make_data(3, 400, 21);
    auto bank = LinearBank::make(LinearStrategy::CSC, 3, 16, 4, rng);
    bank.mapping.assignment = {2, 0, 2};  // non-trivial routing

    WindowStream stream(data.dataset, {0, 400}, 16, 4, 5);
    const auto batch = stream.next();
    REQUIRE(batch.has_value());
    const auto preds = forward_linear(bank, *batch);
    REQUIRE(preds.size() == batch->size());

    for (std::size_t k = 0; k < batch->size(); ++k) {
        for (std::size_t c = 0; c < 3; ++c) {
            const auto want = reference_forecast(bank.layers[bank.mapping.assignment[c]],
                                                 batch->inputs[k].row(c), bank.revin_epsilon);
            for (std::size_t t = 0; t < 4; ++t) {
                CHECK(preds[k](c, t) == doctest::Approx(want[t]).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("training reduces the loss for every linear strategy") {
    const auto data = make_data(4, 1200, 33);
    for (auto strategy : {LinearStrategy::CD, LinearStrategy::CI}) {
        std::mt19937_64 rng(2);
        auto bank = LinearBank::make(strategy, 4, 48, 12, rng);
        WindowStream train(data.dataset, {0, 1000}, 48, 12, 64, 7);
        std::vector<LayerAdam> opt;
        for (auto& layer : bank.layers) opt.emplace_back(layer, AdamConfig{});
        double first = 0.0, last = 0.0;
        for (int epoch = 0; epoch < 3; ++epoch) {
            train.reset();
            const double loss = train_epoch_linear(bank, train, opt);
            if (epoch == 0) first = loss;
            last = loss;
        }
        CHECK(last < first);
    }
}

TEST_CASE("unmapped layers stay bit-identical through training") {
    const auto data = make_data(4, 800, 9);
    std::mt19937_64 rng(4);
    auto bank = LinearBank::make(LinearStrategy::CSC, 4, 32, 8, rng);
    bank.mapping.assignment = {0, 0, 3, 3};  // layers 1 and 2 are dead

    const Matrix w1 = bank.layers[1].weight;
    const std::vector<double> b1 = bank.layers[1].bias;
    const Matrix w2 = bank.layers[2].weight;
    const Matrix w0 = bank.layers[0].weight;

    WindowStream train(data.dataset, {0, 800}, 32, 8, 64, 3);
    std::vector<LayerAdam> opt;
    for (auto& layer : bank.layers) opt.emplace_back(layer, AdamConfig{});
    for (int epoch = 0; epoch < 2; ++epoch) {
        train.reset();
        train_epoch_linear(bank, train, opt);
    }

    CHECK(bank.layers[1].weight == w1);  // bitwise
    CHECK(bank.layers[1].bias == b1);
    CHECK(bank.layers[2].weight == w2);
    CHECK(!(bank.layers[0].weight == w0));  // live layer moved
}

TEST_CASE("d=1 CI and CD are the same model") {
    const auto data = make_data(1, 600, 15);
    std::mt19937_64 rng_a(6), rng_b(6);
    auto cd = LinearBank::make(LinearStrategy::CD, 1, 24, 6, rng_a);
    auto ci = LinearBank::make(LinearStrategy::CI, 1, 24, 6, rng_b);
    CHECK(cd.layers[0].weight == ci.layers[0].weight);

    WindowStream train_a(data.dataset, {0, 600}, 24, 6, 32, 11);
    WindowStream train_b(data.dataset, {0, 600}, 24, 6, 32, 11);
    std::vector<LayerAdam> opt_a{{cd.layers[0], AdamConfig{}}};
    std::vector<LayerAdam> opt_b{{ci.layers[0], AdamConfig{}}};
    const double la = train_epoch_linear(cd, train_a, opt_a);
    const double lb = train_epoch_linear(ci, train_b, opt_b);
    CHECK(la == lb);
    CHECK(cd.layers[0].weight == ci.layers[0].weight);
}

TEST_CASE("select_layers equals exhaustive search over all mappings") {
    // The selection objective is separable per channel, so the per-column
    // argmin must match a brute-force scan over all d^d mappings.
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng() % 3;  // 2..4
        ErrorMatrix errors;
        errors.values = Matrix(d, d);
        for (double& v : errors.values.data()) v = uniform(rng, 0.0, 2.0);

        const auto mapping = select_layers(errors);

        // exhaustive: total error of a mapping is sum_j E[m_j][j]
        std::vector<std::size_t> best(d, 0), current(d, 0);
        double best_cost = 1e300;
        const std::size_t total = std::size_t(std::pow(double(d), double(d)) + 0.5);
        for (std::size_t code = 0; code < total; ++code) {
            std::size_t x = code;
            double cost = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                current[j] = x % d;
                x /= d;
                cost += errors.values(current[j], j);
            }
            if (cost < best_cost - 1e-15) {
                best_cost = cost;
                best = current;
            }
        }
        double got_cost = 0.0;
        for (std::size_t j = 0; j < d; ++j) got_cost += errors.values(mapping.assignment[j], j);
        CHECK(got_cost == doctest::Approx(best_cost).epsilon(1e-12));
    }
}

TEST_CASE("select_layers breaks ties toward the smaller index and rejects NaN") {
    ErrorMatrix errors;
    errors.values = Matrix(3, 3, 1.0);
    const auto mapping = select_layers(errors);
    CHECK(mapping.assignment == std::vector<std::size_t>{0, 0, 0});

    errors.values(1, 2) = std::nan("");
    CHECK_THROWS_AS(select_layers(errors), InternalError);
}

TEST_CASE("compute_error_matrix equals a brute-force per-pair loop") {
    const auto data = make_data(3, 500, 77);
    std::mt19937_64 rng(8);
    auto bank = LinearBank::make(LinearStrategy::CSC, 3, 16, 4, rng);

    WindowStream val(data.dataset, {0, 500}, 16, 4, 32);
    val.reset();
    const auto errors = compute_error_matrix(bank, val, 1);
    REQUIRE(errors.values.rows() == 3);
    CHECK(errors.row_semantics == RowSemantics::Layer);

    // brute force: for each (layer i, channel j) accumulate squared error
    // window by window with the reference forecast
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            WindowStream probe(data.dataset, {0, 500}, 16, 4, 32);
            double acc = 0.0;
            std::size_t count = 0;
            while (auto batch = probe.next()) {
                for (std::size_t k = 0; k < batch->size(); ++k) {
                    const auto pred = reference_forecast(bank.layers[i], batch->inputs[k].row(j),
                                                         bank.revin_epsilon);
                    for (std::size_t t = 0; t < 4; ++t) {
                        const double diff = pred[t] - batch->targets[k](j, t);
                        acc += diff * diff;
                        ++count;
                    }
                }
            }
            CHECK(errors.values(i, j) == doctest::Approx(acc / double(count)).epsilon(1e-10));
        }
    }
}

TEST_CASE("error matrix is identical for 1 and 4 threads") {
    const auto data = make_data(5, 600, 13);
    std::mt19937_64 rng(3);
    const auto bank = LinearBank::make(LinearStrategy::CSC, 5, 24, 6, rng);
    WindowStream v1(data.dataset, {0, 600}, 24, 6, 64);
    WindowStream v4(data.dataset, {0, 600}, 24, 6, 64);
    const auto e1 = compute_error_matrix(bank, v1, 1);
    const auto e4 = compute_error_matrix(bank, v4, 4);
    CHECK(e1.values == e4.values);  // bitwise
}

TEST_CASE("csc schedule pretrains CI first and records mapping history") {
    const auto data = make_data(6, 1500, 99, 0.05);
    std::mt19937_64 rng(12);
    auto bank = LinearBank::make(LinearStrategy::CSC, 6, 48, 12, rng);
    WindowStream train(data.dataset, {0, 1200}, 48, 12, 64, 5);
    WindowStream val(data.dataset, {1200, 1400}, 48, 12, 64);

    const auto result = csc_schedule(bank, train, val, 5, {1, 2}, AdamConfig{}, 2);
    CHECK(result.train_losses.size() == 5);
    CHECK(result.val_losses.size() == 5);
    CHECK(result.epoch_seconds.size() == 5);
    REQUIRE(result.history.size() == 2);
    CHECK(result.history[0].epoch == 1);
    CHECK(result.history[1].epoch == 2);
    CHECK(bank.mapping.assignment == result.history.back().mapping.assignment);
    // clustered synthetic data with 2 clusters should need few layers
    CHECK(bank.mapping.live_count() <= 4);
}

TEST_CASE("mlp replication preserves outputs bitwise and moment buffers") {
    const auto data = make_data(3, 400, 31);
    std::mt19937_64 rng(14);
    auto model = MlpModel::make(MlpStrategy::CR, 3, 24, 6, 32, 0, rng);
    REQUIRE(model.encoders.size() == 1);

    WindowStream stream(data.dataset, {0, 400}, 24, 6, 8);
    const auto batch = stream.next();
    const auto before = forward_mlp(model, *batch);

    MlpAdam opt(model, AdamConfig{});
    model.replicate_encoder();
    opt.replicate(3);
    REQUIRE(model.encoders.size() == 3);
    CHECK(model.mapping.assignment == std::vector<std::size_t>{0, 1, 2});
    CHECK(model.encoders[0].weight == model.encoders[2].weight);

    const auto after = forward_mlp(model, *batch);
    REQUIRE(after.size() == before.size());
    for (std::size_t k = 0; k < after.size(); ++k) CHECK(after[k] == before[k]);  // bitwise
}

TEST_CASE("frozen decoder stays bit-identical during post-replication training") {
    const auto data = make_data(3, 800, 57);
    std::mt19937_64 rng(18);
    auto model = MlpModel::make(MlpStrategy::CR, 3, 24, 6, 16, 0, rng);
    MlpAdam opt(model, AdamConfig{});
    WindowStream train(data.dataset, {0, 800}, 24, 6, 64, 2);

    train.reset();
    train_epoch_mlp(model, train, opt, true);  // pretraining epoch
    model.replicate_encoder();
    opt.replicate(3);

    const Matrix decoder_w = model.decoder.weight;
    const std::vector<double> decoder_b = model.decoder.bias;
    const Matrix enc0 = model.encoders[0].weight;
    train.reset();
    train_epoch_mlp(model, train, opt, false);  // decoder frozen
    CHECK(model.decoder.weight == decoder_w);
    CHECK(model.decoder.bias == decoder_b);
    CHECK(!(model.encoders[0].weight == enc0));
}

TEST_CASE("CE embeddings change the forecast and receive gradients") {
    const auto data = make_data(3, 600, 71);
    std::mt19937_64 rng(22);
    auto model = MlpModel::make(MlpStrategy::CE, 3, 24, 6, 16, 4, rng);
    REQUIRE(model.embeddings.rows() == 3);
    REQUIRE(model.embeddings.cols() == 4);
    REQUIRE(model.decoder.in_dim() == 16 + 4);

    WindowStream stream(data.dataset, {0, 600}, 24, 6, 8);
    const auto batch = stream.next();
    const auto base = forward_mlp(model, *batch);
    model.embeddings(1, 0) += 0.5;
    const auto bumped = forward_mlp(model, *batch);
    // only channel 1's forecast moves
    CHECK(bumped[0].row(0)[0] == base[0].row(0)[0]);
    CHECK(bumped[0].row(1)[0] != base[0].row(1)[0]);
    CHECK(bumped[0].row(2)[0] == base[0].row(2)[0]);

    const Matrix emb_before = model.embeddings;
    MlpAdam opt(model, AdamConfig{});
    WindowStream train(data.dataset, {0, 600}, 24, 6, 32, 4);
    train_epoch_mlp(model, train, opt, true);
    CHECK(!(model.embeddings == emb_before));
}

TEST_CASE("mlp training reduces the loss") {
    const auto data = make_data(4, 1200, 83, 0.05);
    for (auto strategy : {MlpStrategy::CI, MlpStrategy::CE}) {
        std::mt19937_64 rng(25);
        auto model = MlpModel::make(strategy, 4, 48, 12, 64, strategy == MlpStrategy::CE ? 8 : 0,
                                    rng);
        MlpAdam opt(model, AdamConfig{.lr = 5e-4});
        WindowStream train(data.dataset, {0, 1000}, 48, 12, 64, 6);
        double first = 0.0, last = 0.0;
        for (int epoch = 0; epoch < 3; ++epoch) {
            train.reset();
            last = train_epoch_mlp(model, train, opt, true);
            if (epoch == 0) first = last;
        }
        CHECK(last < first);
    }
}

TEST_CASE("cr schedule replicates after pretraining and rearranges on schedule") {
    const auto data = make_data(4, 1500, 41, 0.05);
    std::mt19937_64 rng(30);
    auto model = MlpModel::make(MlpStrategy::CR, 4, 48, 12, 32, 0, rng);
    WindowStream train(data.dataset, {0, 1200}, 48, 12, 64, 8);
    WindowStream val(data.dataset, {1200, 1400}, 48, 12, 64);

    const auto result = cr_schedule(model, train, val, 3, 6, {4, 5}, AdamConfig{.lr = 5e-4},
                                    false, 2);
    CHECK(result.train_losses.size() == 6);
    CHECK(model.replicated());
    REQUIRE(result.history.size() >= 3);  // replication event + 2 rearrangements
    CHECK(result.history[0].epoch == 3);  // identity mapping at replication
    CHECK(result.history[0].mapping.assignment == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(result.history[1].epoch == 4);
    CHECK(result.history[2].epoch == 5);
    CHECK(model.mapping.assignment == result.history.back().mapping.assignment);
}

TEST_CASE("stream_mse agrees with an explicit evaluation loop") {
    const auto data = make_data(2, 300, 3);
    std::mt19937_64 rng(2);
    const auto bank = LinearBank::make(LinearStrategy::CI, 2, 16, 4, rng);
    WindowStream a(data.dataset, {0, 300}, 16, 4, 32);
    const double got = stream_mse(bank, a);

    WindowStream b(data.dataset, {0, 300}, 16, 4, 32);
    double acc = 0.0;
    std::size_t count = 0;
    while (auto batch = b.next()) {
        const auto preds = forward_linear(bank, *batch);
        for (std::size_t k = 0; k < batch->size(); ++k) {
            for (std::size_t i = 0; i < preds[k].size(); ++i) {
                const double diff = preds[k].data()[i] - batch->targets[k].data()[i];
                acc += diff * diff;
                ++count;
            }
        }
    }
    CHECK(got == doctest::Approx(acc / double(count)).epsilon(1e-12));
}
