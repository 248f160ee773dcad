#ifndef FORECAST_STRATEGIES_HPP
#define FORECAST_STRATEGIES_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "forecast/core_math.hpp"
#include "forecast/dataset.hpp"
#include "forecast/error_matrix.hpp"

namespace forecast {

enum class LinearStrategy { CD, CI, CSC };
enum class MlpStrategy { CI, CE, CR };

/**
 * Assignment of channels to layers (or encoders). Entries are 0-based
 * internally; serialization uses 1-based indices.
 */
struct MappingVector {
    std::vector<std::size_t> assignment;
    int epoch_of_last_update = 0;

    static MappingVector identity(std::size_t d);
    static MappingVector all_to(std::size_t d, std::size_t layer);

    std::size_t size() const { return assignment.size(); }
    std::size_t live_count() const;  // distinct layer indices
    double rmp() const;              // live_count / d
    std::vector<std::size_t> live_layers() const;  // sorted distinct indices
};

/**
 * A set of per-channel affine maps from lookback to horizon. CD allocates
 * one shared layer, CI and CSC allocate one per channel; CSC mappings may
 * route several channels through the same layer, leaving the rest frozen.
 */
struct LinearBank {
    std::vector<AffineLayer> layers;
    LinearStrategy strategy = LinearStrategy::CI;
    MappingVector mapping;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t n_channels = 0;
    double revin_epsilon = 1e-8;

    static LinearBank make(LinearStrategy strategy, std::size_t d, std::size_t lookback,
                           std::size_t horizon, std::mt19937_64& rng, double revin_epsilon = 1e-8);

    const AffineLayer& layer_for_channel(std::size_t channel) const;
};

/**
 * 2-layer MLP with a Swish activation between encoder and decoder. CI and
 * CE use one shared encoder; CR replicates it per channel after
 * pretraining. CE concatenates a learned per-channel embedding row to the
 * hidden activation before the decoder.
 */
struct MlpModel {
    std::vector<AffineLayer> encoders;  // 1 (shared) or d (after CR replication)
    AffineLayer decoder;                // hidden (+ embed_dim under CE) -> horizon
    Matrix embeddings;                  // d x embed_dim, empty unless CE
    Matrix grad_embeddings;
    MappingVector mapping;
    MlpStrategy strategy = MlpStrategy::CI;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t hidden = 0;
    std::size_t embed_dim = 0;
    std::size_t n_channels = 0;
    double revin_epsilon = 1e-8;

    static MlpModel make(MlpStrategy strategy, std::size_t d, std::size_t lookback,
                         std::size_t horizon, std::size_t hidden, std::size_t embed_dim,
                         std::mt19937_64& rng, double revin_epsilon = 1e-8);

    bool replicated() const { return encoders.size() > 1; }

    // Clones the shared encoder d times and resets the mapping to identity.
    // Outputs are unchanged by construction.
    void replicate_encoder();
};

// ---- forward / training -------------------------------------------------

// Per-window forecasts in the data space (RevIN applied inside).
std::vector<Matrix> forward_linear(const LinearBank& bank, const WindowBatch& batch);
std::vector<Matrix> forward_mlp(const MlpModel& model, const WindowBatch& batch);

// Optimizer bundle for an MlpModel.
struct MlpAdam {
    std::vector<LayerAdam> encoder_states;
    LayerAdam decoder_state;
    AdamState embedding_state;

    MlpAdam() = default;
    MlpAdam(const MlpModel& model, AdamConfig cfg);

    // Mirrors MlpModel::replicate_encoder: the shared encoder's moment
    // buffers are cloned so the replicas continue from the same state.
    void replicate(std::size_t d);
};

// One pass over the training stream (which must be reset by the caller).
// Returns the epoch's mean squared error in data space. Only layers
// reachable through the mapping receive gradients or optimizer steps.
double train_epoch_linear(LinearBank& bank, WindowStream& train, std::vector<LayerAdam>& opt);

double train_epoch_mlp(MlpModel& model, WindowStream& train, MlpAdam& opt, bool train_decoder);

// ---- layer selection ----------------------------------------------------

// E[i][j] = mean validation MSE of layer i cross-applied to channel j,
// RevIN active, read-only. n_threads caps row-level parallelism; results
// are identical for any thread count.
ErrorMatrix compute_error_matrix(const LinearBank& bank, WindowStream& validation,
                                 std::size_t n_threads = 1);

// Same shape for the replicated-encoder model: M[i][j] = validation loss of
// encoder i plus the (frozen) decoder on channel j.
ErrorMatrix encoder_error_matrix(const MlpModel& model, WindowStream& validation,
                                 std::size_t n_threads = 1);

// Per-column argmin of the error matrix; the objective is separable per
// channel, so this is the exact minimizer over all d^d mappings. Ties break
// toward the smallest layer index.
MappingVector select_layers(const ErrorMatrix& errors);

// ---- schedules ----------------------------------------------------------

struct MappingEvent {
    int epoch = 0;
    MappingVector mapping;
};

struct ScheduleResult {
    std::vector<double> train_losses;  // one per epoch
    std::vector<double> val_losses;
    std::vector<double> epoch_seconds;  // training-pass wall clock per epoch
    std::vector<MappingEvent> history;  // one per selection/rearrangement event
};

/**
 * CSC: epoch 1 trains under the identity mapping (CI pretraining); after
 * each epoch listed in selection_epochs the error matrix is recomputed on
 * validation and the mapping replaced; remaining epochs train under the
 * final mapping.
 */
ScheduleResult csc_schedule(LinearBank& bank, WindowStream& train, WindowStream& validation,
                            int total_epochs, const std::vector<int>& selection_epochs,
                            AdamConfig adam, std::size_t n_threads = 1);

/**
 * CR: trains encoder+decoder jointly for pretrain_epochs, replicates the
 * encoder per channel (decoder frozen unless train_decoder_after_replication),
 * then trains the live encoders; after each epoch in rearrange_epochs the
 * mapping is reset to the per-column argmin of the encoder error matrix.
 */
ScheduleResult cr_schedule(MlpModel& model, WindowStream& train, WindowStream& validation,
                           int pretrain_epochs, int total_epochs,
                           const std::vector<int>& rearrange_epochs, AdamConfig adam,
                           bool train_decoder_after_replication = false,
                           std::size_t n_threads = 1);

// Plain fixed-mapping epoch loop shared by CD/CI (and MLP-CI/CE), recording
// losses per epoch. For MLP models the decoder always trains.
ScheduleResult plain_schedule(LinearBank& bank, WindowStream& train, WindowStream* validation,
                              int total_epochs, AdamConfig adam);
ScheduleResult plain_schedule(MlpModel& model, WindowStream& train, WindowStream* validation,
                              int total_epochs, AdamConfig adam);

// Mean MSE of the model over a stream (resets nothing; caller owns stream
// position). Used for per-epoch validation losses.
double stream_mse(const LinearBank& bank, WindowStream& stream);
double stream_mse(const MlpModel& model, WindowStream& stream);

} // namespace forecast

#endif // FORECAST_STRATEGIES_HPP
