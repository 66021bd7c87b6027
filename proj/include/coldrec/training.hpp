#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/bundle.hpp"
#include "coldrec/model.hpp"

namespace coldrec {

enum class BaselineMode { deepnaninet, dropoutnet };

BaselineMode parse_baseline_mode(const std::string& name);
std::string to_string(BaselineMode mode);

struct TrainConfig {
    double learning_rate = 0.01;
    double lr_decay = 0.99;  // multiplicative, per epoch
    std::size_t batch_users = 100;
    std::size_t items_per_user = 8;
    double negative_ratio = 5.0;  // negatives per positive
    std::size_t epochs = 10;
    MaskConfig mask;
    BaselineMode baseline = BaselineMode::deepnaninet;
    double corrupt_rate = 0.0;  // fraction of U rows corrupted before training
    std::uint64_t seed = 1;
    bool deterministic = true;
    double divergence_factor = 1e3;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct Example {
    Index user = 0;
    Index item = 0;
    bool positive = true;
};

using Batch = std::vector<Example>;

/// Every training positive appears exactly once per epoch, grouped by user in
/// chunks of `items_per_user`. Each chunk gets negatives drawn uniformly from
/// `item_pool` items the user has not rated, so that the running count stays
/// within one of `negative_ratio` times the positives seen. Units are shuffled
/// and packed `batch_users` per batch; a trailing batch of fewer than
/// batch_users / 2 units is merged into the one before it.
std::vector<Batch> sample_epoch_batches(const PreferenceMatrix& prefs, std::span<const Index> item_pool,
                                        const TrainConfig& cfg, std::mt19937_64& rng);

/// Encoder inputs for one batch after masking and substitution.
struct PreparedBatch {
    std::vector<Index> users;
    std::vector<Index> items;
    Vector targets;  // U_u . V_v on the clean standardized factors
    Matrix user_pref;
    Matrix user_content;
    Matrix item_pref;
    Matrix item_content;  // without the graph slot
};

/// Training-time view of the inputs: U may be corrupted, targets never are.
struct TrainingData {
    const ModelInputs* inputs = nullptr;
    Matrix U_input;  // U fed to the user encoder
};

/// Each example's user side is masked with probability user_drop_p; otherwise,
/// in dropoutnet mode, it is replaced by the user transform with probability
/// user_transform_p. The item side follows the same rule with item_drop_p.
/// dropoutnet mode feeds zero user content.
PreparedBatch prepare_batch(const Batch& batch, const TrainingData& data, const TrainConfig& cfg,
                            std::mt19937_64& rng);

struct LossResult {
    double loss = 0.0;  // sum of squared score residuals
    Vector predictions;
    EncoderParams grad;  // gradient of loss * grad_scale
};

/// Forward and reverse pass through both towers and the graph encoder.
LossResult loss_and_gradients(EncoderParams& params, const PreparedBatch& batch, const GraphContext& graph,
                              double grad_scale = 1.0, bool update_running = false);

/// prepare_batch followed by loss_and_gradients (gradient of the summed loss).
LossResult batch_loss(const Batch& batch, const TrainingData& data, EncoderParams& params, const TrainConfig& cfg,
                      std::mt19937_64& rng);

/// Adds N(mean(U), std(U)) noise to a `rate` fraction of rows, chosen per row.
Matrix corrupt_factors(const Matrix& U, double rate, std::mt19937_64& rng, std::size_t* n_corrupted = nullptr);

struct TrainResult {
    EncoderParams params;
    std::vector<nlohmann::json> log;
    double initial_loss = 0.0;     // mean squared residual of the first batch before any update
    double final_epoch_loss = 0.0; // mean squared residual over the last epoch
    MaskConfig mask;  // with the gaussian moments measured on the inputs
    std::string rng_state;
};

using ValidationFn = std::function<double(const EncoderParams&)>;

/// Plain SGD on the mean per-example gradient. Log lines: {"epoch","step","loss","lr"} per
/// step and an epoch summary with "val_metric" when `validate` is given.
TrainResult train(const ModelInputs& inputs, const Bundle& bundle, const Architecture& arch, const TrainConfig& cfg,
                  const ValidationFn& validate = {}, const std::filesystem::path& log_path = {});

}  // namespace coldrec
