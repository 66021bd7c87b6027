#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "coldrec/bundle.hpp"
#include "coldrec/content.hpp"
#include "coldrec/evaluation.hpp"
#include "coldrec/model.hpp"
#include "coldrec/training.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

/// Text features for graph edges: an encoder fitted on training-item documents.
struct EdgeFeatureConfig {
    DocumentField field = DocumentField::both;
    std::size_t vocab = 8000;
    std::size_t components = 300;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static EdgeFeatureConfig from_json(const nlohmann::json& j);
};

std::string to_string(DocumentField field);

Matrix bundle_edge_features(const Bundle& bundle, const EdgeFeatureConfig& cfg);

/// WMF on the bundle's training fold; the sidecar records the config, the loss
/// per sweep and the standardization statistics.
LatentFactors run_wmf(const Bundle& bundle, const WmfConfig& cfg, const std::filesystem::path& out);

struct TrainJob {
    std::filesystem::path data;
    std::filesystem::path factors;
    std::filesystem::path content;
    TrainConfig cfg;
    Architecture arch;  // input widths are filled from the data
    EdgeFeatureConfig edges;
    std::size_t val_k = 100;
    bool validate = true;
    std::filesystem::path log;
};

/// Loads inputs, trains, and writes the checkpoint to `out`.
TrainResult run_training(const TrainJob& job, const std::filesystem::path& out);

/// A checkpoint together with the data it was trained on.
struct ModelContext {
    Bundle bundle;
    LatentFactors raw;
    ContentMatrix content;
    Checkpoint ckpt;
    ModelInputs inputs;
    BaselineMode baseline = BaselineMode::deepnaninet;
    std::string model_hash;
};

/// Factor and content paths default to the ones recorded in the checkpoint.
ModelContext load_model_context(const std::filesystem::path& ckpt, const std::filesystem::path& data,
                                const std::optional<std::filesystem::path>& factors = std::nullopt,
                                const std::optional<std::filesystem::path>& content = std::nullopt);

enum class ScorerKind { model, wmf, popularity, random };
ScorerKind parse_scorer_kind(const std::string& name);
std::string to_string(ScorerKind kind);

struct EvalOptions {
    ItemMode scenario = ItemMode::cold;
    double user_mix = 0.0;
    std::size_t k = 100;
    std::uint64_t seed = 1;
    ScorerKind scorer = ScorerKind::model;
    bool guest_approximation = false;
};

Report evaluate_context(const ModelContext& ctx, const EvalOptions& opts);

}  // namespace coldrec
