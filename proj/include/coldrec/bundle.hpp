#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/content.hpp"
#include "coldrec/dataset.hpp"
#include "coldrec/graph.hpp"
#include "coldrec/model.hpp"
#include "coldrec/wmf.hpp"

namespace coldrec {

/// Warm-start holdout. Each user's training-item interactions are shuffled and
/// dealt round-robin into `n_folds` folds; fold `fold` (1-based) is held out.
/// Users with fewer than two such interactions keep all of them.
struct FoldConfig {
    std::size_t n_folds = 5;
    std::size_t fold = 1;
    std::uint64_t seed = 1;
    double min_rating = 7.0;  // basket and relevance threshold

    void validate() const;
    nlohmann::json to_json() const;
    static FoldConfig from_json(const nlohmann::json& j);
};

/// A dataset with its item split and fold definition, plus everything derived
/// from them deterministically.
struct Bundle {
    Dataset data;
    ItemSplit split;
    std::uint64_t split_seed = 0;
    FoldConfig folds;

    std::vector<std::uint8_t> membership;  // 0 train, 1 val, 2 test
    PreferenceMatrix train_prefs;          // training-item interactions outside the held-out fold
    PreferenceMatrix warm_holdout;         // the held-out fold
    BasketSet baskets;                     // from train_prefs over train items

    /// Users with at least one interaction in train_prefs.
    std::vector<Index> factorized_users() const;
};

Bundle make_bundle(Dataset data, ItemSplit split, std::uint64_t split_seed, FoldConfig folds);

/// Writes interactions.tsv, items.jsonl, edges.jsonl (if any), splits.json and bundle.json.
void save_bundle(const Bundle& bundle, const std::filesystem::path& dir);
Bundle load_bundle(const std::filesystem::path& dir);

/// Document text of every item, in item order.
std::vector<std::string> item_documents(const Dataset& data, DocumentField field);

/// TF-IDF + SVD fitted on training-split documents only.
TextEncoder fit_bundle_text_encoder(const Bundle& bundle, DocumentField field, std::size_t vocab,
                                    std::size_t components, std::uint64_t seed);

/// Everything the encoders read, derived from a bundle, raw WMF factors and item content.
struct ModelInputs {
    StandardizedFactors factors;  // U, V standardized with factorized-row statistics
    Matrix user_content;          // basket mean per user, zero for flagged users
    Matrix item_content;          // n_items x d_c
    Matrix user_transform;        // standardized mean of raw V over the basket (or all training items)
    Matrix item_transform;        // standardized mean of raw U over the item's training users
    std::optional<ItemGraph> graph;
    GraphAdjacency adjacency;
    Matrix edge_features;  // one row per graph edge, GINE only

    const Matrix& U() const { return factors.factors.U; }
    const Matrix& V() const { return factors.factors.V; }
    GraphContext graph_context() const;
};

ModelInputs build_model_inputs(const Bundle& bundle, const LatentFactors& raw, const ContentMatrix& content,
                               Matrix edge_features = {});

/// Architecture defaults sized to the inputs.
Architecture architecture_for(const ModelInputs& inputs);

}  // namespace coldrec
