#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "coldrec/dataset.hpp"

namespace coldrec {

struct SyntheticConfig {
    std::size_t n_users = 200;
    std::size_t n_items = 300;
    std::size_t n_clusters = 6;
    double noise = 0.0;  // fraction of interactions drawn outside the user's clusters
    std::uint64_t seed = 1;
    std::size_t min_interactions = 8;
    std::size_t max_interactions = 24;
    std::size_t theme_words = 30;
    std::size_t common_words = 200;
};

/// Generated corpus plus the cluster structure that produced it.
struct SyntheticData {
    Dataset data;
    std::vector<Index> item_cluster;
    std::vector<std::vector<Index>> user_clusters;
};

/// Clustered toy catalog: each item belongs to one cluster and its text is
/// drawn from that cluster's theme words; each user prefers one or two
/// clusters and rates their items 7-10, while noise interactions land on other
/// clusters with ratings 1-6. Graph edges only join items of the same cluster.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

inline SyntheticData generate_synthetic(std::size_t n_users, std::size_t n_items, std::size_t n_clusters, double noise,
                                        std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.n_users = n_users;
    cfg.n_items = n_items;
    cfg.n_clusters = n_clusters;
    cfg.noise = noise;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

/// labels.json: {"items": {id: cluster}, "users": {id: [clusters]}}.
void write_ground_truth(const SyntheticData& synth, const std::filesystem::path& path);

}  // namespace coldrec
