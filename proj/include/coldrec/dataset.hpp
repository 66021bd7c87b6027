#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coldrec/common.hpp"

namespace coldrec {

struct Rating {
    Index user = 0;
    Index item = 0;
    double value = 0.0;

    bool operator==(const Rating&) const = default;
};

/// Sparse user x item ratings. Entries are kept sorted by (user, item) with a
/// per-user row pointer and a per-item column index into the same storage.
/// A rating of 0 is the missing marker and is never stored.
class PreferenceMatrix {
public:
    PreferenceMatrix() = default;
    /// Throws std::invalid_argument on out-of-range indices, non-finite or
    /// zero ratings, ratings outside (0, 10], or duplicate (user, item) pairs.
    PreferenceMatrix(std::size_t n_users, std::size_t n_items, std::vector<Rating> entries);

    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    std::size_t nnz() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::span<const Rating> entries() const { return entries_; }
    std::span<const Rating> user_row(Index user) const;
    /// Positions into entries() of the ratings item `item` received, ascending by user.
    std::span<const std::size_t> item_column(Index item) const;
    std::size_t item_count(Index item) const { return item_ptr_[item + 1] - item_ptr_[item]; }

    /// Stored rating or 0 when absent.
    double rating(Index user, Index item) const;

    bool operator==(const PreferenceMatrix& other) const {
        return n_users_ == other.n_users_ && n_items_ == other.n_items_ && entries_ == other.entries_;
    }

private:
    std::size_t n_users_ = 0;
    std::size_t n_items_ = 0;
    std::vector<Rating> entries_;
    std::vector<std::size_t> user_ptr_{0};
    std::vector<std::size_t> item_ptr_{0};
    std::vector<std::size_t> item_entries_;
};

struct ItemSplit {
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;

    /// 0 = train, 1 = val, 2 = test for every item index.
    std::vector<std::uint8_t> membership(std::size_t n_items) const;
    bool operator==(const ItemSplit&) const = default;
};

/// Seeded random partition of [0, n_items) into train/val/test. Part sizes use
/// largest-remainder rounding so each is within 1 of its exact proportion.
ItemSplit split_items(std::size_t n_items, std::array<double, 3> ratios, std::uint64_t seed);

struct ContentBasket {
    Index user = 0;
    std::vector<Index> items;  // ascending, nonempty
};

struct BasketSet {
    std::vector<ContentBasket> baskets;  // ascending by user
    std::vector<Index> flagged_users;    // users with no qualifying interaction

    /// Basket of `user` or nullptr when the user is flagged.
    const ContentBasket* find(Index user) const;
    double mean_size() const;
};

/// One basket per user holding the items from `visible_pool` the user rated at
/// least `min_rating`.
BasketSet build_baskets(const PreferenceMatrix& prefs, std::span<const Index> visible_pool, double min_rating);

struct GraphEdge {
    Index src = 0;
    Index dst = 0;
    std::string text;
    std::uint32_t num_recommenders = 2;

    bool operator==(const GraphEdge&) const = default;
};

/// Undirected item-item graph. Edges are canonical (src < dst), sorted, and
/// unique; raw duplicates are merged by concatenating text and summing
/// recommender counts. Edges with fewer than two recommenders are dropped.
class ItemGraph {
public:
    struct Neighbor {
        Index node;
        std::size_t edge;
    };

    ItemGraph() = default;
    ItemGraph(std::size_t n_items, std::vector<GraphEdge> raw_edges);

    std::size_t n_items() const { return n_items_; }
    std::span<const GraphEdge> edges() const { return edges_; }
    std::span<const Neighbor> neighbors(Index node) const;
    std::size_t dropped_edges() const { return dropped_; }

    bool operator==(const ItemGraph& other) const {
        return n_items_ == other.n_items_ && edges_ == other.edges_;
    }

private:
    std::size_t n_items_ = 0;
    std::vector<GraphEdge> edges_;
    std::vector<std::size_t> nbr_ptr_{0};
    std::vector<Neighbor> nbrs_;
    std::size_t dropped_ = 0;
};

struct ItemRecord {
    std::string id;
    std::string title;
    std::string synopsis;
    std::string reviews_text;
    std::array<double, 6> numeric_features{};

    bool operator==(const ItemRecord&) const = default;
};

struct Dataset {
    std::vector<std::string> user_ids;
    std::vector<ItemRecord> items;
    PreferenceMatrix prefs;
    std::optional<ItemGraph> graph;
    std::size_t duplicate_interactions = 0;  // repeated (user, item) lines; the last one wins

    std::unordered_map<std::string, Index> user_index;
    std::unordered_map<std::string, Index> item_index;

    void rebuild_index();
    Index item_of(const std::string& id) const;
    Index user_of(const std::string& id) const;
};

/// Reads interactions.tsv, items.jsonl and optionally edges.jsonl. User indices
/// follow first appearance in the interactions file; item indices follow the
/// items file order.
Dataset load_dataset(const std::filesystem::path& interactions_path, const std::filesystem::path& items_path,
                     const std::optional<std::filesystem::path>& graph_path = std::nullopt);

void write_interactions(const Dataset& data, const std::filesystem::path& path);
void write_items(const Dataset& data, const std::filesystem::path& path);
void write_edges(const Dataset& data, const std::filesystem::path& path);

/// Writes interactions.tsv, items.jsonl and (when a graph is present) edges.jsonl into `dir`.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

void write_splits(const std::filesystem::path& path, const Dataset& data, const ItemSplit& split, std::uint64_t seed);
ItemSplit read_splits(const std::filesystem::path& path, const Dataset& data, std::uint64_t* seed = nullptr);

}  // namespace coldrec
