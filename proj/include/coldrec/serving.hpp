#pragma once

#include <atomic>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/bundle.hpp"
#include "coldrec/content.hpp"
#include "coldrec/model.hpp"

namespace coldrec {

/// Encoded users and items for a frozen model. Immutable once built.
struct ServingIndex {
    EncoderParams params;
    Matrix user_vecs;  // n_users x r, in-matrix encoding
    Matrix item_vecs;  // n_items x r; training items with V, others without
    ContentMatrix item_content;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<std::string> titles;
    std::unordered_map<std::string, Index> user_index;
    std::unordered_map<std::string, Index> item_index;
    std::vector<std::vector<Index>> user_positives;  // training interactions, ascending
    std::string model_hash;

    /// Deterministic binary image of the cached tensors, ids and hashes.
    void serialize(std::ostream& out) const;
    std::string hash() const;
};

ServingIndex build_index(const EncoderParams& params, const ModelInputs& inputs, const Bundle& bundle,
                         const std::string& model_hash = {});

struct Recommendation {
    Index item = 0;
    std::string id;
    std::string title;
    double score = 0.0;
};

enum class GuestMode { encode, approximate };
GuestMode parse_guest_mode(const std::string& name);

/// Top-k over all items by inner product, basket members excluded, ties by item index.
std::vector<Recommendation> recommend_guest(const ServingIndex& index, const std::vector<std::string>& basket,
                                            std::size_t k, GuestMode mode);
/// Top-k by the cached user vector, training positives excluded.
std::vector<Recommendation> recommend_user(const ServingIndex& index, const std::string& user_id, std::size_t k);

struct ItemHit {
    std::string id;
    std::string title;
};

/// Case-insensitive substring match over titles, in item order, at most `limit` hits.
std::vector<ItemHit> search_items(const ServingIndex& index, const std::string& query, std::size_t limit = 20);

nlohmann::json recommendations_json(const std::vector<Recommendation>& recs);

/// HTTP front end. Handlers read the current index through an atomic handle,
/// so swap_index never blocks queries.
class RecommendationServer {
public:
    explicit RecommendationServer(std::shared_ptr<const ServingIndex> index);
    ~RecommendationServer();
    RecommendationServer(const RecommendationServer&) = delete;
    RecommendationServer& operator=(const RecommendationServer&) = delete;

    void swap_index(std::shared_ptr<const ServingIndex> index);
    std::shared_ptr<const ServingIndex> index() const;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port; throws when the address cannot be bound.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace coldrec
