#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/bundle.hpp"
#include "coldrec/model.hpp"
#include "coldrec/training.hpp"

namespace coldrec {

enum class ItemMode { warm, cold };
enum class UserMode { in_matrix, out_of_matrix };

ItemMode parse_item_mode(const std::string& name);
std::string to_string(ItemMode mode);

struct Scenario {
    ItemMode item_mode = ItemMode::cold;
    double user_mix = 0.0;  // fraction of evaluated users represented by their basket only
    std::uint64_t seed = 0;
    double min_rating = 7.0;
    bool validation_items = false;

    std::vector<Index> candidates;  // ascending
    std::vector<Index> users;       // ascending, each with a nonempty relevant set
    std::vector<UserMode> user_modes;
    std::vector<std::vector<Index>> relevant;  // ascending, subset of candidates
    std::vector<std::vector<Index>> excluded;  // ascending; training items in warm mode
    std::size_t n_skipped_empty = 0;      // no relevant item
    std::size_t n_skipped_no_basket = 0;  // needed a basket and had none

    std::size_t n_out_of_matrix() const;
    std::size_t n_skipped() const { return n_skipped_empty + n_skipped_no_basket; }
};

/// cold: candidates are test items (validation items when `validation_items`),
/// relevant = ratings >= min_rating on them. warm: candidates are training
/// items, relevant = held-out fold ratings >= min_rating, every training
/// interaction of the user is excluded. A seeded shuffle marks exactly
/// round(n * user_mix) users out-of-matrix; when user_mix > 0, users without
/// a basket are skipped.
Scenario build_scenario(const Bundle& bundle, ItemMode kind, double user_mix, std::uint64_t seed,
                        bool validation_items = false);

/// Candidate items ordered by descending score, ties by ascending item index,
/// skipping `excluded`; at most `k` entries. `scores` is aligned with `candidates`.
std::vector<Index> top_k(std::span<const double> scores, std::span<const Index> candidates,
                         std::span<const Index> excluded, std::size_t k);

/// Mean over users with a nonempty relevant set of |top-k ∩ relevant| / |relevant|.
double recall_at_k(const std::vector<std::vector<Index>>& ranked, const std::vector<std::vector<Index>>& relevant,
                   std::size_t k);

/// Rows are users, columns items; targets[u] is the column of user u's target.
/// Rank counts higher scores plus equal scores at lower index.
double mrr_items_per_user(const Matrix& scores, std::span<const Index> targets);
/// targets[v] is the row of item v's target user.
double mrr_users_per_item(const Matrix& scores, std::span<const Index> targets);

/// Candidates by descending training interaction count, ties by index.
std::vector<Index> popularity_baseline(const PreferenceMatrix& prefs, std::span<const Index> candidates);
/// Seeded shuffle of the candidates.
std::vector<Index> random_baseline(std::span<const Index> candidates, std::uint64_t seed);

/// Score matrices are scenario.users x scenario.candidates.
using Scorer = std::function<Matrix(const Scenario&)>;

struct ModelScoring {
    BaselineMode baseline = BaselineMode::deepnaninet;
    bool guest_approximation = false;  // out-of-matrix users: mean of the basket's encoded items
};

Matrix model_scores(const EncoderParams& params, const ModelInputs& inputs, const Bundle& bundle,
                    const Scenario& scenario, const ModelScoring& opts = {});
/// Raw factors: U_u . V_v, out-of-matrix users use the user transform of their basket.
Matrix wmf_scores(const LatentFactors& raw, const Bundle& bundle, const Scenario& scenario);
/// Same ranking for every user, scored by negative position.
Matrix ranking_scores(std::span<const Index> ranking, const Scenario& scenario);

struct Report {
    std::string scenario;  // "warm" or "cold"
    std::size_t k = 0;
    double recall = 0.0;
    std::size_t n_users_evaluated = 0;
    std::size_t n_users_skipped = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
    nlohmann::json meta = nlohmann::json::object();

    nlohmann::json to_json() const;
    static Report from_json(const nlohmann::json& j);
    /// Equality on every field except wall_time_s.
    bool same_result(const Report& other) const;
};

Report evaluate(const Scorer& scorer, const Scenario& scenario, std::size_t k, const nlohmann::json& config = {});
/// Recall@k of a precomputed score matrix, no report.
double scenario_recall(const Matrix& scores, const Scenario& scenario, std::size_t k);

void write_report(const Report& report, const std::filesystem::path& path);
Report read_report(const std::filesystem::path& path);

}  // namespace coldrec
