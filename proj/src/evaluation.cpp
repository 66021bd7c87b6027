#include "coldrec/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "coldrec/binary_io.hpp"

namespace coldrec {

using json = nlohmann::json;

ItemMode parse_item_mode(const std::string& name) {
    if (name == "warm") return ItemMode::warm;
    if (name == "cold") return ItemMode::cold;
    throw std::invalid_argument("unknown scenario '" + name + "' (expected warm or cold)");
}

std::string to_string(ItemMode mode) { return mode == ItemMode::warm ? "warm" : "cold"; }

std::size_t Scenario::n_out_of_matrix() const {
    return static_cast<std::size_t>(std::count(user_modes.begin(), user_modes.end(), UserMode::out_of_matrix));
}

Scenario build_scenario(const Bundle& bundle, ItemMode kind, double user_mix, std::uint64_t seed,
                        bool validation_items) {
    if (!(user_mix >= 0.0 && user_mix <= 1.0)) throw std::invalid_argument("user_mix must lie in [0, 1]");
    Scenario sc;
    sc.item_mode = kind;
    sc.user_mix = user_mix;
    sc.seed = seed;
    sc.min_rating = bundle.folds.min_rating;
    sc.validation_items = validation_items;

    const PreferenceMatrix* source = &bundle.data.prefs;
    std::uint8_t part = validation_items ? 1 : 2;
    if (kind == ItemMode::warm) {
        sc.candidates = bundle.split.train;
        source = &bundle.warm_holdout;
        part = 0;
    } else {
        sc.candidates = validation_items ? bundle.split.val : bundle.split.test;
    }
    std::sort(sc.candidates.begin(), sc.candidates.end());

    std::vector<Index> eligible;
    std::vector<std::vector<Index>> relevant(source->n_users());
    for (Index u = 0; u < source->n_users(); ++u) {
        for (const auto& r : source->user_row(u))
            if (bundle.membership[r.item] == part && r.value >= sc.min_rating) relevant[u].push_back(r.item);
        if (relevant[u].empty()) {
            ++sc.n_skipped_empty;
        } else if (user_mix > 0.0 && !bundle.baskets.find(u)) {
            ++sc.n_skipped_no_basket;
        } else {
            eligible.push_back(u);
        }
    }

    std::vector<Index> order = eligible;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_out = static_cast<std::size_t>(std::llround(user_mix * static_cast<double>(order.size())));
    std::vector<char> out_of_matrix(source->n_users(), 0);
    for (std::size_t k = 0; k < n_out; ++k) out_of_matrix[order[k]] = 1;

    for (Index u : eligible) {
        sc.users.push_back(u);
        sc.user_modes.push_back(out_of_matrix[u] ? UserMode::out_of_matrix : UserMode::in_matrix);
        sc.relevant.push_back(std::move(relevant[u]));
        std::vector<Index> excl;
        if (kind == ItemMode::warm)
            for (const auto& r : bundle.train_prefs.user_row(u)) excl.push_back(r.item);
        sc.excluded.push_back(std::move(excl));
    }
    return sc;
}

std::vector<Index> top_k(std::span<const double> scores, std::span<const Index> candidates,
                         std::span<const Index> excluded, std::size_t k) {
    if (scores.size() != candidates.size()) throw std::invalid_argument("scores and candidates differ in length");
    std::vector<std::size_t> pos;
    pos.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (!std::binary_search(excluded.begin(), excluded.end(), candidates[i])) pos.push_back(i);
    auto before = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    };
    const std::size_t n = std::min(k, pos.size());
    std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n), pos.end(), before);
    std::vector<Index> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = candidates[pos[i]];
    return out;
}

double recall_at_k(const std::vector<std::vector<Index>>& ranked, const std::vector<std::vector<Index>>& relevant,
                   std::size_t k) {
    if (k == 0) throw std::invalid_argument("K must be positive");
    if (ranked.size() != relevant.size()) throw std::invalid_argument("rankings and relevant sets differ in count");
    double total = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        if (relevant[u].empty()) continue;
        std::size_t hits = 0;
        const std::size_t n = std::min(k, ranked[u].size());
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(relevant[u].begin(), relevant[u].end(), ranked[u][i]) != relevant[u].end()) ++hits;
        total += static_cast<double>(hits) / static_cast<double>(relevant[u].size());
        ++users;
    }
    if (users == 0) throw std::invalid_argument("no user has a relevant item");
    return total / static_cast<double>(users);
}

namespace {

template <typename Line>
double reciprocal_rank(const Line& line, Eigen::Index target) {
    const double t = line(target);
    std::size_t rank = 1;
    for (Eigen::Index j = 0; j < line.size(); ++j) {
        if (line(j) > t || (line(j) == t && j < target)) ++rank;
    }
    return 1.0 / static_cast<double>(rank);
}

}  // namespace

double mrr_items_per_user(const Matrix& scores, std::span<const Index> targets) {
    if (static_cast<Eigen::Index>(targets.size()) != scores.rows() || scores.rows() == 0) {
        throw std::invalid_argument("every user needs exactly one target");
    }
    double sum = 0.0;
    for (Eigen::Index u = 0; u < scores.rows(); ++u) {
        if (targets[u] >= scores.cols()) throw std::out_of_range("target item out of range");
        sum += reciprocal_rank(scores.row(u), targets[u]);
    }
    return sum / static_cast<double>(scores.rows());
}

double mrr_users_per_item(const Matrix& scores, std::span<const Index> targets) {
    if (static_cast<Eigen::Index>(targets.size()) != scores.cols() || scores.cols() == 0) {
        throw std::invalid_argument("every item needs exactly one target");
    }
    double sum = 0.0;
    for (Eigen::Index v = 0; v < scores.cols(); ++v) {
        if (targets[v] >= scores.rows()) throw std::out_of_range("target user out of range");
        sum += reciprocal_rank(scores.col(v), targets[v]);
    }
    return sum / static_cast<double>(scores.cols());
}

std::vector<Index> popularity_baseline(const PreferenceMatrix& prefs, std::span<const Index> candidates) {
    std::vector<Index> out(candidates.begin(), candidates.end());
    std::stable_sort(out.begin(), out.end(), [&](Index a, Index b) {
        const auto ca = prefs.item_count(a), cb = prefs.item_count(b);
        return ca != cb ? ca > cb : a < b;
    });
    return out;
}

std::vector<Index> random_baseline(std::span<const Index> candidates, std::uint64_t seed) {
    std::vector<Index> out(candidates.begin(), candidates.end());
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

namespace {

// Entry (i, j) is relevance(row i of users, row j of items), evaluated exactly
// as the serving path does so that scores agree bit for bit.
Matrix pairwise_relevance(const Matrix& users, const Matrix& items) {
    std::vector<Vector> item_rows(static_cast<std::size_t>(items.rows()));
    for (Eigen::Index j = 0; j < items.rows(); ++j) item_rows[j] = items.row(j).transpose();
    Matrix out(users.rows(), items.rows());
    for (Eigen::Index i = 0; i < users.rows(); ++i) {
        const Vector u = users.row(i).transpose();
        for (Eigen::Index j = 0; j < items.rows(); ++j) out(i, j) = relevance(u, item_rows[j]);
    }
    return out;
}

}  // namespace

Matrix model_scores(const EncoderParams& params, const ModelInputs& inputs, const Bundle& bundle,
                    const Scenario& scenario, const ModelScoring& opts) {
    const auto& a = params.arch;
    const bool dropoutnet = opts.baseline == BaselineMode::dropoutnet;
    const auto n_u = static_cast<Eigen::Index>(scenario.users.size());
    const Matrix graph_all = graph_embeddings(params, inputs.graph_context());
    const auto gw = static_cast<Eigen::Index>(a.graph_width());

    auto encode_item_rows = [&](std::span<const Index> items, bool warm) {
        const auto n = static_cast<Eigen::Index>(items.size());
        Matrix pref = Matrix::Zero(n, inputs.V().cols());
        Matrix content(n, inputs.item_content.cols());
        Matrix graph(n, gw);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (warm) pref.row(i) = inputs.V().row(items[i]);
            content.row(i) = inputs.item_content.row(items[i]);
            if (gw > 0) graph.row(i) = graph_all.row(items[i]);
        }
        return encode_items(params, pref, content, graph);
    };

    const Matrix vhat = encode_item_rows(scenario.candidates, scenario.item_mode == ItemMode::warm);

    Matrix pref = Matrix::Zero(n_u, inputs.U().cols());
    Matrix content = Matrix::Zero(n_u, inputs.user_content.cols());
    for (Eigen::Index i = 0; i < n_u; ++i) {
        const Index u = scenario.users[i];
        const bool in_matrix = scenario.user_modes[i] == UserMode::in_matrix;
        if (in_matrix) pref.row(i) = inputs.U().row(u);
        else if (dropoutnet) pref.row(i) = inputs.user_transform.row(u);
        if (!dropoutnet) content.row(i) = inputs.user_content.row(u);
    }
    Matrix uhat = encode_users(params, pref, content);

    if (opts.guest_approximation && scenario.n_out_of_matrix() > 0) {
        const Matrix train_hat = encode_item_rows(bundle.split.train, true);
        std::unordered_map<Index, Eigen::Index> row_of;
        for (std::size_t k = 0; k < bundle.split.train.size(); ++k)
            row_of.emplace(bundle.split.train[k], static_cast<Eigen::Index>(k));
        for (Eigen::Index i = 0; i < n_u; ++i) {
            if (scenario.user_modes[i] != UserMode::out_of_matrix) continue;
            const auto* basket = bundle.baskets.find(scenario.users[i]);
            if (!basket) throw std::invalid_argument("out-of-matrix user without a basket");
            Vector mean = Vector::Zero(uhat.cols());
            for (Index v : basket->items) mean += train_hat.row(row_of.at(v)).transpose();
            uhat.row(i) = (mean / static_cast<double>(basket->items.size())).transpose();
        }
    }
    return pairwise_relevance(uhat, vhat);
}

Matrix wmf_scores(const LatentFactors& raw, const Bundle& bundle, const Scenario& scenario) {
    const auto n_u = static_cast<Eigen::Index>(scenario.users.size());
    Matrix users(n_u, raw.U.cols());
    for (Eigen::Index i = 0; i < n_u; ++i) {
        const Index u = scenario.users[i];
        if (scenario.user_modes[i] == UserMode::in_matrix) {
            users.row(i) = raw.U.row(u);
        } else {
            const auto* basket = bundle.baskets.find(u);
            if (!basket) throw std::invalid_argument("out-of-matrix user without a basket");
            users.row(i) = user_transform(basket->items, raw.V).transpose();
        }
    }
    Matrix items = Matrix::Zero(static_cast<Eigen::Index>(scenario.candidates.size()), raw.V.cols());
    if (scenario.item_mode == ItemMode::warm)
        for (std::size_t k = 0; k < scenario.candidates.size(); ++k)
            items.row(static_cast<Eigen::Index>(k)) = raw.V.row(scenario.candidates[k]);
    return pairwise_relevance(users, items);
}

Matrix ranking_scores(std::span<const Index> ranking, const Scenario& scenario) {
    std::unordered_map<Index, std::size_t> position;
    for (std::size_t k = 0; k < ranking.size(); ++k) position.emplace(ranking[k], k);
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(scenario.candidates.size()));
    for (std::size_t k = 0; k < scenario.candidates.size(); ++k) {
        auto it = position.find(scenario.candidates[k]);
        row(static_cast<Eigen::Index>(k)) = it == position.end() ? -std::numeric_limits<double>::infinity()
                                                                  : -static_cast<double>(it->second);
    }
    return row.replicate(static_cast<Eigen::Index>(scenario.users.size()), 1);
}

double scenario_recall(const Matrix& scores, const Scenario& scenario, std::size_t k) {
    if (scores.rows() != static_cast<Eigen::Index>(scenario.users.size()) ||
        scores.cols() != static_cast<Eigen::Index>(scenario.candidates.size())) {
        throw std::invalid_argument("score matrix does not match the scenario");
    }
    std::vector<std::vector<Index>> ranked(scenario.users.size());
    std::vector<double> row(scenario.candidates.size());
    for (std::size_t i = 0; i < scenario.users.size(); ++i) {
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        ranked[i] = top_k(row, scenario.candidates, scenario.excluded[i], k);
    }
    return recall_at_k(ranked, scenario.relevant, k);
}

json Report::to_json() const {
    return {{"scenario", scenario},
            {"K", k},
            {"recall", recall},
            {"n_users_evaluated", n_users_evaluated},
            {"n_users_skipped", n_users_skipped},
            {"config_hash", config_hash},
            {"seed", seed},
            {"wall_time_s", wall_time_s},
            {"meta", meta}};
}

Report Report::from_json(const json& j) {
    Report r;
    r.scenario = j.at("scenario").get<std::string>();
    r.k = j.at("K").get<std::size_t>();
    r.recall = j.at("recall").get<double>();
    r.n_users_evaluated = j.at("n_users_evaluated").get<std::size_t>();
    r.n_users_skipped = j.at("n_users_skipped").get<std::size_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.meta = j.value("meta", json::object());
    return r;
}

bool Report::same_result(const Report& o) const {
    return scenario == o.scenario && k == o.k && recall == o.recall && n_users_evaluated == o.n_users_evaluated &&
           n_users_skipped == o.n_users_skipped && config_hash == o.config_hash && seed == o.seed && meta == o.meta;
}

Report evaluate(const Scorer& scorer, const Scenario& scenario, std::size_t k, const json& config) {
    const auto start = std::chrono::steady_clock::now();
    const Matrix scores = scorer(scenario);
    Report r;
    r.recall = scenario_recall(scores, scenario, k);
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.scenario = to_string(scenario.item_mode);
    r.k = k;
    r.n_users_evaluated = scenario.users.size();
    r.n_users_skipped = scenario.n_skipped();
    r.seed = scenario.seed;
    r.meta = {{"user_mix", scenario.user_mix},
              {"n_out_of_matrix", scenario.n_out_of_matrix()},
              {"n_candidates", scenario.candidates.size()},
              {"min_rating", scenario.min_rating},
              {"validation_items", scenario.validation_items},
              {"n_skipped_empty", scenario.n_skipped_empty},
              {"n_skipped_no_basket", scenario.n_skipped_no_basket}};
    json hashed = {{"config", config}, {"K", k}, {"meta", r.meta}, {"scenario", r.scenario}, {"seed", r.seed}};
    r.config_hash = io::hex64(io::fnv1a(hashed.dump()));
    return r;
}

void write_report(const Report& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << report.to_json().dump(2) << "\n";
}

Report read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return Report::from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

}  // namespace coldrec
