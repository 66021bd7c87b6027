#include "coldrec/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

namespace coldrec {

using json = nlohmann::json;

void FoldConfig::validate() const {
    if (n_folds < 2) throw std::invalid_argument("n_folds must be at least 2");
    if (fold < 1 || fold > n_folds) throw std::invalid_argument("fold must lie in [1, n_folds]");
    if (!(min_rating > 0.0 && min_rating <= 10.0)) throw std::invalid_argument("min_rating must lie in (0, 10]");
}

json FoldConfig::to_json() const {
    return {{"n_folds", n_folds}, {"fold", fold}, {"seed", seed}, {"min_rating", min_rating}};
}

FoldConfig FoldConfig::from_json(const json& j) {
    FoldConfig f;
    f.n_folds = j.value("n_folds", f.n_folds);
    f.fold = j.value("fold", f.fold);
    f.seed = j.value("seed", f.seed);
    f.min_rating = j.value("min_rating", f.min_rating);
    f.validate();
    return f;
}

std::vector<Index> Bundle::factorized_users() const {
    std::vector<Index> users;
    for (Index u = 0; u < train_prefs.n_users(); ++u)
        if (!train_prefs.user_row(u).empty()) users.push_back(u);
    return users;
}

Bundle make_bundle(Dataset data, ItemSplit split, std::uint64_t split_seed, FoldConfig folds) {
    folds.validate();
    Bundle b;
    b.data = std::move(data);
    b.split = std::move(split);
    b.split_seed = split_seed;
    b.folds = folds;
    const auto& prefs = b.data.prefs;
    b.membership = b.split.membership(prefs.n_items());

    std::mt19937_64 rng(folds.seed);
    std::vector<Rating> kept, held;
    for (Index u = 0; u < prefs.n_users(); ++u) {
        std::vector<Rating> row;
        for (const auto& r : prefs.user_row(u))
            if (b.membership[r.item] == 0) row.push_back(r);
        if (row.size() < 2) {
            kept.insert(kept.end(), row.begin(), row.end());
            continue;
        }
        std::shuffle(row.begin(), row.end(), rng);
        for (std::size_t k = 0; k < row.size(); ++k) {
            (k % folds.n_folds == folds.fold - 1 ? held : kept).push_back(row[k]);
        }
    }
    b.train_prefs = PreferenceMatrix(prefs.n_users(), prefs.n_items(), std::move(kept));
    b.warm_holdout = PreferenceMatrix(prefs.n_users(), prefs.n_items(), std::move(held));
    b.baskets = build_baskets(b.train_prefs, b.split.train, folds.min_rating);
    if (!b.baskets.flagged_users.empty()) {
        spdlog::info("{} users have no training item rated >= {} and get no content basket",
                     b.baskets.flagged_users.size(), folds.min_rating);
    }
    return b;
}

void save_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_dataset(bundle.data, dir);
    write_splits(dir / "splits.json", bundle.data, bundle.split, bundle.split_seed);
    std::ofstream out(dir / "bundle.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "bundle.json").string());
    out << json{{"folds", bundle.folds.to_json()}}.dump(2) << "\n";
}

Bundle load_bundle(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("no bundle directory at " + dir.string());
    const auto edges = dir / "edges.jsonl";
    Dataset data = load_dataset(dir / "interactions.tsv", dir / "items.jsonl",
                                std::filesystem::exists(edges) ? std::optional(edges) : std::nullopt);
    std::uint64_t seed = 0;
    ItemSplit split = read_splits(dir / "splits.json", data, &seed);
    FoldConfig folds;
    if (std::ifstream in(dir / "bundle.json"); in) {
        try {
            folds = FoldConfig::from_json(json::parse(in).value("folds", json::object()));
        } catch (const json::exception& e) {
            throw ParseError((dir / "bundle.json").string(), 0, e.what());
        }
    }
    return make_bundle(std::move(data), std::move(split), seed, folds);
}

std::vector<std::string> item_documents(const Dataset& data, DocumentField field) {
    std::vector<std::string> docs;
    docs.reserve(data.items.size());
    for (const auto& item : data.items) docs.push_back(item_document(item, field));
    return docs;
}

TextEncoder fit_bundle_text_encoder(const Bundle& bundle, DocumentField field, std::size_t vocab,
                                    std::size_t components, std::uint64_t seed) {
    std::vector<std::string> docs;
    docs.reserve(bundle.split.train.size());
    for (Index v : bundle.split.train) docs.push_back(item_document(bundle.data.items[v], field));
    return fit_text_encoder(docs, vocab, components, seed);
}

GraphContext ModelInputs::graph_context() const {
    GraphContext ctx;
    ctx.graph = graph ? &*graph : nullptr;
    ctx.adjacency = graph ? &adjacency : nullptr;
    ctx.node_features = &item_content;
    ctx.edge_features = graph ? &edge_features : nullptr;
    return ctx;
}

ModelInputs build_model_inputs(const Bundle& bundle, const LatentFactors& raw, const ContentMatrix& content,
                               Matrix edge_features) {
    const auto n_users = bundle.data.prefs.n_users();
    const auto n_items = bundle.data.prefs.n_items();
    if (static_cast<std::size_t>(raw.U.rows()) != n_users || static_cast<std::size_t>(raw.V.rows()) != n_items) {
        throw std::invalid_argument("factor shapes (" + std::to_string(raw.U.rows()) + ", " +
                                    std::to_string(raw.V.rows()) + ") do not match the bundle (" +
                                    std::to_string(n_users) + " users, " + std::to_string(n_items) + " items)");
    }
    if (content.rows() != n_items) {
        throw std::invalid_argument("content matrix has " + std::to_string(content.rows()) + " rows for " +
                                    std::to_string(n_items) + " items");
    }
    ModelInputs in;
    const auto users = bundle.factorized_users();
    in.factors = standardize_factors(raw, users, bundle.split.train);
    in.item_content = content.vectors;

    const auto h = raw.U.cols();
    in.user_content = Matrix::Zero(static_cast<Eigen::Index>(n_users), content.vectors.cols());
    in.user_transform = Matrix::Zero(static_cast<Eigen::Index>(n_users), h);
    for (Index u = 0; u < n_users; ++u) {
        const auto* basket = bundle.baskets.find(u);
        std::vector<Index> items;
        if (basket) {
            in.user_content.row(u) = basket_embed(basket->items, content).transpose();
            items = basket->items;
        } else {
            for (const auto& r : bundle.train_prefs.user_row(u)) items.push_back(r.item);
        }
        if (!items.empty()) {
            in.user_transform.row(u) =
                apply_standardization(Vector(user_transform(items, raw.V)), in.factors.user_stats).transpose();
        }
    }
    in.item_transform = Matrix::Zero(static_cast<Eigen::Index>(n_items), h);
    const auto entries = bundle.train_prefs.entries();
    for (Index v = 0; v < n_items; ++v) {
        std::vector<Index> raters;
        for (auto pos : bundle.train_prefs.item_column(v)) raters.push_back(entries[pos].user);
        if (!raters.empty()) {
            in.item_transform.row(v) =
                apply_standardization(Vector(item_transform(raters, raw.U)), in.factors.item_stats).transpose();
        }
    }

    if (bundle.data.graph) {
        in.graph = bundle.data.graph;
        in.adjacency = normalize_adjacency(*in.graph);
        if (edge_features.size() > 0 &&
            static_cast<std::size_t>(edge_features.rows()) != in.graph->edges().size()) {
            throw std::invalid_argument("edge feature rows do not match the graph edges");
        }
        in.edge_features = std::move(edge_features);
    }
    return in;
}

Architecture architecture_for(const ModelInputs& inputs) {
    Architecture a;
    a.pref_dim = static_cast<std::size_t>(inputs.U().cols());
    a.user_content_dim = static_cast<std::size_t>(inputs.user_content.cols());
    a.item_content_dim = static_cast<std::size_t>(inputs.item_content.cols());
    a.edge_dim = static_cast<std::size_t>(inputs.edge_features.cols());
    return a;
}

}  // namespace coldrec
