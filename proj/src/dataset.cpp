#include "coldrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace coldrec {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// PreferenceMatrix

PreferenceMatrix::PreferenceMatrix(std::size_t n_users, std::size_t n_items, std::vector<Rating> entries)
    : n_users_(n_users), n_items_(n_items), entries_(std::move(entries)) {
    for (const auto& r : entries_) {
        if (r.user >= n_users_ || r.item >= n_items_) {
            throw std::invalid_argument("rating index out of range: (" + std::to_string(r.user) + ", " +
                                        std::to_string(r.item) + ")");
        }
        if (!std::isfinite(r.value) || r.value <= 0.0 || r.value > 10.0) {
            throw std::invalid_argument("rating must be finite and in (0, 10], got " + std::to_string(r.value));
        }
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const Rating& a, const Rating& b) { return std::tie(a.user, a.item) < std::tie(b.user, b.item); });
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].user == entries_[i - 1].user && entries_[i].item == entries_[i - 1].item) {
            throw std::invalid_argument("duplicate rating for (" + std::to_string(entries_[i].user) + ", " +
                                        std::to_string(entries_[i].item) + ")");
        }
    }

    user_ptr_.assign(n_users_ + 1, 0);
    item_ptr_.assign(n_items_ + 1, 0);
    for (const auto& r : entries_) {
        ++user_ptr_[r.user + 1];
        ++item_ptr_[r.item + 1];
    }
    std::partial_sum(user_ptr_.begin(), user_ptr_.end(), user_ptr_.begin());
    std::partial_sum(item_ptr_.begin(), item_ptr_.end(), item_ptr_.begin());

    item_entries_.resize(entries_.size());
    std::vector<std::size_t> fill(item_ptr_.begin(), item_ptr_.end() - 1);
    for (std::size_t i = 0; i < entries_.size(); ++i) item_entries_[fill[entries_[i].item]++] = i;
}

std::span<const Rating> PreferenceMatrix::user_row(Index user) const {
    return std::span<const Rating>(entries_).subspan(user_ptr_[user], user_ptr_[user + 1] - user_ptr_[user]);
}

std::span<const std::size_t> PreferenceMatrix::item_column(Index item) const {
    return std::span<const std::size_t>(item_entries_).subspan(item_ptr_[item], item_ptr_[item + 1] - item_ptr_[item]);
}

double PreferenceMatrix::rating(Index user, Index item) const {
    auto row = user_row(user);
    auto it = std::lower_bound(row.begin(), row.end(), item, [](const Rating& r, Index v) { return r.item < v; });
    return (it != row.end() && it->item == item) ? it->value : 0.0;
}

// ---------------------------------------------------------------------------
// Splits and baskets

std::vector<std::uint8_t> ItemSplit::membership(std::size_t n_items) const {
    std::vector<std::uint8_t> m(n_items, 0);
    for (Index v : val) m.at(v) = 1;
    for (Index v : test) m.at(v) = 2;
    return m;
}

ItemSplit split_items(std::size_t n_items, std::array<double, 3> ratios, std::uint64_t seed) {
    double total = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        // Accept unnormalized ratios such as 8:1:1.
        for (double& r : ratios) r /= total;
    }
    if (n_items < ratios.size()) {
        throw std::invalid_argument("cannot split " + std::to_string(n_items) + " items into 3 parts");
    }

    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        double exact = ratios[i] * static_cast<double>(n_items);
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        remainder[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n_items; ++k, ++assigned) ++sizes[order[k % 3]];
    for (std::size_t i = 0; i < 3; ++i) {
        if (sizes[i] == 0) throw std::invalid_argument("split part " + std::to_string(i) + " would be empty");
    }

    std::vector<Index> perm(n_items);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    ItemSplit split;
    auto first = perm.begin();
    split.train.assign(first, first + sizes[0]);
    split.val.assign(first + sizes[0], first + sizes[0] + sizes[1]);
    split.test.assign(first + sizes[0] + sizes[1], perm.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

const ContentBasket* BasketSet::find(Index user) const {
    auto it = std::lower_bound(baskets.begin(), baskets.end(), user,
                               [](const ContentBasket& b, Index u) { return b.user < u; });
    return (it != baskets.end() && it->user == user) ? &*it : nullptr;
}

double BasketSet::mean_size() const {
    if (baskets.empty()) return 0.0;
    std::size_t total = 0;
    for (const auto& b : baskets) total += b.items.size();
    return static_cast<double>(total) / static_cast<double>(baskets.size());
}

BasketSet build_baskets(const PreferenceMatrix& prefs, std::span<const Index> visible_pool, double min_rating) {
    if (visible_pool.empty()) throw std::invalid_argument("basket visible pool is empty");
    std::vector<bool> visible(prefs.n_items(), false);
    for (Index v : visible_pool) visible.at(v) = true;

    BasketSet out;
    for (Index u = 0; u < prefs.n_users(); ++u) {
        ContentBasket basket{u, {}};
        for (const auto& r : prefs.user_row(u)) {
            if (visible[r.item] && r.value >= min_rating) basket.items.push_back(r.item);
        }
        if (basket.items.empty()) {
            out.flagged_users.push_back(u);
        } else {
            out.baskets.push_back(std::move(basket));
        }
    }
    if (!out.flagged_users.empty()) {
        spdlog::debug("{} users have no basket items at min_rating {}", out.flagged_users.size(), min_rating);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ItemGraph

ItemGraph::ItemGraph(std::size_t n_items, std::vector<GraphEdge> raw_edges) : n_items_(n_items) {
    for (auto& e : raw_edges) {
        if (e.src >= n_items || e.dst >= n_items) throw std::invalid_argument("graph edge index out of range");
        if (e.src == e.dst) throw std::invalid_argument("graph self-loop on node " + std::to_string(e.src));
        if (e.src > e.dst) std::swap(e.src, e.dst);
    }
    std::stable_sort(raw_edges.begin(), raw_edges.end(),
                     [](const GraphEdge& a, const GraphEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
    for (auto& e : raw_edges) {
        if (!edges_.empty() && edges_.back().src == e.src && edges_.back().dst == e.dst) {
            auto& kept = edges_.back();
            if (!e.text.empty()) kept.text = kept.text.empty() ? e.text : kept.text + " " + e.text;
            kept.num_recommenders += e.num_recommenders;
        } else {
            edges_.push_back(std::move(e));
        }
    }
    auto kept_end = std::remove_if(edges_.begin(), edges_.end(), [](const GraphEdge& e) { return e.num_recommenders < 2; });
    dropped_ = static_cast<std::size_t>(edges_.end() - kept_end);
    edges_.erase(kept_end, edges_.end());

    nbr_ptr_.assign(n_items_ + 1, 0);
    for (const auto& e : edges_) {
        ++nbr_ptr_[e.src + 1];
        ++nbr_ptr_[e.dst + 1];
    }
    std::partial_sum(nbr_ptr_.begin(), nbr_ptr_.end(), nbr_ptr_.begin());
    nbrs_.resize(nbr_ptr_.back());
    std::vector<std::size_t> fill(nbr_ptr_.begin(), nbr_ptr_.end() - 1);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        nbrs_[fill[edges_[k].src]++] = {edges_[k].dst, k};
        nbrs_[fill[edges_[k].dst]++] = {edges_[k].src, k};
    }
    for (std::size_t i = 0; i < n_items_; ++i) {
        std::sort(nbrs_.begin() + nbr_ptr_[i], nbrs_.begin() + nbr_ptr_[i + 1],
                  [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    }
}

std::span<const ItemGraph::Neighbor> ItemGraph::neighbors(Index node) const {
    return std::span<const Neighbor>(nbrs_).subspan(nbr_ptr_[node], nbr_ptr_[node + 1] - nbr_ptr_[node]);
}

// ---------------------------------------------------------------------------
// Dataset I/O

void Dataset::rebuild_index() {
    user_index.clear();
    item_index.clear();
    for (Index u = 0; u < user_ids.size(); ++u) user_index.emplace(user_ids[u], u);
    for (Index v = 0; v < items.size(); ++v) item_index.emplace(items[v].id, v);
}

Index Dataset::item_of(const std::string& id) const {
    auto it = item_index.find(id);
    if (it == item_index.end()) throw std::out_of_range("unknown item id '" + id + "'");
    return it->second;
}

Index Dataset::user_of(const std::string& id) const {
    auto it = user_index.find(id);
    if (it == user_index.end()) throw std::out_of_range("unknown user id '" + id + "'");
    return it->second;
}

namespace {

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<ItemRecord> read_items(const fs::path& path) {
    auto in = open_input(path);
    std::vector<ItemRecord> items;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ItemRecord rec;
        try {
            auto j = json::parse(line);
            rec.id = j.at("id").get<std::string>();
            rec.title = j.value("title", std::string());
            rec.synopsis = j.value("synopsis", std::string());
            rec.reviews_text = j.value("reviews_text", std::string());
            const auto& feats = j.at("numeric_features");
            if (!feats.is_array() || feats.size() != 6) throw std::runtime_error("numeric_features must hold 6 numbers");
            for (std::size_t k = 0; k < 6; ++k) rec.numeric_features[k] = feats[k].get<double>();
        } catch (const std::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        for (double f : rec.numeric_features) {
            if (!std::isfinite(f)) throw ParseError(path.string(), lineno, "non-finite numeric feature");
        }
        if (!seen.emplace(rec.id, lineno).second) {
            throw ParseError(path.string(), lineno, "duplicate item id '" + rec.id + "'");
        }
        items.push_back(std::move(rec));
    }
    return items;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

}  // namespace

Dataset load_dataset(const fs::path& interactions_path, const fs::path& items_path,
                     const std::optional<fs::path>& graph_path) {
    Dataset data;
    data.items = read_items(items_path);
    data.rebuild_index();

    auto in = open_input(interactions_path);
    std::unordered_map<std::uint64_t, std::size_t> pair_slot;
    std::vector<Rating> entries;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) {
            throw ParseError(interactions_path.string(), lineno, "expected 3 tab-separated fields");
        }
        double value = 0.0;
        auto rating_field = fields[2];
        auto res = std::from_chars(rating_field.data(), rating_field.data() + rating_field.size(), value);
        if (res.ec != std::errc() || res.ptr != rating_field.data() + rating_field.size() || !std::isfinite(value) ||
            value < 0.0 || value > 10.0) {
            throw ParseError(interactions_path.string(), lineno, "rating must be a number in [0, 10]");
        }
        std::string item_id(fields[1]);
        auto item_it = data.item_index.find(item_id);
        if (item_it == data.item_index.end()) {
            throw ParseError(interactions_path.string(), lineno, "unknown item id '" + item_id + "'");
        }
        if (value == 0.0) continue;  // missing marker

        std::string user_id(fields[0]);
        auto [user_it, inserted] = data.user_index.emplace(user_id, static_cast<Index>(data.user_ids.size()));
        if (inserted) data.user_ids.push_back(user_id);

        Rating r{user_it->second, item_it->second, value};
        std::uint64_t key = (static_cast<std::uint64_t>(r.user) << 32) | r.item;
        auto [slot, fresh] = pair_slot.emplace(key, entries.size());
        if (fresh) {
            entries.push_back(r);
        } else {
            entries[slot->second] = r;
            ++data.duplicate_interactions;
        }
    }
    if (data.duplicate_interactions > 0) {
        spdlog::warn("{}: {} repeated (user, item) interactions, kept the last", interactions_path.string(),
                     data.duplicate_interactions);
    }
    data.prefs = PreferenceMatrix(data.user_ids.size(), data.items.size(), std::move(entries));

    if (graph_path) {
        auto gin = open_input(*graph_path);
        std::vector<GraphEdge> raw;
        for (std::size_t lineno = 1; std::getline(gin, line); ++lineno) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            GraphEdge e;
            std::string src, dst;
            try {
                auto j = json::parse(line);
                src = j.at("src").get<std::string>();
                dst = j.at("dst").get<std::string>();
                e.text = j.value("text", std::string());
                e.num_recommenders = j.at("num_recommenders").get<std::uint32_t>();
            } catch (const std::exception& ex) {
                throw ParseError(graph_path->string(), lineno, ex.what());
            }
            auto s = data.item_index.find(src);
            auto d = data.item_index.find(dst);
            if (s == data.item_index.end()) throw ParseError(graph_path->string(), lineno, "unknown item id '" + src + "'");
            if (d == data.item_index.end()) throw ParseError(graph_path->string(), lineno, "unknown item id '" + dst + "'");
            if (s->second == d->second) throw ParseError(graph_path->string(), lineno, "self-loop on '" + src + "'");
            e.src = s->second;
            e.dst = d->second;
            raw.push_back(std::move(e));
        }
        data.graph.emplace(data.items.size(), std::move(raw));
        if (data.graph->dropped_edges() > 0) {
            spdlog::info("{}: dropped {} edges with a single recommender", graph_path->string(),
                         data.graph->dropped_edges());
        }
    }
    return data;
}

void write_interactions(const Dataset& data, const fs::path& path) {
    auto out = open_output(path);
    for (const auto& r : data.prefs.entries()) {
        out << data.user_ids[r.user] << '\t' << data.items[r.item].id << '\t' << format_double(r.value) << '\n';
    }
}

void write_items(const Dataset& data, const fs::path& path) {
    auto out = open_output(path);
    for (const auto& item : data.items) {
        json j;
        j["id"] = item.id;
        j["title"] = item.title;
        j["synopsis"] = item.synopsis;
        j["reviews_text"] = item.reviews_text;
        j["numeric_features"] = item.numeric_features;
        out << j.dump() << '\n';
    }
}

void write_edges(const Dataset& data, const fs::path& path) {
    auto out = open_output(path);
    if (!data.graph) return;
    for (const auto& e : data.graph->edges()) {
        json j;
        j["src"] = data.items[e.src].id;
        j["dst"] = data.items[e.dst].id;
        j["text"] = e.text;
        j["num_recommenders"] = e.num_recommenders;
        out << j.dump() << '\n';
    }
}

void write_dataset(const Dataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    write_interactions(data, dir / "interactions.tsv");
    write_items(data, dir / "items.jsonl");
    if (data.graph) write_edges(data, dir / "edges.jsonl");
}

void write_splits(const fs::path& path, const Dataset& data, const ItemSplit& split, std::uint64_t seed) {
    auto ids = [&](const std::vector<Index>& part) {
        json arr = json::array();
        for (Index v : part) arr.push_back(data.items.at(v).id);
        return arr;
    };
    json j;
    j["train"] = ids(split.train);
    j["val"] = ids(split.val);
    j["test"] = ids(split.test);
    j["seed"] = seed;
    auto out = open_output(path);
    out << j.dump() << '\n';
}

ItemSplit read_splits(const fs::path& path, const Dataset& data, std::uint64_t* seed) {
    auto in = open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    ItemSplit split;
    auto read_part = [&](const char* key, std::vector<Index>& part) {
        for (const auto& id : j.at(key)) part.push_back(data.item_of(id.get<std::string>()));
        std::sort(part.begin(), part.end());
    };
    read_part("train", split.train);
    read_part("val", split.val);
    read_part("test", split.test);
    if (seed) *seed = j.value("seed", std::uint64_t{0});

    std::vector<std::uint8_t> seen(data.items.size(), 0);
    for (const auto* part : {&split.train, &split.val, &split.test}) {
        for (Index v : *part) {
            if (seen[v]++) throw ParseError(path.string(), 0, "item '" + data.items[v].id + "' in more than one split");
        }
    }
    return split;
}

}  // namespace coldrec
