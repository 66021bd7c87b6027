#include "coldrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace coldrec {

namespace {

// Draws pronounceable pseudo-words so the tokenizer sees ordinary lowercase terms.
class WordFactory {
public:
    explicit WordFactory(std::mt19937_64& rng) : rng_(rng) {}

    std::string make() {
        static const char* onsets[] = {"b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                       "sh", "ch", "tr", "kr", "st"};
        static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
        while (true) {
            std::string w;
            int syllables = 2 + static_cast<int>(rng_() % 2);
            for (int s = 0; s < syllables; ++s) {
                w += onsets[rng_() % std::size(onsets)];
                w += vowels[rng_() % std::size(vowels)];
            }
            if (used_.insert(w).second) return w;
        }
    }

private:
    std::mt19937_64& rng_;
    std::unordered_set<std::string> used_;
};

std::string compose(std::mt19937_64& rng, std::size_t n_tokens, double p_theme, const std::vector<std::string>& theme,
                    const std::vector<std::string>& common) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::string text;
    for (std::size_t t = 0; t < n_tokens; ++t) {
        const auto& pool = coin(rng) < p_theme ? theme : common;
        if (!text.empty()) text += ' ';
        text += pool[rng() % pool.size()];
    }
    return text;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_clusters == 0 || cfg.n_clusters > cfg.n_items) {
        throw std::invalid_argument("n_clusters must be in [1, n_items]");
    }
    if (cfg.noise < 0.0 || cfg.noise > 1.0) throw std::invalid_argument("noise must be in [0, 1]");
    if (cfg.min_interactions == 0 || cfg.min_interactions > cfg.max_interactions) {
        throw std::invalid_argument("invalid interaction count range");
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    WordFactory words(rng);

    std::vector<std::string> common(cfg.common_words);
    for (auto& w : common) w = words.make();
    std::vector<std::vector<std::string>> themes(cfg.n_clusters, std::vector<std::string>(cfg.theme_words));
    for (auto& theme : themes)
        for (auto& w : theme) w = words.make();

    SyntheticData out;
    out.item_cluster.resize(cfg.n_items);
    for (std::size_t v = 0; v < cfg.n_items; ++v) out.item_cluster[v] = static_cast<Index>(v % cfg.n_clusters);
    std::shuffle(out.item_cluster.begin(), out.item_cluster.end(), rng);

    std::vector<std::vector<Index>> members(cfg.n_clusters);
    for (Index v = 0; v < cfg.n_items; ++v) members[out.item_cluster[v]].push_back(v);

    // Zipf-like popularity inside each cluster.
    std::vector<std::discrete_distribution<std::size_t>> pick(cfg.n_clusters);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        std::vector<double> w(members[c].size());
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = 1.0 / std::pow(1.0 + static_cast<double>(k), 0.7);
        std::shuffle(w.begin(), w.end(), rng);
        pick[c] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }

    auto& data = out.data;
    data.items.resize(cfg.n_items);
    for (Index v = 0; v < cfg.n_items; ++v) {
        auto& item = data.items[v];
        const auto& theme = themes[out.item_cluster[v]];
        char id[32];
        std::snprintf(id, sizeof(id), "i%05u", static_cast<unsigned>(v));
        item.id = id;
        std::string t1 = theme[rng() % theme.size()];
        std::string t2 = theme[rng() % theme.size()];
        t1[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t1[0])));
        t2[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t2[0])));
        item.title = t1 + " " + t2 + " " + std::to_string(v);
        item.synopsis = compose(rng, 40, 0.5, theme, common);
        item.reviews_text = compose(rng, 60, 0.3, theme, common);
        double avg = 5.0 + 4.0 * unit(rng);
        item.numeric_features = {avg, std::round(avg), std::floor(1.0 + 1000.0 * unit(rng)), static_cast<double>(v + 1),
                                 std::floor(100.0 + 1e5 * unit(rng)), std::floor(1e4 * unit(rng))};
    }

    std::vector<Rating> entries;
    out.user_clusters.resize(cfg.n_users);
    std::uniform_int_distribution<std::size_t> count_dist(cfg.min_interactions, cfg.max_interactions);
    std::uniform_int_distribution<int> liked(7, 10), disliked(1, 6);
    for (Index u = 0; u < cfg.n_users; ++u) {
        auto& clusters = out.user_clusters[u];
        clusters.push_back(static_cast<Index>(rng() % cfg.n_clusters));
        if (cfg.n_clusters > 1 && unit(rng) < 0.5) {
            Index second;
            do {
                second = static_cast<Index>(rng() % cfg.n_clusters);
            } while (second == clusters[0]);
            clusters.push_back(second);
        }
        std::sort(clusters.begin(), clusters.end());

        std::size_t preferred_size = 0;
        for (Index c : clusters) preferred_size += members[c].size();
        std::size_t target = std::min(count_dist(rng), cfg.n_items);
        std::set<Index> taken;
        std::size_t attempts = 0;
        while (taken.size() < target && attempts++ < 50 * target) {
            bool noisy = cfg.noise > 0.0 && clusters.size() < cfg.n_clusters && unit(rng) < cfg.noise;
            if (!noisy && taken.size() >= preferred_size) break;
            Index item;
            double value;
            if (noisy) {
                Index c;
                do {
                    c = static_cast<Index>(rng() % cfg.n_clusters);
                } while (std::binary_search(clusters.begin(), clusters.end(), c));
                item = members[c][rng() % members[c].size()];
                value = disliked(rng);
            } else {
                Index c = clusters[rng() % clusters.size()];
                item = members[c][pick[c](rng)];
                value = liked(rng);
            }
            if (taken.insert(item).second) entries.push_back({u, item, value});
        }
        char id[32];
        std::snprintf(id, sizeof(id), "u%05u", static_cast<unsigned>(u));
        data.user_ids.emplace_back(id);
    }
    data.prefs = PreferenceMatrix(cfg.n_users, cfg.n_items, std::move(entries));

    std::vector<GraphEdge> edges;
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        const auto& m = members[c];
        if (m.size() < 2) continue;
        for (Index v : m) {
            if (unit(rng) >= 0.6) continue;
            Index w;
            do {
                w = m[rng() % m.size()];
            } while (w == v);
            GraphEdge e;
            e.src = v;
            e.dst = w;
            e.num_recommenders = 2 + static_cast<std::uint32_t>(rng() % 5);
            e.text = compose(rng, 12, 0.7, themes[c], common);
            edges.push_back(std::move(e));
        }
    }
    data.graph.emplace(cfg.n_items, std::move(edges));
    data.rebuild_index();
    return out;
}

void write_ground_truth(const SyntheticData& synth, const std::filesystem::path& path) {
    nlohmann::json items = nlohmann::json::object(), users = nlohmann::json::object();
    for (Index v = 0; v < synth.item_cluster.size(); ++v) items[synth.data.items[v].id] = synth.item_cluster[v];
    for (Index u = 0; u < synth.user_clusters.size(); ++u) users[synth.data.user_ids[u]] = synth.user_clusters[u];
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json{{"items", items}, {"users", users}}.dump() << '\n';
}

}  // namespace coldrec
