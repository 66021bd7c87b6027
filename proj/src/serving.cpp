#include "coldrec/serving.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "coldrec/binary_io.hpp"
#include "coldrec/evaluation.hpp"

namespace coldrec {

using json = nlohmann::json;

namespace {

/// Unknown user or item id; served as 404.
class UnknownId : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

void write_matrix(std::ostream& out, const Matrix& m) {
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_pod<double>(out, m(i, j));
}

std::vector<Recommendation> rank_all(const ServingIndex& index, const Vector& user, std::vector<Index> excluded,
                                     std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    const auto n = static_cast<std::size_t>(index.item_vecs.rows());
    std::vector<double> scores(n);
    for (std::size_t v = 0; v < n; ++v) scores[v] = relevance(user, index.item_vecs.row(static_cast<Eigen::Index>(v)).transpose());
    std::vector<Index> all(n);
    std::iota(all.begin(), all.end(), Index{0});
    std::sort(excluded.begin(), excluded.end());
    std::vector<Recommendation> out;
    for (Index v : top_k(scores, all, excluded, k)) out.push_back({v, index.item_ids[v], index.titles[v], scores[v]});
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void ServingIndex::serialize(std::ostream& out) const {
    io::write_magic(out, "IDX1");
    io::write_string(out, model_hash);
    write_matrix(out, user_vecs);
    write_matrix(out, item_vecs);
    write_matrix(out, item_content.vectors);
    io::write_pod<std::uint64_t>(out, user_ids.size());
    for (const auto& id : user_ids) io::write_string(out, id);
    io::write_pod<std::uint64_t>(out, item_ids.size());
    for (std::size_t v = 0; v < item_ids.size(); ++v) {
        io::write_string(out, item_ids[v]);
        io::write_string(out, titles[v]);
    }
    for (const auto& pos : user_positives) {
        io::write_pod<std::uint64_t>(out, pos.size());
        for (Index v : pos) io::write_pod<std::uint32_t>(out, v);
    }
}

std::string ServingIndex::hash() const {
    std::ostringstream ss;
    serialize(ss);
    return io::hex64(io::fnv1a(ss.str()));
}

ServingIndex build_index(const EncoderParams& params, const ModelInputs& inputs, const Bundle& bundle,
                         const std::string& model_hash) {
    const auto& a = params.arch;
    if (a.pref_dim != static_cast<std::size_t>(inputs.U().cols()) ||
        a.user_content_dim != static_cast<std::size_t>(inputs.user_content.cols()) ||
        a.item_content_dim != static_cast<std::size_t>(inputs.item_content.cols())) {
        throw std::invalid_argument("checkpoint architecture does not match the factors/content inputs");
    }
    ServingIndex idx;
    idx.params = params;
    idx.model_hash = model_hash;
    idx.user_ids = bundle.data.user_ids;
    idx.user_index = bundle.data.user_index;
    idx.item_index = bundle.data.item_index;
    for (const auto& item : bundle.data.items) {
        idx.item_ids.push_back(item.id);
        idx.titles.push_back(item.title);
    }
    idx.item_content.vectors = inputs.item_content;
    idx.item_content.ids = idx.item_ids;

    const auto n_items = static_cast<Eigen::Index>(idx.item_ids.size());
    Matrix item_pref = Matrix::Zero(n_items, inputs.V().cols());
    for (Index v : bundle.split.train) item_pref.row(v) = inputs.V().row(v);
    idx.item_vecs = encode_items(params, item_pref, inputs.item_content, graph_embeddings(params, inputs.graph_context()));
    idx.user_vecs = encode_users(params, inputs.U(), inputs.user_content);

    idx.user_positives.resize(idx.user_ids.size());
    for (Index u = 0; u < idx.user_ids.size(); ++u)
        for (const auto& r : bundle.train_prefs.user_row(u)) idx.user_positives[u].push_back(r.item);
    return idx;
}

GuestMode parse_guest_mode(const std::string& name) {
    if (name == "encode") return GuestMode::encode;
    if (name == "approximate") return GuestMode::approximate;
    throw std::invalid_argument("unknown mode '" + name + "' (expected encode or approximate)");
}

std::vector<Recommendation> recommend_guest(const ServingIndex& index, const std::vector<std::string>& basket,
                                            std::size_t k, GuestMode mode) {
    if (basket.empty()) throw std::invalid_argument("empty basket");
    std::vector<Index> items;
    for (const auto& id : basket) {
        auto it = index.item_index.find(id);
        if (it == index.item_index.end()) throw UnknownId("unknown item id '" + id + "'");
        items.push_back(it->second);
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());

    Vector user;
    if (mode == GuestMode::encode) {
        user = user_encode(index.params, std::nullopt, basket_embed(items, index.item_content));
    } else {
        user = Vector::Zero(index.item_vecs.cols());
        for (Index v : items) user += index.item_vecs.row(v).transpose();
        user /= static_cast<double>(items.size());
    }
    return rank_all(index, user, items, k);
}

std::vector<Recommendation> recommend_user(const ServingIndex& index, const std::string& user_id, std::size_t k) {
    auto it = index.user_index.find(user_id);
    if (it == index.user_index.end()) throw UnknownId("unknown user id '" + user_id + "'");
    return rank_all(index, index.user_vecs.row(it->second).transpose(), index.user_positives[it->second], k);
}

std::vector<ItemHit> search_items(const ServingIndex& index, const std::string& query, std::size_t limit) {
    const std::string q = lower(query);
    std::vector<ItemHit> hits;
    for (std::size_t v = 0; v < index.item_ids.size() && hits.size() < limit; ++v) {
        if (lower(index.titles[v]).find(q) != std::string::npos) hits.push_back({index.item_ids[v], index.titles[v]});
    }
    return hits;
}

json recommendations_json(const std::vector<Recommendation>& recs) {
    json items = json::array();
    for (const auto& r : recs) items.push_back({{"id", r.id}, {"title", r.title}, {"score", r.score}});
    return {{"items", items}};
}

// ---------------------------------------------------------------------------

struct RecommendationServer::Impl {
    std::shared_ptr<const ServingIndex> index;
    httplib::Server server;
    std::thread thread;
};

namespace {

constexpr const char* kJson = "application/json; charset=utf-8";

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const UnknownId& e) {
        reply(res, 404, {{"error", e.what()}});
    } catch (const json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    } catch (const std::invalid_argument& e) {
        reply(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
    }
}

std::size_t parse_k(const std::string& text) {
    std::size_t used = 0;
    long long k = 0;
    try {
        k = std::stoll(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("k must be an integer");
    }
    if (used != text.size()) throw std::invalid_argument("k must be an integer");
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    return static_cast<std::size_t>(k);
}

}  // namespace

RecommendationServer::RecommendationServer(std::shared_ptr<const ServingIndex> index) : impl_(std::make_unique<Impl>()) {
    std::atomic_store(&impl_->index, std::move(index));
    auto& srv = impl_->server;
    Impl* self = impl_.get();

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

    srv.Get("/items", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto idx = std::atomic_load(&self->index);
            json out = json::array();
            for (const auto& hit : search_items(*idx, req.get_param_value("q"))) {
                out.push_back({{"id", hit.id}, {"title", hit.title}});
            }
            reply(res, 200, out);
        });
    });

    srv.Post("/recommend", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            if (!body.is_object() || !body.contains("basket") || !body["basket"].is_array()) {
                throw std::invalid_argument("request needs a \"basket\" array of item ids");
            }
            const auto basket = body["basket"].get<std::vector<std::string>>();
            std::size_t k = 10;
            if (body.contains("k")) {
                if (!body["k"].is_number_integer() || body["k"].get<long long>() < 1) {
                    throw std::invalid_argument("k must be a positive integer");
                }
                k = body["k"].get<std::size_t>();
            }
            const auto mode = parse_guest_mode(body.value("mode", std::string("encode")));
            const auto idx = std::atomic_load(&self->index);
            reply(res, 200, recommendations_json(recommend_guest(*idx, basket, k, mode)));
        });
    });

    srv.Get(R"(/users/([^/]+)/recommend)", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::size_t k = req.has_param("k") ? parse_k(req.get_param_value("k")) : 10;
            const auto idx = std::atomic_load(&self->index);
            reply(res, 200, recommendations_json(recommend_user(*idx, req.matches[1].str(), k)));
        });
    });

    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) res.set_content(json{{"error", "not found"}}.dump(), kJson);
    });
}

RecommendationServer::~RecommendationServer() { stop(); }

void RecommendationServer::swap_index(std::shared_ptr<const ServingIndex> index) {
    std::atomic_store(&impl_->index, std::move(index));
}

std::shared_ptr<const ServingIndex> RecommendationServer::index() const { return std::atomic_load(&impl_->index); }

int RecommendationServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void RecommendationServer::run(const std::string& host, int port) {
    if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    }
    spdlog::info("serving on http://{}:{}", host, port);
    impl_->server.listen_after_bind();
}

void RecommendationServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    const std::string host = colon == std::string::npos ? "127.0.0.1" : address.substr(0, colon);
    const std::string port = colon == std::string::npos ? address : address.substr(colon + 1);
    try {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument(port);
        return {host.empty() ? "127.0.0.1" : host, p};
    } catch (const std::exception&) {
        throw std::invalid_argument("bad bind address '" + address + "' (expected HOST:PORT)");
    }
}

}  // namespace coldrec
