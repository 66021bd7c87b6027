#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "coldrec/bundle.hpp"
#include "coldrec/evaluation.hpp"
#include "coldrec/graph.hpp"
#include "coldrec/model.hpp"
#include "coldrec/synthetic.hpp"
#include "coldrec/training.hpp"
#include "coldrec/wmf.hpp"

namespace testing_support {

using namespace coldrec;
namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("coldrec_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
    return random_matrix(n, 1, rng, scale).col(0);
}

/// Synthetic bundle with WMF factors and TF-IDF/SVD content, ready for the encoders.
struct Pipeline {
    Bundle bundle;
    LatentFactors raw;
    ContentMatrix content;
    ModelInputs inputs;
};

struct PipelineConfig {
    SyntheticConfig synth;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    FoldConfig folds;
    WmfConfig wmf;
    std::size_t vocab = 2000;
    std::size_t components = 50;
    bool gine_edges = false;
};

inline Pipeline make_pipeline(const PipelineConfig& cfg) {
    Pipeline p;
    SyntheticData s = generate_synthetic(cfg.synth);
    ItemSplit split = split_items(s.data.items.size(), cfg.split, cfg.synth.seed);
    FoldConfig folds = cfg.folds;
    p.bundle = make_bundle(std::move(s.data), std::move(split), cfg.synth.seed, folds);
    p.raw = wmf_train(p.bundle.train_prefs, cfg.wmf);
    const TextEncoder enc =
        fit_bundle_text_encoder(p.bundle, DocumentField::both, cfg.vocab, cfg.components, cfg.synth.seed);
    p.content.vectors = enc.encode(item_documents(p.bundle.data, DocumentField::both));
    for (const auto& it : p.bundle.data.items) p.content.ids.push_back(it.id);
    Matrix edges;
    if (cfg.gine_edges && p.bundle.data.graph) edges = edge_text_features(*p.bundle.data.graph, enc.tfidf, enc.svd);
    p.inputs = build_model_inputs(p.bundle, p.raw, p.content, std::move(edges));
    return p;
}

// ---------------------------------------------------------------------------
// Gradient oracle

struct GradCheckResult {
    double worst = 0.0;    // max of `overall` and every per-tensor error
    double overall = 0.0;  // relative error of the concatenated gradient
    std::string worst_tensor;
    std::size_t n_params = 0;
};

/// Relative error |a - n| / max(|a|, |n|) between the reverse-mode gradient and
/// central differences of the summed squared-residual loss, with train-mode
/// batch norm and no running-stat update. Measured on the whole gradient and
/// per tensor; a tensor's denominator is floored at 1e-3 of the whole-gradient
/// norm, since exactly-zero gradients (a bias shift cancelled by batch norm)
/// leave only differencing noise.
inline GradCheckResult finite_difference_check(EncoderParams& params, const PreparedBatch& batch,
                                               const GraphContext& graph, double h = 1e-6) {
    GradCheckResult out;
    const LossResult analytic = loss_and_gradients(params, batch, graph);
    auto tensors = params.trainable();
    const auto grads = analytic.grad.trainable();
    std::vector<Vector> numeric(tensors.size());
    double a_sq = 0.0, n_sq = 0.0, d_sq = 0.0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& ref = tensors[t];
        numeric[t].resize(ref.size());
        for (Eigen::Index i = 0; i < ref.size(); ++i) {
            const double saved = ref.data[i];
            ref.data[i] = saved + h;
            const double up = loss_and_gradients(params, batch, graph).loss;
            ref.data[i] = saved - h;
            const double down = loss_and_gradients(params, batch, graph).loss;
            ref.data[i] = saved;
            numeric[t][i] = (up - down) / (2.0 * h);
        }
        const Eigen::Map<const Vector> a(grads[t].data, ref.size());
        a_sq += a.squaredNorm();
        n_sq += numeric[t].squaredNorm();
        d_sq += (a - numeric[t]).squaredNorm();
        out.n_params += static_cast<std::size_t>(ref.size());
    }
    const double total = std::max(std::sqrt(a_sq), std::sqrt(n_sq));
    out.overall = std::sqrt(d_sq) / std::max(total, 1e-12);
    out.worst = out.overall;
    out.worst_tensor = "(all)";
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Eigen::Map<const Vector> a(grads[t].data, tensors[t].size());
        const double scale = std::max({a.norm(), numeric[t].norm(), 1e-3 * total, 1e-12});
        const double err = (a - numeric[t]).norm() / scale;
        if (err > out.worst) {
            out.worst = err;
            out.worst_tensor = tensors[t].name;
        }
    }
    return out;
}

/// Random small graph-enabled configuration: pref_dim 4, every width in [2, 6].
struct GradCase {
    EncoderParams params;
    PreparedBatch batch;
    ItemGraph graph;
    GraphAdjacency adjacency;
    Matrix node_features;
    Matrix edge_features;
    GraphContext context() const { return {&graph, &adjacency, &node_features, &edge_features}; }
};

inline GradCase random_grad_case(std::uint64_t seed, GraphKind kind, bool batch_norm) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> width(2, 6);
    GradCase c;
    Architecture a;
    a.pref_dim = 4;
    a.user_content_dim = width(rng) % 4 + 2;
    a.item_content_dim = 3;
    a.pref_width = width(rng);
    a.content_width = width(rng);
    a.output_dim = width(rng);
    a.batch_norm = batch_norm;
    a.graph = kind;
    a.graph_hidden = width(rng);
    a.graph_out = width(rng);
    a.gine_layers = 1 + seed % 2;
    a.edge_dim = 2;
    c.params = EncoderParams::init(a, seed);
    // Non-trivial batch-norm affine parameters and biases.
    for (auto& t : c.params.trainable()) {
        if (t.name.find("bias") != std::string::npos || t.name.find("beta") != std::string::npos ||
            t.name.find("gamma") != std::string::npos) {
            t.map() += random_matrix(t.rows, t.cols, rng, 0.3);
        }
    }

    const std::size_t n_items = 6;
    std::vector<GraphEdge> edges;
    std::bernoulli_distribution coin(0.45);
    for (Index i = 0; i < n_items; ++i)
        for (Index j = i + 1; j < n_items; ++j)
            if (coin(rng)) edges.push_back({i, j, "", 2});
    c.graph = ItemGraph(n_items, edges);
    c.adjacency = normalize_adjacency(c.graph);
    c.node_features = random_matrix(n_items, static_cast<Eigen::Index>(a.item_content_dim), rng);
    c.edge_features = random_matrix(static_cast<Eigen::Index>(c.graph.edges().size()), 2, rng);

    const Eigen::Index n = 7;
    std::uniform_int_distribution<Index> item(0, n_items - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        c.batch.users.push_back(static_cast<Index>(i));
        c.batch.items.push_back(item(rng));
    }
    c.batch.targets = random_vector(n, rng);
    c.batch.user_pref = random_matrix(n, 4, rng);
    c.batch.user_content = random_matrix(n, static_cast<Eigen::Index>(a.user_content_dim), rng);
    c.batch.item_pref = random_matrix(n, 4, rng);
    c.batch.item_content = Matrix(n, c.node_features.cols());
    for (Eigen::Index i = 0; i < n; ++i) c.batch.item_content.row(i) = c.node_features.row(c.batch.items[i]);
    // A masked row, as the dropout regime produces.
    c.batch.user_pref.row(1).setZero();
    c.batch.item_pref.row(2).setZero();
    return c;
}

// ---------------------------------------------------------------------------
// Ranking oracles

/// Full sort by (score desc, index asc), then the first k non-excluded candidates.
inline std::vector<Index> brute_top_k(const std::vector<double>& scores, const std::vector<Index>& candidates,
                                      const std::vector<Index>& excluded, std::size_t k) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    });
    std::vector<Index> out;
    for (std::size_t i : order) {
        if (out.size() == k) break;
        if (std::find(excluded.begin(), excluded.end(), candidates[i]) != excluded.end()) continue;
        out.push_back(candidates[i]);
    }
    return out;
}

inline double brute_recall(const std::vector<std::vector<Index>>& ranked,
                           const std::vector<std::vector<Index>>& relevant, std::size_t k) {
    double total = 0.0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < relevant.size(); ++u) {
        if (relevant[u].empty()) continue;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < std::min(k, ranked[u].size()); ++i)
            if (std::count(relevant[u].begin(), relevant[u].end(), ranked[u][i])) ++hits;
        total += static_cast<double>(hits) / static_cast<double>(relevant[u].size());
        ++users;
    }
    return total / static_cast<double>(users);
}

/// Mean reciprocal rank where rank = 1 + #strictly higher + #equal at a lower position.
inline double brute_mrr(const std::vector<std::vector<double>>& lists, const std::vector<Index>& targets) {
    double total = 0.0;
    for (std::size_t r = 0; r < lists.size(); ++r) {
        const double s = lists[r][targets[r]];
        std::size_t rank = 1;
        for (std::size_t j = 0; j < lists[r].size(); ++j) {
            if (lists[r][j] > s || (lists[r][j] == s && j < targets[r])) ++rank;
        }
        total += 1.0 / static_cast<double>(rank);
    }
    return total / static_cast<double>(lists.size());
}

// ---------------------------------------------------------------------------
// Forward oracle

inline double act(double x, Activation a) { return a == Activation::tanh ? std::tanh(x) : x; }

/// Element-by-element inference forward of one tower, written from the layer
/// definitions without Eigen products.
inline std::vector<double> naive_tower(const Tower& t, const Architecture& a, const std::vector<double>& pref,
                                       const std::vector<double>& content) {
    auto branch = [&](const Branch& b, const std::vector<double>& x) {
        std::vector<double> y(static_cast<std::size_t>(b.linear.weight.rows()));
        for (std::size_t o = 0; o < y.size(); ++o) {
            double z = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) z += b.linear.weight(o, i) * x[i];
            if (b.linear.bias.size()) z += b.linear.bias[o];
            if (a.batch_norm) {
                z = (z - b.bn.running_mean[o]) / std::sqrt(b.bn.running_var[o] + a.bn_eps) * b.bn.gamma[o] +
                    b.bn.beta[o];
            }
            y[o] = act(z, a.activation);
        }
        return y;
    };
    std::vector<double> fused = branch(t.pref, pref);
    const auto c = branch(t.content, content);
    fused.insert(fused.end(), c.begin(), c.end());
    std::vector<double> out(static_cast<std::size_t>(t.fusion.weight.rows()));
    for (std::size_t o = 0; o < out.size(); ++o) {
        double z = t.fusion.bias.size() ? t.fusion.bias[o] : 0.0;
        for (std::size_t i = 0; i < fused.size(); ++i) z += t.fusion.weight(o, i) * fused[i];
        out[o] = act(z, a.activation);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph oracles

inline ItemGraph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(p);
    std::vector<GraphEdge> e;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (coin(rng)) e.push_back({i, j, "t" + std::to_string(i) + "_" + std::to_string(j), 2});
    return ItemGraph(n, e);
}

inline Matrix dense_adjacency(const ItemGraph& g) {
    Matrix A = Matrix::Identity(g.n_items(), g.n_items());
    for (const auto& e : g.edges()) A(e.src, e.dst) = A(e.dst, e.src) = 1.0;
    const Vector d = A.rowwise().sum();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) /= std::sqrt(d[i] * d[j]);
    return A;
}

inline double relu(double x) { return x > 0 ? x : 0.0; }

// Per-node evaluation of the GINE recurrence.
inline Matrix gine_oracle(const ItemGraph& g, const Matrix& x0, const Matrix& ef, const GineParams& p) {
    Matrix x = x0;
    for (const auto& layer : p.layers) {
        Matrix next(x.rows(), layer.weight.rows());
        for (Index i = 0; i < g.n_items(); ++i) {
            Vector agg = x.row(i).transpose();
            for (std::size_t k = 0; k < g.edges().size(); ++k) {
                const auto& e = g.edges()[k];
                if (e.src != i && e.dst != i) continue;
                const Index j = e.src == i ? e.dst : e.src;
                const Vector msg = x.row(j).transpose() + layer.edge_proj * ef.row(static_cast<Eigen::Index>(k)).transpose();
                for (Eigen::Index c = 0; c < msg.size(); ++c) agg[c] += relu(msg[c]);
            }
            for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
                double z = layer.bias[o];
                for (Eigen::Index c = 0; c < agg.size(); ++c) z += layer.weight(o, c) * agg[c];
                next(i, o) = relu(z);
            }
        }
        x = next;
    }
    return x;
}

inline GineParams random_gine(Eigen::Index d_in, Eigen::Index hid, Eigen::Index out, Eigen::Index d_edge, std::size_t layers,
                       std::mt19937_64& rng) {
    GineParams p;
    Eigen::Index in = d_in;
    for (std::size_t l = 0; l < layers; ++l) {
        const Eigen::Index o = l + 1 == layers ? out : hid;
        p.layers.push_back({random_matrix(o, in, rng), random_vector(o, rng, 0.2),
                            random_matrix(in, d_edge, rng)});
        in = o;
    }
    return p;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace testing_support
