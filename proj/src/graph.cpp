#include "coldrec/graph.hpp"

#include <cmath>

namespace coldrec {

GraphAdjacency normalize_adjacency(const ItemGraph& graph) {
    const auto n = static_cast<Eigen::Index>(graph.n_items());
    GraphAdjacency adj;
    adj.degree = Vector::Ones(n);
    for (const auto& e : graph.edges()) {
        adj.degree[e.src] += 1.0;
        adj.degree[e.dst] += 1.0;
    }
    const Vector inv_sqrt = adj.degree.array().rsqrt();

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) + 2 * graph.edges().size());
    for (Eigen::Index i = 0; i < n; ++i) triplets.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (const auto& e : graph.edges()) {
        const double w = inv_sqrt[e.src] * inv_sqrt[e.dst];
        triplets.emplace_back(e.src, e.dst, w);
        triplets.emplace_back(e.dst, e.src, w);
    }
    adj.norm.resize(n, n);
    adj.norm.setFromTriplets(triplets.begin(), triplets.end());
    adj.norm.makeCompressed();
    return adj;
}

Matrix gcn_forward(const GraphAdjacency& adj, const Matrix& x, const GcnParams& params, GcnCache* cache) {
    if (x.rows() != static_cast<Eigen::Index>(adj.size()) || x.cols() != params.w0.rows() ||
        params.w0.cols() != params.w1.rows()) {
        throw std::invalid_argument("gcn_forward: shape mismatch");
    }
    Matrix ax = adj.norm * x;
    Matrix pre = ax * params.w0;
    Matrix ahidden = adj.norm * pre.cwiseMax(0.0);
    Matrix out = ahidden * params.w1;
    if (cache) {
        cache->ax = std::move(ax);
        cache->pre = std::move(pre);
        cache->ahidden = std::move(ahidden);
    }
    return out;
}

void gcn_backward(const GraphAdjacency& adj, const GcnParams& params, const GcnCache& cache, const Matrix& d_out,
                  GcnParams& grad, Matrix* d_x) {
    grad.w1.noalias() += cache.ahidden.transpose() * d_out;
    // The normalized adjacency is symmetric, so A' = A.
    Matrix d_hidden = adj.norm * (d_out * params.w1.transpose());
    Matrix d_pre = d_hidden.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
    grad.w0.noalias() += cache.ax.transpose() * d_pre;
    if (d_x) *d_x = adj.norm * (d_pre * params.w0.transpose());
}

Matrix gine_forward(const ItemGraph& graph, const Matrix& x, const Matrix& edge_features, const GineParams& params,
                    GineCache* cache) {
    const auto edges = graph.edges();
    if (x.rows() != static_cast<Eigen::Index>(graph.n_items())) {
        throw std::invalid_argument("gine_forward: feature rows do not match the graph");
    }
    if (edge_features.rows() != static_cast<Eigen::Index>(edges.size())) {
        throw std::invalid_argument("gine_forward: expected one edge feature row per edge, got " +
                                    std::to_string(edge_features.rows()) + " for " + std::to_string(edges.size()) +
                                    " edges");
    }
    if (cache) cache->layers.clear();

    Matrix h = x;
    for (const auto& layer : params.layers) {
        if (layer.edge_proj.rows() != h.cols() || layer.edge_proj.cols() != edge_features.cols() ||
            layer.weight.cols() != h.cols() || layer.bias.size() != layer.weight.rows()) {
            throw std::invalid_argument("gine_forward: layer shape mismatch");
        }
        const Matrix projected = edge_features * layer.edge_proj.transpose();  // n_edges x d_in
        Matrix messages(2 * static_cast<Eigen::Index>(edges.size()), h.cols());
        Matrix z = h;
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const auto ek = static_cast<Eigen::Index>(k);
            // Row 2k carries src -> dst, row 2k + 1 carries dst -> src.
            messages.row(2 * ek) = h.row(edges[k].src) + projected.row(ek);
            messages.row(2 * ek + 1) = h.row(edges[k].dst) + projected.row(ek);
            z.row(edges[k].dst) += messages.row(2 * ek).cwiseMax(0.0);
            z.row(edges[k].src) += messages.row(2 * ek + 1).cwiseMax(0.0);
        }
        Matrix pre = (z * layer.weight.transpose()).rowwise() + layer.bias.transpose();
        Matrix next = pre.cwiseMax(0.0);
        if (cache) cache->layers.push_back({std::move(h), std::move(messages), std::move(pre)});
        h = std::move(next);
    }
    return h;
}

void gine_backward(const ItemGraph& graph, const Matrix& edge_features, const GineParams& params,
                   const GineCache& cache, const Matrix& d_out, GineParams& grad, Matrix* d_x,
                   Matrix* d_edge_features) {
    const auto edges = graph.edges();
    if (d_edge_features) *d_edge_features = Matrix::Zero(edge_features.rows(), edge_features.cols());
    Matrix d_h = d_out;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        const auto& lc = cache.layers[l];
        auto& g = grad.layers[l];

        Matrix d_pre = d_h.cwiseProduct((lc.pre.array() > 0.0).cast<double>().matrix());
        // z = x + aggregated messages; rebuild it from the cache for the weight gradient.
        Matrix z = lc.input;
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const auto ek = static_cast<Eigen::Index>(k);
            z.row(edges[k].dst) += lc.messages.row(2 * ek).cwiseMax(0.0);
            z.row(edges[k].src) += lc.messages.row(2 * ek + 1).cwiseMax(0.0);
        }
        g.weight.noalias() += d_pre.transpose() * z;
        g.bias.noalias() += d_pre.colwise().sum().transpose();
        Matrix d_z = d_pre * layer.weight;

        Matrix d_input = d_z;
        Matrix d_projected = Matrix::Zero(static_cast<Eigen::Index>(edges.size()), lc.input.cols());
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const auto ek = static_cast<Eigen::Index>(k);
            auto fwd = (lc.messages.row(2 * ek).array() > 0.0).cast<double>().matrix();
            auto bwd = (lc.messages.row(2 * ek + 1).array() > 0.0).cast<double>().matrix();
            Eigen::RowVectorXd m_fwd = d_z.row(edges[k].dst).cwiseProduct(fwd);
            Eigen::RowVectorXd m_bwd = d_z.row(edges[k].src).cwiseProduct(bwd);
            d_input.row(edges[k].src) += m_fwd;
            d_input.row(edges[k].dst) += m_bwd;
            d_projected.row(ek) = m_fwd + m_bwd;
        }
        g.edge_proj.noalias() += d_projected.transpose() * edge_features;
        if (d_edge_features) d_edge_features->noalias() += d_projected * layer.edge_proj;
        d_h = std::move(d_input);
    }
    if (d_x) *d_x = std::move(d_h);
}

Matrix edge_text_features(const ItemGraph& graph, const TfidfModel& tfidf, const SvdProjector& svd) {
    std::vector<std::string> texts;
    texts.reserve(graph.edges().size());
    for (const auto& e : graph.edges()) texts.push_back(e.text);
    return project(svd, encode_tfidf(tfidf, texts)).vectors;
}

}  // namespace coldrec
