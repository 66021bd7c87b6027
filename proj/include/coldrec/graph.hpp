#pragma once

#include <vector>

#include "coldrec/common.hpp"
#include "coldrec/content.hpp"
#include "coldrec/dataset.hpp"

namespace coldrec {

/// Symmetrically normalized adjacency with self-loops, D^-1/2 (A + I) D^-1/2.
struct GraphAdjacency {
    SparseRows norm;
    Vector degree;  // row sums of A + I

    std::size_t size() const { return static_cast<std::size_t>(norm.rows()); }
};

GraphAdjacency normalize_adjacency(const ItemGraph& graph);

/// Two-layer GCN weights, applied as A relu(A X W0) W1.
struct GcnParams {
    Matrix w0;  // d_in x d_hidden
    Matrix w1;  // d_hidden x d_out
};

struct GcnCache {
    Matrix ax;      // A X
    Matrix pre;     // A X W0
    Matrix ahidden; // A relu(pre)
};

Matrix gcn_forward(const GraphAdjacency& adj, const Matrix& x, const GcnParams& params, GcnCache* cache = nullptr);

/// Accumulates parameter gradients into `grad` and, when `d_x` is given, writes
/// the gradient with respect to the node features.
void gcn_backward(const GraphAdjacency& adj, const GcnParams& params, const GcnCache& cache, const Matrix& d_out,
                  GcnParams& grad, Matrix* d_x = nullptr);

/// One GINE update x_i <- relu(W (x_i + sum_j relu(x_j + E e_ji)) + b). The edge
/// projection E maps edge features into the layer's input space.
struct GineLayer {
    Matrix weight;     // d_out x d_in
    Vector bias;       // d_out
    Matrix edge_proj;  // d_in x d_edge
};

struct GineParams {
    std::vector<GineLayer> layers;
};

struct GineLayerCache {
    Matrix input;     // n x d_in
    Matrix messages;  // 2 * n_edges x d_in, pre-activation x_j + E e for both directions
    Matrix pre;       // n x d_out
};

struct GineCache {
    std::vector<GineLayerCache> layers;
};

/// `edge_features` holds one row per graph edge (same order as ItemGraph::edges()),
/// shared by both directions.
Matrix gine_forward(const ItemGraph& graph, const Matrix& x, const Matrix& edge_features, const GineParams& params,
                    GineCache* cache = nullptr);

void gine_backward(const ItemGraph& graph, const Matrix& edge_features, const GineParams& params,
                   const GineCache& cache, const Matrix& d_out, GineParams& grad, Matrix* d_x = nullptr,
                   Matrix* d_edge_features = nullptr);

/// Edge text through TF-IDF and the SVD projection; empty text gives a zero row.
Matrix edge_text_features(const ItemGraph& graph, const TfidfModel& tfidf, const SvdProjector& svd);

}  // namespace coldrec
