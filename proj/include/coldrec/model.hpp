#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/common.hpp"
#include "coldrec/graph.hpp"

namespace coldrec {

enum class Activation { tanh, identity };
enum class GraphKind { none, gcn, gine };

GraphKind parse_graph_kind(const std::string& name);
std::string to_string(GraphKind kind);

/// Layer sizes and switches of the two encoder towers.
struct Architecture {
    std::size_t pref_dim = 200;          // h, width of U_u and V_v
    std::size_t user_content_dim = 300;  // width of the basket vector
    std::size_t item_content_dim = 300;  // width of the item content vector
    std::size_t pref_width = 500;
    std::size_t content_width = 200;
    std::size_t output_dim = 200;        // r
    bool batch_norm = true;
    double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    double bn_eps = 1e-5;
    Activation activation = Activation::tanh;

    GraphKind graph = GraphKind::none;
    std::size_t graph_hidden = 200;
    std::size_t graph_out = 200;
    std::size_t gine_layers = 2;
    std::size_t edge_dim = 0;

    std::size_t graph_width() const { return graph == GraphKind::none ? 0 : graph_out; }

    nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
    bool operator==(const Architecture&) const = default;
};

struct Dense {
    Matrix weight;  // out x in
    Vector bias;    // out, or empty when the layer has no bias
};

struct BatchNorm {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
};

/// linear -> batch norm -> activation
struct Branch {
    Dense linear;
    BatchNorm bn;
};

/// One encoder: preference branch and content branch fused by a final layer.
struct Tower {
    Branch pref;
    Branch content;
    Dense fusion;
};

/// Non-owning view of one parameter or state tensor.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;

    Eigen::Map<Matrix> map() const { return Eigen::Map<Matrix>(data, rows, cols); }
    Eigen::Index size() const { return rows * cols; }
};

struct EncoderParams {
    Architecture arch;
    Tower user;
    Tower item;
    GcnParams gcn;
    GineParams gine;

    /// Glorot-uniform weights, zero biases, unit batch-norm scale.
    static EncoderParams init(const Architecture& arch, std::uint64_t seed);
    /// Same shapes, every tensor zero (gradient accumulator).
    EncoderParams zeros_like() const;

    /// Trainable tensors in a fixed order.
    std::vector<TensorRef> trainable();
    /// Trainable tensors followed by batch-norm running statistics.
    std::vector<TensorRef> all_tensors();
    std::vector<TensorRef> trainable() const { return const_cast<EncoderParams*>(this)->trainable(); }
    std::vector<TensorRef> all_tensors() const { return const_cast<EncoderParams*>(this)->all_tensors(); }

    bool all_finite() const;
    /// Name of the first tensor holding NaN/inf, or empty.
    std::string first_non_finite() const;
};

// ---------------------------------------------------------------------------
// Masking

enum class MaskMode { identity, zero, dropout, gaussian };

MaskMode parse_mask_mode(const std::string& name);
std::string to_string(MaskMode mode);

struct MaskParams {
    double rate = 0.5;    // dropout probability
    double mean = 0.0;    // gaussian noise mean
    double stddev = 1.0;  // gaussian noise std
};

/// identity: x. zero: 0. dropout: inverted dropout (survivors scaled by
/// 1 / (1 - rate); rate 1 gives 0). gaussian: x + N(mean, stddev) elementwise.
Vector apply_mask(const Vector& x, MaskMode mode, const MaskParams& params, std::mt19937_64& rng);

struct MaskConfig {
    MaskMode mode = MaskMode::dropout;
    double rate = 0.5;
    double user_drop_p = 0.5;
    double item_drop_p = 0.5;
    double user_transform_p = 0.0;  // dropoutnet baseline only, applied to both sides
    // Gaussian moments of the standardized factor matrices.
    double user_mean = 0.0;
    double user_std = 1.0;
    double item_mean = 0.0;
    double item_std = 1.0;

    void validate() const;
    nlohmann::json to_json() const;
    static MaskConfig from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Forward / backward

struct BranchCache {
    Matrix input;
    Matrix xhat;     // normalized (or raw linear output without batch norm)
    Vector inv_std;
    bool batch_stats = false;
    Matrix out;  // after activation
};

struct TowerCache {
    BranchCache pref;
    BranchCache content;
    Matrix fused_in;
    Matrix out;
};

/// Batched tower forward; rows are examples. In train mode batch norm uses
/// batch statistics and, when `update_running` is set, folds them into the
/// running averages; otherwise running statistics are used.
Matrix tower_forward(Tower& tower, const Architecture& arch, const Matrix& pref_in, const Matrix& content_in,
                     bool train_mode, TowerCache* cache = nullptr, bool update_running = false);
Matrix tower_forward(const Tower& tower, const Architecture& arch, const Matrix& pref_in, const Matrix& content_in);

/// Accumulates into `grad`; writes d(content_in) when requested.
void tower_backward(const Tower& tower, const Architecture& arch, const TowerCache& cache, const Matrix& d_out,
                    Tower& grad, Matrix* d_content_in = nullptr);

/// Graph inputs for the item tower. `node_features` is the item content matrix.
struct GraphContext {
    const ItemGraph* graph = nullptr;
    const GraphAdjacency* adjacency = nullptr;
    const Matrix* node_features = nullptr;
    const Matrix* edge_features = nullptr;  // GINE only
};

/// Graph embedding for every item (n_items x graph_out); empty when the graph is off.
Matrix graph_embeddings(const EncoderParams& params, const GraphContext& ctx);

/// Inference-mode single-vector encoders. A missing input becomes the zero vector.
Vector user_encode(const EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content);
Vector item_encode(const EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content,
                   const std::optional<Vector>& graph_embedding = std::nullopt);

/// Train-mode variant: the preference input goes through the configured mask
/// and batch norm sees a batch of one.
Vector user_encode_train(EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content,
                         const MaskConfig& mask, std::mt19937_64& rng);

/// Batched inference encoders (rows are users / items).
Matrix encode_users(const EncoderParams& params, const Matrix& pref, const Matrix& content);
Matrix encode_items(const EncoderParams& params, const Matrix& pref, const Matrix& content, const Matrix& graph_rows);

double relevance(const Vector& user, const Vector& item);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
    EncoderParams params;
    MaskConfig mask;
    std::string rng_state;
    nlohmann::json meta = nlohmann::json::object();
};

enum class TensorDtype : std::uint8_t { f32 = 0, f64 = 1 };

/// DNN1 file: magic, u32 version, u32 tensor count, then per tensor a
/// length-prefixed name, u8 dtype, u64 rows, u64 cols and row-major values.
/// Architecture, mask config, rng state and metadata go to <path>.json.
void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path, TensorDtype dtype = TensorDtype::f64);
Checkpoint checkpoint_load(const std::filesystem::path& path);
/// FNV-1a of the checkpoint file and its sidecar, input file locations excluded.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace coldrec
