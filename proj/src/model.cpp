#include "coldrec/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "coldrec/binary_io.hpp"

namespace coldrec {

namespace {

using json = nlohmann::json;

std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

void glorot(Matrix& w, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
}

Dense make_dense(Eigen::Index out, Eigen::Index in, bool bias) {
    return {Matrix::Zero(out, in), bias ? Vector::Zero(out) : Vector()};
}

Branch make_branch(Eigen::Index out, Eigen::Index in, bool batch_norm) {
    Branch b;
    b.linear = make_dense(out, in, !batch_norm);
    if (batch_norm) {
        b.bn.gamma = Vector::Ones(out);
        b.bn.beta = Vector::Zero(out);
        b.bn.running_mean = Vector::Zero(out);
        b.bn.running_var = Vector::Ones(out);
    }
    return b;
}

Tower make_tower(const Architecture& arch, Eigen::Index content_in) {
    const auto pw = static_cast<Eigen::Index>(arch.pref_width);
    const auto cw = static_cast<Eigen::Index>(arch.content_width);
    Tower t;
    t.pref = make_branch(pw, static_cast<Eigen::Index>(arch.pref_dim), arch.batch_norm);
    t.content = make_branch(cw, content_in, arch.batch_norm);
    t.fusion = make_dense(static_cast<Eigen::Index>(arch.output_dim), pw + cw, true);
    return t;
}

void push(std::vector<TensorRef>& out, const std::string& name, Matrix& m) {
    if (m.size() > 0) out.push_back({name, m.data(), m.rows(), m.cols()});
}

void push(std::vector<TensorRef>& out, const std::string& name, Vector& v) {
    if (v.size() > 0) out.push_back({name, v.data(), v.rows(), 1});
}

void push_tower(std::vector<TensorRef>& out, const std::string& prefix, Tower& t) {
    for (auto [name, branch] : {std::pair<const char*, Branch*>{"pref", &t.pref}, {"content", &t.content}}) {
        const std::string p = prefix + "." + name;
        push(out, p + ".weight", branch->linear.weight);
        push(out, p + ".bias", branch->linear.bias);
        push(out, p + ".bn.gamma", branch->bn.gamma);
        push(out, p + ".bn.beta", branch->bn.beta);
    }
    push(out, prefix + ".fusion.weight", t.fusion.weight);
    push(out, prefix + ".fusion.bias", t.fusion.bias);
}

void push_state(std::vector<TensorRef>& out, const std::string& prefix, Tower& t) {
    for (auto [name, branch] : {std::pair<const char*, Branch*>{"pref", &t.pref}, {"content", &t.content}}) {
        const std::string p = prefix + "." + name + ".bn";
        push(out, p + ".running_mean", branch->bn.running_mean);
        push(out, p + ".running_var", branch->bn.running_var);
    }
}

Matrix activate(const Matrix& x, Activation a) { return a == Activation::tanh ? Matrix(x.array().tanh()) : x; }

Matrix activation_grad(const Matrix& out, const Matrix& d_out, Activation a) {
    if (a == Activation::identity) return d_out;
    return d_out.array() * (1.0 - out.array().square());
}

/// Row-wise evaluation uses one matrix-vector product per row, so a row's
/// result does not depend on the batch it arrives in.
Matrix dense_forward(const Dense& d, const Matrix& in, bool rowwise) {
    if (in.cols() != d.weight.cols()) {
        throw std::invalid_argument("dimension mismatch: layer expects " + std::to_string(d.weight.cols()) +
                                    " inputs, got " + std::to_string(in.cols()));
    }
    Matrix out;
    if (rowwise) {
        out.resize(in.rows(), d.weight.rows());
        Vector x(in.cols()), y(d.weight.rows());
        for (Eigen::Index i = 0; i < in.rows(); ++i) {
            x = in.row(i).transpose();
            y.noalias() = d.weight * x;
            out.row(i) = y.transpose();
        }
    } else {
        out = in * d.weight.transpose();
    }
    if (d.bias.size() > 0) out.rowwise() += d.bias.transpose();
    return out;
}

Matrix branch_forward(Branch& b, const Architecture& arch, const Matrix& in, bool train_mode, bool update_running,
                      BranchCache* cache) {
    Matrix lin = dense_forward(b.linear, in, !train_mode);
    Matrix xhat;
    Vector inv_std;
    bool batch_stats = false;
    Matrix y;
    if (arch.batch_norm) {
        if (train_mode) {
            const Vector mean = lin.colwise().mean().transpose();
            const Matrix centered = lin.rowwise() - mean.transpose();
            const Vector var = centered.array().square().colwise().mean().transpose();
            inv_std = (var.array() + arch.bn_eps).rsqrt();
            xhat = centered * inv_std.asDiagonal();
            batch_stats = true;
            if (update_running) {
                b.bn.running_mean = arch.bn_momentum * b.bn.running_mean + (1.0 - arch.bn_momentum) * mean;
                b.bn.running_var = arch.bn_momentum * b.bn.running_var + (1.0 - arch.bn_momentum) * var;
            }
        } else {
            inv_std = (b.bn.running_var.array() + arch.bn_eps).rsqrt();
            xhat = (lin.rowwise() - b.bn.running_mean.transpose()) * inv_std.asDiagonal();
        }
        y = (xhat * b.bn.gamma.asDiagonal()).rowwise() + b.bn.beta.transpose();
    } else {
        xhat = lin;
        y = std::move(lin);
    }
    Matrix out = activate(y, arch.activation);
    if (cache) {
        cache->input = in;
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->batch_stats = batch_stats;
        cache->out = out;
    }
    return out;
}

Matrix branch_backward(const Branch& b, const Architecture& arch, const BranchCache& c, const Matrix& d_out,
                       Branch& g, bool need_input_grad) {
    const Matrix d_y = activation_grad(c.out, d_out, arch.activation);
    Matrix d_lin;
    if (arch.batch_norm) {
        g.bn.gamma += d_y.cwiseProduct(c.xhat).colwise().sum().transpose();
        g.bn.beta += d_y.colwise().sum().transpose();
        const Matrix d_xhat = d_y * b.bn.gamma.asDiagonal();
        if (c.batch_stats) {
            const double n = static_cast<double>(d_xhat.rows());
            const Eigen::RowVectorXd sum_d = d_xhat.colwise().sum();
            const Eigen::RowVectorXd sum_dx = d_xhat.cwiseProduct(c.xhat).colwise().sum();
            Matrix t = (n * d_xhat).rowwise() - sum_d;
            t -= c.xhat * sum_dx.asDiagonal();
            d_lin = t * (c.inv_std / n).asDiagonal();
        } else {
            d_lin = d_xhat * c.inv_std.asDiagonal();
        }
    } else {
        d_lin = d_y;
    }
    g.linear.weight.noalias() += d_lin.transpose() * c.input;
    if (g.linear.bias.size() > 0) g.linear.bias += d_lin.colwise().sum().transpose();
    if (!need_input_grad) return {};
    return d_lin * b.linear.weight;
}

Matrix row_or_zero(const std::optional<Vector>& v, std::size_t dim, const char* what) {
    if (!v) return Matrix::Zero(1, static_cast<Eigen::Index>(dim));
    if (static_cast<std::size_t>(v->size()) != dim) {
        throw std::invalid_argument(std::string("dimension mismatch: ") + what + " has " + std::to_string(v->size()) +
                                    " entries, expected " + std::to_string(dim));
    }
    return v->transpose();
}

}  // namespace

GraphKind parse_graph_kind(const std::string& name) {
    if (name == "none") return GraphKind::none;
    if (name == "gcn") return GraphKind::gcn;
    if (name == "gine") return GraphKind::gine;
    throw std::invalid_argument("unknown graph encoder '" + name + "' (expected none, gcn or gine)");
}

std::string to_string(GraphKind kind) {
    switch (kind) {
        case GraphKind::gcn: return "gcn";
        case GraphKind::gine: return "gine";
        default: return "none";
    }
}

json Architecture::to_json() const {
    return {{"pref_dim", pref_dim},         {"user_content_dim", user_content_dim},
            {"item_content_dim", item_content_dim}, {"pref_width", pref_width},
            {"content_width", content_width}, {"output_dim", output_dim},
            {"batch_norm", batch_norm},     {"bn_momentum", bn_momentum},
            {"bn_eps", bn_eps},             {"activation", activation_name(activation)},
            {"graph", coldrec::to_string(graph)}, {"graph_hidden", graph_hidden},
            {"graph_out", graph_out},       {"gine_layers", gine_layers},
            {"edge_dim", edge_dim}};
}

Architecture Architecture::from_json(const json& j) {
    Architecture a;
    a.pref_dim = j.value("pref_dim", a.pref_dim);
    a.user_content_dim = j.value("user_content_dim", a.user_content_dim);
    a.item_content_dim = j.value("item_content_dim", a.item_content_dim);
    a.pref_width = j.value("pref_width", a.pref_width);
    a.content_width = j.value("content_width", a.content_width);
    a.output_dim = j.value("output_dim", a.output_dim);
    a.batch_norm = j.value("batch_norm", a.batch_norm);
    a.bn_momentum = j.value("bn_momentum", a.bn_momentum);
    a.bn_eps = j.value("bn_eps", a.bn_eps);
    a.activation = parse_activation(j.value("activation", std::string("tanh")));
    a.graph = parse_graph_kind(j.value("graph", std::string("none")));
    a.graph_hidden = j.value("graph_hidden", a.graph_hidden);
    a.graph_out = j.value("graph_out", a.graph_out);
    a.gine_layers = j.value("gine_layers", a.gine_layers);
    a.edge_dim = j.value("edge_dim", a.edge_dim);
    return a;
}

EncoderParams EncoderParams::init(const Architecture& arch, std::uint64_t seed) {
    if (arch.pref_dim == 0 || arch.pref_width == 0 || arch.content_width == 0 || arch.output_dim == 0) {
        throw std::invalid_argument("architecture widths must be positive");
    }
    EncoderParams p;
    p.arch = arch;
    p.user = make_tower(arch, static_cast<Eigen::Index>(arch.user_content_dim));
    p.item = make_tower(arch, static_cast<Eigen::Index>(arch.item_content_dim + arch.graph_width()));

    const auto d_in = static_cast<Eigen::Index>(arch.item_content_dim);
    const auto hid = static_cast<Eigen::Index>(arch.graph_hidden);
    const auto out = static_cast<Eigen::Index>(arch.graph_out);
    if (arch.graph == GraphKind::gcn) {
        p.gcn.w0 = Matrix::Zero(d_in, hid);
        p.gcn.w1 = Matrix::Zero(hid, out);
    } else if (arch.graph == GraphKind::gine) {
        if (arch.gine_layers == 0) throw std::invalid_argument("gine_layers must be positive");
        Eigen::Index in = d_in;
        for (std::size_t l = 0; l < arch.gine_layers; ++l) {
            const Eigen::Index o = l + 1 == arch.gine_layers ? out : hid;
            p.gine.layers.push_back(
                {Matrix::Zero(o, in), Vector::Zero(o), Matrix::Zero(in, static_cast<Eigen::Index>(arch.edge_dim))});
            in = o;
        }
    }

    std::mt19937_64 rng(seed);
    for (auto& t : p.trainable()) {
        const bool is_weight = t.name.ends_with("weight") || t.name.ends_with("edge_proj") ||
                               t.name == "gcn.w0" || t.name == "gcn.w1";
        if (is_weight) {
            Matrix w(t.rows, t.cols);
            glorot(w, rng);
            t.map() = w;
        }
    }
    return p;
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z = *this;
    for (auto& t : z.all_tensors()) t.map().setZero();
    return z;
}

std::vector<TensorRef> EncoderParams::trainable() {
    std::vector<TensorRef> out;
    push_tower(out, "user", user);
    push_tower(out, "item", item);
    push(out, "gcn.w0", gcn.w0);
    push(out, "gcn.w1", gcn.w1);
    for (std::size_t l = 0; l < gine.layers.size(); ++l) {
        const std::string p = "gine." + std::to_string(l);
        push(out, p + ".weight", gine.layers[l].weight);
        push(out, p + ".bias", gine.layers[l].bias);
        push(out, p + ".edge_proj", gine.layers[l].edge_proj);
    }
    return out;
}

std::vector<TensorRef> EncoderParams::all_tensors() {
    auto out = trainable();
    push_state(out, "user", user);
    push_state(out, "item", item);
    return out;
}

bool EncoderParams::all_finite() const { return first_non_finite().empty(); }

std::string EncoderParams::first_non_finite() const {
    for (const auto& t : all_tensors())
        if (!t.map().allFinite()) return t.name;
    return {};
}

// ---------------------------------------------------------------------------

MaskMode parse_mask_mode(const std::string& name) {
    if (name == "identity") return MaskMode::identity;
    if (name == "zero") return MaskMode::zero;
    if (name == "dropout") return MaskMode::dropout;
    if (name == "gaussian") return MaskMode::gaussian;
    throw std::invalid_argument("unknown mask mode '" + name + "' (expected identity, zero, dropout or gaussian)");
}

std::string to_string(MaskMode mode) {
    switch (mode) {
        case MaskMode::identity: return "identity";
        case MaskMode::zero: return "zero";
        case MaskMode::dropout: return "dropout";
        default: return "gaussian";
    }
}

Vector apply_mask(const Vector& x, MaskMode mode, const MaskParams& params, std::mt19937_64& rng) {
    switch (mode) {
        case MaskMode::identity: return x;
        case MaskMode::zero: return Vector::Zero(x.size());
        case MaskMode::dropout: {
            if (params.rate < 0.0 || params.rate > 1.0) throw std::invalid_argument("dropout rate outside [0, 1]");
            if (params.rate >= 1.0) return Vector::Zero(x.size());
            if (params.rate <= 0.0) return x;
            std::bernoulli_distribution drop(params.rate);
            const double scale = 1.0 / (1.0 - params.rate);
            Vector out(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = drop(rng) ? 0.0 : x[i] * scale;
            return out;
        }
        case MaskMode::gaussian: {
            std::normal_distribution<double> noise(params.mean, params.stddev);
            Vector out(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = x[i] + noise(rng);
            return out;
        }
    }
    return x;
}

void MaskConfig::validate() const {
    for (double p : {rate, user_drop_p, item_drop_p, user_transform_p}) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask probabilities must lie in [0, 1]");
    }
    if (!(user_std >= 0.0) || !(item_std >= 0.0)) throw std::invalid_argument("gaussian mask std must be >= 0");
}

json MaskConfig::to_json() const {
    return {{"mode", coldrec::to_string(mode)}, {"rate", rate},
            {"user_drop_p", user_drop_p},       {"item_drop_p", item_drop_p},
            {"user_transform_p", user_transform_p},
            {"user_mean", user_mean},           {"user_std", user_std},
            {"item_mean", item_mean},           {"item_std", item_std}};
}

MaskConfig MaskConfig::from_json(const json& j) {
    MaskConfig m;
    m.mode = parse_mask_mode(j.value("mode", std::string("dropout")));
    m.rate = j.value("rate", m.rate);
    m.user_drop_p = j.value("user_drop_p", m.user_drop_p);
    m.item_drop_p = j.value("item_drop_p", m.item_drop_p);
    m.user_transform_p = j.value("user_transform_p", m.user_transform_p);
    m.user_mean = j.value("user_mean", m.user_mean);
    m.user_std = j.value("user_std", m.user_std);
    m.item_mean = j.value("item_mean", m.item_mean);
    m.item_std = j.value("item_std", m.item_std);
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------

Matrix tower_forward(Tower& tower, const Architecture& arch, const Matrix& pref_in, const Matrix& content_in,
                     bool train_mode, TowerCache* cache, bool update_running) {
    if (pref_in.rows() != content_in.rows()) throw std::invalid_argument("dimension mismatch: batch sizes differ");
    Matrix p = branch_forward(tower.pref, arch, pref_in, train_mode, update_running, cache ? &cache->pref : nullptr);
    Matrix c = branch_forward(tower.content, arch, content_in, train_mode, update_running,
                              cache ? &cache->content : nullptr);
    Matrix fused(p.rows(), p.cols() + c.cols());
    fused << p, c;
    Matrix out = activate(dense_forward(tower.fusion, fused, !train_mode), arch.activation);
    if (cache) {
        cache->fused_in = std::move(fused);
        cache->out = out;
    }
    return out;
}

Matrix tower_forward(const Tower& tower, const Architecture& arch, const Matrix& pref_in, const Matrix& content_in) {
    // Inference never writes running statistics, so the cast is safe.
    return tower_forward(const_cast<Tower&>(tower), arch, pref_in, content_in, false, nullptr, false);
}

void tower_backward(const Tower& tower, const Architecture& arch, const TowerCache& cache, const Matrix& d_out,
                    Tower& grad, Matrix* d_content_in) {
    const Matrix d_pre = activation_grad(cache.out, d_out, arch.activation);
    grad.fusion.weight.noalias() += d_pre.transpose() * cache.fused_in;
    grad.fusion.bias += d_pre.colwise().sum().transpose();
    const Matrix d_fused = d_pre * tower.fusion.weight;
    const auto pw = static_cast<Eigen::Index>(arch.pref_width);
    branch_backward(tower.pref, arch, cache.pref, d_fused.leftCols(pw), grad.pref, false);
    Matrix d_c = branch_backward(tower.content, arch, cache.content, d_fused.rightCols(d_fused.cols() - pw),
                                 grad.content, d_content_in != nullptr);
    if (d_content_in) *d_content_in = std::move(d_c);
}

Matrix graph_embeddings(const EncoderParams& params, const GraphContext& ctx) {
    if (params.arch.graph == GraphKind::none) {
        return Matrix(ctx.node_features ? ctx.node_features->rows() : 0, 0);
    }
    if (!ctx.node_features || !ctx.graph) throw std::invalid_argument("graph encoder enabled but no graph supplied");
    if (params.arch.graph == GraphKind::gcn) {
        if (!ctx.adjacency) throw std::invalid_argument("gcn requires a normalized adjacency");
        return gcn_forward(*ctx.adjacency, *ctx.node_features, params.gcn);
    }
    if (!ctx.edge_features) throw std::invalid_argument("gine requires edge features");
    return gine_forward(*ctx.graph, *ctx.node_features, *ctx.edge_features, params.gine);
}

Vector user_encode(const EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content) {
    if (!pref && !content) throw std::invalid_argument("user_encode needs a preference vector or a content vector");
    const auto& a = params.arch;
    return tower_forward(params.user, a, row_or_zero(pref, a.pref_dim, "user preference vector"),
                         row_or_zero(content, a.user_content_dim, "user content vector"))
        .row(0)
        .transpose();
}

Vector item_encode(const EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content,
                   const std::optional<Vector>& graph_embedding) {
    if (!pref && !content) throw std::invalid_argument("item_encode needs a preference vector or a content vector");
    const auto& a = params.arch;
    Matrix c = row_or_zero(content, a.item_content_dim, "item content vector");
    if (a.graph_width() > 0) {
        Matrix g = row_or_zero(graph_embedding, a.graph_width(), "graph embedding");
        Matrix joined(1, c.cols() + g.cols());
        joined << c, g;
        c = std::move(joined);
    } else if (graph_embedding && graph_embedding->size() > 0) {
        throw std::invalid_argument("dimension mismatch: graph embedding given but the graph encoder is disabled");
    }
    return tower_forward(params.item, a, row_or_zero(pref, a.pref_dim, "item preference vector"), c).row(0).transpose();
}

Vector user_encode_train(EncoderParams& params, const std::optional<Vector>& pref, const std::optional<Vector>& content,
                         const MaskConfig& mask, std::mt19937_64& rng) {
    if (!pref && !content) throw std::invalid_argument("user_encode needs a preference vector or a content vector");
    const auto& a = params.arch;
    Matrix p = row_or_zero(pref, a.pref_dim, "user preference vector");
    if (std::bernoulli_distribution(mask.user_drop_p)(rng)) {
        p = apply_mask(p.row(0).transpose(), mask.mode, {mask.rate, mask.user_mean, mask.user_std}, rng).transpose();
    }
    return tower_forward(params.user, a, p, row_or_zero(content, a.user_content_dim, "user content vector"), true)
        .row(0)
        .transpose();
}

Matrix encode_users(const EncoderParams& params, const Matrix& pref, const Matrix& content) {
    return tower_forward(params.user, params.arch, pref, content);
}

Matrix encode_items(const EncoderParams& params, const Matrix& pref, const Matrix& content, const Matrix& graph_rows) {
    if (static_cast<std::size_t>(graph_rows.cols()) != params.arch.graph_width()) {
        throw std::invalid_argument("dimension mismatch: graph rows have " + std::to_string(graph_rows.cols()) +
                                    " columns, expected " + std::to_string(params.arch.graph_width()));
    }
    if (graph_rows.cols() == 0) return tower_forward(params.item, params.arch, pref, content);
    Matrix joined(content.rows(), content.cols() + graph_rows.cols());
    joined << content, graph_rows;
    return tower_forward(params.item, params.arch, pref, joined);
}

double relevance(const Vector& user, const Vector& item) {
    if (user.size() != item.size()) throw std::invalid_argument("dimension mismatch in relevance");
    return user.dot(item);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& path) { return path.string() + ".json"; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path, TensorDtype dtype) {
    const auto tensors = ckpt.params.all_tensors();
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        io::write_magic(out, "DNN1");
        io::write_pod<std::uint32_t>(out, kCheckpointVersion);
        io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& t : tensors) {
            io::write_string(out, t.name);
            io::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
            io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows));
            io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols));
            const auto m = t.map();
            for (Eigen::Index i = 0; i < t.rows; ++i)
                for (Eigen::Index j = 0; j < t.cols; ++j) {
                    if (dtype == TensorDtype::f32) io::write_pod<float>(out, static_cast<float>(m(i, j)));
                    else io::write_pod<double>(out, m(i, j));
                }
        }
        if (!out) throw std::runtime_error("failed writing " + path.string());
    }
    json side = {{"format", "DNN1"},
                 {"version", kCheckpointVersion},
                 {"architecture", ckpt.params.arch.to_json()},
                 {"mask", ckpt.mask.to_json()},
                 {"rng_state", ckpt.rng_state},
                 {"meta", ckpt.meta}};
    std::ofstream out(sidecar_path(path), std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + sidecar_path(path).string());
    out << side.dump(2) << "\n";
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
    const auto side_path = sidecar_path(path);
    std::ifstream side_in(side_path);
    if (!side_in) throw std::runtime_error("missing checkpoint sidecar " + side_path.string());
    json side;
    try {
        side = json::parse(side_in);
    } catch (const json::exception& e) {
        throw ParseError(side_path.string(), 0, e.what());
    }

    Checkpoint ckpt;
    ckpt.params = EncoderParams::init(Architecture::from_json(side.at("architecture")), 0).zeros_like();
    ckpt.mask = MaskConfig::from_json(side.at("mask"));
    ckpt.rng_state = side.value("rng_state", std::string());
    ckpt.meta = side.value("meta", json::object());

    std::unordered_map<std::string, TensorRef> by_name;
    for (const auto& t : ckpt.params.all_tensors()) by_name.emplace(t.name, t);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    io::expect_magic(in, "DNN1", path.string());
    const auto version = io::read_pod<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = io::read_pod<std::uint32_t>(in, "tensor count");
    if (count != by_name.size()) {
        throw std::runtime_error(path.string() + ": checkpoint holds " + std::to_string(count) +
                                 " tensors, architecture expects " + std::to_string(by_name.size()));
    }
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name = io::read_string(in, "tensor name");
        const auto dtype = io::read_pod<std::uint8_t>(in, name);
        const auto rows = io::read_pod<std::uint64_t>(in, name);
        const auto cols = io::read_pod<std::uint64_t>(in, name);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error(path.string() + ": unexpected tensor " + name);
        auto m = it->second.map();
        if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
            throw std::runtime_error(path.string() + ": shape mismatch for tensor " + name);
        }
        if (dtype > 1) throw std::runtime_error(path.string() + ": unknown dtype for tensor " + name);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = dtype == 0 ? static_cast<double>(io::read_pod<float>(in, name)) : io::read_pod<double>(in, name);
            }
        by_name.erase(it);
    }
    return ckpt;
}

std::string checkpoint_hash(const std::filesystem::path& path) {
    const auto h = io::fnv1a(read_file(path));
    json side = json::parse(read_file(sidecar_path(path)));
    if (side.contains("meta")) {
        side["meta"].erase("factors");
        side["meta"].erase("content");
    }
    return io::hex64(io::fnv1a(side.dump(), h));
}

}  // namespace coldrec
