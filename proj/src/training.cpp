#include "coldrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace coldrec {

using json = nlohmann::json;

BaselineMode parse_baseline_mode(const std::string& name) {
    if (name == "deepnaninet") return BaselineMode::deepnaninet;
    if (name == "dropoutnet") return BaselineMode::dropoutnet;
    throw std::invalid_argument("unknown baseline '" + name + "' (expected deepnaninet or dropoutnet)");
}

std::string to_string(BaselineMode mode) { return mode == BaselineMode::dropoutnet ? "dropoutnet" : "deepnaninet"; }

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be > 0");
    if (batch_users == 0) throw std::invalid_argument("batch_users must be positive");
    if (items_per_user == 0) throw std::invalid_argument("items_per_user must be positive");
    if (!(negative_ratio >= 0.0)) throw std::invalid_argument("negative ratio must be >= 0");
    if (!(corrupt_rate >= 0.0 && corrupt_rate <= 1.0)) throw std::invalid_argument("corrupt_rate must lie in [0, 1]");
    if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence_factor must be > 1");
    mask.validate();
}

json TrainConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"lr_decay", lr_decay},
            {"batch_users", batch_users},
            {"items_per_user", items_per_user},
            {"negative_ratio", negative_ratio},
            {"epochs", epochs},
            {"mask", mask.to_json()},
            {"baseline", coldrec::to_string(baseline)},
            {"corrupt_rate", corrupt_rate},
            {"seed", seed},
            {"deterministic", deterministic},
            {"divergence_factor", divergence_factor}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.batch_users = j.value("batch_users", c.batch_users);
    c.items_per_user = j.value("items_per_user", c.items_per_user);
    c.negative_ratio = j.value("negative_ratio", c.negative_ratio);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("mask")) c.mask = MaskConfig::from_json(j.at("mask"));
    c.baseline = parse_baseline_mode(j.value("baseline", std::string("deepnaninet")));
    c.corrupt_rate = j.value("corrupt_rate", c.corrupt_rate);
    c.seed = j.value("seed", c.seed);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

namespace {

struct Unit {
    Index user = 0;
    std::vector<Index> positives;
    std::vector<Index> negatives;
};

}  // namespace

std::vector<Batch> sample_epoch_batches(const PreferenceMatrix& prefs, std::span<const Index> item_pool,
                                        const TrainConfig& cfg, std::mt19937_64& rng) {
    if (item_pool.empty()) throw std::invalid_argument("empty training item pool");
    std::vector<char> in_pool(prefs.n_items(), 0);
    for (Index v : item_pool) in_pool.at(v) = 1;
    std::uniform_int_distribution<std::size_t> pick(0, item_pool.size() - 1);

    std::vector<Unit> units;
    std::size_t starved = 0;
    for (Index u = 0; u < prefs.n_users(); ++u) {
        std::vector<Index> pos;
        for (const auto& r : prefs.user_row(u))
            if (in_pool[r.item]) pos.push_back(r.item);
        if (pos.empty()) continue;
        std::shuffle(pos.begin(), pos.end(), rng);

        const std::size_t n_candidates = item_pool.size() - pos.size();
        std::vector<Index> explicit_candidates;
        if (n_candidates > 0 && n_candidates * 10 < item_pool.size()) {
            for (Index v : item_pool)
                if (prefs.rating(u, v) == 0.0) explicit_candidates.push_back(v);
        }
        if (n_candidates == 0) ++starved;

        std::size_t seen = 0, emitted = 0;
        for (std::size_t lo = 0; lo < pos.size(); lo += cfg.items_per_user) {
            Unit unit;
            unit.user = u;
            const std::size_t hi = std::min(pos.size(), lo + cfg.items_per_user);
            unit.positives.assign(pos.begin() + static_cast<std::ptrdiff_t>(lo),
                                  pos.begin() + static_cast<std::ptrdiff_t>(hi));
            seen += hi - lo;
            const auto want = static_cast<std::size_t>(std::floor(cfg.negative_ratio * static_cast<double>(seen) + 1e-9));
            if (n_candidates > 0) {
                for (; emitted < want; ++emitted) {
                    if (!explicit_candidates.empty()) {
                        std::uniform_int_distribution<std::size_t> d(0, explicit_candidates.size() - 1);
                        unit.negatives.push_back(explicit_candidates[d(rng)]);
                        continue;
                    }
                    Index v;
                    do {
                        v = item_pool[pick(rng)];
                    } while (prefs.rating(u, v) != 0.0);
                    unit.negatives.push_back(v);
                }
            }
            units.push_back(std::move(unit));
        }
    }
    if (units.empty()) throw std::invalid_argument("training fold has no positive interactions");
    if (starved > 0) spdlog::warn("{} users rated every pool item and are sampled without negatives", starved);

    std::shuffle(units.begin(), units.end(), rng);
    std::vector<Batch> batches;
    // A short trailing batch joins the previous one; batch norm degenerates on a few users.
    std::size_t n_batches = (units.size() + cfg.batch_users - 1) / cfg.batch_users;
    if (n_batches > 1 && units.size() % cfg.batch_users != 0 && units.size() % cfg.batch_users < cfg.batch_users / 2) {
        --n_batches;
    }
    for (std::size_t i = 0; i < n_batches; ++i) {
        const std::size_t lo = i * cfg.batch_users;
        const std::size_t hi = i + 1 == n_batches ? units.size() : lo + cfg.batch_users;
        Batch b;
        for (std::size_t k = lo; k < hi; ++k) {
            for (Index v : units[k].positives) b.push_back({units[k].user, v, true});
            for (Index v : units[k].negatives) b.push_back({units[k].user, v, false});
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

PreparedBatch prepare_batch(const Batch& batch, const TrainingData& data, const TrainConfig& cfg,
                            std::mt19937_64& rng) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const ModelInputs& in = *data.inputs;
    const auto n = static_cast<Eigen::Index>(batch.size());
    const bool dropoutnet = cfg.baseline == BaselineMode::dropoutnet;
    const auto& m = cfg.mask;
    std::bernoulli_distribution user_drop(m.user_drop_p), item_drop(m.item_drop_p), transform(m.user_transform_p);

    PreparedBatch p;
    p.targets.resize(n);
    p.user_pref.resize(n, data.U_input.cols());
    p.user_content.resize(n, in.user_content.cols());
    p.item_pref.resize(n, in.V().cols());
    p.item_content.resize(n, in.item_content.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto [u, v, positive] = batch[static_cast<std::size_t>(i)];
        p.users.push_back(u);
        p.items.push_back(v);
        p.targets[i] = in.U().row(u).dot(in.V().row(v));

        if (user_drop(rng)) {
            p.user_pref.row(i) =
                apply_mask(data.U_input.row(u).transpose(), m.mode, {m.rate, m.user_mean, m.user_std}, rng).transpose();
        } else if (dropoutnet && transform(rng)) {
            p.user_pref.row(i) = in.user_transform.row(u);
        } else {
            p.user_pref.row(i) = data.U_input.row(u);
        }
        if (dropoutnet) p.user_content.row(i).setZero();
        else p.user_content.row(i) = in.user_content.row(u);

        if (item_drop(rng)) {
            p.item_pref.row(i) =
                apply_mask(in.V().row(v).transpose(), m.mode, {m.rate, m.item_mean, m.item_std}, rng).transpose();
        } else if (dropoutnet && transform(rng)) {
            p.item_pref.row(i) = in.item_transform.row(v);
        } else {
            p.item_pref.row(i) = in.V().row(v);
        }
        p.item_content.row(i) = in.item_content.row(v);
    }
    return p;
}

LossResult loss_and_gradients(EncoderParams& params, const PreparedBatch& batch, const GraphContext& graph,
                              double grad_scale, bool update_running) {
    const auto& arch = params.arch;
    const auto n = static_cast<Eigen::Index>(batch.items.size());
    const auto gw = static_cast<Eigen::Index>(arch.graph_width());

    Matrix g_all;
    GcnCache gcn_cache;
    GineCache gine_cache;
    if (arch.graph == GraphKind::gcn) {
        if (!graph.adjacency || !graph.node_features) throw std::invalid_argument("gcn requires a graph");
        g_all = gcn_forward(*graph.adjacency, *graph.node_features, params.gcn, &gcn_cache);
    } else if (arch.graph == GraphKind::gine) {
        if (!graph.graph || !graph.node_features || !graph.edge_features) {
            throw std::invalid_argument("gine requires a graph with edge features");
        }
        g_all = gine_forward(*graph.graph, *graph.node_features, *graph.edge_features, params.gine, &gine_cache);
    }

    Matrix item_content = batch.item_content;
    if (gw > 0) {
        item_content.conservativeResize(n, batch.item_content.cols() + gw);
        for (Eigen::Index i = 0; i < n; ++i) item_content.row(i).tail(gw) = g_all.row(batch.items[i]);
    }

    TowerCache uc, ic;
    const Matrix uhat = tower_forward(params.user, arch, batch.user_pref, batch.user_content, true, &uc, update_running);
    const Matrix vhat = tower_forward(params.item, arch, batch.item_pref, item_content, true, &ic, update_running);

    LossResult res;
    res.predictions = uhat.cwiseProduct(vhat).rowwise().sum();
    const Vector resid = res.predictions - batch.targets;
    res.loss = resid.squaredNorm();

    res.grad = params.zeros_like();
    const Vector d_pred = 2.0 * grad_scale * resid;
    const Matrix d_uhat = d_pred.asDiagonal() * vhat;
    const Matrix d_vhat = d_pred.asDiagonal() * uhat;
    tower_backward(params.user, arch, uc, d_uhat, res.grad.user);
    Matrix d_content;
    tower_backward(params.item, arch, ic, d_vhat, res.grad.item, gw > 0 ? &d_content : nullptr);

    if (gw > 0) {
        Matrix d_g = Matrix::Zero(g_all.rows(), gw);
        for (Eigen::Index i = 0; i < n; ++i) d_g.row(batch.items[i]) += d_content.row(i).tail(gw);
        if (arch.graph == GraphKind::gcn) gcn_backward(*graph.adjacency, params.gcn, gcn_cache, d_g, res.grad.gcn);
        else gine_backward(*graph.graph, *graph.edge_features, params.gine, gine_cache, d_g, res.grad.gine);
    }
    return res;
}

LossResult batch_loss(const Batch& batch, const TrainingData& data, EncoderParams& params, const TrainConfig& cfg,
                      std::mt19937_64& rng) {
    return loss_and_gradients(params, prepare_batch(batch, data, cfg, rng), data.inputs->graph_context());
}

Matrix corrupt_factors(const Matrix& U, double rate, std::mt19937_64& rng, std::size_t* n_corrupted) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("corruption rate must lie in [0, 1]");
    Matrix out = U;
    if (n_corrupted) *n_corrupted = 0;
    if (U.size() == 0) return out;
    const double mean = U.mean();
    const double stddev = std::sqrt((U.array() - mean).square().mean());
    std::bernoulli_distribution hit(rate);
    std::normal_distribution<double> noise(mean, stddev);
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
        if (!hit(rng)) continue;
        for (Eigen::Index c = 0; c < U.cols(); ++c) out(r, c) += noise(rng);
        if (n_corrupted) ++*n_corrupted;
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::pair<double, double> moments(const Matrix& m, std::span<const Index> rows) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (Index r : rows) {
        sum += m.row(r).sum();
        sq += m.row(r).squaredNorm();
        count += static_cast<std::size_t>(m.cols());
    }
    if (count == 0) return {0.0, 1.0};
    const double mean = sum / static_cast<double>(count);
    return {mean, std::sqrt(std::max(0.0, sq / static_cast<double>(count) - mean * mean))};
}

std::string rng_string(const std::mt19937_64& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

}  // namespace

TrainResult train(const ModelInputs& inputs, const Bundle& bundle, const Architecture& arch, const TrainConfig& cfg_in,
                  const ValidationFn& validate, const std::filesystem::path& log_path) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    if (bundle.train_prefs.empty()) throw std::invalid_argument("training fold is empty");

    const auto users = bundle.factorized_users();
    std::tie(cfg.mask.user_mean, cfg.mask.user_std) = moments(inputs.U(), users);
    std::tie(cfg.mask.item_mean, cfg.mask.item_std) = moments(inputs.V(), bundle.split.train);

    std::mt19937_64 sample_rng(cfg.seed);
    std::mt19937_64 mask_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::mt19937_64 corrupt_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);

    TrainingData data{&inputs, inputs.U()};
    if (cfg.corrupt_rate > 0.0) {
        std::size_t hit = 0;
        data.U_input = corrupt_factors(inputs.U(), cfg.corrupt_rate, corrupt_rng, &hit);
        spdlog::info("corrupted {} of {} user factor rows", hit, data.U_input.rows());
    }

    TrainResult result;
    result.params = EncoderParams::init(arch, cfg.seed);
    auto& params = result.params;
    const auto ctx = inputs.graph_context();

    std::ofstream log_file;
    if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw std::runtime_error("cannot write training log " + log_path.string());
    }
    auto emit = [&](json line) {
        if (log_file) log_file << line.dump() << "\n";
        result.log.push_back(std::move(line));
    };

    double lr = cfg.learning_rate;
    std::size_t step = 0;
    bool have_initial = false;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto batches = sample_epoch_batches(bundle.train_prefs, bundle.split.train, cfg, sample_rng);
        double epoch_loss = 0.0;
        std::size_t epoch_examples = 0;
        for (const auto& batch : batches) {
            const auto prepared = prepare_batch(batch, data, cfg, mask_rng);
            const double n = static_cast<double>(batch.size());
            auto res = loss_and_gradients(params, prepared, ctx, 1.0 / n, true);
            const double mean_loss = res.loss / n;
            if (!std::isfinite(mean_loss)) {
                std::string where = params.first_non_finite();
                if (where.empty()) where = res.grad.first_non_finite();
                if (where.empty()) where = "predictions";
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step) + "; first non-finite tensor: " + where);
            }
            if (!have_initial) {
                result.initial_loss = mean_loss;
                have_initial = true;
            } else if (mean_loss > cfg.divergence_factor * result.initial_loss && result.initial_loss > 0.0) {
                throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                                     std::to_string(mean_loss) + " vs initial " + std::to_string(result.initial_loss) +
                                     "); lower the learning rate");
            }
            auto p = params.trainable();
            const auto g = res.grad.trainable();
            for (std::size_t k = 0; k < p.size(); ++k) p[k].map() -= lr * g[k].map();

            epoch_loss += res.loss;
            epoch_examples += batch.size();
            emit({{"epoch", epoch}, {"step", step}, {"loss", mean_loss}, {"lr", lr}});
            ++step;
        }
        result.final_epoch_loss = epoch_loss / static_cast<double>(epoch_examples);
        json summary = {{"epoch", epoch}, {"step", step}, {"loss", result.final_epoch_loss}, {"lr", lr},
                        {"summary", true}};
        if (validate) summary["val_metric"] = validate(params);
        spdlog::info("epoch {} loss {:.6g} lr {:.4g}{}", epoch, result.final_epoch_loss, lr,
                     summary.contains("val_metric")
                         ? fmt::format(" val {:.4f}", summary["val_metric"].get<double>())
                         : std::string());
        emit(std::move(summary));
        lr *= cfg.lr_decay;
    }
    result.mask = cfg.mask;
    result.rng_state = rng_string(mask_rng);
    return result;
}

}  // namespace coldrec
