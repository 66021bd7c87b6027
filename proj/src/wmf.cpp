#include "coldrec/wmf.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Cholesky>
#include <spdlog/spdlog.h>

#include "coldrec/binary_io.hpp"
#include "coldrec/parallel.hpp"

namespace coldrec {

namespace fs = std::filesystem;
using nlohmann::json;

void WmfConfig::validate() const {
    if (rank < 1) throw std::invalid_argument("wmf rank must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("wmf lambda must be > 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("wmf alpha must be >= 0");
    if (sweeps < 1) throw std::invalid_argument("wmf sweeps must be >= 1");
    if (tolerance < 0.0) throw std::invalid_argument("wmf tolerance must be >= 0");
}

json WmfConfig::to_json() const {
    return json{{"rank", rank},
                {"lambda", lambda},
                {"alpha", alpha},
                {"sweeps", sweeps},
                {"seed", seed},
                {"tolerance", tolerance},
                {"confidence", confidence == ConfidenceMode::binary ? "binary" : "rating"}};
}

WmfConfig WmfConfig::from_json(const json& j) {
    WmfConfig c;
    c.rank = j.value("rank", c.rank);
    c.lambda = j.value("lambda", c.lambda);
    c.alpha = j.value("alpha", c.alpha);
    c.sweeps = j.value("sweeps", c.sweeps);
    c.seed = j.value("seed", c.seed);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.confidence = j.value("confidence", std::string("binary")) == "rating" ? ConfidenceMode::rating_scaled
                                                                             : ConfidenceMode::binary;
    return c;
}

namespace {

double confidence(const WmfConfig& cfg, double rating) {
    return cfg.confidence == ConfidenceMode::binary ? 1.0 + cfg.alpha : 1.0 + cfg.alpha * rating / 10.0;
}

// One half-sweep: re-solve every row of `target` holding `fixed` constant.
// `observed(row)` yields (column, rating) pairs for that row.
template <typename Observed>
void solve_rows(Matrix& target, const Matrix& fixed, const WmfConfig& cfg, Observed&& observed, const char* side) {
    const Eigen::Index h = fixed.cols();
    const Matrix gram = fixed.transpose() * fixed;
    parallel_for(static_cast<std::size_t>(target.rows()), cfg.threads, [&](std::size_t row) {
        Matrix A = gram;
        A.diagonal().array() += cfg.lambda;
        Vector b = Vector::Zero(h);
        observed(static_cast<Index>(row), [&](Index col, double rating) {
            const double c = confidence(cfg, rating);
            auto f = fixed.row(col).transpose();
            A.selfadjointView<Eigen::Lower>().rankUpdate(f, c - 1.0);
            b.noalias() += c * f;
        });
        Eigen::LLT<Matrix, Eigen::Lower> llt(A);
        if (llt.info() != Eigen::Success) {
            throw NumericalError(std::string("singular normal equations for ") + side + " row " + std::to_string(row) +
                                 "; increase lambda");
        }
        Vector x = llt.solve(b);
        if (!x.allFinite()) {
            throw NumericalError(std::string("non-finite solution for ") + side + " row " + std::to_string(row) +
                                 "; increase lambda");
        }
        target.row(static_cast<Eigen::Index>(row)) = x.transpose();
    });
}

}  // namespace

LatentFactors wmf_train(const PreferenceMatrix& prefs, const WmfConfig& cfg, std::vector<double>* loss_history) {
    cfg.validate();
    if (prefs.empty()) throw std::invalid_argument("wmf_train needs at least one observed interaction");

    const auto h = static_cast<Eigen::Index>(cfg.rank);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> init(-0.01, 0.01);
    LatentFactors f;
    f.U.resize(static_cast<Eigen::Index>(prefs.n_users()), h);
    f.V.resize(static_cast<Eigen::Index>(prefs.n_items()), h);
    for (Eigen::Index i = 0; i < f.U.size(); ++i) f.U.data()[i] = init(rng);
    for (Eigen::Index i = 0; i < f.V.size(); ++i) f.V.data()[i] = init(rng);

    const auto entries = prefs.entries();
    auto user_obs = [&](Index u, auto&& emit) {
        for (const auto& r : prefs.user_row(u)) emit(r.item, r.value);
    };
    auto item_obs = [&](Index v, auto&& emit) {
        for (std::size_t pos : prefs.item_column(v)) emit(entries[pos].user, entries[pos].value);
    };

    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
        solve_rows(f.U, f.V, cfg, user_obs, "user");
        solve_rows(f.V, f.U, cfg, item_obs, "item");
        const double loss = wmf_loss(prefs, f, cfg);
        if (!std::isfinite(loss)) throw NumericalError("wmf loss became non-finite");
        if (loss_history) loss_history->push_back(loss);
        spdlog::debug("wmf sweep {} loss {:.6f}", sweep + 1, loss);
        if (cfg.tolerance > 0.0 && std::isfinite(previous) && (previous - loss) <= cfg.tolerance * previous) break;
        previous = loss;
    }
    return f;
}

double wmf_loss(const PreferenceMatrix& prefs, const LatentFactors& factors, const WmfConfig& cfg) {
    if (factors.U.rows() != static_cast<Eigen::Index>(prefs.n_users()) ||
        factors.V.rows() != static_cast<Eigen::Index>(prefs.n_items()) || factors.U.cols() != factors.V.cols()) {
        throw std::invalid_argument("wmf_loss: factor shapes do not match the preference matrix");
    }
    // Unit-weight squared scores over every cell, then correct the observed cells.
    const Matrix gu = factors.U.transpose() * factors.U;
    const Matrix gv = factors.V.transpose() * factors.V;
    double loss = gu.cwiseProduct(gv).sum();
    for (const auto& r : prefs.entries()) {
        const double s = factors.U.row(r.user).dot(factors.V.row(r.item));
        const double c = confidence(cfg, r.value);
        loss += c * (1.0 - s) * (1.0 - s) - s * s;
    }
    return loss + cfg.lambda * (factors.U.squaredNorm() + factors.V.squaredNorm());
}

Vector mean_of_rows(std::span<const Index> rows, const Matrix& m) {
    if (rows.empty()) throw std::invalid_argument("mean_of_rows: empty row set");
    Vector acc = Vector::Zero(m.cols());
    for (Index r : rows) {
        if (r >= m.rows()) throw std::out_of_range("mean_of_rows: row index out of range");
        acc += m.row(r).transpose();
    }
    return acc / static_cast<double>(rows.size());
}

json ColumnStats::to_json() const {
    return json{{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                {"stddev", std::vector<double>(stddev.data(), stddev.data() + stddev.size())}};
}

ColumnStats ColumnStats::from_json(const json& j) {
    auto m = j.at("mean").get<std::vector<double>>();
    auto s = j.at("stddev").get<std::vector<double>>();
    ColumnStats st;
    st.mean = Eigen::Map<Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
    st.stddev = Eigen::Map<Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
    return st;
}

ColumnStats column_stats(const Matrix& m, std::span<const Index> rows) {
    ColumnStats st;
    st.mean = Vector::Zero(m.cols());
    st.stddev = Vector::Zero(m.cols());
    const double n = rows.empty() ? static_cast<double>(m.rows()) : static_cast<double>(rows.size());
    if (n == 0) return st;
    auto for_rows = [&](auto&& fn) {
        if (rows.empty()) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) fn(r);
        } else {
            for (Index r : rows) fn(static_cast<Eigen::Index>(r));
        }
    };
    for_rows([&](Eigen::Index r) { st.mean += m.row(r).transpose(); });
    st.mean /= n;
    Vector var = Vector::Zero(m.cols());
    for_rows([&](Eigen::Index r) { var += (m.row(r).transpose() - st.mean).array().square().matrix(); });
    st.stddev = (var / n).array().sqrt();
    // Columns whose spread is pure rounding noise are treated as constant.
    for (Eigen::Index c = 0; c < st.stddev.size(); ++c) {
        if (st.stddev[c] <= 1e-12 * std::max(1.0, std::abs(st.mean[c]))) st.stddev[c] = 0.0;
    }
    return st;
}

Vector apply_standardization(const Vector& row, const ColumnStats& stats) {
    Vector out(row.size());
    for (Eigen::Index c = 0; c < row.size(); ++c) {
        out[c] = stats.stddev[c] > 0.0 ? (row[c] - stats.mean[c]) / stats.stddev[c] : 0.0;
    }
    return out;
}

Matrix apply_standardization(const Matrix& m, const ColumnStats& stats) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (stats.stddev[c] > 0.0) {
            out.col(c) = (m.col(c).array() - stats.mean[c]) / stats.stddev[c];
        } else {
            out.col(c).setZero();
        }
    }
    return out;
}

StandardizedFactors standardize_factors(const LatentFactors& factors, std::span<const Index> user_rows,
                                        std::span<const Index> item_rows) {
    StandardizedFactors out;
    out.user_stats = column_stats(factors.U, user_rows);
    out.item_stats = column_stats(factors.V, item_rows);
    out.factors.U = apply_standardization(factors.U, out.user_stats);
    out.factors.V = apply_standardization(factors.V, out.item_stats);
    return out;
}

void write_wmf1(std::ostream& out, const Matrix& m) {
    io::write_magic(out, "WMF1");
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) io::write_pod<float>(out, static_cast<float>(m(r, c)));
}

Matrix read_wmf1(std::istream& in, const std::string& what) {
    io::expect_magic(in, "WMF1", what);
    auto rows = io::read_pod<std::uint64_t>(in, what);
    auto cols = io::read_pod<std::uint64_t>(in, what);
    if (rows > (1ull << 32) || cols > (1ull << 20)) throw std::runtime_error(what + ": implausible matrix shape");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<float> buf(cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(cols * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(cols * sizeof(float))) {
            throw std::runtime_error(what + ": truncated matrix data");
        }
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = buf[static_cast<std::size_t>(c)];
    }
    return m;
}

void save_factors(const fs::path& path, const LatentFactors& factors, const json& sidecar) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        write_wmf1(out, factors.U);
        write_wmf1(out, factors.V);
    }
    std::ofstream side(path.string() + ".json", std::ios::binary | std::ios::trunc);
    side << sidecar.dump(2) << '\n';
}

LatentFactors load_factors(const fs::path& path, json* sidecar) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    LatentFactors f;
    f.U = read_wmf1(in, path.string());
    f.V = read_wmf1(in, path.string());
    if (f.U.cols() != f.V.cols()) throw std::runtime_error(path.string() + ": U and V ranks differ");
    if (sidecar) {
        std::ifstream side(path.string() + ".json");
        *sidecar = side ? json::parse(side) : json::object();
    }
    return f;
}

}  // namespace coldrec
