#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldrec/common.hpp"
#include "coldrec/dataset.hpp"

namespace coldrec {

/// How observed entries are weighted: c = 1 + alpha (binary) or
/// c = 1 + alpha * rating / 10 (rating_scaled). Unobserved entries get c = 1.
enum class ConfidenceMode { binary, rating_scaled };

struct WmfConfig {
    std::size_t rank = 200;
    double lambda = 0.1;
    double alpha = 40.0;
    std::size_t sweeps = 15;
    std::uint64_t seed = 1;
    double tolerance = 1e-4;  // stop once the relative loss decrease falls below this; 0 runs every sweep
    ConfidenceMode confidence = ConfidenceMode::binary;
    std::size_t threads = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static WmfConfig from_json(const nlohmann::json& j);
};

struct LatentFactors {
    Matrix U;  // n_users x h
    Matrix V;  // n_items x h

    std::size_t rank() const { return static_cast<std::size_t>(U.cols()); }
};

/// Implicit-feedback weighted matrix factorization by alternating least squares.
/// Preference p = 1 on observed entries and 0 elsewhere. Each half-sweep solves
/// (V'V + sum_obs (c-1) v v' + lambda I) x = sum_obs c v per row, so the cost of
/// the unobserved mass is one shared Gramian. The loss after every sweep is
/// appended to `loss_history` when given.
LatentFactors wmf_train(const PreferenceMatrix& prefs, const WmfConfig& cfg,
                        std::vector<double>* loss_history = nullptr);

/// sum_{u,v} c_uv (p_uv - U_u.V_v)^2 + lambda (|U|^2 + |V|^2) over the full matrix.
double wmf_loss(const PreferenceMatrix& prefs, const LatentFactors& factors, const WmfConfig& cfg);

/// Mean of the selected rows. user_transform(V(u), V) approximates a missing
/// user factor; item_transform(U(v), U) is the same operation on U.
Vector mean_of_rows(std::span<const Index> rows, const Matrix& m);
inline Vector user_transform(std::span<const Index> items, const Matrix& V) { return mean_of_rows(items, V); }
inline Vector item_transform(std::span<const Index> users, const Matrix& U) { return mean_of_rows(users, U); }

struct ColumnStats {
    Vector mean;
    Vector stddev;  // population std; 0 marks a constant column

    nlohmann::json to_json() const;
    static ColumnStats from_json(const nlohmann::json& j);
};

/// Column statistics over the given rows (all rows when `rows` is empty).
ColumnStats column_stats(const Matrix& m, std::span<const Index> rows = {});
/// (x - mean) / std per column; constant columns map to 0.
Matrix apply_standardization(const Matrix& m, const ColumnStats& stats);
Vector apply_standardization(const Vector& row, const ColumnStats& stats);

struct StandardizedFactors {
    LatentFactors factors;
    ColumnStats user_stats;
    ColumnStats item_stats;
};

StandardizedFactors standardize_factors(const LatentFactors& factors, std::span<const Index> user_rows = {},
                                        std::span<const Index> item_rows = {});

/// Two consecutive WMF1 records (U then V): magic "WMF1", n_rows and n_cols as
/// little-endian u64, row-major f32 values. `sidecar` goes to <path>.json.
void save_factors(const std::filesystem::path& path, const LatentFactors& factors, const nlohmann::json& sidecar);
LatentFactors load_factors(const std::filesystem::path& path, nlohmann::json* sidecar = nullptr);

void write_wmf1(std::ostream& out, const Matrix& m);
Matrix read_wmf1(std::istream& in, const std::string& what);

}  // namespace coldrec
