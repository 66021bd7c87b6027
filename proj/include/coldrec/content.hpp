#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "coldrec/common.hpp"
#include "coldrec/dataset.hpp"

namespace coldrec {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Lowercases ASCII, splits on anything that is not alphanumeric (bytes >= 0x80
/// stay inside tokens so UTF-8 words survive), drops tokens shorter than
/// `min_length` and a fixed English stopword list.
struct TokenizerConfig {
    std::size_t min_length = 2;
    bool drop_stopwords = true;
};

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

struct TfidfModel {
    std::vector<std::string> vocabulary;  // column order
    std::unordered_map<std::string, Index> column;
    Vector idf;
    std::size_t n_documents = 0;
    TokenizerConfig tokenizer;

    std::size_t size() const { return vocabulary.size(); }
    nlohmann::json to_json() const;
    static TfidfModel from_json(const nlohmann::json& j);
};

/// Keeps the `max_features` terms with the highest document frequency (ties
/// broken lexicographically); idf = ln((1 + N) / (1 + df)) + 1.
TfidfModel fit_tfidf(std::span<const std::string> documents, std::size_t max_features,
                     const TokenizerConfig& tokenizer = {});

/// Rows are raw term counts times idf, L2-normalized; unknown terms are ignored
/// and documents without known terms encode as zero rows.
SparseRows encode_tfidf(const TfidfModel& model, std::span<const std::string> documents);

struct SvdProjector {
    Matrix components;       // d_vocab x c, orthonormal columns
    Vector singular_values;  // c, non-increasing

    std::size_t rank() const { return static_cast<std::size_t>(components.cols()); }
};

struct SvdOptions {
    std::size_t oversample = 10;
    std::size_t power_iterations = 6;
};

/// Top-c right singular vectors by a randomized range finder with power
/// iterations, followed by an exact SVD of the small projected matrix. When the
/// sketch covers min(n, d) the result is exact.
SvdProjector fit_svd(const SparseRows& matrix, std::size_t components, std::uint64_t seed, SvdOptions options = {});

enum class ContentSource { tfidf_svd, external };

struct ContentMatrix {
    Matrix vectors;                 // n_items x d_c
    std::vector<std::string> ids;   // row ids, may be empty for anonymous matrices
    ContentSource source = ContentSource::tfidf_svd;

    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
    std::size_t rows() const { return static_cast<std::size_t>(vectors.rows()); }
};

ContentMatrix project(const SvdProjector& projector, const SparseRows& rows);
ContentMatrix project(const SvdProjector& projector, const Matrix& rows);

/// Reads the text format (header `n d`, then `id v1 ... vd`) or the binary EMB1
/// format, detected by magic, and returns rows in `expected_items` order.
ContentMatrix load_external_embeddings(const std::filesystem::path& path, std::span<const std::string> expected_items);

void save_embeddings_text(const std::filesystem::path& path, const ContentMatrix& content);
/// EMB1: magic, n and d as u64, n length-prefixed ids, then row-major f32 values.
void save_embeddings_binary(const std::filesystem::path& path, const ContentMatrix& content);

/// Mean content vector of the basket items.
Vector basket_embed(std::span<const Index> basket, const ContentMatrix& content);

enum class DocumentField { synopsis, reviews, both };
DocumentField parse_document_field(std::string_view name);
std::string item_document(const ItemRecord& item, DocumentField field);

/// TF-IDF + SVD text encoder fitted on one set of documents and applied to any other.
struct TextEncoder {
    TfidfModel tfidf;
    SvdProjector svd;

    Matrix encode(std::span<const std::string> documents) const;
};

TextEncoder fit_text_encoder(std::span<const std::string> documents, std::size_t vocab, std::size_t components,
                             std::uint64_t seed);

}  // namespace coldrec
