#include "coldrec/content.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "coldrec/binary_io.hpp"

namespace coldrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::unordered_set<std::string_view>& stopwords() {
    static const std::unordered_set<std::string_view> words = {
        "a",    "an",   "and",  "are",  "as",    "at",    "be",   "been", "but",  "by",   "can",  "did",
        "do",   "does", "for",  "from", "had",   "has",   "have", "he",   "her",  "his",  "how",  "if",
        "in",   "into", "is",   "it",   "its",   "of",    "on",   "or",   "our",  "she",  "so",   "than",
        "that", "the",  "their", "them", "then", "there", "these", "they", "this", "to",  "too",  "was",
        "we",   "were", "what", "when", "which", "who",   "will", "with", "you",  "your", "not",  "no"};
    return words;
}

bool is_token_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

Matrix orthonormal_basis(const Matrix& y) {
    Eigen::HouseholderQR<Matrix> qr(y);
    return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (current.size() >= cfg.min_length && !(cfg.drop_stopwords && stopwords().count(current))) {
            tokens.push_back(current);
        }
        current.clear();
    };
    for (unsigned char c : text) {
        if (is_token_byte(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else if (!current.empty()) {
            flush();
        }
    }
    if (!current.empty()) flush();
    return tokens;
}

json TfidfModel::to_json() const {
    return json{{"vocabulary", vocabulary},
                {"idf", std::vector<double>(idf.data(), idf.data() + idf.size())},
                {"n_documents", n_documents},
                {"min_length", tokenizer.min_length},
                {"drop_stopwords", tokenizer.drop_stopwords}};
}

TfidfModel TfidfModel::from_json(const json& j) {
    TfidfModel m;
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    auto idf = j.at("idf").get<std::vector<double>>();
    m.idf = Eigen::Map<Vector>(idf.data(), static_cast<Eigen::Index>(idf.size()));
    m.n_documents = j.at("n_documents").get<std::size_t>();
    m.tokenizer.min_length = j.value("min_length", std::size_t{2});
    m.tokenizer.drop_stopwords = j.value("drop_stopwords", true);
    for (Index k = 0; k < m.vocabulary.size(); ++k) m.column.emplace(m.vocabulary[k], k);
    return m;
}

TfidfModel fit_tfidf(std::span<const std::string> documents, std::size_t max_features, const TokenizerConfig& tokenizer) {
    if (max_features == 0) throw std::invalid_argument("fit_tfidf: max_features must be >= 1");
    std::map<std::string, std::size_t> df;
    for (const auto& doc : documents) {
        auto tokens = tokenize(doc, tokenizer);
        std::sort(tokens.begin(), tokens.end());
        tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
        for (auto& t : tokens) ++df[t];
    }
    if (df.empty()) throw std::invalid_argument("fit_tfidf: corpus has no usable tokens");

    std::vector<std::pair<std::string, std::size_t>> terms(df.begin(), df.end());
    std::stable_sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (terms.size() > max_features) terms.resize(max_features);

    TfidfModel m;
    m.tokenizer = tokenizer;
    m.n_documents = documents.size();
    m.idf.resize(static_cast<Eigen::Index>(terms.size()));
    const double n = static_cast<double>(documents.size());
    for (Index k = 0; k < terms.size(); ++k) {
        m.vocabulary.push_back(terms[k].first);
        m.column.emplace(terms[k].first, k);
        m.idf[k] = std::log((1.0 + n) / (1.0 + static_cast<double>(terms[k].second))) + 1.0;
    }
    return m;
}

SparseRows encode_tfidf(const TfidfModel& model, std::span<const std::string> documents) {
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t row = 0; row < documents.size(); ++row) {
        std::map<Index, double> counts;
        for (const auto& t : tokenize(documents[row], model.tokenizer)) {
            auto it = model.column.find(t);
            if (it != model.column.end()) counts[it->second] += 1.0;
        }
        double norm2 = 0.0;
        for (auto& [col, v] : counts) {
            v *= model.idf[col];
            norm2 += v * v;
        }
        if (norm2 == 0.0) continue;
        const double inv = 1.0 / std::sqrt(norm2);
        for (const auto& [col, v] : counts) {
            triplets.emplace_back(static_cast<int>(row), static_cast<int>(col), v * inv);
        }
    }
    SparseRows m(static_cast<Eigen::Index>(documents.size()), static_cast<Eigen::Index>(model.size()));
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    return m;
}

SvdProjector fit_svd(const SparseRows& a, std::size_t components, std::uint64_t seed, SvdOptions options) {
    const auto n = static_cast<std::size_t>(a.rows());
    const auto d = static_cast<std::size_t>(a.cols());
    if (components == 0 || components > std::min(n, d)) {
        throw std::invalid_argument("fit_svd: components " + std::to_string(components) + " exceeds min(n, d) = " +
                                    std::to_string(std::min(n, d)));
    }
    const auto sketch = static_cast<Eigen::Index>(std::min(components + options.oversample, std::min(n, d)));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix omega(a.cols(), sketch);
    for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = gauss(rng);

    Matrix q = orthonormal_basis(a * omega);
    for (std::size_t it = 0; it < options.power_iterations; ++it) {
        Matrix z = orthonormal_basis(a.transpose() * q);
        q = orthonormal_basis(a * z);
    }
    Matrix b = (a.transpose() * q).transpose();  // sketch x d
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinV);

    SvdProjector p;
    const auto c = static_cast<Eigen::Index>(components);
    p.components = svd.matrixV().leftCols(c);
    p.singular_values = svd.singularValues().head(c);
    // Deterministic sign: the largest-magnitude entry of each component is positive.
    for (Eigen::Index k = 0; k < c; ++k) {
        Eigen::Index arg = 0;
        p.components.col(k).cwiseAbs().maxCoeff(&arg);
        if (p.components(arg, k) < 0.0) p.components.col(k) *= -1.0;
    }
    return p;
}

ContentMatrix project(const SvdProjector& projector, const SparseRows& rows) {
    if (rows.cols() != projector.components.rows()) {
        throw std::invalid_argument("project: input has " + std::to_string(rows.cols()) + " columns, projector expects " +
                                    std::to_string(projector.components.rows()));
    }
    ContentMatrix out;
    out.vectors = rows * projector.components;
    return out;
}

ContentMatrix project(const SvdProjector& projector, const Matrix& rows) {
    if (rows.cols() != projector.components.rows()) {
        throw std::invalid_argument("project: input has " + std::to_string(rows.cols()) + " columns, projector expects " +
                                    std::to_string(projector.components.rows()));
    }
    ContentMatrix out;
    out.vectors = rows * projector.components;
    return out;
}

namespace {

ContentMatrix read_text_embeddings(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing `n d` header");
    std::size_t n = 0, d = 0;
    {
        std::istringstream header(line);
        if (!(header >> n >> d)) throw ParseError(path.string(), 1, "malformed `n d` header");
    }
    ContentMatrix out;
    out.source = ContentSource::external;
    out.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::size_t row = 0;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (row >= n) throw ParseError(path.string(), lineno, "more rows than declared");
        std::istringstream fields(line);
        std::string id;
        fields >> id;
        std::vector<double> values;
        double v;
        while (fields >> v) values.push_back(v);
        if (!fields.eof()) throw ParseError(path.string(), lineno, "non-numeric value");
        if (values.size() != d) {
            throw ParseError(path.string(), lineno,
                             "expected " + std::to_string(d) + " values, got " + std::to_string(values.size()));
        }
        for (std::size_t k = 0; k < d; ++k) {
            if (!std::isfinite(values[k])) throw ParseError(path.string(), lineno, "non-finite value");
            out.vectors(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) = values[k];
        }
        out.ids.push_back(id);
        ++row;
    }
    if (row != n) throw ParseError(path.string(), 0, "declared " + std::to_string(n) + " rows, found " + std::to_string(row));
    return out;
}

ContentMatrix read_binary_embeddings(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string what = path.string();
    io::expect_magic(in, "EMB1", what);
    auto n = io::read_pod<std::uint64_t>(in, what);
    auto d = io::read_pod<std::uint64_t>(in, what);
    if (n > (1ull << 32) || d > (1ull << 20)) throw std::runtime_error(what + ": implausible shape");
    ContentMatrix out;
    out.source = ContentSource::external;
    for (std::uint64_t i = 0; i < n; ++i) out.ids.push_back(io::read_string(in, what));
    out.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < out.vectors.rows(); ++r)
        for (Eigen::Index c = 0; c < out.vectors.cols(); ++c) out.vectors(r, c) = io::read_pod<float>(in, what);
    return out;
}

}  // namespace

ContentMatrix load_external_embeddings(const fs::path& path, std::span<const std::string> expected_items) {
    bool binary = false;
    {
        std::ifstream probe(path, std::ios::binary);
        if (!probe) throw std::runtime_error("cannot open " + path.string());
        char magic[4] = {};
        probe.read(magic, 4);
        binary = probe.gcount() == 4 && std::string_view(magic, 4) == "EMB1";
    }
    ContentMatrix raw = binary ? read_binary_embeddings(path) : read_text_embeddings(path);
    std::unordered_map<std::string, Eigen::Index> row_of;
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(raw.ids.size()); ++r) row_of.emplace(raw.ids[r], r);

    ContentMatrix out;
    out.source = binary ? raw.source : ContentSource::external;
    out.vectors.resize(static_cast<Eigen::Index>(expected_items.size()), raw.vectors.cols());
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(expected_items.size()); ++i) {
        auto it = row_of.find(expected_items[i]);
        if (it == row_of.end()) {
            throw std::runtime_error(path.string() + ": no embedding for item '" + expected_items[i] + "'");
        }
        out.vectors.row(i) = raw.vectors.row(it->second);
    }
    out.ids.assign(expected_items.begin(), expected_items.end());
    return out;
}

void save_embeddings_text(const fs::path& path, const ContentMatrix& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content.vectors.rows() << ' ' << content.vectors.cols() << '\n';
    char buf[64];
    for (Eigen::Index r = 0; r < content.vectors.rows(); ++r) {
        out << (r < static_cast<Eigen::Index>(content.ids.size()) ? content.ids[r] : std::to_string(r));
        for (Eigen::Index c = 0; c < content.vectors.cols(); ++c) {
            auto res = std::to_chars(buf, buf + sizeof(buf), content.vectors(r, c));
            out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
}

void save_embeddings_binary(const fs::path& path, const ContentMatrix& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    io::write_magic(out, "EMB1");
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(content.vectors.rows()));
    io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(content.vectors.cols()));
    for (Eigen::Index r = 0; r < content.vectors.rows(); ++r) {
        io::write_string(out, r < static_cast<Eigen::Index>(content.ids.size()) ? content.ids[r] : std::to_string(r));
    }
    for (Eigen::Index r = 0; r < content.vectors.rows(); ++r)
        for (Eigen::Index c = 0; c < content.vectors.cols(); ++c)
            io::write_pod<float>(out, static_cast<float>(content.vectors(r, c)));
}

Vector basket_embed(std::span<const Index> basket, const ContentMatrix& content) {
    if (basket.empty()) throw std::invalid_argument("basket_embed: empty basket");
    Vector acc = Vector::Zero(content.vectors.cols());
    for (Index v : basket) {
        if (v >= content.vectors.rows()) throw std::out_of_range("basket_embed: item index out of range");
        acc += content.vectors.row(v).transpose();
    }
    return acc / static_cast<double>(basket.size());
}

DocumentField parse_document_field(std::string_view name) {
    if (name == "synopsis") return DocumentField::synopsis;
    if (name == "reviews") return DocumentField::reviews;
    if (name == "both") return DocumentField::both;
    throw std::invalid_argument("unknown document field '" + std::string(name) + "'");
}

std::string item_document(const ItemRecord& item, DocumentField field) {
    switch (field) {
        case DocumentField::synopsis: return item.synopsis;
        case DocumentField::reviews: return item.reviews_text;
        case DocumentField::both: return item.synopsis + "\n" + item.reviews_text;
    }
    return {};
}

Matrix TextEncoder::encode(std::span<const std::string> documents) const {
    return project(svd, encode_tfidf(tfidf, documents)).vectors;
}

TextEncoder fit_text_encoder(std::span<const std::string> documents, std::size_t vocab, std::size_t components,
                             std::uint64_t seed) {
    TextEncoder enc;
    enc.tfidf = fit_tfidf(documents, vocab);
    enc.svd = fit_svd(encode_tfidf(enc.tfidf, documents), components, seed);
    return enc;
}

}  // namespace coldrec
