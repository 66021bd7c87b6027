#include <gtest/gtest.h>

#include <map>

#include <Eigen/SVD>

#include "coldrec/content.hpp"
#include "support.hpp"

using namespace coldrec;
using testing_support::random_matrix;
using testing_support::TempDir;

namespace {

std::vector<std::string> random_docs(std::size_t n, std::uint64_t seed) {
    static const std::vector<std::string> words{"alpha", "beta",  "gamma", "delta", "omega", "sigma", "kappa",
                                                "rho",   "tau",   "phi",   "chi",   "psi",   "zeta",  "eta"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(0, 12), pick(0, words.size() - 1);
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < n; ++i) {
        std::string d;
        for (std::size_t k = len(rng); k > 0; --k) d += words[pick(rng)] + (k % 3 ? " " : ", ");
        docs.push_back(d);
    }
    return docs;
}

SparseRows to_sparse(const Matrix& m) { return m.sparseView(); }

}  // namespace

TEST(Tokenize, LowercaseSplitAndFilter) {
    const auto t = tokenize("Hello, WORLD! a the x42 of-Mice");
    EXPECT_EQ(t, (std::vector<std::string>{"hello", "world", "x42", "mice"}));
    TokenizerConfig keep;
    keep.drop_stopwords = false;
    keep.min_length = 1;
    EXPECT_EQ(tokenize("a the", keep), (std::vector<std::string>{"a", "the"}));
}

TEST(Tfidf, MatchesBruteForce) {
    const auto docs = random_docs(40, 7);
    const std::size_t max_features = 10;
    const TfidfModel model = fit_tfidf(docs, max_features);

    // Independent vocabulary and idf.
    std::map<std::string, std::size_t> df;
    std::vector<std::map<std::string, double>> tf(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (const auto& w : tokenize(docs[d])) tf[d][w] += 1.0;
        for (const auto& [w, c] : tf[d]) ++df[w];
    }
    std::vector<std::pair<std::string, std::size_t>> terms(df.begin(), df.end());
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    terms.resize(std::min(terms.size(), max_features));
    ASSERT_EQ(model.size(), terms.size());
    std::set<std::string> expected_vocab, got_vocab(model.vocabulary.begin(), model.vocabulary.end());
    for (const auto& t : terms) expected_vocab.insert(t.first);
    EXPECT_EQ(got_vocab, expected_vocab);

    const SparseRows enc = encode_tfidf(model, docs);
    const Matrix dense(enc);
    const double n = static_cast<double>(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::map<std::string, double> w;
        double norm = 0.0;
        for (const auto& [term, dfc] : terms) {
            const auto it = tf[d].find(term);
            if (it == tf[d].end()) continue;
            w[term] = it->second * (std::log((1.0 + n) / (1.0 + static_cast<double>(dfc))) + 1.0);
            norm += w[term] * w[term];
        }
        norm = std::sqrt(norm);
        for (const auto& term : model.vocabulary) {
            const double want = w.count(term) ? w[term] / norm : 0.0;
            EXPECT_NEAR(dense(static_cast<Eigen::Index>(d), model.column.at(term)), want, 1e-9);
        }
    }
}

TEST(Tfidf, RowNormsZeroOrOne) {
    const auto docs = random_docs(60, 3);
    const TfidfModel model = fit_tfidf(docs, 6);
    std::vector<std::string> probe = random_docs(30, 4);
    probe.push_back("");
    probe.push_back("unseen words only");
    const SparseRows enc = encode_tfidf(model, probe);
    for (Eigen::Index r = 0; r < enc.rows(); ++r) {
        const double nrm = enc.row(r).norm();
        EXPECT_TRUE(nrm == 0.0 || std::abs(nrm - 1.0) < 1e-9) << nrm;
    }
    EXPECT_EQ(enc.row(enc.rows() - 1).norm(), 0.0);
}

TEST(Svd, ExactRankThree) {
    std::mt19937_64 rng(1);
    const Matrix M = random_matrix(30, 3, rng) * random_matrix(3, 20, rng);
    const SvdProjector p = fit_svd(to_sparse(M), 3, 5);
    ASSERT_EQ(p.rank(), 3u);
    const Matrix recon = M * p.components * p.components.transpose();
    EXPECT_LT((recon - M).norm() / M.norm(), 1e-6);
}

TEST(Svd, RankOneDirection) {
    std::mt19937_64 rng(2);
    const Vector u = testing_support::random_vector(15, rng), v = testing_support::random_vector(9, rng);
    const Matrix M = u * v.transpose();
    const SvdProjector p = fit_svd(to_sparse(M), 1, 3);
    const double cosine = std::abs(p.components.col(0).dot(v)) / v.norm();
    EXPECT_GT(cosine, 1.0 - 1e-6);
}

TEST(Svd, OrthonormalSortedAndNearExact) {
    std::mt19937_64 rng(4);
    Matrix M = random_matrix(80, 40, rng);
    for (Eigen::Index i = 0; i < M.size(); ++i)
        if (std::abs(M.data()[i]) < 0.8) M.data()[i] = 0.0;
    const std::size_t c = 6;
    const SvdProjector p = fit_svd(to_sparse(M), c, 9);
    const Matrix gram = p.components.transpose() * p.components;
    EXPECT_LT((gram - Matrix::Identity(c, c)).cwiseAbs().maxCoeff(), 1e-6);
    for (Eigen::Index i = 1; i < p.singular_values.size(); ++i) EXPECT_LE(p.singular_values[i], p.singular_values[i - 1]);

    Eigen::JacobiSVD<Matrix> exact(M, Eigen::ComputeThinV);
    const Matrix Vc = exact.matrixV().leftCols(c);
    const double best = (M - M * Vc * Vc.transpose()).norm();
    const double got = (M - M * p.components * p.components.transpose()).norm();
    EXPECT_LE(got, best * (1.0 + 1e-3));
    for (std::size_t i = 0; i < c; ++i)
        EXPECT_NEAR(p.singular_values[i], exact.singularValues()[i], 1e-3 * exact.singularValues()[0]);
}

TEST(Project, IdentityZeroAndDense) {
    SvdProjector id;
    id.components = Matrix::Identity(4, 4);
    id.singular_values = Vector::Ones(4);
    std::mt19937_64 rng(5);
    Matrix x = random_matrix(3, 4, rng);
    x.row(1).setZero();
    EXPECT_EQ(project(id, x).vectors, x);
    EXPECT_TRUE(project(id, x).vectors.row(1).isZero());

    SvdProjector p;
    p.components = random_matrix(4, 2, rng);
    const Matrix got = project(p, to_sparse(x)).vectors;
    for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < 2; ++c) {
            double s = 0.0;
            for (Eigen::Index k = 0; k < 4; ++k) s += x(r, k) * p.components(k, c);
            EXPECT_NEAR(got(r, c), s, 1e-12);
        }
    EXPECT_THROW(project(p, Matrix(Matrix::Zero(2, 5))), std::invalid_argument);
}

TEST(Embeddings, TextFileThreeItems) {
    TempDir dir("emb");
    testing_support::spit(dir / "e.txt", "3 4\nb 1 2 3 4\na 0.5 0 0 -1\nc 9 9 9 9\n");
    const std::vector<std::string> ids{"a", "b", "c"};
    const ContentMatrix m = load_external_embeddings(dir / "e.txt", ids);
    ASSERT_EQ(m.rows(), 3u);
    ASSERT_EQ(m.dim(), 4u);
    EXPECT_EQ(m.vectors(0, 0), 0.5);
    EXPECT_EQ(m.vectors(1, 3), 4.0);
    EXPECT_EQ(m.source, ContentSource::external);

    const std::vector<std::string> more{"a", "b", "missing_item"};
    try {
        load_external_embeddings(dir / "e.txt", more);
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("missing_item"), std::string::npos);
    }
}

TEST(Embeddings, InconsistentDimension) {
    TempDir dir("emb");
    testing_support::spit(dir / "e.txt", "2 3\na 1 2 3\nb 1 2\n");
    const std::vector<std::string> ids{"a", "b"};
    EXPECT_THROW(load_external_embeddings(dir / "e.txt", ids), std::exception);
}

TEST(Embeddings, RoundTripTextAndBinary) {
    TempDir dir("emb");
    std::mt19937_64 rng(6);
    ContentMatrix m;
    m.vectors = random_matrix(5, 3, rng);
    m.ids = {"q", "w", "e", "r", "t"};
    save_embeddings_text(dir / "e.txt", m);
    save_embeddings_binary(dir / "e.bin", m);
    const auto t = load_external_embeddings(dir / "e.txt", m.ids);
    const auto b = load_external_embeddings(dir / "e.bin", m.ids);
    EXPECT_EQ(t.vectors, m.vectors);
    EXPECT_EQ(b.vectors, m.vectors.cast<float>().cast<double>());
    EXPECT_EQ(testing_support::slurp(dir / "e.bin").substr(0, 4), "EMB1");
}

TEST(BasketEmbed, Examples) {
    std::mt19937_64 rng(7);
    ContentMatrix c;
    c.vectors = random_matrix(8, 5, rng);
    c.vectors.row(6) = -c.vectors.row(2);

    EXPECT_EQ(basket_embed(std::vector<Index>{4}, c), Vector(c.vectors.row(4)));
    EXPECT_LT(basket_embed(std::vector<Index>{2, 6}, c).norm(), 1e-15);

    const std::vector<Index> five{0, 1, 3, 5, 7};
    const Vector got = basket_embed(five, c);
    for (Eigen::Index k = 0; k < 5; ++k) {
        double s = 0.0;
        for (Index v : five) s += c.vectors(v, k);
        EXPECT_NEAR(got[k], s / 5.0, 1e-12);
    }
    const std::vector<Index> shuffled{7, 3, 0, 5, 1};
    EXPECT_TRUE(basket_embed(shuffled, c).isApprox(got, 1e-14));
    double max_norm = 0.0;
    for (Index v : five) max_norm = std::max(max_norm, c.vectors.row(v).norm());
    EXPECT_LE(got.norm(), max_norm + 1e-12);
    EXPECT_THROW(basket_embed(std::vector<Index>{}, c), std::invalid_argument);
}

TEST(TextEncoder, HeldOutDocumentsProjectIntoSameSpace) {
    const auto docs = random_docs(50, 12);
    const std::vector<std::string> train(docs.begin(), docs.begin() + 40);
    const TextEncoder enc = fit_text_encoder(train, 12, 5, 1);
    const Matrix all = enc.encode(docs);
    ASSERT_EQ(all.rows(), 50);
    ASSERT_EQ(all.cols(), 5);
    const Matrix direct = Matrix(encode_tfidf(enc.tfidf, docs)) * enc.svd.components;
    EXPECT_LT((all - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DocumentField, Selection) {
    ItemRecord r;
    r.synopsis = "syn";
    r.reviews_text = "rev";
    EXPECT_EQ(item_document(r, DocumentField::synopsis), "syn");
    EXPECT_EQ(item_document(r, DocumentField::reviews), "rev");
    const std::string both = item_document(r, DocumentField::both);
    EXPECT_NE(both.find("syn"), std::string::npos);
    EXPECT_NE(both.find("rev"), std::string::npos);
    EXPECT_THROW(parse_document_field("title"), std::invalid_argument);
}
