#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "zdc/corpus.hpp"
#include "zdc/forward.hpp"
#include "zdc/kmeans.hpp"
#include "zdc/model.hpp"
#include "zdc/rotation.hpp"

using namespace zdc;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    Matrix m(r, c);
    for (double& v : m.data()) v = nd(rng);
    return m;
}

RotationSet random_rotations(const ModelDims& dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RotationSet rs = RotationSet::identity(dims);
    for (auto& h : rs.heads) {
        h.r_qk = detail::random_orthonormal(dims.head_dim, dims.head_dim, rng);
        h.r_vl = detail::random_orthonormal(dims.head_dim, dims.head_dim, rng);
    }
    return rs;
}

Corpus tiny_corpus(std::size_t vocab, std::uint64_t seed) {
    CorpusSpec cs;
    cs.vocab = vocab;
    cs.topics = 3;
    cs.sequences_per_topic = 6;
    cs.min_len = 10;
    cs.max_len = 20;
    cs.seed = seed;
    return generate_corpus(cs);
}

const ModelDims kDims{2, 2, 4, 16, 16};

}  // namespace

TEST(Corpus, TokensInRangeAndDeterministic) {
    const Corpus a = tiny_corpus(16, 3), b = tiny_corpus(16, 3), c = tiny_corpus(16, 4);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    for (const auto& t : a.topics)
        for (const auto& s : t.sequences) {
            EXPECT_GE(s.size(), 10u);
            EXPECT_LE(s.size(), 20u);
        }
}

// Each topic is a fixed Markov chain: every state has at most `successors`
// next tokens, and the transition frequencies of two disjoint halves of the
// topic agree under a chi-square homogeneity test.
TEST(Corpus, TopicsAreStationaryMarkovChains) {
    CorpusSpec cs;
    cs.vocab = 12;
    cs.topics = 2;
    cs.sequences_per_topic = 400;
    cs.min_len = 30;
    cs.max_len = 30;
    cs.successors = 3;
    cs.seed = 7;
    const Corpus c = generate_corpus(cs);
    for (const auto& t : c.topics) {
        std::map<std::uint32_t, std::map<std::uint32_t, std::array<double, 2>>> counts;
        for (std::size_t q = 0; q < t.sequences.size(); ++q) {
            const auto& s = t.sequences[q];
            for (std::size_t i = 1; i < s.size(); ++i) counts[s[i - 1]][s[i]][q % 2] += 1.0;
        }
        for (const auto& [state, next] : counts) {
            EXPECT_LE(next.size(), 3u) << "state " << state;
            double n0 = 0, n1 = 0;
            for (const auto& [tok, n] : next) {
                n0 += n[0];
                n1 += n[1];
            }
            if (n0 < 50 || n1 < 50 || next.size() < 2) continue;
            double chi2 = 0.0;
            for (const auto& [tok, n] : next) {
                const double tot = n[0] + n[1];
                const double e0 = tot * n0 / (n0 + n1), e1 = tot * n1 / (n0 + n1);
                chi2 += (n[0] - e0) * (n[0] - e0) / e0 + (n[1] - e1) * (n[1] - e1) / e1;
            }
            EXPECT_LT(chi2, 13.8) << "state " << state;  // 0.999 quantile, df <= 2
        }
    }
}

TEST(Corpus, JsonRoundTrip) {
    const Corpus a = tiny_corpus(16, 5);
    EXPECT_EQ(nlohmann::json(a).get<Corpus>(), a);
    nlohmann::json bad = a;
    bad["topics"][0]["sequences"][0][0] = 99;
    EXPECT_THROW(bad.get<Corpus>(), std::invalid_argument);
}

TEST(Prune, HalfOfTen) {
    Corpus c;
    c.vocab = 4;
    Topic t{"t", {}};
    for (std::uint32_t i = 0; i < 10; ++i) t.sequences.push_back({i % 4});
    c.topics.push_back(t);
    EXPECT_EQ(prune_corpus(c, 0.5, 1).topics[0].sequences.size(), 5u);
}

TEST(Prune, ZeroIsIdentityAndSeedIsDeterministic) {
    const Corpus c = tiny_corpus(16, 6);
    EXPECT_EQ(prune_corpus(c, 0.0, 9), c);
    EXPECT_EQ(prune_corpus(c, 0.5, 9), prune_corpus(c, 0.5, 9));
    EXPECT_THROW(prune_corpus(c, 1.0, 9), std::invalid_argument);
}

TEST(Activations, OneRowPerToken) {
    ModelInit init;
    const ToyModel m = init_model(kDims, init);
    Corpus c;
    c.vocab = kDims.vocab;
    c.topics.push_back({"t", {{1, 2, 3, 4}}});
    const ActivationBank b = collect_activations(m, c);
    ASSERT_EQ(b.q.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(b.q[i].rows(), 4u);
        EXPECT_EQ(b.k[i].rows(), 4u);
        EXPECT_EQ(b.v[i].rows(), 4u);
    }
}

TEST(Activations, EmptyCorpusThrows) {
    const ToyModel m = init_model(kDims, {});
    Corpus c;
    c.vocab = kDims.vocab;
    try {
        collect_activations(m, c);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("no tokens"), std::string::npos);
    }
}

TEST(Activations, LayerZeroMatchesDirectProjection) {
    const ToyModel m = init_model(kDims, {});
    const std::vector<Sequence> seqs{{3, 1, 4, 1, 5}};
    const ActivationBank b = collect_activations(m, seqs);
    // layer 0 input is the RMS-normalised embedding
    Matrix e(5, kDims.model_dim());
    for (std::size_t i = 0; i < 5; ++i) {
        const auto src = m.embedding.row(seqs[0][i]);
        double ss = 0.0;
        for (double v : src) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(src.size()) + 1e-8);
        for (std::size_t j = 0; j < src.size(); ++j) e(i, j) = src[j] * inv;
    }
    for (std::size_t h = 0; h < kDims.n_heads; ++h) {
        EXPECT_LT(relative_error(b.q[h], matmul(e, m.layers[0].heads[h].wq)), 1e-12);
        EXPECT_LT(relative_error(b.k[h], matmul(e, m.layers[0].heads[h].wk)), 1e-12);
        EXPECT_LT(relative_error(b.v[h], matmul(e, m.layers[0].heads[h].wv)), 1e-12);
    }
}

TEST(KMeans, KEqualsNReturnsInputRows) {
    const Matrix x = random_matrix(6, 3, 1);
    const Matrix c = kmeans_reduce(x, 6, 10, 2);
    for (std::size_t i = 0; i < 6; ++i) {
        bool found = false;
        for (std::size_t j = 0; j < 6; ++j) found = found || std::equal(x.row(i).begin(), x.row(i).end(), c.row(j).begin());
        EXPECT_TRUE(found) << "row " << i;
    }
}

TEST(KMeans, SingleClusterIsMean) {
    const Matrix x = random_matrix(40, 4, 3);
    const Matrix c = kmeans_reduce(x, 1);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 40; ++i) mean += x(i, j);
        EXPECT_NEAR(c(0, j), mean / 40.0, 1e-12);
    }
}

TEST(KMeans, SeparatedBlobsRecoverSampleMeans) {
    const std::size_t n = 200;
    const double sigma = 0.5;
    Matrix x = random_matrix(2 * n, 2, 4, sigma);
    for (std::size_t i = n; i < 2 * n; ++i) x(i, 0) += 20.0;
    const Matrix c = kmeans_reduce(x, 2, 25, 5);
    for (std::size_t b = 0; b < 2; ++b) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = b * n; i < (b + 1) * n; ++i) {
            mx += x(i, 0);
            my += x(i, 1);
        }
        mx /= n;
        my /= n;
        const std::size_t j = std::abs(c(0, 0) - mx) < std::abs(c(1, 0) - mx) ? 0 : 1;
        const double tol = 3.0 * sigma / std::sqrt(static_cast<double>(n));
        EXPECT_NEAR(c(j, 0), mx, tol);
        EXPECT_NEAR(c(j, 1), my, tol);
    }
}

TEST(KMeans, RejectsBadK) {
    EXPECT_THROW(kmeans_reduce(Matrix(3, 2), 4), std::invalid_argument);
    EXPECT_THROW(kmeans_reduce(Matrix(3, 2), 0), std::invalid_argument);
}

TEST(Rotation, RankTwoRowsGiveTwoSingularValues) {
    const Matrix coeff = random_matrix(30, 2, 6);
    const Matrix basis = random_matrix(2, 4, 7);
    const Matrix rows = matmul(coeff, basis);
    const Rotation r = compute_rotation_qk(rows, rows);
    EXPECT_LT(r.sigma[2], 1e-8 * r.sigma[0]);
    EXPECT_LT(r.sigma[3], 1e-8 * r.sigma[0]);
    EXPECT_LT(orthogonality_residual(r.r), 1e-8);
}

TEST(Rotation, IsotropicRowsHaveFlatSpectrum) {
    const Matrix q = random_matrix(4000, 4, 8), k = random_matrix(4000, 4, 9);
    const Rotation r = compute_rotation_qk(q, k);
    EXPECT_LT(r.sigma.front() / r.sigma.back(), 1.2);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(r.sigma[i - 1], r.sigma[i]);
}

TEST(Rotation, ZeroWlMatchesQkUpToSign) {
    const Matrix v = random_matrix(20, 4, 10);
    const Rotation a = compute_rotation_vl(v, Matrix(8, 4));
    const Rotation b = compute_rotation_qk(v, Matrix(0, 4));
    EXPECT_LT(orthogonality_residual(a.r), 1e-8);
    for (std::size_t j = 0; j < 4; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < 4; ++i) dot += a.r(i, j) * b.r(i, j);
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-9);
    }
}

TEST(Rotation, EmptyVSpansWlRowSpace) {
    // w_l_head is 2 x 4 of rank 2: the leading two columns of R span its rows.
    const Matrix w = random_matrix(2, 4, 11);
    const Matrix w_tall = vconcat(w, Matrix(2, 4));
    const Rotation r = compute_rotation_vl(Matrix(0, 4), w_tall);
    const Matrix r2 = slice_cols(r.r, 0, 2);
    Eigen::MatrixXd we(2, 4);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) we(i, j) = w(i, j);
    const Eigen::MatrixXd oracle = we.transpose() * (we * we.transpose()).inverse() * we;
    const Matrix proj = matmul_transposed(r2, r2);
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(proj(i, j) - oracle(i, j)));
    EXPECT_LT(worst, 1e-9);
}

TEST(Rotation, TooFewRowsThrows) {
    EXPECT_THROW(compute_rotation_qk(Matrix(1, 4), Matrix(1, 4)), std::invalid_argument);
}

TEST(Fold, IdentityRotationsKeepParameters) {
    const ToyModel m = init_model(kDims, {});
    const FoldedModel f = fold_parameters(m, RotationSet::identity(kDims));
    for (std::size_t l = 0; l < kDims.n_layers; ++l) {
        EXPECT_EQ(f.params.layers[l].wl, m.layers[l].wl);
        for (std::size_t h = 0; h < kDims.n_heads; ++h) {
            EXPECT_EQ(f.params.layers[l].heads[h].wq, m.layers[l].heads[h].wq);
            EXPECT_EQ(f.params.layers[l].heads[h].wv, m.layers[l].heads[h].wv);
        }
    }
}

TEST(Fold, RandomRotationsPreserveForward) {
    for (std::uint64_t seed : {1, 2, 3}) {
        ModelInit init;
        init.seed = seed;
        const ToyModel m = init_model(kDims, init);
        const FoldedModel f = fold_parameters(m, random_rotations(kDims, seed + 10));
        const std::vector<TokenId> toks{1, 5, 9, 2, 6, 5, 3};
        ForwardOptions base;
        base.mode = Mode::Baseline;
        ForwardOptions z;
        z.mode = Mode::Zdc;
        z.plan = CompressionPlan::zero(kDims.n_layers);
        const auto a = forward({&m, nullptr}, toks, base);
        const auto b = forward({&m, &f}, toks, z);
        EXPECT_LT(relative_error(b.logits, a.logits), 1e-8) << "seed " << seed;
    }
}

TEST(Fold, HeadCountMismatchThrows) {
    const ToyModel m = init_model(kDims, {});
    ModelDims other = kDims;
    other.n_heads = 1;
    EXPECT_THROW(fold_parameters(m, RotationSet::identity(other)), std::invalid_argument);
}

TEST(Fold, NonOrthogonalRotationThrows) {
    const ToyModel m = init_model(kDims, {});
    RotationSet rs = RotationSet::identity(kDims);
    rs.heads[1].r_qk(0, 0) = 2.0;
    EXPECT_THROW(fold_parameters(m, rs), std::invalid_argument);
}

TEST(Pipeline, ComputeRotationsIsDeterministicAndOrthogonal) {
    const ToyModel m = init_model(kDims, {});
    const Corpus c = tiny_corpus(kDims.vocab, 12);
    RotationOptions ro;
    ro.seed = 3;
    const RotationRun a = compute_rotations(m, c, ro), b = compute_rotations(m, c, ro);
    ASSERT_EQ(a.rotations.heads.size(), kDims.n_layers * kDims.n_heads);
    for (std::size_t i = 0; i < a.rotations.heads.size(); ++i) {
        EXPECT_EQ(a.rotations.heads[i].r_qk, b.rotations.heads[i].r_qk);
        EXPECT_LT(orthogonality_residual(a.rotations.heads[i].r_qk), 1e-8);
        EXPECT_LT(orthogonality_residual(a.rotations.heads[i].r_vl), 1e-8);
        const auto& s = a.rotations.heads[i].sv_vl;
        for (std::size_t j = 1; j < s.size(); ++j) EXPECT_GE(s[j - 1], s[j]);
    }
    EXPECT_GE(a.reduced_rows, kDims.head_dim);
    EXPECT_LT(a.corpus_tokens, c.total_tokens());
}

TEST(Groups, IdenticalSetsFormOneGroup) {
    const std::vector<std::vector<std::size_t>> sets(5, {1, 2, 3});
    EXPECT_EQ(identify_layer_groups(sets), (std::vector<std::size_t>{0, 0, 0, 0, 0}));
}

TEST(Groups, DisjointSetsStaySeparate) {
    const std::vector<std::vector<std::size_t>> sets{{1, 2}, {3, 4}, {1, 2}, {3, 4}};
    EXPECT_EQ(identify_layer_groups(sets), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Groups, DriftingSetsMatchPairwiseOracle) {
    // Each layer swaps 4 of 100 members: 96% adjacent overlap, 84% at distance 4.
    std::vector<std::vector<std::size_t>> sets;
    for (std::size_t l = 0; l < 8; ++l) {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < 100; ++i) s.push_back(i + 4 * l);
        sets.push_back(s);
    }
    const auto map = identify_layer_groups(sets, 0.9);
    std::vector<std::size_t> oracle(8);
    std::size_t first = 0;
    for (std::size_t l = 0; l < 8; ++l) {
        std::size_t common = 0;
        for (auto x : sets[l]) common += std::count(sets[first].begin(), sets[first].end(), x);
        if (l > 0 && common * 10 <= 9 * sets[first].size()) first = l;
        oracle[l] = first;
    }
    EXPECT_EQ(map, oracle);
    const std::size_t groups = static_cast<std::size_t>(std::count_if(
        map.begin(), map.end(), [i = std::size_t{0}](std::size_t r) mutable { return r == i++; }));
    EXPECT_GT(groups, 1u);
    EXPECT_LT(groups, 8u);
}

TEST(Profile, AllZerosAndAllLarge) {
    RotationSet rs = RotationSet::identity(kDims);
    for (auto& h : rs.heads) h.sv_qk = h.sv_vl = std::vector<double>(4, 0.0);
    EXPECT_DOUBLE_EQ(singular_value_profile(rs, 1.0).qk_fraction, 1.0);
    for (auto& h : rs.heads) h.sv_qk = h.sv_vl = std::vector<double>(4, 5.0);
    EXPECT_DOUBLE_EQ(singular_value_profile(rs, 1.0).vl_fraction, 0.0);
}

TEST(Profile, ConstructedRankHalf) {
    const std::size_t dh = 8;
    Matrix rows = matmul(random_matrix(200, dh / 2, 13), random_matrix(dh / 2, dh, 14));
    const Matrix noise = random_matrix(200, dh, 15, 1e-6);
    rows = add(rows, noise);
    const Rotation r = compute_rotation_qk(rows, rows);
    ModelDims d{1, 1, dh, 4, 4};
    RotationSet rs = RotationSet::identity(d);
    rs.heads[0].sv_qk = r.sigma;
    EXPECT_NEAR(singular_value_profile(rs, 1e-3 * r.sigma[0]).qk_fraction, 0.5, 1.0 / dh);
}

TEST(ModelIo, SameSeedGivesByteIdenticalFiles) {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "zdc_model_io";
    fs::remove_all(root);
    ModelInit init;
    init.seed = 21;
    save_model(root / "a", init_model(kDims, init));
    save_model(root / "b", init_model(kDims, init));
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
        std::ifstream x(e.path(), std::ios::binary), y(other, std::ios::binary);
        const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
        EXPECT_EQ(sx, sy) << e.path();
        ++files;
    }
    EXPECT_GT(files, 0u);
    const ToyModel back = load_model(root / "a");
    EXPECT_EQ(back.embedding, init_model(kDims, init).embedding);
    fs::remove_all(root);
}
