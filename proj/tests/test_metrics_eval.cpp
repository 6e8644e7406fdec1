#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "zdc/metrics.hpp"
#include "zdc/rotation.hpp"

using namespace zdc;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix m(r, c);
    for (double& v : m.data()) v = nd(rng);
    return m;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "zdc_metrics_eval";
    std::filesystem::create_directories(dir);
    return dir / name;
}

const ModelDims kDims{2, 2, 8, 16, 16};

struct Setup {
    ToyModel base;
    FoldedModel folded;
    std::vector<Sequence> eval;
};

const Setup& setup() {
    static const Setup s = [] {
        ModelInit init;
        init.seed = 21;
        Setup out{init_model(kDims, init), {}, {}};
        CorpusSpec cs;
        cs.vocab = kDims.vocab;
        cs.topics = 2;
        cs.sequences_per_topic = 8;
        cs.seed = 22;
        out.folded = fold_parameters(out.base, compute_rotations(out.base, generate_corpus(cs)).rotations);
        out.eval = sample_sequences(out.base, 12, 16, 23);
        return out;
    }();
    return s;
}

double proxy(const Setup& s, std::optional<CompressionPlan> plan) {
    ForwardOptions o;
    o.mode = plan ? Mode::Zdc : Mode::Baseline;
    o.plan = std::move(plan);
    return perplexity_proxy({&s.base, &s.folded}, s.eval, o);
}

}  // namespace

TEST(Degradation, IdenticalOutputsGiveZero) {
    const Matrix u = random_matrix(4, 5, 1);
    const Degradation d = degradation_D(u, u);
    EXPECT_EQ(d.value, 0.0);
    EXPECT_EQ(d.counted, 20u);
    EXPECT_EQ(d.excluded, 0u);
}

TEST(Degradation, ScaledOutputGivesScaleMinusOne) {
    const Matrix u = random_matrix(3, 6, 2);
    EXPECT_NEAR(degradation_D(u, scaled(u, 1.1)).value, 0.1, 1e-12);
}

TEST(Degradation, MatchesScalarLoop) {
    const std::vector<Matrix> u{random_matrix(3, 4, 3), random_matrix(5, 2, 4)};
    const std::vector<Matrix> v{random_matrix(3, 4, 5), random_matrix(5, 2, 6)};
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t i = 0; i < u[m].rows(); ++i)
            for (std::size_t j = 0; j < u[m].cols(); ++j) {
                sum += std::abs(v[m](i, j) - u[m](i, j)) / std::abs(u[m](i, j));
                ++n;
            }
    const Degradation d = degradation_D(u, v);
    EXPECT_EQ(d.counted, n);
    EXPECT_NEAR(d.value, sum / static_cast<double>(n), 1e-12);
}

TEST(Degradation, ExcludesNearZeroBaselineAndCountsThem) {
    const Matrix u{{0.0, 2.0}, {1e-13, 4.0}};
    const Matrix v{{5.0, 3.0}, {7.0, 4.0}};
    const Degradation d = degradation_D(u, v);
    EXPECT_EQ(d.excluded, 2u);
    EXPECT_EQ(d.counted, 2u);
    EXPECT_NEAR(d.value, 0.25, 1e-15);
}

TEST(Degradation, AllExcludedThrows) {
    EXPECT_THROW(degradation_D(Matrix(2, 2), random_matrix(2, 2, 7)), std::invalid_argument);
}

TEST(Degradation, ShapeMismatchThrows) {
    EXPECT_THROW(degradation_D(Matrix(2, 2), Matrix(2, 3)), std::invalid_argument);
    EXPECT_THROW(degradation_D(std::vector<Matrix>{Matrix(1, 1)}, std::vector<Matrix>{}), std::invalid_argument);
}

TEST(Degradation, VanishesAtZeroPlan) {
    const auto& s = setup();
    ForwardOptions base;
    base.mode = Mode::Baseline;
    ForwardOptions zdc;
    zdc.plan = CompressionPlan::zero(kDims.n_layers);
    const auto& seq = s.eval.front();
    const ForwardResult a = forward({&s.base, &s.folded}, seq, base);
    const ForwardResult b = forward({&s.base, &s.folded}, seq, zdc);
    EXPECT_LT(degradation_D(a.layer_outputs, b.layer_outputs).value, 1e-9);
}

TEST(Degradation, UnrotatedHeadOutputsMatchBaselineBasis) {
    const auto& s = setup();
    ForwardOptions base;
    base.mode = Mode::Baseline;
    base.keep_head_outputs = true;
    ForwardOptions zdc = base;
    zdc.mode = Mode::Zdc;
    zdc.plan = CompressionPlan::zero(kDims.n_layers);
    const auto& seq = s.eval.front();
    const ForwardResult a = forward({&s.base, &s.folded}, seq, base);
    const ForwardResult b = forward({&s.base, &s.folded}, seq, zdc);
    const auto ua = unrotate_head_outputs(a.head_outputs, RotationSet::identity(kDims));
    const auto ub = unrotate_head_outputs(b.head_outputs, s.folded.rotations);
    ASSERT_EQ(ua.size(), kDims.n_layers * kDims.n_heads);
    for (std::size_t i = 0; i < ua.size(); ++i) EXPECT_LT(relative_error(ub[i], ua[i]), 1e-9) << i;
}

TEST(Perplexity, UniformLogitsGiveVocabSize) {
    const ModelDims dims{1, 2, 4, 256, 8};
    ToyModel m = init_model(dims, {});
    m.output = Matrix(dims.model_dim(), dims.vocab);
    const std::vector<Sequence> eval{{1, 2, 3, 4}, {200, 5}};
    ForwardOptions o;
    o.mode = Mode::Baseline;
    EXPECT_NEAR(perplexity_proxy({&m, nullptr}, eval, o), 256.0, 1e-9);
}

TEST(Perplexity, NextTokenCeMatchesNaiveSum) {
    const Matrix logits = random_matrix(3, 5, 8);
    const std::vector<TokenId> tokens{0, 4, 2};
    double expect = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        double z = 0.0;
        for (std::size_t v = 0; v < 5; ++v) z += std::exp(logits(i, v));
        expect += std::log(z) - logits(i, tokens[i + 1]);
    }
    std::size_t n = 0;
    EXPECT_NEAR(next_token_ce_sum(logits, tokens, &n), expect, 1e-12);
    EXPECT_EQ(n, 2u);
}

TEST(Perplexity, SoftCeMatchesNaiveSum) {
    const Matrix ref = random_matrix(4, 6, 9), logits = random_matrix(4, 6, 10);
    double expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        double zr = 0.0, zl = 0.0;
        for (std::size_t v = 0; v < 6; ++v) {
            zr += std::exp(ref(i, v));
            zl += std::exp(logits(i, v));
        }
        for (std::size_t v = 0; v < 6; ++v) expect -= std::exp(ref(i, v)) / zr * (logits(i, v) - std::log(zl));
    }
    std::size_t n = 0;
    EXPECT_NEAR(soft_ce_sum(ref, logits, &n), expect, 1e-12);
    EXPECT_EQ(n, 3u);
    EXPECT_THROW(soft_ce_sum(ref, Matrix(4, 5)), std::invalid_argument);
}

TEST(Perplexity, ZeroPlanEqualsBaseline) {
    const auto& s = setup();
    const double base = proxy(s, std::nullopt);
    const double zero = proxy(s, CompressionPlan::zero(kDims.n_layers));
    EXPECT_NEAR(zero / base, 1.0, 1e-12);
    EXPECT_NEAR(relative_perplexity_increase(base, zero), 0.0, 1e-12);
}

TEST(Perplexity, NonDecreasingAlongUniformGrid) {
    const auto& s = setup();
    double prev = proxy(s, std::nullopt);
    for (double p : {0.25, 0.5, 0.75}) {
        const double cur = proxy(s, CompressionPlan::uniform(kDims.n_layers, p));
        EXPECT_GE(cur, prev * (1.0 - 1e-9)) << "p=" << p;
        prev = cur;
    }
}

TEST(Perplexity, RelativeIncreaseFormula) {
    EXPECT_DOUBLE_EQ(relative_perplexity_increase(4.0, 5.0), 0.25);
    EXPECT_DOUBLE_EQ(relative_perplexity_increase(4.0, 3.0), -0.25);
}

TEST(Perplexity, EmptyEvalSetThrows) {
    const auto& s = setup();
    ForwardOptions o;
    o.mode = Mode::Baseline;
    EXPECT_THROW(perplexity_proxy({&s.base, nullptr}, {Sequence{3}}, o), std::invalid_argument);
}

TEST(SampleSequences, DeterministicAndInRange) {
    const auto& s = setup();
    const auto a = sample_sequences(s.base, 4, 10, 77);
    const auto b = sample_sequences(s.base, 4, 10, 77);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, sample_sequences(s.base, 4, 10, 78));
    for (const auto& seq : a) {
        EXPECT_EQ(seq.size(), 10u);
        for (TokenId t : seq) EXPECT_LT(t, kDims.vocab);
    }
    EXPECT_THROW(sample_sequences(s.base, 1, 0, 1), std::invalid_argument);
}

TEST(Report, EmptyRunIsSchemaSkeleton) {
    const auto path = temp_file("empty.json");
    emit_report(nlohmann::json::object(), path);
    const nlohmann::json j = read_report(path);
    EXPECT_EQ(j, (nlohmann::json{{"schema", kReportSchema}}));
}

TEST(Report, RoundTripEqualsInMemory) {
    const auto& s = setup();
    ForwardOptions o;
    o.plan = CompressionPlan::uniform(kDims.n_layers, 0.5);
    const ForwardResult r = forward({&s.base, &s.folded}, s.eval.front(), o);
    nlohmann::json body{{"stats", r.stats}, {"d", degradation_D(Matrix{{1.0}}, Matrix{{1.5}})}};
    const auto path = temp_file("roundtrip.json");
    emit_report(body, path);
    body["schema"] = kReportSchema;
    EXPECT_EQ(read_report(path), body);
}

TEST(Report, FlopTotalsEqualBreakdownAndZdcHasNoCompressCost) {
    const auto& s = setup();
    ForwardOptions o;
    o.plan = CompressionPlan::uniform(kDims.n_layers, 0.5);
    const nlohmann::json flops = nlohmann::json(forward({&s.base, &s.folded}, s.eval.front(), o).stats)["flops"];
    std::uint64_t sum = 0;
    for (const char* k : {"qkv", "attn", "linear", "compress", "decompress", "importance", "mlp", "output"})
        sum += flops.at(k).get<std::uint64_t>();
    EXPECT_EQ(flops.at("total").get<std::uint64_t>(), sum);
    EXPECT_EQ(flops.at("compress").get<std::uint64_t>(), 0u);
    EXPECT_EQ(flops.at("decompress").get<std::uint64_t>(), 0u);
}

TEST(Report, RejectsUnknownSchemaAndMissingFile) {
    const auto path = temp_file("other.json");
    std::ofstream(path) << R"({"schema": "something/2"})";
    EXPECT_THROW(read_report(path), std::runtime_error);
    EXPECT_THROW(read_report(temp_file("absent.json")), std::runtime_error);
}
