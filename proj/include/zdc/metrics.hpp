// Quality metrics (degradation ratio D, cross-entropy perplexity proxy),
// evaluation-set sampling and the JSON report writer.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/corpus.hpp"
#include "zdc/forward.hpp"
#include "zdc/matrix.hpp"
#include "zdc/model.hpp"

namespace zdc {

struct Degradation {
    double value = 0.0;        ///< mean |v-u|/|u| over counted elements
    std::size_t counted = 0;
    std::size_t excluded = 0;  ///< elements with |u| < 1e-12
};

inline void to_json(nlohmann::json& j, const Degradation& d) {
    j = nlohmann::json{{"value", d.value}, {"counted", d.counted}, {"excluded", d.excluded}};
}

/// D over every element of every matrix pair; u is the uncompressed side.
inline Degradation degradation_D(const std::vector<Matrix>& baseline, const std::vector<Matrix>& compressed) {
    if (baseline.size() != compressed.size()) throw std::invalid_argument("degradation_D: list lengths differ");
    Degradation d;
    double sum = 0.0;
    for (std::size_t m = 0; m < baseline.size(); ++m) {
        const Matrix& u = baseline[m];
        const Matrix& v = compressed[m];
        if (u.rows() != v.rows() || u.cols() != v.cols()) {
            throw std::invalid_argument("degradation_D: " + u.shape() + " vs " + v.shape());
        }
        for (std::size_t i = 0; i < u.data().size(); ++i) {
            const double ui = u.data()[i];
            if (std::abs(ui) < 1e-12) {
                ++d.excluded;
                continue;
            }
            sum += std::abs(v.data()[i] - ui) / std::abs(ui);
            ++d.counted;
        }
    }
    if (d.counted == 0) throw std::invalid_argument("degradation_D: every element excluded (|u| < 1e-12)");
    d.value = sum / static_cast<double>(d.counted);
    return d;
}

inline Degradation degradation_D(const Matrix& baseline, const Matrix& compressed) {
    return degradation_D(std::vector<Matrix>{baseline}, std::vector<Matrix>{compressed});
}

/// Per-head outputs mapped back to the unrotated basis: o' R_vl[:, :w]^T.
inline std::vector<Matrix> unrotate_head_outputs(const std::vector<std::vector<Matrix>>& heads,
                                                 const RotationSet& rotations) {
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < heads.size(); ++l) {
        for (std::size_t h = 0; h < heads[l].size(); ++h) {
            const Matrix& o = heads[l][h];
            const Matrix r = slice_cols(rotations.at(l, h).r_vl, 0, o.cols());
            out.push_back(matmul_transposed(o, r));
        }
    }
    return out;
}

/// Sum of next-token cross-entropies: row i of `logits` predicts tokens[i+1].
inline double next_token_ce_sum(const Matrix& logits, std::span<const TokenId> tokens, std::size_t* count = nullptr) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        const auto row = logits.row(i);
        const RowExpSum es = row_exp_sum(row, row.size());
        total += es.max + std::log(es.shifted_sum) - row[tokens[i + 1]];
        ++n;
    }
    if (count) *count += n;
    return total;
}

/// Expected cross-entropy of row i of `logits` against the distribution of
/// row i of `reference`, summed over the rows that have a next token.
inline double soft_ce_sum(const Matrix& reference, const Matrix& logits, std::size_t* count = nullptr) {
    if (reference.rows() != logits.rows() || reference.cols() != logits.cols()) {
        throw std::invalid_argument("soft_ce_sum: " + reference.shape() + " vs " + logits.shape());
    }
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < logits.rows(); ++i) {
        const auto ref = reference.row(i);
        const auto row = logits.row(i);
        const RowExpSum er = row_exp_sum(ref, ref.size());
        const RowExpSum es = row_exp_sum(row, row.size());
        const double log_z = es.max + std::log(es.shifted_sum);
        double ce = 0.0;
        for (std::size_t v = 0; v < row.size(); ++v) ce += std::exp(ref[v] - er.max) / er.shifted_sum * (log_z - row[v]);
        total += ce;
    }
    if (count) *count += logits.rows() > 0 ? logits.rows() - 1 : 0;
    return total;
}

/// exp(mean next-token cross-entropy) under teacher forcing.
inline double perplexity_proxy(ModelRefs models, const std::vector<Sequence>& eval_set, const ForwardOptions& opt) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& seq : eval_set) {
        if (seq.size() < 2) continue;
        const ForwardResult r = forward(models, seq, opt);
        total += next_token_ce_sum(r.logits, seq, &count);
    }
    if (count == 0) throw std::invalid_argument("perplexity_proxy: evaluation set has no next-token targets");
    return std::exp(total / static_cast<double>(count));
}

/// (perp' - perp) / perp with perp from the uncompressed base model.
inline double relative_perplexity_increase(double perp_base, double perp_plan) {
    return (perp_plan - perp_base) / perp_base;
}

/// Sequences drawn from the base model itself (ancestral sampling), so the
/// uncompressed model is the data distribution.
inline std::vector<Sequence> sample_sequences(const ToyModel& model, std::size_t n_seqs, std::size_t length,
                                              std::uint64_t seed, double temperature = 1.0) {
    if (length == 0) throw std::invalid_argument("sample_sequences: zero length");
    if (!(temperature > 0.0)) throw std::invalid_argument("sample_sequences: temperature must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> first(0, static_cast<std::uint32_t>(model.dims.vocab - 1));
    std::vector<Sequence> out;
    for (std::size_t s = 0; s < n_seqs; ++s) {
        ForwardOptions opt;
        opt.mode = Mode::Baseline;
        InferenceSession session({&model, nullptr}, opt);
        Sequence seq{first(rng)};
        Matrix logits = session.step(seq);
        while (seq.size() < length) {
            const auto row = logits.row(logits.rows() - 1);
            std::vector<double> w(row.size());
            double mx = -std::numeric_limits<double>::infinity();
            for (double v : row) mx = std::max(mx, v / temperature);
            for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::exp(row[i] / temperature - mx);
            std::discrete_distribution<std::uint32_t> pick(w.begin(), w.end());
            const TokenId next = pick(rng);
            seq.push_back(next);
            if (seq.size() < length) {
                const TokenId cur[1] = {next};
                logits = session.step(cur);
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

inline constexpr const char* kReportSchema = "zdc.report/1";

/// Writes `body` with the schema tag added; keys are emitted sorted.
inline void emit_report(const nlohmann::json& body, const std::filesystem::path& path) {
    nlohmann::json doc = body.is_object() ? body : nlohmann::json::object();
    doc["schema"] = kReportSchema;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << doc.dump(2) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json read_report(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    nlohmann::json j = nlohmann::json::parse(is);
    if (j.value("schema", "") != kReportSchema) throw std::runtime_error(path.string() + ": unknown report schema");
    return j;
}

}  // namespace zdc
