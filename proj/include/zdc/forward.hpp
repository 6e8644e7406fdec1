// Toy-model forward pass and greedy generation in every execution mode.
//
//   baseline  uncompressed attention on the original parameters
//   zdc       folded parameters, per-class column dropping, no (de)compression
//   zdc/ZO    original parameters with explicit online compression (x R_p)
//             and decompression (x R_p^T) around full-width attention
//   zdc/DT    one drop ratio for every token and both pairs
//   zdc/DL    one important-token fraction for every layer
//   zdc/LT    importance recomputed from the score matrices instead of
//             reusing the softmax denominators
//
// Prompt processing and decoding share one per-layer routine: new rows are
// projected, written to the compressed KV cache, and attend over the cache.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/attention.hpp"
#include "zdc/importance.hpp"
#include "zdc/kv_cache.hpp"
#include "zdc/ledger.hpp"
#include "zdc/matrix.hpp"
#include "zdc/model.hpp"
#include "zdc/plan.hpp"

namespace zdc {

using TokenId = std::uint32_t;

enum class Mode { Baseline, Zdc, ZdcZO, ZdcDT, ZdcDL, ZdcLT };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::Baseline: return "baseline";
        case Mode::Zdc: return "zdc";
        case Mode::ZdcZO: return "zdc/ZO";
        case Mode::ZdcDT: return "zdc/DT";
        case Mode::ZdcDL: return "zdc/DL";
        case Mode::ZdcLT: return "zdc/LT";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::Baseline, Mode::Zdc, Mode::ZdcZO, Mode::ZdcDT, Mode::ZdcDL, Mode::ZdcLT}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown mode '" + s + "'");
}

struct AblationConfig {
    double dt_drop = 0.35;  ///< /DT: drop ratio for all tokens and both pairs
    double dl_g = 0.5;      ///< /DL: important fraction for every layer
    std::optional<double> dl_p_i;  ///< /DL: optional override of both p^i
    std::optional<double> dl_p_u;  ///< /DL: optional override of both p^u
};

struct ModelRefs {
    const ToyModel* base = nullptr;
    const FoldedModel* folded = nullptr;
};

/// Receives each head's freshly generated q, k, v rows (before padding).
using ActivationSink =
    std::function<void(std::size_t layer, std::size_t head, const Matrix& q, const Matrix& k, const Matrix& v)>;

struct ForwardOptions {
    Mode mode = Mode::Zdc;
    std::optional<CompressionPlan> plan;
    bool causal = true;
    bool normalize_importance = true;
    AblationConfig ablation;
    ActivationSink sink;
    bool keep_head_outputs = false;
};

struct LayerApplied {
    double g = 1.0;
    double p_qk_i = 0.0, p_qk_u = 0.0, p_vl_i = 0.0, p_vl_u = 0.0;
    std::size_t representative = 0;
    std::size_t n_important = 0;
    std::size_t width_qk = 0;  ///< attention working width of the QK pair
    std::size_t width_vl = 0;  ///< working width of V / o'
};

struct ForwardStats {
    std::string mode;
    bool normalize_importance = true;
    FlopCounts flops;
    std::uint64_t kvc_floats = 0;
    std::vector<LayerApplied> layers;
};

inline void to_json(nlohmann::json& j, const LayerApplied& a) {
    j = nlohmann::json{{"g", a.g},
                       {"p_qk_i", a.p_qk_i},
                       {"p_qk_u", a.p_qk_u},
                       {"p_vl_i", a.p_vl_i},
                       {"p_vl_u", a.p_vl_u},
                       {"representative", a.representative},
                       {"n_important", a.n_important},
                       {"width_qk", a.width_qk},
                       {"width_vl", a.width_vl}};
}

inline void to_json(nlohmann::json& j, const ForwardStats& s) {
    j = nlohmann::json{{"mode", s.mode},
                       {"normalize_importance", s.normalize_importance},
                       {"flops", s.flops},
                       {"kvc_floats", s.kvc_floats},
                       {"layers", s.layers}};
}

/// The plan a mode actually executes.
inline CompressionPlan effective_plan(const ForwardOptions& opt, std::size_t n_layers) {
    CompressionPlan plan = opt.plan.value_or(CompressionPlan::zero(n_layers));
    if (plan.group_map.empty()) plan.group_map = CompressionPlan::identity_groups(n_layers);
    switch (opt.mode) {
        case Mode::Baseline: plan = CompressionPlan::zero(n_layers); break;
        case Mode::ZdcDT:
            plan.p_qk_i = plan.p_qk_u = plan.p_vl_i = plan.p_vl_u = opt.ablation.dt_drop;
            break;
        case Mode::ZdcDL:
            plan.g.assign(n_layers, opt.ablation.dl_g);
            if (opt.ablation.dl_p_i) plan.p_qk_i = plan.p_vl_i = *opt.ablation.dl_p_i;
            if (opt.ablation.dl_p_u) plan.p_qk_u = plan.p_vl_u = *opt.ablation.dl_p_u;
            break;
        default: break;
    }
    if (plan.g.size() != n_layers) throw std::invalid_argument("plan has " + std::to_string(plan.g.size()) +
                                                               " layers, model has " + std::to_string(n_layers));
    if (auto v = plan_shape_violation(plan); !v.empty()) throw std::invalid_argument("plan: " + v);
    return plan;
}

/// Parameter-free RMS normalisation of each row.
inline Matrix rms_norm(const Matrix& x) {
    Matrix y = x;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto r = y.row(i);
        double ss = 0.0;
        for (double v : r) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(r.size()) + 1e-8);
        for (double& v : r) v *= inv;
    }
    return y;
}

class InferenceSession {
public:
    InferenceSession(ModelRefs models, ForwardOptions options)
        : models_(models), opt_(std::move(options)) {
        const bool needs_folded = opt_.mode != Mode::Baseline;
        const bool needs_base = opt_.mode == Mode::Baseline || opt_.mode == Mode::ZdcZO;
        if (needs_folded && !models_.folded) throw std::invalid_argument(to_string(opt_.mode) + " needs a folded model");
        if (needs_base && !models_.base) throw std::invalid_argument(to_string(opt_.mode) + " needs the base model");
        const ToyModel& p = params();
        p.validate();
        if (models_.base && models_.folded && !(models_.base->dims == models_.folded->params.dims)) {
            throw std::invalid_argument("base and folded model dimensions differ");
        }
        dims_ = p.dims;
        plan_ = effective_plan(opt_, dims_.n_layers);
        state_ = ImportanceState(dims_.n_layers, opt_.normalize_importance);
        cache_ = CompressedKVCache(dims_.n_layers, dims_.n_heads, dims_.head_dim);
        classes_.resize(dims_.n_layers);
        applied_.resize(dims_.n_layers);
        layer_outputs_.resize(dims_.n_layers);
        head_outputs_.resize(dims_.n_layers);
    }

    /// Runs `tokens` (the whole prompt on the first call, one token afterwards)
    /// and returns their logits rows.
    Matrix step(std::span<const TokenId> tokens) {
        if (tokens.empty()) throw std::invalid_argument("step: no tokens");
        if (position_ > 0 && tokens.size() != 1) throw std::invalid_argument("step: decode takes one token at a time");
        const ToyModel& p = params();
        Matrix x(tokens.size(), dims_.model_dim());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] >= dims_.vocab) throw std::invalid_argument("token id " + std::to_string(tokens[i]) + " >= vocab");
            const auto src = p.embedding.row(tokens[i]);
            std::copy(src.begin(), src.end(), x.row(i).begin());
        }
        for (std::size_t l = 0; l < dims_.n_layers; ++l) x = run_layer(l, std::move(x));
        position_ += tokens.size();
        const Matrix e = rms_norm(x);
        ledger_.add_matmul(FlopKind::Output, e.rows(), e.cols(), dims_.vocab);
        return matmul(e, p.output);
    }

    const CompressionPlan& plan() const { return plan_; }
    const ImportanceState& importance() const { return state_; }
    const CompressedKVCache& cache() const { return cache_; }
    const std::vector<std::vector<TokenClass>>& classes() const { return classes_; }
    const std::vector<Matrix>& layer_outputs() const { return layer_outputs_; }
    const std::vector<std::vector<Matrix>>& head_outputs() const { return head_outputs_; }
    std::size_t position() const { return position_; }

    ForwardStats stats() const {
        return {to_string(opt_.mode), opt_.normalize_importance, ledger_.snapshot(), cache_.stored_floats(), applied_};
    }

private:
    const ToyModel& params() const {
        if (opt_.mode == Mode::Baseline || opt_.mode == Mode::ZdcZO) return *models_.base;
        return models_.folded->params;
    }

    std::vector<TokenClass> new_classes(std::size_t l, std::size_t n) const {
        if (opt_.mode == Mode::Baseline) return std::vector<TokenClass>(n, TokenClass::Important);
        if (position_ == 0) return classify_tokens(state_, l, plan_.g[l], plan_.group_map, n);
        return {classify_newest(state_, l, plan_.g[l], plan_.group_map)};
    }

    Matrix run_layer(std::size_t l, Matrix x) {
        const ToyModel& p = params();
        const auto& L = p.layers[l];
        const std::size_t n = x.rows();
        const std::size_t first = position_;
        const std::size_t t = first + n;
        const std::size_t dh = dims_.head_dim;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const bool explicit_steps = opt_.mode == Mode::ZdcZO;

        const Matrix e = rms_norm(x);
        const auto cls = new_classes(l, n);
        std::vector<std::size_t> w_qk(n), w_vl(n);
        std::size_t n_imp = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const ClassWidths cw = class_widths(plan_, cls[i], dh);
            w_qk[i] = cw.qk;
            w_vl[i] = cw.vl;
            n_imp += cls[i] == TokenClass::Important ? 1 : 0;
        }
        classes_[l].insert(classes_[l].end(), cls.begin(), cls.end());
        const std::size_t out_qk = *std::max_element(w_qk.begin(), w_qk.end());
        const std::size_t out_vl = *std::max_element(w_vl.begin(), w_vl.end());

        std::vector<std::size_t> key_counts(n);
        for (std::size_t i = 0; i < n; ++i) key_counts[i] = visible_keys(i, n, t, opt_.causal);

        std::vector<Matrix> o_heads;
        std::vector<std::vector<double>> denoms;
        std::size_t width_qk = 0, width_vl = 0;
        for (std::size_t h = 0; h < dims_.n_heads; ++h) {
            const auto& hw = L.heads[h];
            Matrix q, k, v;
            if (explicit_steps) {
                const auto& rot = models_.folded->rotations.at(l, h);
                const Matrix qf = matmul(e, hw.wq), kf = matmul(e, hw.wk), vf = matmul(e, hw.wv);
                for (int i = 0; i < 3; ++i) ledger_.add_matmul(FlopKind::Qkv, n, e.cols(), dh);
                q = project_rows(qf, rot.r_qk, w_qk, out_qk, &ledger_, FlopKind::Compress);
                k = project_rows(kf, rot.r_qk, w_qk, out_qk, &ledger_, FlopKind::Compress);
                v = project_rows(vf, rot.r_vl, w_vl, out_vl, &ledger_, FlopKind::Compress);
            } else {
                q = project_rows(e, hw.wq, w_qk, out_qk, &ledger_);
                k = project_rows(e, hw.wk, w_qk, out_qk, &ledger_);
                v = project_rows(e, hw.wv, w_vl, out_vl, &ledger_);
            }
            if (opt_.sink) opt_.sink(l, h, q, k, v);
            for (std::size_t i = 0; i < n; ++i) {
                cache_.write(l, h, first + i, k.row(i).first(w_qk[i]), v.row(i).first(w_vl[i]), cls[i], plan_);
            }
            auto [kc, vc] = cache_.read(l, h);
            width_qk = kc.cols();
            width_vl = vc.cols();
            const Matrix qp = pad_cols(q, kc.cols());

            AttentionOutput att;
            if (explicit_steps) {
                const auto& rot = models_.folded->rotations.at(l, h);
                const Matrix rq = slice_cols(rot.r_qk, 0, kc.cols());
                const Matrix rv = slice_cols(rot.r_vl, 0, vc.cols());
                const Matrix qh = matmul_transposed(qp, rq);
                const Matrix kh = matmul_transposed(kc, rq);
                const Matrix vh = matmul_transposed(vc, rv);
                ledger_.add_matmul(FlopKind::Decompress, n, kc.cols(), dh);
                ledger_.add_matmul(FlopKind::Decompress, t, kc.cols(), dh);
                ledger_.add_matmul(FlopKind::Decompress, t, vc.cols(), dh);
                att = attention_compressed(qh, kh, vh, scale, opt_.causal, &ledger_);
            } else {
                att = attention_compressed(qp, kc, vc, scale, opt_.causal, &ledger_);
            }

            if (opt_.mode == Mode::ZdcLT) {
                // Explicit sum_k exp(s_k) over each score row, replacing the
                // denominators the softmax already produced.
                std::vector<double> recomputed(n);
                std::uint64_t flops = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    recomputed[i] = row_exp_sum(att.scores.row(i), key_counts[i]).denominator();
                    flops += 3ull * key_counts[i] + 1;
                }
                ledger_.add(FlopKind::Importance, flops);
                denoms.push_back(std::move(recomputed));
            } else {
                denoms.push_back(std::move(att.denoms));
            }
            if (opt_.keep_head_outputs) head_outputs_[l].push_back(att.out);
            o_heads.push_back(std::move(att.out));
        }

        if (l + 1 < dims_.n_layers) {
            state_.update(l + 1, first, denoms, key_counts);
            ledger_.add(FlopKind::Importance, (opt_.normalize_importance ? 2ull : 1ull) * n * dims_.n_heads);
        }

        const Matrix o = hconcat(o_heads);
        Matrix o_l;
        if (opt_.mode == Mode::Baseline || explicit_steps) {
            ledger_.add_matmul(FlopKind::Linear, n, o.cols(), dims_.model_dim());
            o_l = matmul(o, L.wl);
        } else {
            o_l = linear_decompress_width(o, *models_.folded, l, width_vl, &ledger_);
        }
        x = add(x, o_l);
        if (first == 0) {
            layer_outputs_[l] = o_l;
            applied_[l] = {plan_.g[l],  plan_.p_qk_i, plan_.p_qk_u, plan_.p_vl_i, plan_.p_vl_u,
                           plan_.group_map[l], n_imp, width_qk, width_vl};
        } else {
            layer_outputs_[l] = vconcat(layer_outputs_[l], o_l);
        }

        const Matrix e2 = rms_norm(x);
        Matrix hidden = matmul(e2, L.mlp_in);
        for (double& v : hidden.data()) v = std::tanh(v);
        ledger_.add_matmul(FlopKind::Mlp, n, e2.cols(), L.mlp_in.cols());
        ledger_.add_matmul(FlopKind::Mlp, n, hidden.cols(), dims_.model_dim());
        return add(x, matmul(hidden, L.mlp_out));
    }

    ModelRefs models_;
    ForwardOptions opt_;
    ModelDims dims_;
    CompressionPlan plan_;
    ImportanceState state_;
    CompressedKVCache cache_;
    FlopLedger ledger_;
    std::size_t position_ = 0;
    std::vector<std::vector<TokenClass>> classes_;
    std::vector<LayerApplied> applied_;
    std::vector<Matrix> layer_outputs_;
    std::vector<std::vector<Matrix>> head_outputs_;
};

struct ForwardResult {
    Matrix logits;
    std::vector<Matrix> layer_outputs;              ///< O_L per layer (s x d)
    std::vector<std::vector<Matrix>> head_outputs;  ///< o' per layer/head when requested
    std::vector<std::vector<TokenClass>> classes;   ///< per layer
    ImportanceState importance;
    ForwardStats stats;
};

inline ForwardResult forward(ModelRefs models, std::span<const TokenId> tokens, ForwardOptions options = {}) {
    InferenceSession session(models, std::move(options));
    Matrix logits = session.step(tokens);
    return {std::move(logits),     session.layer_outputs(), session.head_outputs(), session.classes(),
            session.importance(), session.stats()};
}

/// Index of the largest entry; ties resolve to the lowest index.
inline TokenId argmax_row(std::span<const double> row) {
    return static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
}

struct GenerateResult {
    std::vector<TokenId> tokens;  ///< continuation only
    ForwardStats stats;
};

/// Greedy decoding through the compressed KV cache.
inline GenerateResult generate(ModelRefs models, std::span<const TokenId> prompt, std::size_t n_new,
                               ForwardOptions options = {}) {
    GenerateResult out;
    if (n_new == 0) return out;
    InferenceSession session(models, std::move(options));
    Matrix logits = session.step(prompt);
    TokenId next = argmax_row(logits.row(logits.rows() - 1));
    out.tokens.push_back(next);
    while (out.tokens.size() < n_new) {
        const TokenId cur[1] = {next};
        logits = session.step(cur);
        next = argmax_row(logits.row(0));
        out.tokens.push_back(next);
    }
    out.stats = session.stats();
    return out;
}

}  // namespace zdc
