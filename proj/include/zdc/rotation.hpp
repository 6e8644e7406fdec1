// Offline side: activation collection, per-head rotation matrices from SVD,
// parameter folding, singular-value profiles and layer grouping.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdc/corpus.hpp"
#include "zdc/forward.hpp"
#include "zdc/kmeans.hpp"
#include "zdc/matrix.hpp"
#include "zdc/model.hpp"
#include "zdc/svd.hpp"

namespace zdc {

/// Per-(layer, head) q/k/v rows gathered from uncompressed forward passes.
struct ActivationBank {
    ModelDims dims;
    std::vector<Matrix> q, k, v;  ///< index layer * n_heads + head
    std::size_t tokens = 0;

    std::size_t index(std::size_t l, std::size_t h) const { return l * dims.n_heads + h; }
};

inline ActivationBank collect_activations(const ToyModel& model, const std::vector<Sequence>& sequences) {
    ActivationBank bank;
    bank.dims = model.dims;
    const std::size_t slots = model.dims.n_layers * model.dims.n_heads;
    std::vector<std::vector<double>> q(slots), k(slots), v(slots);
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        ForwardOptions opt;
        opt.mode = Mode::Baseline;
        opt.sink = [&](std::size_t l, std::size_t h, const Matrix& qm, const Matrix& km, const Matrix& vm) {
            const std::size_t i = l * model.dims.n_heads + h;
            q[i].insert(q[i].end(), qm.data().begin(), qm.data().end());
            k[i].insert(k[i].end(), km.data().begin(), km.data().end());
            v[i].insert(v[i].end(), vm.data().begin(), vm.data().end());
        };
        forward({&model, nullptr}, seq, opt);
        bank.tokens += seq.size();
    }
    if (bank.tokens == 0) throw std::invalid_argument("collect_activations: no tokens");
    const std::size_t dh = model.dims.head_dim;
    for (std::size_t i = 0; i < slots; ++i) {
        bank.q.emplace_back(bank.tokens, dh, std::move(q[i]));
        bank.k.emplace_back(bank.tokens, dh, std::move(k[i]));
        bank.v.emplace_back(bank.tokens, dh, std::move(v[i]));
    }
    return bank;
}

inline ActivationBank collect_activations(const ToyModel& model, const Corpus& corpus) {
    if (corpus.vocab != model.dims.vocab) {
        throw std::invalid_argument("collect_activations: corpus vocab " + std::to_string(corpus.vocab) +
                                    " vs model vocab " + std::to_string(model.dims.vocab));
    }
    std::vector<Sequence> all;
    for (const auto& t : corpus.topics) all.insert(all.end(), t.sequences.begin(), t.sequences.end());
    return collect_activations(model, all);
}

struct Rotation {
    Matrix r;                   ///< d_h x d_h, columns ordered by singular value
    std::vector<double> sigma;  ///< length d_h, non-increasing
};

namespace detail {

inline Rotation rotation_from_rows(const Matrix& stacked, std::size_t dh) {
    if (stacked.rows() < dh) {
        throw std::invalid_argument("insufficient samples: " + std::to_string(stacked.rows()) + " rows for d_h=" +
                                    std::to_string(dh));
    }
    SvdResult s = svd(stacked);
    return {std::move(s.r_mat), std::move(s.sigma)};
}

}  // namespace detail

/// Right singular vectors of [q_rows; k_rows].
inline Rotation compute_rotation_qk(const Matrix& q_rows, const Matrix& k_rows) {
    if (q_rows.cols() != k_rows.cols()) {
        throw std::invalid_argument("compute_rotation_qk: " + q_rows.shape() + " vs " + k_rows.shape());
    }
    return detail::rotation_from_rows(vconcat(q_rows, k_rows), q_rows.cols());
}

/// Right singular vectors of [v_rows; w_l_head], w_l_head being the head's
/// W_L row block transposed to d x d_h.
inline Rotation compute_rotation_vl(const Matrix& v_rows, const Matrix& w_l_head) {
    if (v_rows.cols() != w_l_head.cols()) {
        throw std::invalid_argument("compute_rotation_vl: " + v_rows.shape() + " vs " + w_l_head.shape());
    }
    return detail::rotation_from_rows(vconcat(v_rows, w_l_head), w_l_head.cols());
}

struct RotationOptions {
    double prune_ratio = 0.5;
    bool use_kmeans = true;
    std::size_t kmeans_k = 0;  ///< 0 selects min(4096, n/4)
    std::size_t kmeans_iters = 25;
    std::uint64_t seed = 1;
};

struct RotationRun {
    RotationSet rotations;
    std::size_t corpus_tokens = 0;   ///< tokens after pruning
    std::size_t reduced_rows = 0;    ///< rows per activation matrix fed to the SVD
};

/// Shrinks an activation matrix to k centroids; k never drops below d_h so
/// the stacked SVD input stays square or tall.
inline Matrix reduce_rows(const Matrix& rows, const RotationOptions& opt, std::uint64_t seed) {
    if (!opt.use_kmeans) return rows;
    const std::size_t n = rows.rows();
    std::size_t k = opt.kmeans_k ? opt.kmeans_k : default_kmeans_k(n);
    k = std::min(n, std::max(k, std::min(n, rows.cols())));
    if (k >= n) return rows;
    return kmeans_reduce(rows, k, opt.kmeans_iters, seed);
}

/// Rotations for every (layer, head) from already-collected activations.
inline RotationSet rotations_from_bank(const ToyModel& model, const ActivationBank& bank,
                                       const RotationOptions& opt = {}, std::size_t* reduced_rows = nullptr) {
    RotationSet rs;
    rs.dims = model.dims;
    for (std::size_t l = 0; l < model.dims.n_layers; ++l) {
        for (std::size_t h = 0; h < model.dims.n_heads; ++h) {
            const std::size_t i = bank.index(l, h);
            const std::uint64_t base = opt.seed * 1000003ull + i * 3;
            const Matrix q = reduce_rows(bank.q[i], opt, base);
            const Matrix k = reduce_rows(bank.k[i], opt, base + 1);
            const Matrix v = reduce_rows(bank.v[i], opt, base + 2);
            if (reduced_rows) *reduced_rows = q.rows();
            Rotation qk = compute_rotation_qk(q, k);
            Rotation vl = compute_rotation_vl(v, wl_head_rows(model, l, h));
            rs.heads.push_back({std::move(qk.r), std::move(vl.r), std::move(qk.sigma), std::move(vl.sigma)});
        }
    }
    return rs;
}

/// prune -> collect -> k-means -> SVD per head and pair.
inline RotationRun compute_rotations(const ToyModel& model, const Corpus& corpus, const RotationOptions& opt = {}) {
    const Corpus pruned = prune_corpus(corpus, opt.prune_ratio, opt.seed);
    const ActivationBank bank = collect_activations(model, pruned);
    RotationRun run;
    run.corpus_tokens = bank.tokens;
    run.rotations = rotations_from_bank(model, bank, opt, &run.reduced_rows);
    return run;
}

/// Folds each head's rotations into W_Q, W_K, W_V and the W_L row block.
inline FoldedModel fold_parameters(const ToyModel& model, const RotationSet& rotations, double orth_tol = 1e-8) {
    model.validate();
    const auto& dims = model.dims;
    if (rotations.dims.n_layers != dims.n_layers || rotations.dims.n_heads != dims.n_heads ||
        rotations.dims.head_dim != dims.head_dim || rotations.heads.size() != dims.n_layers * dims.n_heads) {
        throw std::invalid_argument("fold_parameters: rotation set is " + std::to_string(rotations.dims.n_layers) +
                                    " layers x " + std::to_string(rotations.dims.n_heads) + " heads, model is " +
                                    std::to_string(dims.n_layers) + " x " + std::to_string(dims.n_heads));
    }
    const std::size_t dh = dims.head_dim;
    FoldedModel f{model, rotations};
    for (std::size_t l = 0; l < dims.n_layers; ++l) {
        auto& L = f.params.layers[l];
        for (std::size_t h = 0; h < dims.n_heads; ++h) {
            const auto& rot = rotations.at(l, h);
            for (const Matrix* r : {&rot.r_qk, &rot.r_vl}) {
                if (r->rows() != dh || r->cols() != dh) {
                    throw std::invalid_argument("fold_parameters: rotation " + r->shape() + " for d_h=" +
                                                std::to_string(dh));
                }
                const double res = orthogonality_residual(*r);
                if (!(res <= orth_tol)) {
                    throw std::invalid_argument("fold_parameters: rotation (" + std::to_string(l) + "," +
                                                std::to_string(h) + ") not orthogonal, residual " +
                                                std::to_string(res));
                }
            }
            auto& hw = L.heads[h];
            hw.wq = matmul(hw.wq, rot.r_qk);
            hw.wk = matmul(hw.wk, rot.r_qk);
            hw.wv = matmul(hw.wv, rot.r_vl);
            const Matrix block = matmul(transpose(rot.r_vl), slice_rows(model.layers[l].wl, h * dh, (h + 1) * dh));
            for (std::size_t i = 0; i < dh; ++i)
                std::copy(block.row(i).begin(), block.row(i).end(), L.wl.row(h * dh + i).begin());
        }
    }
    return f;
}

struct SingularValueProfile {
    double qk_fraction = 0.0;  ///< share of QK singular values below the threshold
    double vl_fraction = 0.0;
    std::size_t qk_count = 0;
    std::size_t vl_count = 0;
};

inline SingularValueProfile singular_value_profile(const RotationSet& rs, double threshold) {
    SingularValueProfile p;
    std::size_t qk_below = 0, vl_below = 0;
    for (const auto& h : rs.heads) {
        for (double s : h.sv_qk) qk_below += s < threshold ? 1 : 0;
        for (double s : h.sv_vl) vl_below += s < threshold ? 1 : 0;
        p.qk_count += h.sv_qk.size();
        p.vl_count += h.sv_vl.size();
    }
    if (p.qk_count) p.qk_fraction = static_cast<double>(qk_below) / static_cast<double>(p.qk_count);
    if (p.vl_count) p.vl_fraction = static_cast<double>(vl_below) / static_cast<double>(p.vl_count);
    return p;
}

/// |a ∩ b| / |a|, with an empty `a` matching only an empty `b`.
inline double repetition_ratio(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty()) return b.empty() ? 1.0 : 0.0;
    const std::set<std::size_t> sb(b.begin(), b.end());
    std::size_t common = 0;
    for (auto x : std::set<std::size_t>(a.begin(), a.end())) common += sb.count(x);
    return static_cast<double>(common) / static_cast<double>(std::set<std::size_t>(a.begin(), a.end()).size());
}

/// Greedy scan: a layer joins the open group while its important set repeats
/// more than `threshold` of the group's first layer's set.
inline std::vector<std::size_t> identify_layer_groups(const std::vector<std::vector<std::size_t>>& sets,
                                                      double threshold = 0.95) {
    std::vector<std::size_t> map(sets.size(), 0);
    std::size_t first = 0;
    for (std::size_t l = 1; l < sets.size(); ++l) {
        if (repetition_ratio(sets[first], sets[l]) > threshold) {
            map[l] = first;
        } else {
            first = l;
            map[l] = l;
        }
    }
    return map;
}

/// Per-layer important-token sets from uncompressed runs over `sequences`.
/// Positions are numbered globally across sequences. Layer l's set is the top
/// important_count(g[l]) of the evidence entering layer l.
inline std::vector<std::vector<std::size_t>> calibration_importance_sets(const ToyModel& model,
                                                                         const std::vector<Sequence>& sequences,
                                                                         const std::vector<double>& g,
                                                                         bool normalize = true) {
    const std::size_t nl = model.dims.n_layers;
    if (g.size() != nl) throw std::invalid_argument("calibration: g has wrong length");
    std::vector<std::vector<std::size_t>> sets(nl);
    std::size_t offset = 0;
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        ForwardOptions opt;
        opt.mode = Mode::Baseline;
        opt.normalize_importance = normalize;
        const ForwardResult r = forward({&model, nullptr}, seq, opt);
        for (std::size_t l = 0; l < nl; ++l) {
            const auto cls = classify_tokens(r.importance, l, g[l], CompressionPlan::identity_groups(nl), seq.size());
            for (std::size_t i = 0; i < cls.size(); ++i)
                if (cls[i] == TokenClass::Important) sets[l].push_back(offset + i);
        }
        offset += seq.size();
    }
    return sets;
}

}  // namespace zdc
