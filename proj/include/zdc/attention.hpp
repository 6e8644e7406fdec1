// Online attention path on folded parameters. Compression happens inside the
// QKV projection (dropping trailing columns of the folded weights) and
// decompression is absorbed by Q'K'^T and by the row-truncated folded W_L.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdc/importance.hpp"
#include "zdc/ledger.hpp"
#include "zdc/matrix.hpp"
#include "zdc/model.hpp"

namespace zdc {

struct CompressedQkv {
    Matrix q;
    Matrix k;
    Matrix v;
};

/// e * w[:, :width(row)] written into an (rows x out_width) zero matrix.
/// Each row uses its own kept width; the summation order matches matmul.
inline Matrix project_rows(const Matrix& e, const Matrix& w, const std::vector<std::size_t>& row_widths,
                           std::size_t out_width, FlopLedger* ledger = nullptr, FlopKind kind = FlopKind::Qkv) {
    if (e.cols() != w.rows()) throw std::invalid_argument("project_rows: " + e.shape() + " * " + w.shape());
    if (row_widths.size() != e.rows()) throw std::invalid_argument("project_rows: width list length mismatch");
    Matrix out(e.rows(), out_width);
    std::uint64_t flops = 0;
    for (std::size_t i = 0; i < e.rows(); ++i) {
        const std::size_t width = row_widths[i];
        if (width > out_width || width > w.cols()) throw std::invalid_argument("project_rows: width too large");
        double* oi = out.row(i).data();
        for (std::size_t k = 0; k < e.cols(); ++k) {
            const double eik = e(i, k);
            const double* wk = w.row(k).data();
            for (std::size_t j = 0; j < width; ++j) oi[j] += eik * wk[j];
        }
        flops += 2ull * e.cols() * width;
    }
    if (ledger) ledger->add(kind, flops);
    return out;
}

/// q' = e * trunc(wq_r, p_qk), k' likewise, v' = e * trunc(wv_r, p_vl).
inline CompressedQkv qkv_generate_compressed(const Matrix& e, const FoldedModel& folded, std::size_t layer,
                                             std::size_t head, double p_qk, double p_vl,
                                             FlopLedger* ledger = nullptr) {
    const auto& hw = folded.params.layers.at(layer).heads.at(head);
    if (e.cols() != hw.wq.rows()) {
        throw std::invalid_argument("qkv_generate_compressed: input " + e.shape() + " vs W " + hw.wq.shape());
    }
    const std::size_t dh = folded.params.dims.head_dim;
    const std::size_t kqk = kept_width(dh, p_qk);
    const std::size_t kvl = kept_width(dh, p_vl);
    const std::vector<std::size_t> wqk(e.rows(), kqk);
    const std::vector<std::size_t> wvl(e.rows(), kvl);
    return {project_rows(e, hw.wq, wqk, kqk, ledger), project_rows(e, hw.wk, wqk, kqk, ledger),
            project_rows(e, hw.wv, wvl, kvl, ledger)};
}

struct AttentionOutput {
    Matrix out;                   ///< s x width(v')
    std::vector<double> denoms;   ///< softmax row denominators sum_k exp(score)
    Matrix scores;                ///< scaled scores, kept for explicit recomputation paths
};

/// softmax(q' k'^T * scale) v'. `scale` is 1/sqrt(d_h) of the uncompressed
/// head regardless of the kept width.
inline AttentionOutput attention_compressed(const Matrix& q, const Matrix& k, const Matrix& v, double scale,
                                            bool causal, FlopLedger* ledger = nullptr) {
    if (q.cols() != k.cols()) throw std::invalid_argument("attention: q' " + q.shape() + " vs k' " + k.shape());
    if (k.rows() != v.rows()) throw std::invalid_argument("attention: k' " + k.shape() + " vs v' " + v.shape());
    Matrix scores = matmul_transposed(q, k);
    for (double& x : scores.data()) x *= scale;
    auto sm = softmax_rows(scores, causal);
    Matrix out = matmul(sm.probs, v);
    if (ledger) {
        ledger->add_matmul(FlopKind::Attn, q.rows(), q.cols(), k.rows());
        ledger->add(FlopKind::Attn, 4ull * q.rows() * k.rows());  // scale, max, exp, normalise
        ledger->add_matmul(FlopKind::Attn, q.rows(), k.rows(), v.cols());
    }
    return {std::move(out), std::move(sm.denoms), std::move(scores)};
}

/// Stacks the leading `width` rows of each head block of the folded W_L.
inline Matrix truncated_wl(const FoldedModel& folded, std::size_t layer, std::size_t width) {
    const auto& dims = folded.params.dims;
    const Matrix& wl = folded.params.layers.at(layer).wl;
    Matrix w(dims.n_heads * width, dims.model_dim());
    for (std::size_t h = 0; h < dims.n_heads; ++h)
        for (std::size_t i = 0; i < width; ++i)
            std::copy(wl.row(h * dims.head_dim + i).begin(), wl.row(h * dims.head_dim + i).end(),
                      w.row(h * width + i).begin());
    return w;
}

/// O_L = [o'_1, ..., o'_Nh] * stack_h(top `width` rows of R_h^T W_L^h).
/// `o_concat` holds the heads side by side, each `width` = kept(p_vl) wide.
inline Matrix linear_decompress(const Matrix& o_concat, const FoldedModel& folded, std::size_t layer, double p_vl,
                                FlopLedger* ledger = nullptr) {
    const auto& dims = folded.params.dims;
    const std::size_t width = kept_width(dims.head_dim, p_vl);
    if (o_concat.cols() != dims.n_heads * width) {
        throw std::invalid_argument("linear_decompress: input " + o_concat.shape() + " expected " +
                                    std::to_string(dims.n_heads * width) + " columns for p_vl=" +
                                    std::to_string(p_vl));
    }
    if (ledger) ledger->add_matmul(FlopKind::Linear, o_concat.rows(), o_concat.cols(), dims.model_dim());
    return matmul(o_concat, truncated_wl(folded, layer, width));
}

/// Same as linear_decompress but with an explicit kept width per head.
inline Matrix linear_decompress_width(const Matrix& o_concat, const FoldedModel& folded, std::size_t layer,
                                      std::size_t width, FlopLedger* ledger = nullptr) {
    const auto& dims = folded.params.dims;
    if (o_concat.cols() != dims.n_heads * width) {
        throw std::invalid_argument("linear_decompress: input " + o_concat.shape() + " vs width " +
                                    std::to_string(width));
    }
    if (ledger) ledger->add_matmul(FlopKind::Linear, o_concat.rows(), o_concat.cols(), dims.model_dim());
    return matmul(o_concat, truncated_wl(folded, layer, width));
}

}  // namespace zdc
