// In-process simulation of sequence-parallel attention: the prompt is split
// into contiguous token shards, the first all-to-all moves compressed q/k/v
// rows to head owners, the second brings head outputs back to token owners.
// Messages carry only kept elements; receivers zero-fill to working widths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/attention.hpp"
#include "zdc/forward.hpp"
#include "zdc/importance.hpp"
#include "zdc/kv_cache.hpp"
#include "zdc/matrix.hpp"
#include "zdc/model.hpp"
#include "zdc/plan.hpp"

namespace zdc {

struct SPConfig {
    std::size_t n_workers = 1;
    std::size_t bytes_per_element = 8;
    double link_bandwidth = 100e9;  ///< bytes/s, only used for the time estimate

    void validate(std::size_t n_heads) const {
        if (n_workers == 0) throw std::invalid_argument("sp: zero workers");
        if (n_heads % n_workers != 0) {
            throw std::invalid_argument("sp: " + std::to_string(n_workers) + " workers do not divide " +
                                        std::to_string(n_heads) + " heads");
        }
        if (bytes_per_element == 0) throw std::invalid_argument("sp: zero bytes per element");
        if (!(link_bandwidth > 0.0)) throw std::invalid_argument("sp: link bandwidth must be positive");
    }
};

struct LayerComm {
    std::uint64_t a2a1_bytes = 0;
    std::uint64_t a2a2_bytes = 0;
    std::uint64_t score_bytes = 0;
    std::uint64_t kv_gather_bytes = 0;
    bool operator==(const LayerComm&) const = default;
};

struct CommLedger {
    std::uint64_t a2a1_bytes = 0;
    std::uint64_t a2a2_bytes = 0;
    std::uint64_t kv_gather_bytes = 0;
    std::uint64_t score_bytes = 0;  ///< importance denominators and the score all-gather
    std::vector<LayerComm> layers;

    std::uint64_t total() const { return a2a1_bytes + a2a2_bytes + kv_gather_bytes + score_bytes; }
    bool operator==(const CommLedger&) const = default;

    LayerComm& layer(std::size_t l) {
        if (layers.size() <= l) layers.resize(l + 1);
        return layers[l];
    }
};

inline void to_json(nlohmann::json& j, const LayerComm& c) {
    j = nlohmann::json{{"a2a1_bytes", c.a2a1_bytes},
                       {"a2a2_bytes", c.a2a2_bytes},
                       {"score_bytes", c.score_bytes},
                       {"kv_gather_bytes", c.kv_gather_bytes}};
}

inline void to_json(nlohmann::json& j, const CommLedger& c) {
    j = nlohmann::json{{"a2a1_bytes", c.a2a1_bytes},       {"a2a2_bytes", c.a2a2_bytes},
                       {"kv_gather_bytes", c.kv_gather_bytes}, {"score_bytes", c.score_bytes},
                       {"total_bytes", c.total()},          {"layers", c.layers}};
}

struct Shard {
    std::size_t first = 0;  ///< global index of the first row
    Matrix rows;
};

/// Contiguous row blocks; the first s mod w shards get one extra row.
inline std::vector<Shard> partition_sequence(const Matrix& e, std::size_t n_workers) {
    if (n_workers == 0) throw std::invalid_argument("partition_sequence: zero workers");
    const std::size_t s = e.rows();
    if (s < n_workers) {
        throw std::invalid_argument("partition_sequence: " + std::to_string(s) + " tokens for " +
                                    std::to_string(n_workers) + " workers");
    }
    std::vector<Shard> out;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < n_workers; ++w) {
        const std::size_t len = s / n_workers + (w < s % n_workers ? 1 : 0);
        out.push_back({begin, slice_rows(e, begin, begin + len)});
        begin += len;
    }
    return out;
}

/// Worker owning `head` under contiguous head blocks.
inline std::size_t head_owner(std::size_t head, std::size_t n_heads, std::size_t n_workers) {
    return head / (n_heads / n_workers);
}

/// One worker's compressed projections for its token shard: per head, rows
/// at the working width, plus each row's kept width.
struct WorkerQkv {
    std::size_t first = 0;
    std::vector<Matrix> q, k, v;  ///< per head
    std::vector<std::size_t> w_qk, w_vl;
};

/// Full-sequence tensors of one head on its owner.
struct HeadQkv {
    std::size_t head = 0;
    Matrix q, k, v;
    std::vector<std::size_t> w_qk, w_vl;  ///< per global token
};

/// Wire message: kept elements of a block of rows of one tensor.
struct Message {
    std::size_t src = 0, dst = 0, head = 0;
    char tensor = 'q';
    std::size_t first = 0;
    std::vector<std::size_t> widths;
    std::vector<double> payload;
};

namespace detail {

inline Message pack(std::size_t src, std::size_t dst, std::size_t head, char tensor, std::size_t first,
                    const Matrix& m, const std::vector<std::size_t>& widths) {
    Message msg{src, dst, head, tensor, first, widths, {}};
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i).first(widths[i]);
        msg.payload.insert(msg.payload.end(), r.begin(), r.end());
    }
    return msg;
}

inline void unpack(const Message& msg, Matrix& into) {
    std::size_t at = 0;
    for (std::size_t i = 0; i < msg.widths.size(); ++i) {
        for (std::size_t j = 0; j < msg.widths[i]; ++j) into(msg.first + i, j) = msg.payload[at++];
    }
}

inline std::size_t max_width(const std::vector<std::size_t>& w) {
    std::size_t m = 0;
    for (auto x : w) m = std::max(m, x);
    return m;
}

}  // namespace detail

/// Head-distributing exchange. Returns, per worker, its heads' full-sequence
/// q/k/v. Only messages between distinct workers are charged.
inline std::vector<std::vector<HeadQkv>> all_to_all_first(const std::vector<WorkerQkv>& shards, std::size_t n_heads,
                                                          std::size_t bytes_per_element, CommLedger& ledger,
                                                          std::size_t layer = 0) {
    const std::size_t w = shards.size();
    if (w == 0 || n_heads % w != 0) throw std::invalid_argument("all_to_all_first: bad worker count");
    std::size_t s = 0;
    std::vector<std::size_t> w_qk, w_vl;
    for (const auto& sh : shards) {
        if (sh.first != s) throw std::invalid_argument("all_to_all_first: shards not contiguous");
        s += sh.w_qk.size();
        w_qk.insert(w_qk.end(), sh.w_qk.begin(), sh.w_qk.end());
        w_vl.insert(w_vl.end(), sh.w_vl.begin(), sh.w_vl.end());
    }
    const std::size_t qk_cols = detail::max_width(w_qk), vl_cols = detail::max_width(w_vl);

    std::vector<std::vector<HeadQkv>> out(w);
    for (std::size_t h = 0; h < n_heads; ++h) {
        out[head_owner(h, n_heads, w)].push_back({h, Matrix(s, qk_cols), Matrix(s, qk_cols), Matrix(s, vl_cols), w_qk, w_vl});
    }
    std::uint64_t sent = 0;
    for (std::size_t src = 0; src < w; ++src) {
        const auto& sh = shards[src];
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t dst = head_owner(h, n_heads, w);
            HeadQkv& target = out[dst][h % (n_heads / w)];
            for (const Message& msg : {detail::pack(src, dst, h, 'q', sh.first, sh.q[h], sh.w_qk),
                                       detail::pack(src, dst, h, 'k', sh.first, sh.k[h], sh.w_qk),
                                       detail::pack(src, dst, h, 'v', sh.first, sh.v[h], sh.w_vl)}) {
                detail::unpack(msg, msg.tensor == 'q' ? target.q : msg.tensor == 'k' ? target.k : target.v);
                if (src != dst) sent += msg.payload.size();
            }
        }
    }
    const std::uint64_t bytes = sent * bytes_per_element;
    ledger.a2a1_bytes += bytes;
    ledger.layer(layer).a2a1_bytes += bytes;
    return out;
}

/// Head-gathering exchange: per worker, its token rows with all heads'
/// outputs concatenated in head order.
inline std::vector<Matrix> all_to_all_second(const std::vector<std::vector<std::pair<std::size_t, Matrix>>>& head_outputs,
                                             const std::vector<std::size_t>& shard_sizes, std::size_t n_heads,
                                             std::size_t bytes_per_element, CommLedger& ledger, std::size_t layer = 0) {
    const std::size_t w = shard_sizes.size();
    if (head_outputs.size() != w) throw std::invalid_argument("all_to_all_second: worker count mismatch");
    std::size_t width = 0;
    for (const auto& heads : head_outputs)
        for (const auto& [h, o] : heads) width = std::max(width, o.cols());
    std::vector<Matrix> out;
    for (auto n : shard_sizes) out.emplace_back(n, n_heads * width);
    std::uint64_t sent = 0;
    for (std::size_t src = 0; src < w; ++src) {
        for (const auto& [h, o] : head_outputs[src]) {
            if (o.cols() != width) throw std::invalid_argument("all_to_all_second: ragged head widths");
            std::size_t first = 0;
            for (std::size_t dst = 0; dst < w; ++dst) {
                const std::vector<std::size_t> widths(shard_sizes[dst], width);
                Message msg = detail::pack(src, dst, h, 'o', 0, slice_rows(o, first, first + shard_sizes[dst]), widths);
                Matrix block(shard_sizes[dst], width);
                detail::unpack(msg, block);
                for (std::size_t i = 0; i < block.rows(); ++i)
                    std::copy(block.row(i).begin(), block.row(i).end(), out[dst].row(i).begin() + h * width);
                if (src != dst) sent += msg.payload.size();
                first += shard_sizes[dst];
            }
        }
    }
    const std::uint64_t bytes = sent * bytes_per_element;
    ledger.a2a2_bytes += bytes;
    ledger.layer(layer).a2a2_bytes += bytes;
    return out;
}

struct SPResult {
    Matrix logits;
    CommLedger ledger;
    double estimated_seconds = 0.0;  ///< total bytes / link bandwidth
};

namespace detail {

/// Whether evidence slot `slot` feeds a classification that actually splits
/// tokens, i.e. some layer ranks with it and keeps fewer than all tokens.
inline bool slot_needs_ranking(const CompressionPlan& plan, std::size_t slot, std::size_t s) {
    for (std::size_t m = 0; m < plan.n_layers(); ++m) {
        if (plan.group_map[m] == slot && important_count(plan.g[m], s) < s) return true;
    }
    return false;
}

}  // namespace detail

/// Prompt pass of the folded model with attention distributed by heads.
inline SPResult sp_forward(const FoldedModel& folded, std::span<const TokenId> tokens,
                           const std::optional<CompressionPlan>& plan_in, const SPConfig& config,
                           bool normalize_importance = true) {
    const ToyModel& p = folded.params;
    const auto& dims = p.dims;
    p.validate();
    config.validate(dims.n_heads);
    ForwardOptions fo;
    fo.plan = plan_in;
    const CompressionPlan plan = effective_plan(fo, dims.n_layers);
    const std::size_t s = tokens.size();
    const std::size_t w = config.n_workers;
    const std::size_t dh = dims.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t bpe = config.bytes_per_element;

    Matrix x(s, dims.model_dim());
    for (std::size_t i = 0; i < s; ++i) {
        if (tokens[i] >= dims.vocab) throw std::invalid_argument("token id " + std::to_string(tokens[i]) + " >= vocab");
        std::copy(p.embedding.row(tokens[i]).begin(), p.embedding.row(tokens[i]).end(), x.row(i).begin());
    }

    SPResult res;
    CommLedger& ledger = res.ledger;
    ledger.layers.assign(dims.n_layers, {});
    ImportanceState state(dims.n_layers, normalize_importance);
    std::vector<std::size_t> key_counts(s);
    for (std::size_t i = 0; i < s; ++i) key_counts[i] = visible_keys(i, s, s, true);

    for (std::size_t l = 0; l < dims.n_layers; ++l) {
        const auto& L = p.layers[l];
        const auto cls = classify_tokens(state, l, plan.g[l], plan.group_map, s);
        const auto shards = partition_sequence(rms_norm(x), w);

        std::vector<WorkerQkv> wq;
        std::vector<std::size_t> sizes;
        for (const auto& sh : shards) {
            WorkerQkv q{sh.first, {}, {}, {}, {}, {}};
            for (std::size_t i = 0; i < sh.rows.rows(); ++i) {
                const ClassWidths cw = class_widths(plan, cls[sh.first + i], dh);
                q.w_qk.push_back(cw.qk);
                q.w_vl.push_back(cw.vl);
            }
            const std::size_t oq = detail::max_width(q.w_qk), ov = detail::max_width(q.w_vl);
            for (std::size_t h = 0; h < dims.n_heads; ++h) {
                q.q.push_back(project_rows(sh.rows, L.heads[h].wq, q.w_qk, oq));
                q.k.push_back(project_rows(sh.rows, L.heads[h].wk, q.w_qk, oq));
                q.v.push_back(project_rows(sh.rows, L.heads[h].wv, q.w_vl, ov));
            }
            sizes.push_back(sh.rows.rows());
            wq.push_back(std::move(q));
        }

        const auto per_worker = all_to_all_first(wq, dims.n_heads, bpe, ledger, l);

        std::vector<std::vector<std::pair<std::size_t, Matrix>>> outputs(w);
        std::vector<std::vector<double>> denoms(dims.n_heads);
        for (std::size_t wk = 0; wk < w; ++wk) {
            for (const HeadQkv& hq : per_worker[wk]) {
                AttentionOutput att = attention_compressed(hq.q, hq.k, hq.v, scale, true);
                denoms[hq.head] = std::move(att.denoms);
                outputs[wk].emplace_back(hq.head, std::move(att.out));
            }
        }

        if (l + 1 < dims.n_layers) {
            state.update(l + 1, 0, denoms, key_counts);
            if (w > 1 && detail::slot_needs_ranking(plan, l + 1, s)) {
                const std::uint64_t b = (dims.n_heads * (w - 1) * s / w + s * (w - 1)) * bpe;
                ledger.score_bytes += b;
                ledger.layer(l).score_bytes += b;
            }
        }

        const auto o_rows = all_to_all_second(outputs, sizes, dims.n_heads, bpe, ledger, l);
        const std::size_t width = o_rows.front().cols() / dims.n_heads;
        std::vector<Matrix> o_l_parts;
        for (const auto& o : o_rows) o_l_parts.push_back(linear_decompress_width(o, folded, l, width));
        Matrix o_l = o_l_parts.front();
        for (std::size_t i = 1; i < o_l_parts.size(); ++i) o_l = vconcat(o_l, o_l_parts[i]);
        x = add(x, o_l);
        const Matrix e2 = rms_norm(x);
        Matrix hidden = matmul(e2, L.mlp_in);
        for (double& v : hidden.data()) v = std::tanh(v);
        x = add(x, matmul(hidden, L.mlp_out));

        // compressed KV of heads worker 0 does not own, gathered for decoding
        std::uint64_t kv = 0;
        for (std::size_t h = 0; h < dims.n_heads; ++h) {
            if (head_owner(h, dims.n_heads, w) == 0) continue;
            for (std::size_t i = 0; i < s; ++i) {
                const ClassWidths cw = class_widths(plan, cls[i], dh);
                kv += cw.qk + cw.vl;
            }
        }
        ledger.kv_gather_bytes += kv * bpe;
        ledger.layer(l).kv_gather_bytes += kv * bpe;
    }
    res.logits = matmul(rms_norm(x), p.output);
    res.estimated_seconds = static_cast<double>(ledger.total()) / config.link_bandwidth;
    return res;
}

/// Closed-form byte counts matching sp_forward's ledger, in integers.
inline CommLedger comm_bytes_model(const CompressionPlan& plan_in, std::size_t s, const ModelDims& dims,
                                   const SPConfig& config) {
    config.validate(dims.n_heads);
    CompressionPlan plan = plan_in;
    if (plan.group_map.empty()) plan.group_map = CompressionPlan::identity_groups(dims.n_layers);
    if (plan.n_layers() != dims.n_layers) throw std::invalid_argument("comm_bytes_model: plan layer count");
    const std::size_t w = config.n_workers;
    const std::size_t nh = dims.n_heads;
    const std::size_t bpe = config.bytes_per_element;
    const ClassWidths wi = class_widths(plan, TokenClass::Important, dims.head_dim);
    const ClassWidths wu = class_widths(plan, TokenClass::Unimportant, dims.head_dim);
    CommLedger c;
    c.layers.assign(dims.n_layers, {});
    for (std::size_t l = 0; l < dims.n_layers; ++l) {
        const std::size_t n_imp = plan.group_map[l] == 0 ? s : important_count(plan.g[l], s);
        const std::size_t n_un = s - n_imp;
        const std::uint64_t row_elems = n_imp * (2 * wi.qk + wi.vl) + n_un * (2 * wu.qk + wu.vl);
        const std::size_t v_work = std::max(wi.vl, n_un ? wu.vl : 0);
        LayerComm& lc = c.layers[l];
        lc.a2a1_bytes = nh * (w - 1) / w * row_elems * bpe;
        lc.a2a2_bytes = nh * (w - 1) / w * s * v_work * bpe;
        if (w > 1 && l + 1 < dims.n_layers && detail::slot_needs_ranking(plan, l + 1, s)) {
            lc.score_bytes = (nh * (w - 1) * s / w + s * (w - 1)) * bpe;
        }
        lc.kv_gather_bytes = (nh - nh / w) * (n_imp * (wi.qk + wi.vl) + n_un * (wu.qk + wu.vl)) * bpe;
        c.a2a1_bytes += lc.a2a1_bytes;
        c.a2a2_bytes += lc.a2a2_bytes;
        c.score_bytes += lc.score_bytes;
        c.kv_gather_bytes += lc.kv_gather_bytes;
    }
    return c;
}

/// FNV-1a over the raw bytes of the logits; a compact fingerprint for reports.
inline std::uint64_t logits_checksum(const Matrix& m) {
    std::uint64_t hsh = 1469598103934665603ull;
    const auto bytes = to_zdcm_bytes(m);
    for (unsigned char ch : bytes) {
        hsh ^= ch;
        hsh *= 1099511628211ull;
    }
    return hsh;
}

/// Hash of the logits quantized to 1e-9 of their largest magnitude, so runs
/// that differ only by rounding (folded vs unfolded weights) share a digest.
inline std::uint64_t logits_digest(const Matrix& m) {
    double scale = 0.0;
    for (double v : m.data()) scale = std::max(scale, std::abs(v));
    const double step = scale > 0.0 ? scale * 1e-9 : 1.0;
    std::uint64_t hsh = 1469598103934665603ull;
    for (double v : m.data()) {
        auto q = static_cast<std::uint64_t>(std::llround(v / step));
        for (int b = 0; b < 8; ++b, q >>= 8) {
            hsh ^= q & 0xffu;
            hsh *= 1099511628211ull;
        }
    }
    return hsh;
}

}  // namespace zdc
