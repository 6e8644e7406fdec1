// KV cache holding compressed key/value rows. Each token's rows are stored at
// the kept width of the token's class; reads zero-fill to a common width.
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zdc/importance.hpp"
#include "zdc/matrix.hpp"
#include "zdc/plan.hpp"

namespace zdc {

/// Kept widths of each pair for one token class.
struct ClassWidths {
    std::size_t qk = 0;
    std::size_t vl = 0;
};

inline ClassWidths class_widths(const CompressionPlan& plan, TokenClass cls, std::size_t head_dim) {
    const bool imp = cls == TokenClass::Important;
    return {kept_width(head_dim, imp ? plan.p_qk_i : plan.p_qk_u),
            kept_width(head_dim, imp ? plan.p_vl_i : plan.p_vl_u)};
}

class CompressedKVCache {
public:
    CompressedKVCache() = default;
    CompressedKVCache(std::size_t n_layers, std::size_t n_heads, std::size_t head_dim)
        : n_heads_(n_heads), head_dim_(head_dim), entries_(n_layers * n_heads), classes_(n_layers),
          layer_floats_(n_layers, 0) {}

    std::size_t n_layers() const { return classes_.size(); }
    std::size_t tokens(std::size_t layer, std::size_t head) const { return slot(layer, head).size(); }

    /// Appends `token`'s rows. Widths must match the class under `plan`.
    void write(std::size_t layer, std::size_t head, std::size_t token, std::span<const double> k_row,
               std::span<const double> v_row, TokenClass cls, const CompressionPlan& plan) {
        auto& s = slot(layer, head);
        if (token != s.size()) {
            throw std::invalid_argument("kv_write: token " + std::to_string(token) + " out of order (have " +
                                        std::to_string(s.size()) + ")");
        }
        const ClassWidths w = class_widths(plan, cls, head_dim_);
        if (k_row.size() != w.qk || v_row.size() != w.vl) {
            throw std::invalid_argument("kv_write: widths " + std::to_string(k_row.size()) + "/" +
                                        std::to_string(v_row.size()) + " do not match class widths " +
                                        std::to_string(w.qk) + "/" + std::to_string(w.vl));
        }
        s.push_back({std::vector<double>(k_row.begin(), k_row.end()), std::vector<double>(v_row.begin(), v_row.end())});
        auto& cl = classes_[layer];
        if (head == 0) cl.push_back(cls);
        layer_floats_[layer] += w.qk + w.vl;
        stored_floats_ += w.qk + w.vl;
    }

    /// K' and V' for all cached tokens, zero-filled to the given widths
    /// (0 = widest stored row).
    std::pair<Matrix, Matrix> read(std::size_t layer, std::size_t head, std::size_t k_width = 0,
                                   std::size_t v_width = 0) const {
        const auto& s = slot(layer, head);
        if (k_width == 0)
            for (const auto& e : s) k_width = std::max(k_width, e.k.size());
        if (v_width == 0)
            for (const auto& e : s) v_width = std::max(v_width, e.v.size());
        Matrix k(s.size(), k_width), v(s.size(), v_width);
        for (std::size_t t = 0; t < s.size(); ++t) {
            if (s[t].k.size() > k_width || s[t].v.size() > v_width) {
                throw std::invalid_argument("kv_read: requested width narrower than stored row");
            }
            std::copy(s[t].k.begin(), s[t].k.end(), k.row(t).begin());
            std::copy(s[t].v.begin(), s[t].v.end(), v.row(t).begin());
        }
        return {std::move(k), std::move(v)};
    }

    const std::vector<TokenClass>& classes(std::size_t layer) const { return classes_.at(layer); }
    std::uint64_t stored_floats() const { return stored_floats_; }
    std::uint64_t stored_floats(std::size_t layer) const { return layer_floats_.at(layer); }
    std::uint64_t stored_bytes() const { return stored_floats_ * sizeof(double); }

private:
    struct Entry {
        std::vector<double> k;
        std::vector<double> v;
    };
    std::vector<Entry>& slot(std::size_t l, std::size_t h) { return entries_.at(l * n_heads_ + h); }
    const std::vector<Entry>& slot(std::size_t l, std::size_t h) const { return entries_.at(l * n_heads_ + h); }

    std::size_t n_heads_ = 0;
    std::size_t head_dim_ = 0;
    std::vector<std::vector<Entry>> entries_;
    std::vector<std::vector<TokenClass>> classes_;
    std::vector<std::uint64_t> layer_floats_;
    std::uint64_t stored_floats_ = 0;
};

}  // namespace zdc
