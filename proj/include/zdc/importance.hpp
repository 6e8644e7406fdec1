// Lightweight token importance from softmax row denominators.
//
// Slot l of the state holds the evidence available when entering layer l,
// i.e. sum_h denom_h(token) recorded from layer l-1's softmax. Slot 0 never
// has evidence, so layer 0 treats every token as important.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zdc {

enum class TokenClass : unsigned char { Important, Unimportant };

/// ceil(g * n) with the product snapped to 1e-9, never below 1 for n > 0.
inline std::size_t important_count(double g, std::size_t n) {
    if (!(g > 0.0 && g <= 1.0)) throw std::invalid_argument("important fraction must be in (0,1]");
    if (n == 0) return 0;
    const double snapped = std::round(g * static_cast<double>(n) * 1e9) / 1e9;
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(snapped)), 1, n);
}

class ImportanceState {
public:
    ImportanceState() = default;
    ImportanceState(std::size_t n_slots, bool normalize) : slots_(n_slots), normalize_(normalize) {}

    std::size_t n_slots() const { return slots_.size(); }
    bool normalize() const { return normalize_; }
    bool has_evidence(std::size_t slot) const { return slots_.at(slot).evidence; }
    const std::vector<double>& scores(std::size_t slot) const { return slots_.at(slot).scores; }
    std::size_t sorts_performed() const { return sorts_; }

    /// score(first + i) += sum_h denoms[h][i] (each divided by key_counts[i]
    /// when normalising). Heads are summed in index order.
    void update(std::size_t slot, std::size_t first, const std::vector<std::vector<double>>& denoms,
                std::span<const std::size_t> key_counts) {
        auto& s = slots_.at(slot);
        if (denoms.empty()) return;
        const std::size_t n = denoms.front().size();
        if (key_counts.size() != n) throw std::invalid_argument("importance: key count length mismatch");
        for (const auto& d : denoms) {
            if (d.size() != n) throw std::invalid_argument("importance: ragged denominators");
        }
        if (s.scores.size() < first + n) s.scores.resize(first + n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (const auto& d : denoms) acc += normalize_ ? d[i] / static_cast<double>(key_counts[i]) : d[i];
            s.scores[first + i] += acc;
        }
        s.evidence = true;
        s.ranking.reset();
    }

    /// Token indices by descending score; ties go to the lower index.
    const std::vector<std::size_t>& ranking(std::size_t slot) const {
        auto& s = slots_.at(slot);
        if (!s.ranking) {
            std::vector<std::size_t> idx(s.scores.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
            s.ranking = std::move(idx);
            ++sorts_;
        }
        return *s.ranking;
    }

private:
    struct Slot {
        std::vector<double> scores;
        bool evidence = false;
        mutable std::optional<std::vector<std::size_t>> ranking;
    };
    std::vector<Slot> slots_;
    bool normalize_ = true;
    mutable std::size_t sorts_ = 0;
};

/// Free-function form of ImportanceState::update, mirroring the accumulation
/// contract: returns the updated state.
inline ImportanceState token_importance_update(ImportanceState state, std::size_t slot, std::size_t first,
                                               const std::vector<std::vector<double>>& denoms,
                                               std::span<const std::size_t> key_counts) {
    state.update(slot, first, denoms, key_counts);
    return state;
}

/// Classes for `n_tokens` tokens at `layer`. A non-representative layer reuses
/// its representative's ranking (no sort) and cuts it at its own g.
inline std::vector<TokenClass> classify_tokens(const ImportanceState& state, std::size_t layer, double g_l,
                                               const std::vector<std::size_t>& group_map, std::size_t n_tokens) {
    const std::size_t rep = group_map.empty() ? layer : group_map.at(layer);
    std::vector<TokenClass> cls(n_tokens, TokenClass::Important);
    if (!state.has_evidence(rep)) return cls;
    const auto& rank = state.ranking(rep);
    if (rank.size() != n_tokens) {
        throw std::invalid_argument("classify_tokens: evidence covers " + std::to_string(rank.size()) +
                                    " tokens, expected " + std::to_string(n_tokens));
    }
    const std::size_t keep = important_count(g_l, n_tokens);
    for (std::size_t r = keep; r < n_tokens; ++r) cls[rank[r]] = TokenClass::Unimportant;
    return cls;
}

/// Class of the newest token (index n-1) among n tokens, with earlier tokens'
/// classes frozen. Equal scores rank the older token first.
inline TokenClass classify_newest(const ImportanceState& state, std::size_t layer, double g_l,
                                  const std::vector<std::size_t>& group_map) {
    const std::size_t rep = group_map.empty() ? layer : group_map.at(layer);
    if (!state.has_evidence(rep)) return TokenClass::Important;
    const auto& sc = state.scores(rep);
    const std::size_t n = sc.size();
    const double mine = sc.back();
    std::size_t ahead = 0;
    for (std::size_t j = 0; j + 1 < n; ++j) ahead += sc[j] >= mine ? 1 : 0;
    return ahead < important_count(g_l, n) ? TokenClass::Important : TokenClass::Unimportant;
}

}  // namespace zdc
