// FLOP ledger shared by inference paths. Counters are atomics so concurrent
// requests can charge the same ledger; snapshots are plain values.
#pragma once

#include <atomic>
#include <cstdint>

#include <nlohmann/json.hpp>

namespace zdc {

enum class FlopKind { Qkv, Attn, Linear, Compress, Decompress, Importance, Mlp, Output, Count_ };

struct FlopCounts {
    std::uint64_t qkv = 0;
    std::uint64_t attn = 0;
    std::uint64_t linear = 0;
    std::uint64_t compress = 0;
    std::uint64_t decompress = 0;
    std::uint64_t importance = 0;
    std::uint64_t mlp = 0;
    std::uint64_t output = 0;

    std::uint64_t total() const { return qkv + attn + linear + compress + decompress + importance + mlp + output; }
    bool operator==(const FlopCounts&) const = default;
};

inline void to_json(nlohmann::json& j, const FlopCounts& f) {
    j = nlohmann::json{{"qkv", f.qkv},
                       {"attn", f.attn},
                       {"linear", f.linear},
                       {"compress", f.compress},
                       {"decompress", f.decompress},
                       {"importance", f.importance},
                       {"mlp", f.mlp},
                       {"output", f.output},
                       {"total", f.total()}};
}

inline void from_json(const nlohmann::json& j, FlopCounts& f) {
    j.at("qkv").get_to(f.qkv);
    j.at("attn").get_to(f.attn);
    j.at("linear").get_to(f.linear);
    j.at("compress").get_to(f.compress);
    j.at("decompress").get_to(f.decompress);
    j.at("importance").get_to(f.importance);
    j.at("mlp").get_to(f.mlp);
    j.at("output").get_to(f.output);
}

class FlopLedger {
public:
    void add(FlopKind kind, std::uint64_t flops) {
        counters_[static_cast<std::size_t>(kind)].fetch_add(flops, std::memory_order_relaxed);
    }

    /// Multiply-add count of an (m x k) * (k x n) product.
    void add_matmul(FlopKind kind, std::size_t m, std::size_t k, std::size_t n) {
        add(kind, 2ull * m * k * n);
    }

    FlopCounts snapshot() const {
        auto get = [&](FlopKind k) { return counters_[static_cast<std::size_t>(k)].load(std::memory_order_relaxed); };
        return {get(FlopKind::Qkv),        get(FlopKind::Attn),       get(FlopKind::Linear),
                get(FlopKind::Compress),   get(FlopKind::Decompress), get(FlopKind::Importance),
                get(FlopKind::Mlp),        get(FlopKind::Output)};
    }

    void reset() {
        for (auto& c : counters_) c.store(0, std::memory_order_relaxed);
    }

private:
    std::atomic<std::uint64_t> counters_[static_cast<std::size_t>(FlopKind::Count_)]{};
};

}  // namespace zdc
