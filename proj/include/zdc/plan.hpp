// CompressionPlan: per-layer important-token fractions, the four drop ratios
// and the layer-group map, with constraint checks and the JSON plan file.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/matrix.hpp"

namespace zdc {

enum class ConstraintDirection {
    Prose,      ///< p^u >= p^i and p_QK >= p_VL
    AsPrinted,  ///< p^u <= p^i and p_QK <= p_VL
};

struct ConstraintPolicy {
    ConstraintDirection direction = ConstraintDirection::Prose;
    bool strict_g = false;  ///< require g^l < g^{l+1} instead of <=
};

struct CompressionPlan {
    std::vector<double> g;  ///< important-token fraction per layer, in (0,1]
    double p_qk_i = 0.0;
    double p_qk_u = 0.0;
    double p_vl_i = 0.0;
    double p_vl_u = 0.0;
    std::vector<std::size_t> group_map;  ///< layer -> representative layer

    static CompressionPlan zero(std::size_t n_layers) { return uniform(n_layers, 0.0); }

    /// Every token shares one drop ratio for both pairs.
    static CompressionPlan uniform(std::size_t n_layers, double p, double g_all = 1.0) {
        CompressionPlan plan;
        plan.g.assign(n_layers, g_all);
        plan.p_qk_i = plan.p_qk_u = plan.p_vl_i = plan.p_vl_u = p;
        plan.group_map = identity_groups(n_layers);
        return plan;
    }

    static std::vector<std::size_t> identity_groups(std::size_t n_layers) {
        std::vector<std::size_t> m(n_layers);
        std::iota(m.begin(), m.end(), std::size_t{0});
        return m;
    }

    /// g linearly interpolated from `first` at layer 0 to `last` at the top layer.
    static std::vector<double> interpolate_g(std::size_t n_layers, double first, double last) {
        std::vector<double> g(n_layers, first);
        for (std::size_t l = 0; l < n_layers && n_layers > 1; ++l) {
            g[l] = first + (last - first) * static_cast<double>(l) / static_cast<double>(n_layers - 1);
        }
        return g;
    }

    std::size_t n_layers() const { return g.size(); }

    bool operator==(const CompressionPlan&) const = default;
};

/// Ranges and group-map structure only; no ordering constraints.
inline std::string plan_shape_violation(const CompressionPlan& plan) {
    for (double p : {plan.p_qk_i, plan.p_qk_u, plan.p_vl_i, plan.p_vl_u}) {
        if (!(p >= 0.0 && p < 1.0)) return "drop ratio outside [0,1): " + std::to_string(p);
    }
    if (plan.g.empty()) return "g is empty";
    for (std::size_t l = 0; l < plan.g.size(); ++l) {
        if (!(plan.g[l] > 0.0 && plan.g[l] <= 1.0)) return "g[" + std::to_string(l) + "] outside (0,1]";
    }
    if (plan.group_map.size() != plan.g.size()) return "group_map length differs from g";
    for (std::size_t l = 0; l < plan.group_map.size(); ++l) {
        const std::size_t rep = plan.group_map[l];
        if (rep > l) return "group_map[" + std::to_string(l) + "] points forward";
        if (plan.group_map[rep] != rep) return "group_map[" + std::to_string(l) + "] is not a representative";
    }
    return {};
}

/// Empty string when the plan is well formed and satisfies the policy,
/// otherwise a description of the first violation.
inline std::string plan_violation(const CompressionPlan& plan, const ConstraintPolicy& policy = {}) {
    constexpr double eps = 1e-12;
    if (auto v = plan_shape_violation(plan); !v.empty()) return v;
    for (std::size_t l = 1; l < plan.g.size(); ++l) {
        const bool ok = policy.strict_g ? plan.g[l] > plan.g[l - 1] : plan.g[l] >= plan.g[l - 1] - eps;
        if (!ok) return "g not increasing at layer " + std::to_string(l);
    }
    if (policy.direction == ConstraintDirection::Prose) {
        if (plan.p_qk_u < plan.p_qk_i - eps) return "p_qk_u < p_qk_i";
        if (plan.p_vl_u < plan.p_vl_i - eps) return "p_vl_u < p_vl_i";
        if (plan.p_qk_i < plan.p_vl_i - eps) return "p_qk_i < p_vl_i";
        if (plan.p_qk_u < plan.p_vl_u - eps) return "p_qk_u < p_vl_u";
    } else {
        if (plan.p_qk_u > plan.p_qk_i + eps) return "p_qk_u > p_qk_i";
        if (plan.p_vl_u > plan.p_vl_i + eps) return "p_vl_u > p_vl_i";
        if (plan.p_qk_i > plan.p_vl_i + eps) return "p_qk_i > p_vl_i";
        if (plan.p_qk_u > plan.p_vl_u + eps) return "p_qk_u > p_vl_u";
    }
    return {};
}

inline void validate_plan(const CompressionPlan& plan, const ConstraintPolicy& policy = {}) {
    if (auto v = plan_violation(plan, policy); !v.empty()) throw std::invalid_argument("plan: " + v);
}

inline void to_json(nlohmann::json& j, const CompressionPlan& p) {
    j = nlohmann::json{{"g", p.g},           {"p_qk_i", p.p_qk_i}, {"p_qk_u", p.p_qk_u},
                       {"p_vl_i", p.p_vl_i}, {"p_vl_u", p.p_vl_u}, {"group_map", p.group_map}};
}

inline void from_json(const nlohmann::json& j, CompressionPlan& p) {
    j.at("g").get_to(p.g);
    j.at("p_qk_i").get_to(p.p_qk_i);
    j.at("p_qk_u").get_to(p.p_qk_u);
    j.at("p_vl_i").get_to(p.p_vl_i);
    j.at("p_vl_u").get_to(p.p_vl_u);
    if (j.contains("group_map")) {
        j.at("group_map").get_to(p.group_map);
    } else {
        p.group_map = CompressionPlan::identity_groups(p.g.size());
    }
}

inline void save_plan(const std::filesystem::path& path, const CompressionPlan& plan) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << nlohmann::json(plan).dump(2) << "\n";
}

inline CompressionPlan load_plan(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(is).get<CompressionPlan>();
}

}  // namespace zdc
