// Compression-ratio planning: the objective, q_d measurement, the grid
// oracle and a polynomial regressor from a q_d target to a plan.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdc/forward.hpp"
#include "zdc/metrics.hpp"
#include "zdc/plan.hpp"
#include "zdc/svd.hpp"

namespace zdc {

/// sum_l [(p_qk_i + p_vl_i) g_l + (p_qk_u + p_vl_u)(1 - g_l)]
inline double objective(const CompressionPlan& plan) {
    const double imp = plan.p_qk_i + plan.p_vl_i;
    const double unimp = plan.p_qk_u + plan.p_vl_u;
    double total = 0.0;
    for (double g : plan.g) total += imp * g + unimp * (1.0 - g);
    return total;
}

struct PlanSample {
    CompressionPlan plan;
    double q_d = 0.0;
    double objective = 0.0;
};

inline void to_json(nlohmann::json& j, const PlanSample& s) {
    j = nlohmann::json{{"plan", s.plan}, {"q_d", s.q_d}, {"objective", s.objective}};
}

inline void from_json(const nlohmann::json& j, PlanSample& s) {
    j.at("plan").get_to(s.plan);
    j.at("q_d").get_to(s.q_d);
    s.objective = objective(s.plan);
}

enum class QdTargets {
    Hard,  ///< cross-entropy of the sampled next token
    Soft,  ///< expected cross-entropy under the base model's next-token distribution
};

inline QdTargets parse_qd_targets(const std::string& s) {
    if (s == "hard") return QdTargets::Hard;
    if (s == "soft") return QdTargets::Soft;
    throw std::invalid_argument("unknown q_d target kind '" + s + "'");
}

/// Measures q_d for plans against a fixed evaluation set, caching the
/// baseline logits and every plan already measured.
class QdEvaluator {
public:
    QdEvaluator(const ToyModel& base, const FoldedModel& folded, std::vector<Sequence> eval_set,
                QdTargets targets = QdTargets::Soft, bool normalize_importance = true)
        : base_(&base), folded_(&folded), eval_(std::move(eval_set)), targets_(targets),
          normalize_(normalize_importance) {
        if (eval_.empty()) throw std::invalid_argument("measure_qd: empty evaluation set");
        ForwardOptions opt;
        opt.mode = Mode::Baseline;
        for (const auto& seq : eval_) base_logits_.push_back(forward({base_, folded_}, seq, opt).logits);
        perp_base_ = perplexity_from(base_logits_);
    }

    double baseline_perplexity() const { return perp_base_; }
    std::size_t measurements() const { return measured_; }
    QdTargets targets() const { return targets_; }

    double perplexity(const CompressionPlan& plan) {
        ForwardOptions opt;
        opt.mode = Mode::Zdc;
        opt.plan = plan;
        opt.normalize_importance = normalize_;
        return perplexity(opt);
    }

    /// Any execution mode; not cached.
    double perplexity(const ForwardOptions& opt) {
        std::vector<Matrix> logits;
        for (const auto& seq : eval_) logits.push_back(forward({base_, folded_}, seq, opt).logits);
        ++measured_;
        return perplexity_from(logits);
    }

    double q_d(const ForwardOptions& opt) { return relative_perplexity_increase(perp_base_, perplexity(opt)); }

    double q_d(const CompressionPlan& plan) {
        const std::string key = nlohmann::json(plan).dump();
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        const double q = relative_perplexity_increase(perp_base_, perplexity(plan));
        cache_.emplace(key, q);
        return q;
    }

private:
    double perplexity_from(const std::vector<Matrix>& logits) const {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t s = 0; s < eval_.size(); ++s) {
            total += targets_ == QdTargets::Hard ? next_token_ce_sum(logits[s], eval_[s], &count)
                                                 : soft_ce_sum(base_logits_[s], logits[s], &count);
        }
        if (count == 0) throw std::invalid_argument("measure_qd: evaluation set has no next-token targets");
        return std::exp(total / static_cast<double>(count));
    }

    const ToyModel* base_;
    const FoldedModel* folded_;
    std::vector<Sequence> eval_;
    QdTargets targets_;
    bool normalize_;
    std::vector<Matrix> base_logits_;
    double perp_base_ = 0.0;
    std::size_t measured_ = 0;
    std::map<std::string, double> cache_;
};

inline double measure_qd(const CompressionPlan& plan, const ToyModel& base, const FoldedModel& folded,
                         const std::vector<Sequence>& eval_set, QdTargets targets = QdTargets::Soft) {
    QdEvaluator ev(base, folded, eval_set, targets);
    return ev.q_d(plan);
}

struct GridSpec {
    std::vector<double> p_values{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    std::vector<double> g_values{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};  ///< endpoints g_first <= g_last
    ConstraintPolicy policy;
    std::vector<std::size_t> group_map;  ///< empty = every layer its own group

    /// Three values per axis.
    static GridSpec tiny() {
        GridSpec g;
        g.p_values = {0.0, 0.4, 0.8};
        g.g_values = {0.2, 0.5, 0.8};
        return g;
    }
};

namespace detail {

/// Lexicographic key: g per layer, then the four p's.
inline std::vector<double> plan_key(const CompressionPlan& p) {
    std::vector<double> k = p.g;
    k.insert(k.end(), {p.p_qk_i, p.p_qk_u, p.p_vl_i, p.p_vl_u});
    return k;
}

inline long long objective_key(const CompressionPlan& p) { return std::llround(objective(p) * 1e9); }

}  // namespace detail

/// Every grid plan satisfying the constraints, in lexicographic plan order.
inline std::vector<CompressionPlan> enumerate_grid(std::size_t n_layers, const GridSpec& grid) {
    std::vector<CompressionPlan> plans;
    const auto groups = grid.group_map.empty() ? CompressionPlan::identity_groups(n_layers) : grid.group_map;
    for (double gf : grid.g_values)
        for (double gl : grid.g_values) {
            if (gl < gf) continue;
            if (grid.policy.strict_g && n_layers > 1 && !(gl > gf)) continue;
            for (double a : grid.p_values)
                for (double b : grid.p_values)
                    for (double c : grid.p_values)
                        for (double d : grid.p_values) {
                            CompressionPlan p;
                            p.g = CompressionPlan::interpolate_g(n_layers, gf, gl);
                            p.p_qk_i = a;
                            p.p_qk_u = b;
                            p.p_vl_i = c;
                            p.p_vl_u = d;
                            p.group_map = groups;
                            if (plan_violation(p, grid.policy).empty()) plans.push_back(std::move(p));
                        }
        }
    std::sort(plans.begin(), plans.end(),
              [](const CompressionPlan& x, const CompressionPlan& y) { return detail::plan_key(x) < detail::plan_key(y); });
    return plans;
}

struct OracleResult {
    bool feasible = false;
    PlanSample best;           ///< optimum if feasible, otherwise the minimum-q_d plan
    std::size_t evaluated = 0; ///< plans whose q_d was looked at
    std::size_t candidates = 0;
};

inline void to_json(nlohmann::json& j, const OracleResult& r) {
    j = nlohmann::json{{"feasible", r.feasible}, {"best", r.best}, {"evaluated", r.evaluated}, {"candidates", r.candidates}};
}

/// Tolerance on the q_d target; absorbs roundoff of the p = 0 plan.
inline constexpr double kQdSlack = 1e-9;

/// Grid search for the highest-objective plan with q_d <= t_qd. Plans are
/// visited by descending objective (ties in lexicographic order) and the first
/// feasible one is returned, which equals the argmax of full enumeration.
inline OracleResult enumerate_oracle(double t_qd, QdEvaluator& ev, std::size_t n_layers, const GridSpec& grid = {}) {
    auto plans = enumerate_grid(n_layers, grid);
    std::stable_sort(plans.begin(), plans.end(), [](const CompressionPlan& x, const CompressionPlan& y) {
        return detail::objective_key(x) > detail::objective_key(y);
    });
    OracleResult r;
    r.candidates = plans.size();
    double min_q = std::numeric_limits<double>::infinity();
    for (const auto& p : plans) {
        const double q = ev.q_d(p);
        ++r.evaluated;
        if (q <= t_qd + kQdSlack) {
            r.feasible = true;
            r.best = {p, q, objective(p)};
            return r;
        }
        if (q < min_q) {
            min_q = q;
            r.best = {p, q, objective(p)};
        }
    }
    return r;
}

inline OracleResult enumerate_oracle(double t_qd, const ToyModel& base, const FoldedModel& folded,
                                     const std::vector<Sequence>& eval_set, const GridSpec& grid = {}) {
    QdEvaluator ev(base, folded, eval_set);
    return enumerate_oracle(t_qd, ev, base.dims.n_layers, grid);
}

/// Clips a plan onto the constraint set: ranges first, then each ordering
/// constraint is met by lowering the ratio that must be smaller, and g_last
/// is raised to g_first. Both moves only reduce compression.
inline CompressionPlan project_plan(double g_first, double g_last, double p_qk_i, double p_qk_u, double p_vl_i,
                                    double p_vl_u, std::size_t n_layers, const ConstraintPolicy& policy,
                                    std::vector<std::size_t> group_map = {}, double p_max = 0.95, double g_min = 0.05) {
    auto clampp = [&](double v) { return std::clamp(v, 0.0, p_max); };
    g_first = std::clamp(g_first, g_min, 1.0);
    g_last = std::clamp(g_last, g_first, 1.0);
    double a = clampp(p_qk_i), b = clampp(p_qk_u), c = clampp(p_vl_i), d = clampp(p_vl_u);
    // Under the as-printed direction the roles of p_qk_u and p_vl_i swap.
    const bool printed = policy.direction == ConstraintDirection::AsPrinted;
    if (printed) std::swap(b, c);
    // want c <= a <= b and c <= d <= b
    a = std::min(a, b);
    d = std::min(d, b);
    c = std::min({c, a, d});
    if (printed) std::swap(b, c);
    CompressionPlan p;
    p.g = CompressionPlan::interpolate_g(n_layers, g_first, g_last);
    p.p_qk_i = a;
    p.p_qk_u = b;
    p.p_vl_i = c;
    p.p_vl_u = d;
    p.group_map = group_map.empty() ? CompressionPlan::identity_groups(n_layers) : std::move(group_map);
    if (policy.strict_g && n_layers > 1 && !(g_last > g_first)) {
        throw std::invalid_argument("project_plan: strict g needs g_last > g_first");
    }
    return p;
}

/// Per-output least-squares polynomial in q_d over the standardised input.
struct Regressor {
    static constexpr std::size_t kOutputs = 6;  ///< g_first, g_last, p_qk_i, p_qk_u, p_vl_i, p_vl_u
    std::size_t degree = 1;
    double x_mean = 0.0;
    double x_scale = 1.0;
    std::vector<std::vector<double>> coef;  ///< [output][power]
    std::size_t n_layers = 0;
    ConstraintPolicy policy;
    std::vector<std::size_t> group_map;

    std::vector<double> raw(double t_qd) const {
        const double x = (t_qd - x_mean) / x_scale;
        std::vector<double> out;
        for (const auto& c : coef) {
            double acc = 0.0, xp = 1.0;
            for (double ci : c) {
                acc += ci * xp;
                xp *= x;
            }
            out.push_back(acc);
        }
        return out;
    }
};

inline void to_json(nlohmann::json& j, const Regressor& r) {
    j = nlohmann::json{{"degree", r.degree}, {"x_mean", r.x_mean}, {"x_scale", r.x_scale}, {"coef", r.coef},
                       {"n_layers", r.n_layers}, {"group_map", r.group_map}};
}

inline std::vector<double> plan_outputs(const CompressionPlan& p) {
    return {p.g.front(), p.g.back(), p.p_qk_i, p.p_qk_u, p.p_vl_i, p.p_vl_u};
}

inline Regressor fit_regressor(const std::vector<PlanSample>& samples, std::size_t degree = 1,
                               const ConstraintPolicy& policy = {}) {
    if (degree > 3) throw std::invalid_argument("fit_regressor: degree must be <= 3");
    if (samples.size() < degree + 1) throw std::invalid_argument("fit_regressor: too few samples");
    Regressor r;
    r.degree = degree;
    r.policy = policy;
    r.n_layers = samples.front().plan.n_layers();
    r.group_map = samples.front().plan.group_map;
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (const auto& s : samples) mean += s.q_d;
    mean /= n;
    double var = 0.0;
    for (const auto& s : samples) var += (s.q_d - mean) * (s.q_d - mean);
    const double scale = std::sqrt(var / n);
    if (!(scale > 0.0)) throw std::invalid_argument("fit_regressor: degenerate design matrix (constant q_d)");
    r.x_mean = mean;
    r.x_scale = scale;

    Matrix x(samples.size(), degree + 1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].plan.n_layers() != r.n_layers) throw std::invalid_argument("fit_regressor: mixed layer counts");
        const double t = (samples[i].q_d - mean) / scale;
        double tp = 1.0;
        for (std::size_t k = 0; k <= degree; ++k, tp *= t) x(i, k) = tp;
    }
    const SvdResult s = svd(x);
    if (s.sigma.back() <= s.sigma.front() * 1e-10) {
        throw std::invalid_argument("fit_regressor: degenerate design matrix (rank deficient)");
    }
    r.coef.assign(Regressor::kOutputs, std::vector<double>(degree + 1, 0.0));
    for (std::size_t o = 0; o < Regressor::kOutputs; ++o) {
        // beta = R diag(1/sigma) U^T y
        std::vector<double> uty(degree + 1, 0.0);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const double y = plan_outputs(samples[i].plan)[o];
            for (std::size_t k = 0; k <= degree; ++k) uty[k] += s.u(i, k) * y;
        }
        for (std::size_t j = 0; j <= degree; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k <= degree; ++k) acc += s.r_mat(j, k) * uty[k] / s.sigma[k];
            r.coef[o][j] = acc;
        }
    }
    return r;
}

inline CompressionPlan predict(const Regressor& r, double t_qd) {
    const auto y = r.raw(t_qd);
    return project_plan(y[0], y[1], y[2], y[3], y[4], y[5], r.n_layers, r.policy, r.group_map);
}

/// Oracle solutions for a list of targets; the regressor's training data.
inline std::vector<PlanSample> oracle_samples(const std::vector<double>& targets, QdEvaluator& ev,
                                              std::size_t n_layers, const GridSpec& grid = {}) {
    std::vector<PlanSample> out;
    for (double t : targets) {
        const OracleResult r = enumerate_oracle(t, ev, n_layers, grid);
        if (r.feasible) out.push_back(r.best);
    }
    return out;
}

}  // namespace zdc
