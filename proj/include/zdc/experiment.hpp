// End-to-end experiment driver: one INI config drives model and corpus
// generation, rotations, folding, planning, every execution mode and the
// sequence-parallel sweep, and produces a single JSON report with checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "zdc/corpus.hpp"
#include "zdc/forward.hpp"
#include "zdc/metrics.hpp"
#include "zdc/model.hpp"
#include "zdc/planner.hpp"
#include "zdc/rotation.hpp"
#include "zdc/sp_sim.hpp"

namespace zdc {

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "zdc_out";

    ModelDims dims{4, 2, 8, 32, 32};
    ModelInit init;

    CorpusSpec corpus{32, 8, 8, 16, 32, 6, 0};

    RotationOptions rotation;

    std::string plan_source = "regressor";  ///< zero | file | oracle | regressor
    std::filesystem::path plan_file;
    double target_qd = 0.1;
    std::string grid = "default";  ///< default | tiny
    ConstraintPolicy policy;
    std::size_t regressor_degree = 1;
    std::vector<double> regressor_targets;  ///< empty: 0.01 .. 0.30 step 0.01 without the target
    std::size_t eval_sequences = 8;
    std::size_t eval_length = 24;
    QdTargets qd_targets = QdTargets::Soft;
    bool grouping = true;
    double group_threshold = 0.95;
    std::size_t calibration_sequences = 8;

    std::vector<Mode> modes{Mode::Baseline, Mode::Zdc, Mode::ZdcZO, Mode::ZdcDT, Mode::ZdcDL, Mode::ZdcLT};
    std::size_t prompt_length = 16;
    std::size_t max_new = 8;
    bool normalize_importance = true;
    AblationConfig ablation;

    std::vector<std::size_t> sp_workers{1, 2};
    std::size_t sp_seq_len = 64;
    std::size_t bytes_per_element = 8;
    double link_bandwidth = 100e9;

    std::vector<double> sweep_p{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
};

namespace detail {

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        std::stringstream conv(item.substr(b, e - b + 1));
        T v;
        if (!(conv >> v)) throw std::invalid_argument("config: bad list item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("config: bad boolean '" + s + "'");
}

inline ConstraintDirection parse_direction(const std::string& s) {
    if (s == "prose") return ConstraintDirection::Prose;
    if (s == "as-printed") return ConstraintDirection::AsPrinted;
    throw std::invalid_argument("unknown constraint direction '" + s + "'");
}

inline std::string to_string(ConstraintDirection d) { return d == ConstraintDirection::Prose ? "prose" : "as-printed"; }

inline std::string to_string(QdTargets t) { return t == QdTargets::Soft ? "soft" : "hard"; }

}  // namespace detail

/// Known sections and keys; anything else is rejected so typos surface.
inline ExperimentConfig parse_config(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    pt::read_ini(is, tree);
    ExperimentConfig c;
    auto str = [](const pt::ptree& t, const std::string& k) { return t.get<std::string>(k); };
    for (const auto& [section, body] : tree) {
        for (const auto& [key, node] : body) {
            const std::string v = node.get_value<std::string>();
            const std::string id = section + "." + key;
            auto num = [&]() { return std::stod(v); };
            auto cnt = [&]() { return static_cast<std::size_t>(std::stoull(v)); };
            if (id == "experiment.seed") c.seed = std::stoull(v);
            else if (id == "experiment.out_dir") c.out_dir = v;
            else if (id == "model.n_layers") c.dims.n_layers = cnt();
            else if (id == "model.n_heads") c.dims.n_heads = cnt();
            else if (id == "model.head_dim") c.dims.head_dim = cnt();
            else if (id == "model.vocab") c.dims.vocab = cnt();
            else if (id == "model.ffn_dim") c.dims.ffn_dim = cnt();
            else if (id == "model.qk_scale") c.init.qk_scale = num();
            else if (id == "model.v_scale") c.init.v_scale = num();
            else if (id == "model.out_scale") c.init.out_scale = num();
            else if (id == "model.spectral_decay") c.init.spectral_decay = num();
            else if (id == "model.mlp_scale") c.init.mlp_scale = num();
            else if (id == "model.logit_scale") c.init.logit_scale = num();
            else if (id == "model.layer_share") c.init.layer_share = num();
            else if (id == "corpus.topics") c.corpus.topics = cnt();
            else if (id == "corpus.sequences_per_topic") c.corpus.sequences_per_topic = cnt();
            else if (id == "corpus.min_len") c.corpus.min_len = cnt();
            else if (id == "corpus.max_len") c.corpus.max_len = cnt();
            else if (id == "corpus.successors") c.corpus.successors = cnt();
            else if (id == "pipeline.prune") c.rotation.prune_ratio = num();
            else if (id == "pipeline.kmeans") c.rotation.use_kmeans = detail::parse_bool(v);
            else if (id == "pipeline.kmeans_k") c.rotation.kmeans_k = cnt();
            else if (id == "pipeline.kmeans_iters") c.rotation.kmeans_iters = cnt();
            else if (id == "plan.source") c.plan_source = v;
            else if (id == "plan.file") c.plan_file = v;
            else if (id == "plan.target_qd") c.target_qd = num();
            else if (id == "plan.grid") c.grid = v;
            else if (id == "plan.constraint_direction") c.policy.direction = detail::parse_direction(v);
            else if (id == "plan.strict_g") c.policy.strict_g = detail::parse_bool(v);
            else if (id == "plan.regressor_degree") c.regressor_degree = cnt();
            else if (id == "plan.regressor_targets") c.regressor_targets = detail::parse_list<double>(v);
            else if (id == "plan.eval_sequences") c.eval_sequences = cnt();
            else if (id == "plan.eval_length") c.eval_length = cnt();
            else if (id == "plan.qd_targets") c.qd_targets = parse_qd_targets(v);
            else if (id == "plan.grouping") c.grouping = detail::parse_bool(v);
            else if (id == "plan.group_threshold") c.group_threshold = num();
            else if (id == "plan.calibration_sequences") c.calibration_sequences = cnt();
            else if (id == "run.modes") {
                c.modes.clear();
                for (const auto& m : detail::parse_list<std::string>(v)) c.modes.push_back(parse_mode(m));
            }
            else if (id == "run.prompt_length") c.prompt_length = cnt();
            else if (id == "run.max_new") c.max_new = cnt();
            else if (id == "run.normalize_importance") c.normalize_importance = detail::parse_bool(v);
            else if (id == "run.dt_drop") c.ablation.dt_drop = num();
            else if (id == "run.dl_g") c.ablation.dl_g = num();
            else if (id == "run.dl_p_i") c.ablation.dl_p_i = num();
            else if (id == "run.dl_p_u") c.ablation.dl_p_u = num();
            else if (id == "run.sweep_p") c.sweep_p = detail::parse_list<double>(v);
            else if (id == "sp.workers") c.sp_workers = detail::parse_list<std::size_t>(v);
            else if (id == "sp.seq_len") c.sp_seq_len = cnt();
            else if (id == "sp.bytes_per_element") c.bytes_per_element = cnt();
            else if (id == "sp.link_bandwidth") c.link_bandwidth = num();
            else throw std::invalid_argument("config: unknown key '" + id + "'");
        }
    }
    (void)str;
    c.corpus.vocab = c.dims.vocab;
    c.init.seed = c.seed;
    c.corpus.seed = c.seed + 1;
    c.rotation.seed = c.seed + 2;
    if (c.plan_source != "zero" && c.plan_source != "file" && c.plan_source != "oracle" &&
        c.plan_source != "regressor") {
        throw std::invalid_argument("config: plan.source must be zero, file, oracle or regressor");
    }
    if (c.grid != "default" && c.grid != "tiny") throw std::invalid_argument("config: plan.grid must be default or tiny");
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    ExperimentConfig c = parse_config(is);
    if (!c.out_dir.is_absolute()) c.out_dir = path.parent_path() / c.out_dir;
    if (!c.plan_file.empty() && !c.plan_file.is_absolute()) c.plan_file = path.parent_path() / c.plan_file;
    return c;
}

/// Echo of every knob, written into the report.
inline nlohmann::json config_json(const ExperimentConfig& c) {
    std::vector<std::string> modes;
    for (Mode m : c.modes) modes.push_back(to_string(m));
    return {
        {"seed", c.seed},
        {"model", {{"dims", c.dims},
                   {"qk_scale", c.init.qk_scale},
                   {"v_scale", c.init.v_scale},
                   {"out_scale", c.init.out_scale},
                   {"spectral_decay", c.init.spectral_decay},
                   {"mlp_scale", c.init.mlp_scale},
                   {"logit_scale", c.init.logit_scale},
                   {"layer_share", c.init.layer_share}}},
        {"corpus", {{"topics", c.corpus.topics},
                    {"sequences_per_topic", c.corpus.sequences_per_topic},
                    {"min_len", c.corpus.min_len},
                    {"max_len", c.corpus.max_len},
                    {"successors", c.corpus.successors}}},
        {"pipeline", {{"prune", c.rotation.prune_ratio},
                      {"kmeans", c.rotation.use_kmeans},
                      {"kmeans_k", c.rotation.kmeans_k},
                      {"kmeans_iters", c.rotation.kmeans_iters}}},
        {"plan", {{"source", c.plan_source},
                  {"file", c.plan_file.string()},
                  {"target_qd", c.target_qd},
                  {"grid", c.grid},
                  {"constraint_direction", detail::to_string(c.policy.direction)},
                  {"strict_g", c.policy.strict_g},
                  {"regressor_degree", c.regressor_degree},
                  {"regressor_targets", c.regressor_targets},
                  {"eval_sequences", c.eval_sequences},
                  {"eval_length", c.eval_length},
                  {"qd_targets", detail::to_string(c.qd_targets)},
                  {"grouping", c.grouping},
                  {"group_threshold", c.group_threshold},
                  {"calibration_sequences", c.calibration_sequences}}},
        {"run", {{"modes", modes},
                 {"prompt_length", c.prompt_length},
                 {"max_new", c.max_new},
                 {"normalize_importance", c.normalize_importance},
                 {"dt_drop", c.ablation.dt_drop},
                 {"dl_g", c.ablation.dl_g},
                 {"dl_p_i", c.ablation.dl_p_i ? nlohmann::json(*c.ablation.dl_p_i) : nlohmann::json()},
                 {"dl_p_u", c.ablation.dl_p_u ? nlohmann::json(*c.ablation.dl_p_u) : nlohmann::json()},
                 {"sweep_p", c.sweep_p}}},
        {"sp", {{"workers", c.sp_workers},
                {"seq_len", c.sp_seq_len},
                {"bytes_per_element", c.bytes_per_element},
                {"link_bandwidth", c.link_bandwidth}}},
    };
}

inline GridSpec grid_from(const ExperimentConfig& c) {
    GridSpec g = c.grid == "tiny" ? GridSpec::tiny() : GridSpec{};
    g.policy = c.policy;
    return g;
}

inline std::vector<double> default_regressor_targets(double exclude) {
    std::vector<double> t;
    for (int i = 1; i <= 30; ++i) {
        const double v = i / 100.0;
        if (std::abs(v - exclude) > 1e-12) t.push_back(v);
    }
    return t;
}

struct PlanOutcome {
    CompressionPlan plan;
    nlohmann::json info;
};

/// Produces the plan named by plan.source; oracle and regressor plans are
/// searched with identity groups, then the calibration grouping is attached.
inline PlanOutcome make_plan(const ExperimentConfig& c, const ToyModel& base, const FoldedModel& folded,
                             QdEvaluator& ev) {
    PlanOutcome out;
    const std::size_t nl = base.dims.n_layers;
    const GridSpec grid = grid_from(c);
    if (c.plan_source == "zero") {
        out.plan = CompressionPlan::zero(nl);
    } else if (c.plan_source == "file") {
        out.plan = load_plan(c.plan_file);
    } else if (c.plan_source == "oracle") {
        const OracleResult r = enumerate_oracle(c.target_qd, ev, nl, grid);
        if (!r.feasible) throw std::runtime_error("oracle: no grid plan meets q_d <= " + std::to_string(c.target_qd));
        out.plan = r.best.plan;
        out.info["oracle"] = r;
    } else {
        const auto targets = c.regressor_targets.empty() ? default_regressor_targets(c.target_qd) : c.regressor_targets;
        const auto samples = oracle_samples(targets, ev, nl, grid);
        const Regressor reg = fit_regressor(samples, c.regressor_degree, c.policy);
        out.plan = predict(reg, c.target_qd);
        out.info["regressor"] = reg;
        out.info["training_samples"] = samples.size();
    }
    if (c.grouping && c.plan_source != "file") {
        const auto calib = sample_sequences(base, c.calibration_sequences, c.eval_length, c.seed + 4);
        const auto sets = calibration_importance_sets(base, calib, out.plan.g, c.normalize_importance);
        out.plan.group_map = identify_layer_groups(sets, c.group_threshold);
    }
    (void)folded;
    out.info["q_d"] = ev.q_d(out.plan);
    out.info["objective"] = objective(out.plan);
    out.info["constraint_violation"] = plan_violation(out.plan, c.policy);
    return out;
}

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline void to_json(nlohmann::json& j, const Check& c) {
    j = nlohmann::json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}};
}

struct ExperimentResult {
    nlohmann::json report;
    std::vector<Check> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

inline std::vector<TokenId> as_tokens(const Sequence& s) { return {s.begin(), s.end()}; }

}  // namespace detail

/// gen -> rotations -> fold -> plan -> run every mode -> SP sweep -> report.
/// Artifacts are written under config.out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    ExperimentResult res;
    auto& rep = res.report;
    auto check = [&](const std::string& name, bool pass, const std::string& detail) {
        res.checks.push_back({name, pass, detail});
    };
    rep["config"] = config_json(c);

    ModelInit init = c.init;
    init.seed = c.seed;
    const ToyModel base = init_model(c.dims, init);
    save_model(c.out_dir / "model", base);
    CorpusSpec cs = c.corpus;
    cs.vocab = c.dims.vocab;
    cs.seed = c.seed + 1;
    const Corpus corpus = generate_corpus(cs);
    save_corpus(c.out_dir / "corpus.json", corpus);

    RotationOptions ro = c.rotation;
    ro.seed = c.seed + 2;
    const RotationRun rot = compute_rotations(base, corpus, ro);
    const SingularValueProfile prof = singular_value_profile(rot.rotations, 1.0);
    save_rotations(c.out_dir / "rotations", rot.rotations,
                   {{"seed", ro.seed}, {"qk_below_1", prof.qk_fraction}, {"vl_below_1", prof.vl_fraction}});
    const FoldedModel folded = fold_parameters(base, rot.rotations);
    save_folded(c.out_dir / "folded", folded);
    rep["offline"] = {{"corpus_tokens_after_prune", rot.corpus_tokens},
                      {"svd_rows_per_matrix", rot.reduced_rows},
                      {"singular_values_below_1", {{"qk", prof.qk_fraction}, {"vl", prof.vl_fraction}}}};

    const ModelRefs refs{&base, &folded};
    const auto eval = sample_sequences(base, c.eval_sequences, c.eval_length, c.seed + 3);
    QdEvaluator ev(base, folded, eval, c.qd_targets, c.normalize_importance);

    PlanOutcome po = make_plan(c, base, folded, ev);
    save_plan(c.out_dir / "plan.json", po.plan);
    rep["plan"] = {{"plan", po.plan}, {"info", po.info}};
    {
        const double q = po.info["q_d"].get<double>();
        const std::string v = po.info["constraint_violation"].get<std::string>();
        check("plan_constraints", v.empty(), v.empty() ? "ok" : v);
        if (c.plan_source == "oracle") {
            check("plan_qd_within_target", q <= c.target_qd + kQdSlack, "q_d=" + detail::fmt(q));
        } else if (c.plan_source == "regressor") {
            check("plan_qd_within_target", q <= 1.2 * c.target_qd, "q_d=" + detail::fmt(q) + " (limit 1.2 x target)");
        }
    }

    // execution modes
    const auto prompt_seq = sample_sequences(base, 1, c.prompt_length, c.seed + 5).front();
    const auto prompt = detail::as_tokens(prompt_seq);
    ForwardOptions bopt;
    bopt.mode = Mode::Baseline;
    bopt.keep_head_outputs = true;
    const ForwardResult base_fwd = forward(refs, prompt, bopt);
    nlohmann::json modes = nlohmann::json::object();
    std::optional<ForwardResult> zdc_fwd;
    for (Mode m : c.modes) {
        ForwardOptions opt;
        opt.mode = m;
        opt.plan = po.plan;
        opt.normalize_importance = c.normalize_importance;
        opt.ablation = c.ablation;
        opt.keep_head_outputs = true;
        const ForwardResult fr = forward(refs, prompt, opt);
        const GenerateResult gen = generate(refs, prompt, c.max_new, opt);
        nlohmann::json mj;
        mj["prefill_stats"] = fr.stats;
        mj["generate_stats"] = gen.stats;
        mj["output_tokens"] = gen.tokens;
        mj["logits_checksum"] = logits_checksum(fr.logits);
        mj["logits_digest"] = logits_digest(fr.logits);
        mj["D_layer_outputs"] = degradation_D(base_fwd.layer_outputs, fr.layer_outputs);
        if (m != Mode::Baseline && m != Mode::ZdcZO) {
            mj["D_head_outputs"] = degradation_D(unrotate_head_outputs(base_fwd.head_outputs, rot.rotations),
                                                 unrotate_head_outputs(fr.head_outputs, rot.rotations));
        }
        mj["q_d"] = m == Mode::Baseline ? 0.0 : ev.q_d(opt);
        modes[to_string(m)] = mj;
        if (m == Mode::Zdc) {
            check("zero_delay_accounting", fr.stats.flops.compress == 0 && fr.stats.flops.decompress == 0,
                  "compress=" + std::to_string(fr.stats.flops.compress) +
                      " decompress=" + std::to_string(fr.stats.flops.decompress));
            zdc_fwd = fr;
        }
    }
    rep["modes"] = modes;
    if (zdc_fwd) {
        for (Mode m : c.modes) {
            if (m == Mode::ZdcZO) {
                ForwardOptions opt;
                opt.mode = m;
                opt.plan = po.plan;
                opt.normalize_importance = c.normalize_importance;
                const ForwardResult fr = forward(refs, prompt, opt);
                const double rel = relative_error(fr.logits, zdc_fwd->logits);
                const auto& f = fr.stats.flops;
                check("zo_matches_zdc", rel <= 1e-9 && f.compress > 0 && f.decompress > 0,
                      "rel=" + detail::fmt(rel) + " compress+decompress=" + std::to_string(f.compress + f.decompress));
            }
            if (m == Mode::ZdcLT) {
                ForwardOptions opt;
                opt.mode = m;
                opt.plan = po.plan;
                opt.normalize_importance = c.normalize_importance;
                const ForwardResult fr = forward(refs, prompt, opt);
                const bool same = fr.classes == zdc_fwd->classes && fr.logits == zdc_fwd->logits;
                check("lt_matches_zdc", same && fr.stats.flops.total() > zdc_fwd->stats.flops.total(),
                      same ? "identical classes" : "classes differ");
            }
        }
    }

    // p = 0 equivalence
    {
        ForwardOptions opt;
        opt.mode = Mode::Zdc;
        opt.plan = CompressionPlan::zero(c.dims.n_layers);
        const ForwardResult z = forward(refs, prompt, opt);
        const double rel = relative_error(z.logits, base_fwd.logits);
        check("p0_equivalence", rel <= 1e-8, "rel=" + detail::fmt(rel));
        rep["baseline_logits_checksum"] = logits_checksum(base_fwd.logits);
        rep["baseline_logits_digest"] = logits_digest(base_fwd.logits);
        rep["p0_logits_digest"] = logits_digest(z.logits);
    }

    // uniform-p sweep
    {
        nlohmann::json sweep = nlohmann::json::array();
        double prev_d = -1.0, prev_q = -1.0;
        bool mono = true, vanish = true;
        for (double p : c.sweep_p) {
            ForwardOptions opt;
            opt.mode = Mode::Zdc;
            opt.plan = CompressionPlan::uniform(c.dims.n_layers, p);
            const ForwardResult fr = forward(refs, prompt, opt);
            const Degradation d = degradation_D(base_fwd.layer_outputs, fr.layer_outputs);
            const double q = ev.q_d(*opt.plan);
            if (p == 0.0 && (d.value > 1e-9 || std::abs(q) > 1e-9)) vanish = false;
            if (d.value < prev_d - 1e-9 || q < prev_q - 1e-9) mono = false;
            prev_d = d.value;
            prev_q = q;
            sweep.push_back({{"p", p}, {"D", d}, {"q_d", q}, {"kvc_floats", fr.stats.kvc_floats},
                             {"flops", fr.stats.flops}});
        }
        rep["sweep"] = sweep;
        check("sweep_zero_at_p0", vanish, vanish ? "D and q_d vanish at p=0" : "nonzero at p=0");
        check("sweep_monotone", mono, mono ? "D and q_d non-decreasing" : "decrease found");
    }

    // sequence parallel
    {
        const auto sp_seq = detail::as_tokens(sample_sequences(base, 1, c.sp_seq_len, c.seed + 6).front());
        ForwardOptions opt;
        opt.mode = Mode::Zdc;
        opt.plan = po.plan;
        opt.normalize_importance = c.normalize_importance;
        const ForwardResult single = forward(refs, sp_seq, opt);
        nlohmann::json sp = nlohmann::json::array();
        bool layout = true, model_match = true;
        for (std::size_t w : c.sp_workers) {
            SPConfig cfg{w, c.bytes_per_element, c.link_bandwidth};
            const SPResult r = sp_forward(folded, sp_seq, po.plan, cfg, c.normalize_importance);
            const CommLedger pred = comm_bytes_model(po.plan, sp_seq.size(), c.dims, cfg);
            const double rel = relative_error(r.logits, single.logits);
            layout = layout && rel <= 1e-8;
            model_match = model_match && r.ledger == pred;
            sp.push_back({{"workers", w},
                          {"measured", r.ledger},
                          {"predicted", pred},
                          {"estimated_seconds", r.estimated_seconds},
                          {"logits_checksum", logits_checksum(r.logits)},
                          {"rel_vs_single_worker", rel}});
        }
        rep["sp"] = sp;
        check("sp_layout_invariance", layout, "all worker counts within 1e-8");
        check("sp_bytes_match_model", model_match, model_match ? "exact" : "ledger differs from closed form");
    }

    rep["checks"] = res.checks;
    rep["passed"] = res.all_passed();
    emit_report(rep, c.out_dir / "experiment.json");
    return res;
}

/// Combines separately produced stats / sp / plan files into one report.
inline nlohmann::json merge_reports(const std::vector<std::pair<std::string, std::filesystem::path>>& parts) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [key, path] : parts) {
        if (path.empty()) continue;
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read " + path.string());
        out[key] = nlohmann::json::parse(is);
    }
    return out;
}

}  // namespace zdc
