// zdc command-line driver.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "zdc/zdc.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<zdc::TokenId> read_prompt(const fs::path& path, std::size_t vocab) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::vector<zdc::TokenId> out;
    long long v;
    while (is >> v) {
        if (v < 0 || static_cast<std::size_t>(v) >= vocab) {
            throw std::invalid_argument("prompt token " + std::to_string(v) + " outside vocab");
        }
        out.push_back(static_cast<zdc::TokenId>(v));
    }
    if (!is.eof()) throw std::invalid_argument(path.string() + ": prompt must be whitespace-separated token ids");
    if (out.empty()) throw std::invalid_argument(path.string() + ": empty prompt");
    return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-delay QKV compression toolkit"};
    app.require_subcommand(1);

    // gen-model
    zdc::ModelDims dims{4, 2, 8, 32, 32};
    zdc::ModelInit init;
    fs::path model_out;
    auto* gen_model = app.add_subcommand("gen-model", "Generate a seeded toy model directory");
    gen_model->add_option("--layers", dims.n_layers)->capture_default_str();
    gen_model->add_option("--heads", dims.n_heads)->capture_default_str();
    gen_model->add_option("--head-dim", dims.head_dim)->capture_default_str();
    gen_model->add_option("--vocab", dims.vocab)->capture_default_str();
    gen_model->add_option("--ffn", dims.ffn_dim)->capture_default_str();
    gen_model->add_option("--seed", init.seed)->capture_default_str();
    gen_model->add_option("--layer-share", init.layer_share)->capture_default_str();
    gen_model->add_option("--out", model_out)->required();

    // gen-corpus
    zdc::CorpusSpec cspec;
    fs::path corpus_out;
    auto* gen_corpus = app.add_subcommand("gen-corpus", "Generate a per-topic Markov corpus");
    gen_corpus->add_option("--vocab", cspec.vocab)->capture_default_str();
    gen_corpus->add_option("--topics", cspec.topics)->capture_default_str();
    gen_corpus->add_option("--sequences", cspec.sequences_per_topic, "sequences per topic")->capture_default_str();
    gen_corpus->add_option("--min-len", cspec.min_len)->capture_default_str();
    gen_corpus->add_option("--max-len", cspec.max_len)->capture_default_str();
    gen_corpus->add_option("--successors", cspec.successors)->capture_default_str();
    gen_corpus->add_option("--seed", cspec.seed)->capture_default_str();
    gen_corpus->add_option("--out", corpus_out)->required();

    // rotations
    fs::path model_dir, corpus_file, rot_out;
    zdc::RotationOptions ropt;
    auto* rotations = app.add_subcommand("rotations", "Compute per-head rotation matrices");
    rotations->add_option("--model", model_dir)->required()->check(CLI::ExistingDirectory);
    rotations->add_option("--corpus", corpus_file)->required()->check(CLI::ExistingFile);
    rotations->add_option("--prune", ropt.prune_ratio)->capture_default_str();
    rotations->add_option("--kmeans-k", ropt.kmeans_k, "0 selects min(4096, n/4)")->capture_default_str();
    rotations->add_option("--kmeans-iters", ropt.kmeans_iters)->capture_default_str();
    rotations->add_flag("!--no-kmeans", ropt.use_kmeans, "feed raw activation rows to the SVD");
    rotations->add_option("--seed", ropt.seed)->capture_default_str();
    rotations->add_option("--out", rot_out)->required();

    // fold
    fs::path rot_dir, fold_out;
    auto* fold = app.add_subcommand("fold", "Fold rotations into model parameters");
    fold->add_option("--model", model_dir)->required()->check(CLI::ExistingDirectory);
    fold->add_option("--rotations", rot_dir)->required()->check(CLI::ExistingDirectory);
    fold->add_option("--out", fold_out)->required();

    // run
    fs::path folded_dir, plan_file, prompt_file, stats_out;
    std::string mode_name = "zdc";
    std::size_t max_new = 0;
    bool no_normalize = false;
    zdc::AblationConfig ablation;
    auto* run = app.add_subcommand("run", "Prefill a prompt and decode greedily");
    run->add_option("--model", model_dir)->required()->check(CLI::ExistingDirectory);
    run->add_option("--folded", folded_dir)->check(CLI::ExistingDirectory);
    run->add_option("--plan", plan_file)->check(CLI::ExistingFile);
    run->add_option("--mode", mode_name, "baseline|zdc|zdc/ZO|zdc/DT|zdc/DL|zdc/LT")->capture_default_str();
    run->add_option("--prompt-file", prompt_file)->required()->check(CLI::ExistingFile);
    run->add_option("--max-new", max_new)->capture_default_str();
    run->add_option("--stats-out", stats_out);
    run->add_option("--dt-drop", ablation.dt_drop)->capture_default_str();
    run->add_option("--dl-g", ablation.dl_g)->capture_default_str();
    run->add_flag("--no-normalize", no_normalize, "rank by raw row denominators");

    // plan
    double target_qd = 0.1;
    std::string plan_mode = "regressor", grid_name = "default", direction = "prose", qd_targets = "soft";
    std::size_t degree = 1, eval_n = 8, eval_len = 24;
    std::uint64_t eval_seed = 4;
    bool strict_g = false;
    fs::path plan_out;
    auto* plan = app.add_subcommand("plan", "Search a compression plan for a q_d target");
    plan->add_option("--model", model_dir)->required()->check(CLI::ExistingDirectory);
    plan->add_option("--folded", folded_dir)->required()->check(CLI::ExistingDirectory);
    plan->add_option("--target-qd", target_qd)->capture_default_str();
    plan->add_option("--mode", plan_mode)->check(CLI::IsMember({"oracle", "regressor"}))->capture_default_str();
    plan->add_option("--grid", grid_name)->check(CLI::IsMember({"default", "tiny"}))->capture_default_str();
    plan->add_option("--constraint-direction", direction)
        ->check(CLI::IsMember({"prose", "as-printed"}))
        ->capture_default_str();
    plan->add_flag("--strict-g", strict_g);
    plan->add_option("--degree", degree, "regressor polynomial degree")->check(CLI::Range(1, 3))->capture_default_str();
    plan->add_option("--eval-sequences", eval_n)->capture_default_str();
    plan->add_option("--eval-length", eval_len)->capture_default_str();
    plan->add_option("--eval-seed", eval_seed)->capture_default_str();
    plan->add_option("--qd-targets", qd_targets)->check(CLI::IsMember({"soft", "hard"}))->capture_default_str();
    plan->add_option("--out", plan_out)->required();

    // sp-sim
    zdc::SPConfig spc;
    std::size_t seq_len = 64;
    std::uint64_t sp_seed = 7;
    fs::path sp_report;
    auto* sp = app.add_subcommand("sp-sim", "Simulate sequence-parallel attention with byte accounting");
    sp->add_option("--folded", folded_dir)->required()->check(CLI::ExistingDirectory);
    sp->add_option("--plan", plan_file)->check(CLI::ExistingFile);
    sp->add_option("--workers", spc.n_workers)->capture_default_str();
    sp->add_option("--seq-len", seq_len)->capture_default_str();
    sp->add_option("--bytes-per-element", spc.bytes_per_element)->capture_default_str();
    sp->add_option("--link-bandwidth", spc.link_bandwidth)->capture_default_str();
    sp->add_option("--seed", sp_seed, "seed for the random token sequence")->capture_default_str();
    sp->add_option("--report", sp_report)->required();

    // report
    fs::path stats_in, sp_in, plan_in, report_out;
    auto* report = app.add_subcommand("report", "Merge stats, sp and plan files into one report");
    report->add_option("--stats", stats_in)->check(CLI::ExistingFile);
    report->add_option("--sp", sp_in)->check(CLI::ExistingFile);
    report->add_option("--plan", plan_in)->check(CLI::ExistingFile);
    report->add_option("--out", report_out)->required();

    // all
    fs::path config_file;
    auto* all = app.add_subcommand("all", "Run the full experiment from an INI config");
    all->add_option("--config", config_file)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_model) {
            const auto m = zdc::init_model(dims, init);
            zdc::save_model(model_out, m);
            std::cout << "model " << dims.n_layers << "x" << dims.n_heads << "x" << dims.head_dim << " -> "
                      << model_out.string() << "\n";
        } else if (*gen_corpus) {
            const auto c = zdc::generate_corpus(cspec);
            zdc::save_corpus(corpus_out, c);
            std::cout << "corpus " << c.topics.size() << " topics, " << c.total_tokens() << " tokens -> "
                      << corpus_out.string() << "\n";
        } else if (*rotations) {
            const auto m = zdc::load_model(model_dir);
            const auto c = zdc::load_corpus(corpus_file);
            const auto r = zdc::compute_rotations(m, c, ropt);
            const auto prof = zdc::singular_value_profile(r.rotations, 1.0);
            zdc::save_rotations(rot_out, r.rotations,
                                {{"seed", ropt.seed},
                                 {"prune", ropt.prune_ratio},
                                 {"corpus_tokens_after_prune", r.corpus_tokens},
                                 {"svd_rows_per_matrix", r.reduced_rows},
                                 {"qk_below_1", prof.qk_fraction},
                                 {"vl_below_1", prof.vl_fraction}});
            std::cout << "rotations -> " << rot_out.string() << " (sigma<1: qk " << prof.qk_fraction << ", vl "
                      << prof.vl_fraction << ")\n";
        } else if (*fold) {
            const auto m = zdc::load_model(model_dir);
            const auto r = zdc::load_rotations(rot_dir);
            zdc::save_folded(fold_out, zdc::fold_parameters(m, r));
            std::cout << "folded -> " << fold_out.string() << "\n";
        } else if (*run) {
            const auto base = zdc::load_model(model_dir);
            std::optional<zdc::FoldedModel> folded;
            zdc::ForwardOptions opt;
            opt.mode = zdc::parse_mode(mode_name);
            opt.ablation = ablation;
            opt.normalize_importance = !no_normalize;
            if (opt.mode != zdc::Mode::Baseline) {
                if (folded_dir.empty()) throw std::invalid_argument("--folded is required for mode " + mode_name);
                folded = zdc::load_folded(folded_dir);
            }
            if (!plan_file.empty()) opt.plan = zdc::load_plan(plan_file);
            const auto prompt = read_prompt(prompt_file, base.dims.vocab);
            const zdc::ModelRefs refs{&base, folded ? &*folded : nullptr};
            const auto gen = zdc::generate(refs, prompt, max_new, opt);
            nlohmann::json stats = gen.stats;
            stats["output_tokens"] = gen.tokens;
            stats["prompt_tokens"] = prompt.size();
            for (auto t : gen.tokens) std::cout << t << ' ';
            std::cout << "\n";
            if (!stats_out.empty()) write_json(stats_out, stats);
        } else if (*plan) {
            const auto base = zdc::load_model(model_dir);
            const auto folded = zdc::load_folded(folded_dir);
            zdc::GridSpec grid = grid_name == "tiny" ? zdc::GridSpec::tiny() : zdc::GridSpec{};
            grid.policy.direction = zdc::detail::parse_direction(direction);
            grid.policy.strict_g = strict_g;
            const auto eval = zdc::sample_sequences(base, eval_n, eval_len, eval_seed);
            zdc::QdEvaluator ev(base, folded, eval, zdc::parse_qd_targets(qd_targets));
            nlohmann::json info;
            zdc::CompressionPlan p;
            if (plan_mode == "oracle") {
                const auto r = zdc::enumerate_oracle(target_qd, ev, base.dims.n_layers, grid);
                info["oracle"] = r;
                if (!r.feasible) {
                    std::cerr << "infeasible: no grid plan reaches q_d <= " << target_qd << "; min q_d "
                              << r.best.q_d << "\n";
                    write_json(fs::path(plan_out).replace_extension(".infeasible.json"), info);
                    return 2;
                }
                p = r.best.plan;
            } else {
                const auto samples =
                    zdc::oracle_samples(zdc::default_regressor_targets(target_qd), ev, base.dims.n_layers, grid);
                const auto reg = zdc::fit_regressor(samples, degree, grid.policy);
                p = zdc::predict(reg, target_qd);
                info["regressor"] = reg;
            }
            zdc::save_plan(plan_out, p);
            std::cout << "plan -> " << plan_out.string() << " objective " << zdc::objective(p) << " q_d "
                      << ev.q_d(p) << "\n";
        } else if (*sp) {
            const auto folded = zdc::load_folded(folded_dir);
            const zdc::CompressionPlan p =
                plan_file.empty() ? zdc::CompressionPlan::zero(folded.params.dims.n_layers) : zdc::load_plan(plan_file);
            std::mt19937_64 rng(sp_seed);
            std::uniform_int_distribution<zdc::TokenId> tok(0, static_cast<zdc::TokenId>(folded.params.dims.vocab - 1));
            std::vector<zdc::TokenId> tokens(seq_len);
            for (auto& t : tokens) t = tok(rng);
            const auto r = zdc::sp_forward(folded, tokens, p, spc);
            const auto pred = zdc::comm_bytes_model(p, seq_len, folded.params.dims, spc);
            write_json(sp_report, {{"workers", spc.n_workers},
                                   {"seq_len", seq_len},
                                   {"measured", r.ledger},
                                   {"predicted", pred},
                                   {"matches_model", r.ledger == pred},
                                   {"estimated_seconds", r.estimated_seconds},
                                   {"logits_checksum", zdc::logits_checksum(r.logits)},
                                   {"logits_digest", zdc::logits_digest(r.logits)}});
            std::cout << "a2a1 " << r.ledger.a2a1_bytes << " a2a2 " << r.ledger.a2a2_bytes << " kv_gather " << r.ledger.kv_gather_bytes
                      << " bytes -> " << sp_report.string() << "\n";
        } else if (*report) {
            auto merged = zdc::merge_reports({{"stats", stats_in}, {"sp", sp_in}, {"plan", plan_in}});
            zdc::emit_report(merged, report_out);
        } else if (*all) {
            const auto cfg = zdc::load_config(config_file);
            const auto res = zdc::run_experiment(cfg);
            for (const auto& c : res.checks) {
                std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.detail << "\n";
            }
            std::cout << "report -> " << (cfg.out_dir / "experiment.json").string() << "\n";
            return res.all_passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
