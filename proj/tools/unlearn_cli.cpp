// Command-line front door for the game-theoretic unlearning lab.
//
// Subcommands: train, attack-train, unlearn, evaluate, sweep-lambda.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure,
// 5 game divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unlearn/attack.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/eval.hpp"
#include "unlearn/experiment.hpp"
#include "unlearn/game.hpp"
#include "unlearn/io.hpp"
#include "unlearn/mlp.hpp"

namespace {

using namespace unlearn;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir_flag;
    std::int64_t seed_flag = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config file (key = value)");
    cmd->add_option("--set", args.overrides, "override a config key, key=value (repeatable)");
    cmd->add_option("-o,--out-dir", args.out_dir_flag, "output directory");
    cmd->add_option("--seed", args.seed_flag, "master seed override");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (!args.out_dir_flag.empty()) overrides.push_back("out_dir=" + args.out_dir_flag);
    if (args.seed_flag >= 0) overrides.push_back("seed=" + std::to_string(args.seed_flag));
    return load_experiment_config(args.config_path, overrides);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

ModelParams load_kind(const std::string& path, const std::string& kind) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.kind != kind) {
        throw DataError(path + ": expected a '" + kind + "' checkpoint, found '" + ck.kind + "'");
    }
    return std::move(ck.params);
}

AttackTrainConfig seeded_attack_config(const ExperimentConfig& cfg) {
    AttackTrainConfig acfg = cfg.attack;
    acfg.shadow.seed = substream_seed(cfg.seed, "shadow-root", acfg.shadow.seed);
    return acfg;
}

MiaConfig seeded_mia_config(const ExperimentConfig& cfg) {
    MiaConfig mia = cfg.mia;
    mia.seed = substream_seed(cfg.seed, "mia-root", mia.seed);
    return mia;
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = resolve_config(args);
    ExperimentData data = build_experiment_data(cfg);
    MlpArchitecture arch = experiment_architecture(cfg, data.train);
    ModelParams m_o = train(init_model(arch, substream_seed(cfg.seed, "orig-init")), data.train,
                            cfg.train, substream_seed(cfg.seed, "orig-train"));
    const std::string path = out_path(cfg, "m_o.ckpt");
    save_checkpoint(path, m_o, "model");
    std::printf("train_accuracy=%.4f test_accuracy=%.4f checkpoint=%s\n",
                accuracy(m_o, data.train), accuracy(m_o, data.test), path.c_str());
    return 0;
}

int cmd_attack_train(const CommonArgs& args, const std::string& model_path) {
    ExperimentConfig cfg = resolve_config(args);
    ExperimentData data = build_experiment_data(cfg);
    const std::string m_o_path = model_path.empty() ? out_path(cfg, "m_o.ckpt") : model_path;
    ModelParams m_o = load_kind(m_o_path, "model");
    AttackTrainResult res =
        train_attack(m_o, seeded_attack_config(cfg), data.bundle.d_r, data.bundle.d_third);
    const std::string path = out_path(cfg, "m_a.ckpt");
    save_checkpoint(path, res.model.net, "attack");
    std::printf("attack_val_accuracy=%.4f pairs=%zu checkpoint=%s\n", res.val_accuracy,
                res.pair_count, path.c_str());
    return 0;
}

int cmd_unlearn(const CommonArgs& args, const std::string& model_path,
                const std::string& attack_path) {
    ExperimentConfig cfg = resolve_config(args);
    ExperimentData data = build_experiment_data(cfg);
    const std::string m_o_path = model_path.empty() ? out_path(cfg, "m_o.ckpt") : model_path;
    ModelParams m_o = load_kind(m_o_path, "model");
    if (m_o.arch.input_dim != data.train.dim() || m_o.arch.class_count != data.train.class_count) {
        throw DataError(m_o_path + ": checkpoint does not match the configured dataset");
    }

    AttackModel m_a;
    if (!attack_path.empty()) {
        m_a.net = load_kind(attack_path, "attack");
    } else {
        m_a = train_attack(m_o, seeded_attack_config(cfg), data.bundle.d_r, data.bundle.d_third)
                  .model;
    }
    ModelParams m_r_alt =
        train(init_model(m_o.arch, substream_seed(cfg.seed, "alt-init")), data.bundle.d_r_alt,
              cfg.train, substream_seed(cfg.seed, "alt-train"));

    EquilibriumResult eq = play(m_o, data.bundle, m_r_alt, m_a, cfg.game);

    save_checkpoint(out_path(cfg, "m_u.ckpt"), eq.unlearned, "model");
    atomic_write_text(out_path(cfg, "trace.csv"), eq.trace.to_csv());
    const TraceRow& last = eq.trace.rows.back();
    nlohmann::json summary{{"converged", eq.converged}, {"rounds_used", eq.rounds_used},
                           {"lambda", cfg.game.lambda},  {"seed", cfg.seed},
                           {"loss_L", last.loss_L},      {"loss_F", last.loss_F},
                           {"priaa", last.priaa}};
    atomic_write_text(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
    std::printf("converged=%s rounds=%d loss_L=%.6f loss_F=%.6f priaa=%.6f\n",
                eq.converged ? "true" : "false", eq.rounds_used, last.loss_L, last.loss_F,
                last.priaa);
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& model_path,
                 const std::string& attack_path, const std::string& unlearned_path,
                 bool with_retrain) {
    ExperimentConfig cfg = resolve_config(args);
    ExperimentData data = build_experiment_data(cfg);
    const SplitBundle& bundle = data.bundle;
    ModelParams m_o = load_kind(model_path.empty() ? out_path(cfg, "m_o.ckpt") : model_path,
                                "model");
    AttackModel m_a{load_kind(attack_path.empty() ? out_path(cfg, "m_a.ckpt") : attack_path,
                              "attack")};
    ModelParams m_u = load_kind(
        unlearned_path.empty() ? out_path(cfg, "m_u.ckpt") : unlearned_path, "model");

    EvalReport rep;
    rep.lambda = cfg.game.lambda;
    rep.seed = cfg.seed;
    rep.request = bundle.request;
    rep.with_retrain = with_retrain;
    rep.with_timing = with_retrain;

    rep.acc_test = accuracy(m_u, bundle.d_eval);
    rep.acc_df = accuracy(m_u, bundle.d_f);
    rep.acc_dr = accuracy(m_u, bundle.d_r);
    rep.attack_prob_ours = attack_prob(m_a, m_o, m_u, bundle.d_f);
    rep.priaa_ours = priaa(rep.attack_prob_ours);
    MiaConfig mia = seeded_mia_config(cfg);
    rep.mia_original = classic_mia_prob(m_o, bundle.d_r, bundle.d_test, bundle.d_f, mia);
    rep.mia_ours = classic_mia_prob(m_u, bundle.d_r, bundle.d_test, bundle.d_f, mia);

    if (with_retrain) {
        auto t0 = std::chrono::steady_clock::now();
        ModelParams m_r =
            train(init_model(m_o.arch, substream_seed(cfg.seed, "retrain-init")), bundle.d_r,
                  cfg.train, substream_seed(cfg.seed, "retrain-train"));
        rep.time_retrain_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                 .count();
        rep.attack_prob_retrain = attack_prob(m_a, m_o, m_r, bundle.d_f);
        rep.priaa_retrain = priaa(rep.attack_prob_retrain);
        rep.mia_retrain = classic_mia_prob(m_r, bundle.d_r, bundle.d_test, bundle.d_f, mia);

        // Re-run the game under the same clock so the speedup compares like
        // with like; determinism makes the rerun reproduce m_u.
        ModelParams m_r_alt =
            train(init_model(m_o.arch, substream_seed(cfg.seed, "alt-init")), bundle.d_r_alt,
                  cfg.train, substream_seed(cfg.seed, "alt-train"));
        t0 = std::chrono::steady_clock::now();
        play(m_o, bundle, m_r_alt, m_a, cfg.game);
        rep.time_ours_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.speedup = rep.time_retrain_s / rep.time_ours_s;
    }

    const std::string path = out_path(cfg, "report.json");
    atomic_write_text(path, rep.to_json().dump(2) + "\n");
    std::printf("report=%s\n", path.c_str());
    return 0;
}

int cmd_sweep_lambda(const CommonArgs& args, const std::string& lambda_list, int jobs) {
    ExperimentConfig cfg = resolve_config(args);
    std::vector<double> lambdas;
    std::stringstream ss(lambda_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = unlearn::detail::trim(tok);
        if (tok.empty()) continue;
        try {
            lambdas.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("sweep-lambda: bad lambda '" + tok + "'");
        }
    }
    if (lambdas.empty()) {
        throw ConfigError("sweep-lambda: empty lambda list");
    }
    ExperimentData data = build_experiment_data(cfg);
    MlpArchitecture arch = experiment_architecture(cfg, data.train);
    PipelineConfig pc = experiment_pipeline_config(cfg, arch);
    LambdaSweepResult sweep = lambda_sweep(data.bundle, pc, lambdas, jobs);
    const std::string path = out_path(cfg, "sweep.csv");
    atomic_write_text(path, sweep_to_csv(sweep));
    std::printf("sweep=%s points=%zu\n", path.c_str(), sweep.points.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Game-theoretic machine unlearning lab"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string model_path, attack_path, unlearned_path, lambda_list = "0.1,0.3,0.5,0.7,0.9";
    bool with_retrain = false;
    int jobs = 1;

    CLI::App* train_cmd = app.add_subcommand("train", "train the original model M_o");
    add_common(train_cmd, common);

    CLI::App* attack_cmd = app.add_subcommand("attack-train", "train the attack model M_A");
    add_common(attack_cmd, common);
    attack_cmd->add_option("--model", model_path, "M_o checkpoint (default <out>/m_o.ckpt)");

    CLI::App* unlearn_cmd = app.add_subcommand("unlearn", "run the unlearning game");
    add_common(unlearn_cmd, common);
    unlearn_cmd->add_option("--model", model_path, "M_o checkpoint (default <out>/m_o.ckpt)");
    unlearn_cmd->add_option("--attack", attack_path,
                            "M_A checkpoint; trained from scratch when omitted");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "compute the evaluation report");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--model", model_path, "M_o checkpoint (default <out>/m_o.ckpt)");
    eval_cmd->add_option("--attack", attack_path, "M_A checkpoint (default <out>/m_a.ckpt)");
    eval_cmd->add_option("--unlearned", unlearned_path,
                         "M_u checkpoint (default <out>/m_u.ckpt)");
    eval_cmd->add_flag("--with-retrain", with_retrain,
                       "also train the retrain baseline and measure timing");

    CLI::App* sweep_cmd = app.add_subcommand("sweep-lambda", "run the game across lambda values");
    add_common(sweep_cmd, common);
    sweep_cmd->add_option("--lambdas", lambda_list, "comma-separated lambda grid");
    sweep_cmd->add_option("--jobs", jobs, "parallel sweep workers");

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return cmd_train(common);
        if (attack_cmd->parsed()) return cmd_attack_train(common, model_path);
        if (unlearn_cmd->parsed()) return cmd_unlearn(common, model_path, attack_path);
        if (eval_cmd->parsed())
            return cmd_evaluate(common, model_path, attack_path, unlearned_path, with_retrain);
        if (sweep_cmd->parsed()) return cmd_sweep_lambda(common, lambda_list, jobs);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "game diverged: %s\n", e.what());
        return 5;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 4;
    }
}
