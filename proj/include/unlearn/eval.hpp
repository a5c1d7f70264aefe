#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "unlearn/attack.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/game.hpp"
#include "unlearn/mlp.hpp"

namespace unlearn {

// Privacy attack advantage: the attacker's edge over random guessing. This is
// the evaluation metric, so the absolute value is exact (no smoothing).
inline double priaa(double attack_probability) {
    if (attack_probability < 0.0 || attack_probability > 1.0) {
        throw NumericError("priaa: attack probability " + cell_str(attack_probability) +
                           " outside [0,1]");
    }
    return std::abs(attack_probability - 0.5);
}

struct PipelineConfig {
    MlpArchitecture arch;      // victim architecture
    TrainConfig train;         // original / retrain / alternative training
    AttackTrainConfig attack;
    MiaConfig mia;
    GameConfig game;
    std::uint64_t seed = 0;
};

struct EvalReport {
    double acc_test = 0.0;
    double acc_df = 0.0;
    double acc_dr = 0.0;
    double attack_prob_ours = 0.0;
    double attack_prob_retrain = 0.0;
    double priaa_ours = 0.0;
    double priaa_retrain = 0.0;
    double mia_original = 0.0;
    double mia_retrain = 0.0;
    double mia_ours = 0.0;
    double time_retrain_s = 0.0;
    double time_ours_s = 0.0;
    double speedup = 0.0;
    double lambda = 0.5;
    std::uint64_t seed = 0;
    UnlearnRequest request;
    bool with_retrain = true;  // whether the retrain-baseline fields were measured
    bool with_timing = true;   // whether the game was timed in this run

    nlohmann::json to_json() const {
        nlohmann::json req;
        if (request.mode == UnlearnRequest::Mode::kSampleLevel) {
            req = {{"mode", "sample"}, {"rate", request.rate}, {"seed", request.seed}};
        } else {
            req = {{"mode", "class"}, {"class_id", request.class_id}, {"seed", request.seed}};
        }
        nlohmann::json j{{"acc_test", acc_test},
                         {"acc_df", acc_df},
                         {"acc_dr", acc_dr},
                         {"attack_prob_ours", attack_prob_ours},
                         {"priaa_ours", priaa_ours},
                         {"mia_original", mia_original},
                         {"mia_ours", mia_ours},
                         {"lambda", lambda},
                         {"seed", seed},
                         {"request", req}};
        j["time_ours_s"] = with_timing ? nlohmann::json(time_ours_s) : nlohmann::json(nullptr);
        if (with_retrain) {
            j["attack_prob_retrain"] = attack_prob_retrain;
            j["priaa_retrain"] = priaa_retrain;
            j["mia_retrain"] = mia_retrain;
            j["time_retrain_s"] = time_retrain_s;
            j["speedup"] = speedup;
        } else {
            j["attack_prob_retrain"] = nullptr;
            j["priaa_retrain"] = nullptr;
            j["mia_retrain"] = nullptr;
            j["time_retrain_s"] = nullptr;
            j["speedup"] = nullptr;
        }
        return j;
    }
};

// Everything the pipeline trains along the way, for callers that want to keep
// probing the models after reading the report.
struct PipelineArtifacts {
    ModelParams m_o;
    ModelParams m_r;      // retrain baseline (empty when skipped)
    ModelParams m_r_alt;
    AttackModel m_a;
    ModelParams m_u;
    EquilibriumResult equilibrium;
    EvalReport report;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
auto run_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw Error("stage " + std::string(stage) + ": " + e.what());
    }
}

}  // namespace detail

// Runs the full protocol on one bundle: original training, timed retraining,
// alternative model, attack model, timed game, then every reported metric.
// The unlearning time covers the game itself; the alternative and attack
// models are its prepared inputs.
inline PipelineArtifacts run_pipeline(const SplitBundle& bundle, const PipelineConfig& cfg,
                                      bool with_retrain = true) {
    PipelineArtifacts art;
    EvalReport& rep = art.report;
    rep.lambda = cfg.game.lambda;
    rep.seed = cfg.seed;
    rep.request = bundle.request;
    rep.with_retrain = with_retrain;

    art.m_o = detail::run_stage("original-training", [&] {
        return train(init_model(cfg.arch, substream_seed(cfg.seed, "orig-init")), bundle.d_train,
                     cfg.train, substream_seed(cfg.seed, "orig-train"));
    });

    if (with_retrain) {
        const auto t0 = std::chrono::steady_clock::now();
        art.m_r = detail::run_stage("retraining", [&] {
            return train(init_model(cfg.arch, substream_seed(cfg.seed, "retrain-init")),
                         bundle.d_r, cfg.train, substream_seed(cfg.seed, "retrain-train"));
        });
        rep.time_retrain_s = detail::seconds_since(t0);
    }

    art.m_r_alt = detail::run_stage("alternative-training", [&] {
        return train(init_model(cfg.arch, substream_seed(cfg.seed, "alt-init")), bundle.d_r_alt,
                     cfg.train, substream_seed(cfg.seed, "alt-train"));
    });

    art.m_a = detail::run_stage("attack-training", [&] {
        AttackTrainConfig acfg = cfg.attack;
        acfg.shadow.seed = substream_seed(cfg.seed, "shadow-root", acfg.shadow.seed);
        return train_attack(art.m_o, acfg, bundle.d_r, bundle.d_third).model;
    });

    {
        const auto t0 = std::chrono::steady_clock::now();
        art.equilibrium = detail::run_stage("game", [&] {
            return play(art.m_o, bundle, art.m_r_alt, art.m_a, cfg.game);
        });
        rep.time_ours_s = detail::seconds_since(t0);
        art.m_u = art.equilibrium.unlearned;
    }

    detail::run_stage("metrics", [&] {
        if (bundle.d_eval.empty()) {
            throw DataError("evaluation split is empty; use third_fraction < 1");
        }
        rep.acc_test = accuracy(art.m_u, bundle.d_eval);
        rep.acc_df = accuracy(art.m_u, bundle.d_f);
        rep.acc_dr = accuracy(art.m_u, bundle.d_r);
        rep.attack_prob_ours = attack_prob(art.m_a, art.m_o, art.m_u, bundle.d_f);
        rep.priaa_ours = priaa(rep.attack_prob_ours);
        // The audit's nonmembers are the whole test side: both halves are data
        // the audited model never trained on, and the denser anchor set keeps
        // the classifier calibrated.
        MiaConfig mia = cfg.mia;
        mia.seed = substream_seed(cfg.seed, "mia-root", mia.seed);
        rep.mia_original = classic_mia_prob(art.m_o, bundle.d_r, bundle.d_test, bundle.d_f, mia);
        rep.mia_ours = classic_mia_prob(art.m_u, bundle.d_r, bundle.d_test, bundle.d_f, mia);
        if (with_retrain) {
            rep.attack_prob_retrain = attack_prob(art.m_a, art.m_o, art.m_r, bundle.d_f);
            rep.priaa_retrain = priaa(rep.attack_prob_retrain);
            rep.mia_retrain = classic_mia_prob(art.m_r, bundle.d_r, bundle.d_test, bundle.d_f, mia);
            rep.speedup = rep.time_retrain_s / rep.time_ours_s;
        }
        return 0;
    });
    return art;
}

inline EvalReport evaluate_pipeline(const SplitBundle& bundle, const PipelineConfig& cfg) {
    return run_pipeline(bundle, cfg).report;
}

// Accuracy restricted to one class vs the rest of the test set.
inline std::pair<double, double> per_class_accuracy(const ModelParams& m, const Dataset& test,
                                                    int class_id) {
    std::vector<std::size_t> on, rest;
    for (std::size_t i = 0; i < test.size(); ++i) {
        (test.labels[i] == class_id ? on : rest).push_back(i);
    }
    if (on.empty()) {
        throw DataError("per_class_accuracy: class " + std::to_string(class_id) +
                        " absent from test set");
    }
    if (rest.empty()) {
        throw DataError("per_class_accuracy: no rows outside class " + std::to_string(class_id));
    }
    return {accuracy(m, subset(test, on)), accuracy(m, subset(test, rest))};
}

struct LambdaSweepResult {
    std::vector<std::pair<double, double>> points;  // (lambda, priaa), lambda increasing
};

// Runs the game once per lambda against shared prepared models (the inputs do
// not depend on lambda) and reports the final advantage, always measured
// against 0.5. Points may be computed in parallel; results are ordered by
// lambda index, never by completion order.
inline LambdaSweepResult lambda_sweep(const SplitBundle& bundle, const PipelineConfig& cfg,
                                      std::vector<double> lambdas, int jobs = 1) {
    if (lambdas.empty()) {
        throw ConfigError("lambda_sweep: empty lambda list");
    }
    std::sort(lambdas.begin(), lambdas.end());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (lambdas[i] <= 0.0 || lambdas[i] >= 1.0) {
            throw ConfigError("lambda_sweep: lambda " + cell_str(lambdas[i]) +
                              " outside (0,1)");
        }
        if (i > 0 && lambdas[i] == lambdas[i - 1]) {
            throw ConfigError("lambda_sweep: duplicate lambda " + cell_str(lambdas[i]));
        }
    }
    if (jobs < 1) jobs = 1;

    ModelParams m_o = train(init_model(cfg.arch, substream_seed(cfg.seed, "orig-init")),
                            bundle.d_train, cfg.train, substream_seed(cfg.seed, "orig-train"));
    ModelParams m_r_alt = train(init_model(cfg.arch, substream_seed(cfg.seed, "alt-init")),
                                bundle.d_r_alt, cfg.train, substream_seed(cfg.seed, "alt-train"));
    AttackTrainConfig acfg = cfg.attack;
    acfg.shadow.seed = substream_seed(cfg.seed, "shadow-root", acfg.shadow.seed);
    AttackModel m_a = train_attack(m_o, acfg, bundle.d_r, bundle.d_third).model;

    LambdaSweepResult result;
    result.points.resize(lambdas.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= lambdas.size()) return;
            try {
                GameConfig gcfg = cfg.game;
                gcfg.lambda = lambdas[i];
                EquilibriumResult eq = play(m_o, bundle, m_r_alt, m_a, gcfg);
                const double p = attack_prob(m_a, m_o, eq.unlearned, bundle.d_f);
                result.points[i] = {lambdas[i], priaa(p)};
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return result;
}

inline std::string sweep_to_csv(const LambdaSweepResult& sweep) {
    std::ostringstream os;
    os << "lambda,priaa\n";
    for (const auto& [l, p] : sweep.points) os << cell_str(l) << "," << cell_str(p) << "\n";
    return os.str();
}

}  // namespace unlearn
