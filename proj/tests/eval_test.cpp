#include <gtest/gtest.h>

#include <cmath>

#include "unlearn/eval.hpp"
#include "unlearn/experiment.hpp"

using namespace unlearn;

namespace {

// A small but non-trivial pipeline setup shared across the integration tests.
struct PipeFixture {
    SplitBundle bundle;
    PipelineConfig cfg;

    static const PipeFixture& get() {
        static PipeFixture* f = [] {
            PipeFixture* fx = new PipeFixture;
            Dataset full = synth_generate({2, 16, 80, 0.0, 19});
            auto [tr, te] = split_train_test(full, 0.3, 19);
            fx->bundle = make_bundle(tr, te, UnlearnRequest::sample_level(0.1, 19));
            fx->cfg.arch = {16, {32}, 2};
            fx->cfg.train = {300, 16, 0.2, 0.0};
            fx->cfg.attack.shadow = {2, 0.25, 5};
            fx->cfg.attack.shadow_train = fx->cfg.train;
            fx->cfg.game = {0.5, 0.01, 0.5, 15, 5, 40, 1e-4, 5, 1e-2};
            fx->cfg.seed = 19;
            return fx;
        }();
        return *f;
    }
};

}  // namespace

TEST(Priaa, Definition) {
    EXPECT_DOUBLE_EQ(priaa(0.5), 0.0);
    EXPECT_DOUBLE_EQ(priaa(1.0), 0.5);
    EXPECT_DOUBLE_EQ(priaa(0.0), 0.5);
    EXPECT_DOUBLE_EQ(priaa(0.37), 0.13);
    EXPECT_THROW(priaa(-0.01), NumericError);
    EXPECT_THROW(priaa(1.01), NumericError);
}

TEST(Pipeline, ReportFieldsAreConsistent) {
    const PipeFixture& f = PipeFixture::get();
    PipelineArtifacts art = run_pipeline(f.bundle, f.cfg);
    const EvalReport& r = art.report;

    for (double frac : {r.acc_test, r.acc_df, r.acc_dr}) {
        EXPECT_GE(frac, 0.0);
        EXPECT_LE(frac, 1.0);
    }
    // advantage fields recomputable from the stored attack probabilities
    EXPECT_DOUBLE_EQ(r.priaa_ours, std::abs(r.attack_prob_ours - 0.5));
    EXPECT_DOUBLE_EQ(r.priaa_retrain, std::abs(r.attack_prob_retrain - 0.5));
    // speedup recomputable from the stored times
    EXPECT_DOUBLE_EQ(r.speedup, r.time_retrain_s / r.time_ours_s);
    EXPECT_GT(r.time_retrain_s, 0.0);
    EXPECT_GT(r.time_ours_s, 0.0);
    EXPECT_EQ(r.lambda, 0.5);
    EXPECT_EQ(r.seed, 19u);

    // metric values recomputable from the returned artifacts
    EXPECT_DOUBLE_EQ(r.acc_test, accuracy(art.m_u, f.bundle.d_eval));
    EXPECT_DOUBLE_EQ(r.attack_prob_ours,
                     attack_prob(art.m_a, art.m_o, art.m_u, f.bundle.d_f));
}

TEST(Pipeline, ReportJsonHasDocumentedKeys) {
    const PipeFixture& f = PipeFixture::get();
    EvalReport rep = evaluate_pipeline(f.bundle, f.cfg);
    nlohmann::json j = rep.to_json();
    for (const char* key :
         {"acc_test", "acc_df", "acc_dr", "priaa_ours", "priaa_retrain", "mia_original",
          "mia_retrain", "mia_ours", "time_retrain_s", "time_ours_s", "speedup", "lambda",
          "seed", "request", "attack_prob_ours", "attack_prob_retrain"}) {
        EXPECT_TRUE(j.contains(key)) << "missing key " << key;
    }
    EXPECT_EQ(j["request"]["mode"], "sample");
    EXPECT_DOUBLE_EQ(j["request"]["rate"].get<double>(), 0.1);

    EvalReport no_retrain = run_pipeline(f.bundle, f.cfg, false).report;
    nlohmann::json j2 = no_retrain.to_json();
    EXPECT_TRUE(j2["priaa_retrain"].is_null());
    EXPECT_TRUE(j2["speedup"].is_null());
    EXPECT_FALSE(j2["priaa_ours"].is_null());
}

TEST(Pipeline, StageFailuresAreNamed) {
    const PipeFixture& f = PipeFixture::get();
    PipelineConfig bad = f.cfg;
    bad.arch.input_dim = 5;  // does not match the data
    try {
        evaluate_pipeline(f.bundle, bad);
        FAIL() << "expected Error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("stage original-training"), std::string::npos);
    }
}

TEST(PerClass, NeverPredictedClassScoresZero) {
    ModelParams m = init_model({2, {}, 3}, 0);
    for (Tensor* p : m.parameters()) p->fill(0.0);
    m.biases[0] = Tensor::vector({10.0, 0.0, 0.0});  // always predicts class 0
    Tensor feats = Tensor::matrix(6, 2, {1, 2, 3, 4, 5, 6, 1, 1, 2, 2, 3, 3});
    Dataset test = make_dataset(feats, {0, 0, 1, 1, 2, 2}, 3);
    auto [on_c, on_rest] = per_class_accuracy(m, test, 1);
    EXPECT_DOUBLE_EQ(on_c, 0.0);
    EXPECT_DOUBLE_EQ(on_rest, 0.5);  // class-0 rows right, class-2 rows wrong
}

TEST(PerClass, RecombinesToOverallAccuracy) {
    Dataset ds = synth_generate({3, 3, 40, 4.0, 3});
    ModelParams m = train(init_model({3, {16}, 3}, 3), ds, {40, 16, 0.2, 0.0}, 3);
    for (int c = 0; c < 3; ++c) {
        auto [on_c, on_rest] = per_class_accuracy(m, ds, c);
        std::size_t n_c = 0;
        for (int l : ds.labels)
            if (l == c) ++n_c;
        const double n = static_cast<double>(ds.size());
        const double combined =
            on_c * (static_cast<double>(n_c) / n) + on_rest * ((n - n_c) / n);
        EXPECT_NEAR(combined, accuracy(m, ds), 1e-12);
    }
}

TEST(PerClass, AbsentClassThrows) {
    Dataset ds = synth_generate({2, 2, 10, 4.0, 1});
    ModelParams m = init_model({2, {4}, 2}, 1);
    EXPECT_THROW(per_class_accuracy(m, ds, 7), DataError);
}

TEST(Sweep, GridShapeAndDeterminism) {
    const PipeFixture& f = PipeFixture::get();
    PipelineConfig cfg = f.cfg;
    cfg.game.rounds = 10;
    LambdaSweepResult a = lambda_sweep(f.bundle, cfg, {0.5, 0.25, 0.75});
    ASSERT_EQ(a.points.size(), 3u);
    // strictly increasing lambda order regardless of input order
    EXPECT_DOUBLE_EQ(a.points[0].first, 0.25);
    EXPECT_DOUBLE_EQ(a.points[1].first, 0.5);
    EXPECT_DOUBLE_EQ(a.points[2].first, 0.75);
    for (const auto& [l, p] : a.points) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 0.5);
    }
    LambdaSweepResult b = lambda_sweep(f.bundle, cfg, {0.25, 0.5, 0.75});
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.points[i].second, b.points[i].second);  // bit-identical
    }
}

TEST(Sweep, ParallelJobsMatchSequential) {
    const PipeFixture& f = PipeFixture::get();
    PipelineConfig cfg = f.cfg;
    cfg.game.rounds = 6;
    LambdaSweepResult seq = lambda_sweep(f.bundle, cfg, {0.3, 0.5, 0.7}, 1);
    LambdaSweepResult par = lambda_sweep(f.bundle, cfg, {0.3, 0.5, 0.7}, 3);
    ASSERT_EQ(seq.points.size(), par.points.size());
    for (std::size_t i = 0; i < seq.points.size(); ++i) {
        EXPECT_EQ(seq.points[i].first, par.points[i].first);
        EXPECT_EQ(seq.points[i].second, par.points[i].second);
    }
}

TEST(Sweep, RejectsBadGrids) {
    const PipeFixture& f = PipeFixture::get();
    EXPECT_THROW(lambda_sweep(f.bundle, f.cfg, {}), ConfigError);
    EXPECT_THROW(lambda_sweep(f.bundle, f.cfg, {0.5, 0.5}), ConfigError);
    EXPECT_THROW(lambda_sweep(f.bundle, f.cfg, {0.0, 0.5}), ConfigError);
    EXPECT_THROW(lambda_sweep(f.bundle, f.cfg, {0.5, 1.0}), ConfigError);
}

TEST(Sweep, CsvSchema) {
    LambdaSweepResult r;
    r.points = {{0.1, 0.25}, {0.5, 0.0125}};
    const std::string csv = sweep_to_csv(r);
    EXPECT_EQ(csv.find("lambda,priaa\n"), 0u);
    EXPECT_NE(csv.find("0.1,0.25\n"), std::string::npos);
    EXPECT_NE(csv.find("0.5,0.0125\n"), std::string::npos);
}

TEST(ExperimentConfig, ParsesFileAndOverrides) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "unlearn_exp.cfg").string();
    {
        std::ofstream out(path);
        out << "# smoke experiment\n";
        out << "synth_classes = 2\n";
        out << "synth_per_class = 50\n";
        out << "lambda = 0.4\n";
        out << "hidden = 8,4\n";
        out << "seed = 9\n";
    }
    ExperimentConfig cfg = load_experiment_config(path, {"lambda=0.6", "rounds=7"});
    EXPECT_EQ(cfg.synth.per_class, 50);
    EXPECT_DOUBLE_EQ(cfg.game.lambda, 0.6);  // override wins
    EXPECT_EQ(cfg.game.rounds, 7);
    EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{8, 4}));
    EXPECT_EQ(cfg.seed, 9u);
    fs::remove(path);

    EXPECT_THROW(load_experiment_config("", {"no_such_key=1"}), ConfigError);
    EXPECT_THROW(load_experiment_config("", {"lambda"}), ConfigError);
    EXPECT_THROW(load_experiment_config("/nonexistent/x.cfg", {}), ConfigError);
}

TEST(ExperimentConfig, BuildsDataAndArchitecture) {
    ExperimentConfig cfg = load_experiment_config(
        "", {"synth_per_class=40", "synth_dims=3", "synth_classes=3", "test_fraction=0.25",
             "unlearn_mode=class", "unlearn_class=1", "hidden=8"});
    ExperimentData data = build_experiment_data(cfg);
    EXPECT_EQ(data.train.class_count, 3);
    EXPECT_EQ(data.bundle.d_f.size(),
              static_cast<std::size_t>(std::count(data.train.labels.begin(),
                                                  data.train.labels.end(), 1)));
    MlpArchitecture arch = experiment_architecture(cfg, data.train);
    EXPECT_EQ(arch.input_dim, 3u);
    EXPECT_EQ(arch.class_count, 3);
}
