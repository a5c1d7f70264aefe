#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/eval.hpp"

namespace unlearn {

// Flat key/value experiment configuration. One file describes a whole
// experiment; command-line overrides are applied on top as key=value pairs.
//
// Recognized keys (defaults in parentheses):
//   data_source        synth | csv            (synth)
//   csv_path           path to CSV data
//   csv_label_column   0-based label column, -1 = last (-1)
//   class_count        number of classes, required for csv (synth: classes)
//   synth_classes      (2)      synth_dims   (2)
//   synth_per_class    (500)    synth_separation (6.0)
//   synth_label_noise  (0.0)
//   test_fraction      (0.3)
//   hidden             comma list of widths ("32"), empty string = none
//   train_epochs       (60)     train_batch  (32)    train_lr (0.1)
//   train_momentum     (0.0)
//   unlearn_mode       sample | class         (sample)
//   unlearn_rate       (0.05)   unlearn_class (0)
//   alt_fraction       (0.2)    third_fraction (0.5)
//   lambda             (0.5)    smooth_eps   (1e-2)
//   eta_leader         (0.02)   eta_follower (0.5)
//   epochs_leader      (10)     epochs_follower (5)
//   rounds             (100)    tol          (1e-4)   window (5)
//   leader_batch       (0 = full batch) d_r minibatch size in the game
//   shadow_count       (3)      shadow_rate  (0.1)
//   shadow_epochs      (40)     attack_epochs (300)
//   attack_hidden      ("32")   mia_epochs   (300)
//   mia_loss_feature   (true)
//   seed               (0)
//   out_dir            output directory; env UNLEARN_OUT_DIR, else "out"
struct ExperimentConfig {
    std::string data_source = "synth";
    std::string csv_path;
    int csv_label_column = -1;
    int class_count = 0;
    SynthSpec synth{2, 2, 500, 6.0, 0};
    double test_fraction = 0.3;
    std::vector<std::size_t> hidden{32};
    TrainConfig train{60, 32, 0.1, 0.0};
    UnlearnRequest request = UnlearnRequest::sample_level(0.05, 0);
    double alt_fraction = 0.2;
    double third_fraction = 0.5;
    GameConfig game{0.5, 0.02, 0.5, 10, 5, 100, 1e-4, 5, 1e-2};
    AttackTrainConfig attack;
    MiaConfig mia;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<std::size_t> parse_width_list(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw ConfigError(key + ": bad width '" + tok + "'");
        }
    }
    return out;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_config_text(std::istream& in,
                                                            const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + " line " + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(origin + " line " + std::to_string(lineno) + ": empty key");
        }
        kv[key] = value;
    }
    return kv;
}

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
    auto as_double = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected a number, got '" + value + "'");
        }
    };
    auto as_int = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            long l = std::stol(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<int>(l);
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected an integer, got '" + value + "'");
        }
    };
    auto as_u64 = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            unsigned long long l = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<std::uint64_t>(l);
        } catch (const std::exception&) {
            throw ConfigError(key + ": expected an unsigned integer, got '" + value + "'");
        }
    };

    if (key == "data_source") {
        if (value != "synth" && value != "csv") {
            throw ConfigError("data_source must be 'synth' or 'csv', got '" + value + "'");
        }
        cfg.data_source = value;
    } else if (key == "csv_path") {
        cfg.csv_path = value;
    } else if (key == "csv_label_column") {
        cfg.csv_label_column = as_int(value);
    } else if (key == "class_count") {
        cfg.class_count = as_int(value);
    } else if (key == "synth_classes") {
        cfg.synth.classes = as_int(value);
    } else if (key == "synth_dims") {
        cfg.synth.dims = as_int(value);
    } else if (key == "synth_per_class") {
        cfg.synth.per_class = as_int(value);
    } else if (key == "synth_separation") {
        cfg.synth.separation = as_double(value);
    } else if (key == "synth_label_noise") {
        cfg.synth.label_noise = as_double(value);
    } else if (key == "test_fraction") {
        cfg.test_fraction = as_double(value);
    } else if (key == "hidden") {
        cfg.hidden = detail::parse_width_list(value, key);
    } else if (key == "train_epochs") {
        cfg.train.epochs = as_int(value);
    } else if (key == "train_batch") {
        cfg.train.batch_size = static_cast<std::size_t>(as_int(value));
    } else if (key == "train_lr") {
        cfg.train.learning_rate = as_double(value);
    } else if (key == "train_momentum") {
        cfg.train.momentum = as_double(value);
    } else if (key == "unlearn_mode") {
        if (value == "sample") {
            cfg.request.mode = UnlearnRequest::Mode::kSampleLevel;
        } else if (value == "class") {
            cfg.request.mode = UnlearnRequest::Mode::kClassLevel;
        } else {
            throw ConfigError("unlearn_mode must be 'sample' or 'class', got '" + value + "'");
        }
    } else if (key == "unlearn_rate") {
        cfg.request.rate = as_double(value);
    } else if (key == "unlearn_class") {
        cfg.request.class_id = as_int(value);
    } else if (key == "alt_fraction") {
        cfg.alt_fraction = as_double(value);
    } else if (key == "third_fraction") {
        cfg.third_fraction = as_double(value);
    } else if (key == "lambda") {
        cfg.game.lambda = as_double(value);
    } else if (key == "smooth_eps") {
        cfg.game.smooth_eps = as_double(value);
    } else if (key == "eta_leader") {
        cfg.game.eta_leader = as_double(value);
    } else if (key == "eta_follower") {
        cfg.game.eta_follower = as_double(value);
    } else if (key == "epochs_leader") {
        cfg.game.epochs_leader = as_int(value);
    } else if (key == "epochs_follower") {
        cfg.game.epochs_follower = as_int(value);
    } else if (key == "rounds") {
        cfg.game.rounds = as_int(value);
    } else if (key == "leader_batch") {
        cfg.game.leader_batch = static_cast<std::size_t>(as_int(value));
    } else if (key == "tol") {
        cfg.game.tol = as_double(value);
    } else if (key == "window") {
        cfg.game.window = as_int(value);
    } else if (key == "shadow_count") {
        cfg.attack.shadow.shadow_count = as_int(value);
    } else if (key == "shadow_rate") {
        cfg.attack.shadow.shadow_unlearn_rate = as_double(value);
    } else if (key == "shadow_epochs") {
        cfg.attack.shadow_train.epochs = as_int(value);
    } else if (key == "attack_epochs") {
        cfg.attack.attack_train.epochs = as_int(value);
    } else if (key == "attack_hidden") {
        cfg.attack.attack_hidden = detail::parse_width_list(value, key);
    } else if (key == "mia_epochs") {
        cfg.mia.train.epochs = as_int(value);
    } else if (key == "mia_loss_feature") {
        if (value != "true" && value != "false") {
            throw ConfigError("mia_loss_feature: expected true or false, got '" + value + "'");
        }
        cfg.mia.loss_feature = value == "true";
    } else if (key == "seed") {
        cfg.seed = as_u64(value);
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    cfg.attack.shadow_train = TrainConfig{40, 32, 0.1, 0.0};
    if (const char* env = std::getenv("UNLEARN_OUT_DIR")) {
        cfg.out_dir = env;
    }
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file " + path);
        }
        for (const auto& [k, v] : parse_config_text(in, path)) apply_config_entry(cfg, k, v);
    }
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + ov + "' is not key=value");
        }
        apply_config_entry(cfg, detail::trim(ov.substr(0, eq)), detail::trim(ov.substr(eq + 1)));
    }
    // Seed propagation: every stage derives from the master seed.
    cfg.synth.seed = cfg.seed;
    cfg.request.seed = substream_seed(cfg.seed, "request");
    return cfg;
}

// Data roles derived from the configured source.
struct ExperimentData {
    Dataset train;
    Dataset test;
    SplitBundle bundle;
};

inline ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    Dataset full;
    if (cfg.data_source == "csv") {
        if (cfg.csv_path.empty()) {
            throw ConfigError("data_source=csv requires csv_path");
        }
        if (cfg.class_count < 2) {
            throw ConfigError("data_source=csv requires class_count >= 2");
        }
        full = load_csv(cfg.csv_path, cfg.csv_label_column, cfg.class_count);
    } else {
        full = synth_generate(cfg.synth);
    }
    auto [train_ds, test_ds] = split_train_test(full, cfg.test_fraction, cfg.seed);
    ExperimentData data;
    data.bundle =
        make_bundle(train_ds, test_ds, cfg.request, cfg.alt_fraction, cfg.third_fraction);
    data.train = std::move(train_ds);
    data.test = std::move(test_ds);
    return data;
}

inline MlpArchitecture experiment_architecture(const ExperimentConfig& cfg, const Dataset& train) {
    MlpArchitecture arch{train.dim(), cfg.hidden, train.class_count};
    arch.validate();
    return arch;
}

inline PipelineConfig experiment_pipeline_config(const ExperimentConfig& cfg,
                                                 const MlpArchitecture& arch) {
    PipelineConfig pc;
    pc.arch = arch;
    pc.train = cfg.train;
    pc.attack = cfg.attack;
    pc.mia = cfg.mia;
    pc.game = cfg.game;
    pc.game.seed = substream_seed(cfg.seed, "game");
    pc.seed = cfg.seed;
    return pc;
}

}  // namespace unlearn
