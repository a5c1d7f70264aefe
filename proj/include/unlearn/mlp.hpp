#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/io.hpp"
#include "unlearn/optim.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tape.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// ReLU MLP: input_dim -> hidden... -> class_count, softmax on top. An empty
// hidden list degenerates to multinomial logistic regression.
struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    int class_count = 2;

    std::vector<std::size_t> layer_widths() const {
        std::vector<std::size_t> w;
        w.push_back(input_dim);
        for (std::size_t h : hidden) w.push_back(h);
        w.push_back(static_cast<std::size_t>(class_count));
        return w;
    }

    void validate() const {
        if (input_dim < 1 || class_count < 2) {
            throw ConfigError("MlpArchitecture: need input_dim >= 1 and class_count >= 2");
        }
        for (std::size_t h : hidden) {
            if (h < 1) throw ConfigError("MlpArchitecture: hidden widths must be >= 1");
        }
    }

    bool operator==(const MlpArchitecture&) const = default;
};

// One set of MLP weights/biases (the strategy vector omega). Value semantics:
// training and game steps work on their own copy.
struct ModelParams {
    MlpArchitecture arch;
    std::vector<Tensor> weights;  // [in x out] per layer
    std::vector<Tensor> biases;   // [out] per layer

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(&weights[i]);
            out.push_back(&biases[i]);
        }
        return out;
    }
    std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(&weights[i]);
            out.push_back(&biases[i]);
        }
        return out;
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor* t : parameters()) n += t->size();
        return n;
    }
};

// Glorot-uniform init, biases zero. Deterministic per seed.
inline ModelParams init_model(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    ModelParams m;
    m.arch = arch;
    auto rng = substream_rng(seed, "model-init");
    const auto widths = arch.layer_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor w({fan_in, fan_out});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Tensor::zeros({fan_out}));
    }
    return m;
}

// Model parameters lifted onto a tape as leaves, in parameters() order.
struct TapedModel {
    std::vector<Var> weights;
    std::vector<Var> biases;

    std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(weights[i]);
            out.push_back(biases[i]);
        }
        return out;
    }
};

inline TapedModel lift(GradTape& tape, const ModelParams& m) {
    TapedModel t;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        t.weights.push_back(tape.input(m.weights[i]));
        t.biases.push_back(tape.input(m.biases[i]));
    }
    return t;
}

inline Var forward_logits(GradTape& tape, const TapedModel& m, Var batch) {
    Var h = batch;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        h = tape.add(tape.matmul(h, m.weights[l]), m.biases[l]);
        if (l + 1 < m.weights.size()) h = tape.relu(h);
    }
    return h;
}

inline Var forward_probs(GradTape& tape, const TapedModel& m, Var batch) {
    return tape.softmax_rows(forward_logits(tape, m, batch));
}

// Plain inference: one posterior row per batch row.
inline Tensor forward(const ModelParams& m, const Tensor& batch) {
    if (batch.rank() != 2 || batch.cols() != m.arch.input_dim) {
        throw NumericError("forward: batch " + batch.shape_string() + " does not match input_dim " +
                           std::to_string(m.arch.input_dim));
    }
    GradTape tape;
    Var x = tape.input(batch);
    return tape.value(forward_probs(tape, lift(tape, m), x));
}

inline Tensor onehot(const std::vector<int>& labels, int class_count) {
    Tensor t({labels.size(), static_cast<std::size_t>(class_count)});
    for (std::size_t i = 0; i < labels.size(); ++i)
        t.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return t;
}

// Mean cross-entropy of probability rows against integer labels.
inline Var cross_entropy(GradTape& tape, Var probs, const std::vector<int>& labels,
                         int class_count) {
    Var mask = tape.input(onehot(labels, class_count));
    Var picked = tape.sum(tape.mul(tape.log(probs), mask));
    return tape.affine(picked, -1.0 / static_cast<double>(labels.size()), 0.0);
}

struct TrainConfig {
    int epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 0.1;
    double momentum = 0.0;
};

namespace detail {

inline Tensor rows_tensor(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Tensor t({idx.size(), ds.dim()});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < ds.dim(); ++c) t.at(i, c) = ds.features.at(idx[i], c);
    return t;
}

}  // namespace detail

// Mini-batch SGD with cross-entropy loss. The shuffle order is a fixed
// function of the seed, so identical calls are bit-reproducible.
inline ModelParams train(const ModelParams& model, const Dataset& ds, const TrainConfig& cfg,
                         std::uint64_t seed) {
    if (ds.empty()) {
        throw DataError("train: empty dataset");
    }
    if (ds.dim() != model.arch.input_dim || ds.class_count != model.arch.class_count) {
        throw DataError("train: dataset (d=" + std::to_string(ds.dim()) + ", C=" +
                        std::to_string(ds.class_count) + ") does not match architecture");
    }
    if (cfg.epochs < 0 || cfg.batch_size < 1) {
        throw ConfigError("train: epochs must be >= 0 and batch_size >= 1");
    }
    ModelParams m = model;
    OptimizerState opt(cfg.learning_rate, cfg.momentum);
    auto shuffle_rng = substream_rng(seed, "shuffle");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = std::min(cfg.batch_size, ds.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(start + bs, order.size());
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(ds.labels[i]);

            GradTape tape;
            TapedModel tm = lift(tape, m);
            Var x = tape.input(detail::rows_tensor(ds, idx));
            Var loss = cross_entropy(tape, forward_probs(tape, tm, x), labels, ds.class_count);
            if (!tape.value(loss).all_finite()) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            tape.backward(loss);

            auto ptrs = m.parameters();
            auto vars = tm.parameters();
            std::vector<Tensor> grads;
            grads.reserve(vars.size());
            for (Var v : vars) grads.push_back(tape.grad(v));
            std::vector<Tensor> pvals;
            pvals.reserve(ptrs.size());
            for (Tensor* p : ptrs) pvals.push_back(*p);
            sgd_step(pvals, grads, opt);
            for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = std::move(pvals[i]);
        }
    }
    return m;
}

// Fraction of rows whose argmax posterior matches the label; argmax ties break
// toward the lowest class index.
inline double accuracy(const ModelParams& m, const Dataset& ds) {
    if (ds.empty()) {
        throw DataError("accuracy: empty dataset");
    }
    const Tensor probs = forward(m, ds.features);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs.at(r, c) > probs.at(r, best)) best = c;
        if (static_cast<int>(best) == ds.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// ---- checkpoints ---------------------------------------------------------
// Text format, one tensor per block, values as C hexfloats: round-trips
// bit-exactly and stays diffable. `kind` is "model" for classifiers and
// "attack" for attack models (same layout, extra marker).

namespace detail {

inline std::string hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

}  // namespace detail

inline std::string checkpoint_to_string(const ModelParams& m, const std::string& kind) {
    std::ostringstream os;
    os << "unlearnckpt 1\n";
    os << "kind " << kind << "\n";
    os << "input_dim " << m.arch.input_dim << "\n";
    os << "classes " << m.arch.class_count << "\n";
    os << "hidden " << m.arch.hidden.size();
    for (std::size_t h : m.arch.hidden) os << " " << h;
    os << "\n";
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const Tensor& w = m.weights[l];
        os << "tensor w" << l << " " << w.rows() << " " << w.cols() << "\n";
        for (std::size_t r = 0; r < w.rows(); ++r) {
            for (std::size_t c = 0; c < w.cols(); ++c)
                os << (c ? " " : "") << detail::hexfloat(w.at(r, c));
            os << "\n";
        }
        const Tensor& b = m.biases[l];
        os << "tensor b" << l << " 1 " << b.size() << "\n";
        for (std::size_t c = 0; c < b.size(); ++c) os << (c ? " " : "") << detail::hexfloat(b[c]);
        os << "\n";
    }
    os << "end\n";
    return os.str();
}

inline void save_checkpoint(const std::string& path, const ModelParams& m,
                            const std::string& kind = "model") {
    atomic_write_text(path, checkpoint_to_string(m, kind));
}

struct Checkpoint {
    std::string kind;
    ModelParams params;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_checkpoint: cannot open " + path);
    }
    auto fail = [&path](const std::string& why) -> DataError {
        return DataError("load_checkpoint: " + path + ": " + why);
    };
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "unlearnckpt" || version != 1) {
        throw fail("bad header");
    }
    Checkpoint ck;
    std::string key;
    MlpArchitecture arch;
    if (!(in >> key >> ck.kind) || key != "kind") throw fail("missing kind");
    if (!(in >> key >> arch.input_dim) || key != "input_dim") throw fail("missing input_dim");
    if (!(in >> key >> arch.class_count) || key != "classes") throw fail("missing classes");
    std::size_t nh = 0;
    if (!(in >> key >> nh) || key != "hidden") throw fail("missing hidden");
    arch.hidden.resize(nh);
    for (std::size_t i = 0; i < nh; ++i)
        if (!(in >> arch.hidden[i])) throw fail("truncated hidden widths");
    arch.validate();
    ck.params.arch = arch;
    const auto widths = arch.layer_widths();
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        for (int which = 0; which < 2; ++which) {
            std::string name;
            std::size_t rows = 0, cols = 0;
            if (!(in >> key >> name >> rows >> cols) || key != "tensor") {
                throw fail("missing tensor block for layer " + std::to_string(l));
            }
            const std::size_t expect_rows = which == 0 ? widths[l] : 1;
            const std::size_t expect_cols = widths[l + 1];
            if (rows != expect_rows || cols != expect_cols) {
                throw fail("tensor " + name + " has shape " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", expected " + std::to_string(expect_rows) +
                           "x" + std::to_string(expect_cols));
            }
            std::vector<double> vals(rows * cols);
            for (double& v : vals) {
                std::string tok;
                if (!(in >> tok)) throw fail("truncated tensor " + name);
                char* endp = nullptr;
                v = std::strtod(tok.c_str(), &endp);
                if (endp == tok.c_str() || *endp != '\0') {
                    throw fail("bad value '" + tok + "' in tensor " + name);
                }
            }
            if (which == 0) {
                ck.params.weights.push_back(Tensor({rows, cols}, std::move(vals)));
            } else {
                ck.params.biases.push_back(Tensor({cols}, std::move(vals)));
            }
        }
    }
    if (!(in >> key) || key != "end") throw fail("missing end marker");
    for (const Tensor* t : ck.params.parameters()) {
        if (!t->all_finite()) throw fail("non-finite parameter value");
    }
    return ck;
}

}  // namespace unlearn
