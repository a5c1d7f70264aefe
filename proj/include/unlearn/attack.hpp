#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/mlp.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/tape.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// Binary classifier over paired posteriors. Output column 1 is the
// probability that a sample was in the original model's training set but not
// in the unlearned model's. Input width is 2C for a C-class victim.
struct AttackModel {
    ModelParams net;

    int victim_classes() const { return static_cast<int>(net.arch.input_dim) / 2; }
};

// One attack feature per sample: concat(M_o posterior, M_u posterior).
inline Tensor build_features(const ModelParams& m_o, const ModelParams& m_u,
                             const Dataset& samples) {
    if (samples.empty()) {
        throw DataError("build_features: empty sample set");
    }
    if (m_o.arch.input_dim != samples.dim() || m_u.arch.input_dim != samples.dim() ||
        m_o.arch.class_count != m_u.arch.class_count) {
        throw NumericError("build_features: models and samples disagree on dimensions");
    }
    GradTape tape;
    Var x = tape.input(samples.features);
    Var o = forward_probs(tape, lift(tape, m_o), x);
    Var u = forward_probs(tape, lift(tape, m_u), x);
    return tape.value(tape.concat_cols(o, u));
}

// Differentiable path from the unlearned model into the attack probability:
// the original model's posteriors enter as constants, the unlearned model is
// the lifted `tm_u`, and the attack net is lifted but its gradients are never
// applied (M_A stays frozen during the game).
inline Var attack_prob_on_tape(GradTape& tape, const AttackModel& m_a, const ModelParams& m_o,
                               const TapedModel& tm_u, const Dataset& d_f) {
    if (d_f.empty()) {
        throw DataError("attack_prob: empty unlearned set");
    }
    if (static_cast<int>(m_a.net.arch.input_dim) != 2 * m_o.arch.class_count) {
        throw NumericError("attack_prob: attack model expects input_dim " +
                           std::to_string(m_a.net.arch.input_dim) + " but victim has " +
                           std::to_string(m_o.arch.class_count) + " classes");
    }
    const std::size_t n = d_f.size();
    Var o = tape.input(forward(m_o, d_f.features));
    Var x = tape.input(d_f.features);
    Var u = forward_probs(tape, tm_u, x);
    Var feats = tape.concat_cols(o, u);
    Var probs = forward_probs(tape, lift(tape, m_a.net), feats);
    Tensor mask({n, 2});
    for (std::size_t r = 0; r < n; ++r) mask.at(r, 1) = 1.0;
    Var picked = tape.sum(tape.mul(probs, tape.input(mask)));
    return tape.affine(picked, 1.0 / static_cast<double>(n), 0.0);
}

// Mean over d_f of M_A's positive-class probability.
inline double attack_prob(const AttackModel& m_a, const ModelParams& m_o, const ModelParams& m_u,
                          const Dataset& d_f) {
    GradTape tape;
    return tape.value(attack_prob_on_tape(tape, m_a, m_o, lift(tape, m_u), d_f)).item();
}

struct ShadowConfig {
    int shadow_count = 3;
    double shadow_unlearn_rate = 0.1;
    std::uint64_t seed = 0;
};

struct AttackTrainConfig {
    ShadowConfig shadow;
    TrainConfig shadow_train;                // shadow unlearned-model training
    std::vector<std::size_t> attack_hidden{32};
    TrainConfig attack_train{300, 32, 0.2, 0.0};
    double member_fraction = 0.8;            // of the member pool, per shadow
    double val_fraction = 0.25;              // held out from attack pairs
    bool retained_negatives = true;          // add retained-member pairs as negatives
};

struct AttackTrainResult {
    AttackModel model;
    double val_accuracy = 0.0;
    std::size_t pair_count = 0;
};

// Trains M_A from shadow unlearning runs. Each shadow draws a member subset
// (disjoint from the real D_f by construction: the member pool must be the
// retain side), marks a slice of it as the shadow forget set, and retrains
// without that slice -- retraining is the ground-truth unlearning the attack
// targets. Positive pairs are (M_o, shadow-unlearned) posteriors of shadow
// forget samples; negatives are the same pairs for never-trained samples and
// for retained members. The retained-member negatives share their first half
// with the positives, which forces M_A to read the unlearned model's side of
// the pair -- without them the attacker can ignore the half the game is
// allowed to change and the privacy module loses its gradient.
inline AttackTrainResult train_attack(const ModelParams& m_o, const AttackTrainConfig& cfg,
                                      const Dataset& member_pool, const Dataset& nonmember_pool) {
    if (member_pool.empty() || nonmember_pool.empty()) {
        throw DataError("train_attack: empty member or nonmember pool");
    }
    if (cfg.shadow.shadow_count < 1) {
        throw ConfigError("train_attack: shadow_count must be >= 1");
    }
    const int C = m_o.arch.class_count;
    std::vector<std::vector<double>> feat_rows;
    std::vector<int> pair_labels;

    for (int s = 0; s < cfg.shadow.shadow_count; ++s) {
        auto rng = substream_rng(cfg.shadow.seed, "shadow", static_cast<std::uint64_t>(s));
        const std::size_t n_mem = std::max<std::size_t>(
            1, round_half_up(cfg.member_fraction * static_cast<double>(member_pool.size())));
        auto mem_idx = detail::sample_without_replacement(member_pool.size(), n_mem, rng);
        const std::size_t k =
            round_half_up(cfg.shadow.shadow_unlearn_rate * static_cast<double>(n_mem));
        if (k == 0 || k >= n_mem) {
            throw DataError("train_attack: pool too small for shadow splits (" +
                            std::to_string(n_mem) + " members, rate " +
                            cell_str(cfg.shadow.shadow_unlearn_rate) + ")");
        }
        std::vector<std::size_t> local(n_mem);
        std::iota(local.begin(), local.end(), 0);
        std::shuffle(local.begin(), local.end(), rng);
        std::vector<std::size_t> forget_idx, retain_idx;
        for (std::size_t i = 0; i < n_mem; ++i) {
            (i < k ? forget_idx : retain_idx).push_back(mem_idx[local[i]]);
        }
        Dataset shadow_forget = subset(member_pool, forget_idx);
        Dataset shadow_retain = subset(member_pool, retain_idx);

        ModelParams shadow_unlearned =
            train(init_model(m_o.arch, substream_seed(cfg.shadow.seed, "shadow-init",
                                                      static_cast<std::uint64_t>(s))),
                  shadow_retain, cfg.shadow_train,
                  substream_seed(cfg.shadow.seed, "shadow-train", static_cast<std::uint64_t>(s)));

        const std::size_t half = cfg.retained_negatives ? (k + 1) / 2 : k;
        const std::size_t n_never = std::min(half, nonmember_pool.size());
        auto never_idx = detail::sample_without_replacement(nonmember_pool.size(), n_never, rng);
        Dataset never_members = subset(nonmember_pool, never_idx);

        auto append = [&](const Tensor& f, int label) {
            for (std::size_t r = 0; r < f.rows(); ++r) {
                std::vector<double> row(f.cols());
                for (std::size_t c = 0; c < f.cols(); ++c) row[c] = f.at(r, c);
                feat_rows.push_back(std::move(row));
                pair_labels.push_back(label);
            }
        };
        append(build_features(m_o, shadow_unlearned, shadow_forget), 1);
        append(build_features(m_o, shadow_unlearned, never_members), 0);
        if (cfg.retained_negatives) {
            const std::size_t n_kept = std::min(half, retain_idx.size());
            std::vector<std::size_t> kept_local(retain_idx.size());
            std::iota(kept_local.begin(), kept_local.end(), 0);
            std::shuffle(kept_local.begin(), kept_local.end(), rng);
            std::vector<std::size_t> kept_idx;
            for (std::size_t i = 0; i < n_kept; ++i)
                kept_idx.push_back(retain_idx[kept_local[i]]);
            append(build_features(m_o, shadow_unlearned, subset(member_pool, kept_idx)), 0);
        }
    }

    // Shuffle pairs and hold out a validation slice.
    std::vector<std::size_t> order(feat_rows.size());
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = substream_rng(cfg.shadow.seed, "attack-pairs");
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::size_t n_val =
        std::min(feat_rows.size() - 1,
                 round_half_up(cfg.val_fraction * static_cast<double>(feat_rows.size())));

    auto pack = [&](std::size_t begin, std::size_t end) {
        Tensor f({end - begin, static_cast<std::size_t>(2 * C)});
        std::vector<int> l(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t c = 0; c < f.cols(); ++c)
                f.at(i - begin, c) = feat_rows[order[i]][c];
            l[i - begin] = pair_labels[order[i]];
        }
        return make_dataset(std::move(f), std::move(l), 2);
    };
    Dataset val_set = pack(0, n_val);
    Dataset train_set = pack(n_val, feat_rows.size());

    MlpArchitecture attack_arch{static_cast<std::size_t>(2 * C), cfg.attack_hidden, 2};
    ModelParams net = train(init_model(attack_arch, substream_seed(cfg.shadow.seed, "attack-init")),
                            train_set, cfg.attack_train,
                            substream_seed(cfg.shadow.seed, "attack-train"));

    AttackTrainResult res;
    res.model = AttackModel{std::move(net)};
    res.val_accuracy = val_set.empty() ? 0.0 : accuracy(res.model.net, val_set);
    res.pair_count = feat_rows.size();
    return res;
}

struct MiaConfig {
    std::vector<std::size_t> hidden{32};
    TrainConfig train{300, 32, 0.2, 0.0};
    std::uint64_t seed = 0;
    bool loss_feature = true;  // prepend the per-sample loss, log-scaled
};

// Per-sample audit features for the classical attack: the posterior sorted by
// confidence, so the classifier does not have to learn every class corner
// separately. Optionally prepends the target's log-scaled cross-entropy on
// the sample, which keeps memorized samples (loss ~ 1e-6) and fresh samples
// (loss >= 1e-2) apart on an O(1) input scale.
inline Tensor mia_features(const ModelParams& target, const Dataset& ds,
                           bool loss_feature = false) {
    Tensor post = forward(target, ds.features);
    const std::size_t C = post.cols();
    const std::size_t extra = loss_feature ? 1 : 0;
    Tensor f({ds.size(), C + extra});
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (loss_feature) {
            const double p_true = std::max(
                post.at(r, static_cast<std::size_t>(ds.labels[r])), GradTape::kLogClamp);
            const double ce = -std::log(p_true);
            f.at(r, 0) = (std::log(ce + GradTape::kLogClamp) + 27.631) / 31.0;
        }
        std::vector<double> row(C);
        for (std::size_t c = 0; c < C; ++c) row[c] = post.at(r, c);
        std::sort(row.rbegin(), row.rend());
        for (std::size_t c = 0; c < C; ++c) f.at(r, c + extra) = row[c];
    }
    return f;
}

// Classical single-model membership inference, used as a removal check: train
// a binary classifier on the target model's audit features for known members
// vs nonmembers, then report the mean membership probability it assigns to
// d_f. Classes are balanced by subsampling the larger side.
inline double classic_mia_prob(const ModelParams& target, const Dataset& members,
                               const Dataset& nonmembers, const Dataset& d_f,
                               const MiaConfig& cfg = MiaConfig{}) {
    if (members.empty() || nonmembers.empty() || d_f.empty()) {
        throw DataError("classic_mia_prob: members, nonmembers and d_f must be non-empty");
    }
    auto rng = substream_rng(cfg.seed, "mia-balance");
    const std::size_t n = std::min(members.size(), nonmembers.size());
    Dataset mem = subset(members, detail::sample_without_replacement(members.size(), n, rng));
    Dataset non = subset(nonmembers, detail::sample_without_replacement(nonmembers.size(), n, rng));

    Tensor mem_feat = mia_features(target, mem, cfg.loss_feature);
    Tensor non_feat = mia_features(target, non, cfg.loss_feature);
    const std::size_t feat_dim = mem_feat.cols();
    Tensor feats({2 * n, feat_dim});
    std::vector<int> labels(2 * n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < feat_dim; ++c) {
            feats.at(r, c) = mem_feat.at(r, c);
            feats.at(n + r, c) = non_feat.at(r, c);
        }
        labels[r] = 1;
        labels[n + r] = 0;
    }
    Dataset audit = make_dataset(std::move(feats), std::move(labels), 2);

    MlpArchitecture arch{feat_dim, cfg.hidden, 2};
    ModelParams clf = train(init_model(arch, substream_seed(cfg.seed, "mia-init")), audit,
                            cfg.train, substream_seed(cfg.seed, "mia-train"));

    Tensor probs = forward(clf, mia_features(target, d_f, cfg.loss_feature));
    double mean = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) mean += probs.at(r, 1);
    return mean / static_cast<double>(probs.rows());
}

}  // namespace unlearn
