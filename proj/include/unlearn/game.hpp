#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "unlearn/attack.hpp"
#include "unlearn/dataset.hpp"
#include "unlearn/errors.hpp"
#include "unlearn/mlp.hpp"
#include "unlearn/tape.hpp"

namespace unlearn {

struct GameConfig {
    double lambda = 0.5;        // target attack probability, in (0,1)
    double eta_leader = 0.01;
    double eta_follower = 0.01;
    int epochs_leader = 5;      // inner gradient steps per round
    int epochs_follower = 5;
    int rounds = 100;           // max outer rounds
    double tol = 1e-4;          // convergence tolerance on loss deltas
    int window = 5;             // consecutive rounds the deltas must stay below tol
    double smooth_eps = 1e-6;   // smoothing for |.| in Loss_F
    std::size_t leader_batch = 0;  // 0 = full batch; else d_r minibatch size per step
    std::uint64_t seed = 0;        // drives the leader minibatch shuffle only

    void validate() const {
        if (lambda <= 0.0 || lambda >= 1.0) {
            throw ConfigError("GameConfig: lambda must be in (0,1), got " + cell_str(lambda));
        }
        if (rounds < 1 || window < 1 || tol <= 0.0 || smooth_eps <= 0.0) {
            throw ConfigError("GameConfig: rounds/window >= 1 and tol/smooth_eps > 0 required");
        }
        if (eta_leader < 0.0 || eta_follower < 0.0 || epochs_leader < 0 || epochs_follower < 0) {
            throw ConfigError("GameConfig: learning rates and epochs must be non-negative");
        }
    }
};

struct TraceRow {
    int round = 0;
    double loss_L = 0.0;
    double dis_term = 0.0;
    double error_term = 0.0;
    double loss_F = 0.0;
    double priaa = 0.0;
};

struct GameTrace {
    std::vector<TraceRow> rows;

    std::string to_csv() const {
        std::ostringstream os;
        os << "round,loss_L,dis_term,error_term,loss_F,priaa\n";
        for (const TraceRow& r : rows) {
            os << r.round << "," << cell_str(r.loss_L) << "," << cell_str(r.dis_term) << ","
               << cell_str(r.error_term) << "," << cell_str(r.loss_F) << ","
               << cell_str(r.priaa) << "\n";
        }
        return os.str();
    }
};

struct EquilibriumResult {
    ModelParams unlearned;
    GameTrace trace;
    bool converged = false;
    int rounds_used = 0;
};

// ---- leader loss -----------------------------------------------------------
// Loss_L = Dis + error. Dis is the per-sample Euclidean distance between the
// unlearned and alternative model posteriors on D_third, averaged over the
// samples; error is the mean cross-entropy of the unlearned model on D_r.

struct LossLVars {
    Var total;
    Var dis;
    Var error;
};

inline LossLVars loss_l_on_tape(GradTape& tape, const TapedModel& tm_u,
                                const ModelParams& m_r_alt, const Dataset& d_third,
                                const Dataset& d_r) {
    if (d_third.empty() || d_r.empty()) {
        throw DataError("loss_L: d_third and d_r must be non-empty");
    }
    Var alt = tape.input(forward(m_r_alt, d_third.features));
    Var u_third = forward_probs(tape, tm_u, tape.input(d_third.features));
    Var dis = tape.mean(tape.sqrt(tape.sum_rows(tape.square(tape.sub(u_third, alt)))));

    Var u_r = forward_probs(tape, tm_u, tape.input(d_r.features));
    Var err = cross_entropy(tape, u_r, d_r.labels, d_r.class_count);
    return LossLVars{tape.add(dis, err), dis, err};
}

struct LossLParts {
    double total = 0.0;
    double dis = 0.0;
    double error = 0.0;
};

inline LossLParts loss_l(const ModelParams& m_u, const ModelParams& m_r_alt,
                         const Dataset& d_third, const Dataset& d_r) {
    GradTape tape;
    LossLVars v = loss_l_on_tape(tape, lift(tape, m_u), m_r_alt, d_third, d_r);
    return LossLParts{tape.value(v.total).item(), tape.value(v.dis).item(),
                      tape.value(v.error).item()};
}

// ---- follower loss -----------------------------------------------------------
// Loss_F = smooth|attack_prob - lambda|.

inline Var loss_f_on_tape(GradTape& tape, const AttackModel& m_a, const ModelParams& m_o,
                          const TapedModel& tm_u, const Dataset& d_f, double lambda,
                          double smooth_eps) {
    Var p = attack_prob_on_tape(tape, m_a, m_o, tm_u, d_f);
    return tape.smooth_abs(tape.affine(p, 1.0, -lambda), smooth_eps);
}

inline double loss_f(const AttackModel& m_a, const ModelParams& m_o, const ModelParams& m_u,
                     const Dataset& d_f, double lambda, double smooth_eps) {
    GradTape tape;
    return tape.value(loss_f_on_tape(tape, m_a, m_o, lift(tape, m_u), d_f, lambda, smooth_eps))
        .item();
}

namespace detail {

// One full-batch gradient-descent update of every parameter in-place.
inline void apply_update(ModelParams& m, const GradTape& tape, const TapedModel& tm, double eta) {
    auto ptrs = m.parameters();
    auto vars = tm.parameters();
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        const Tensor& g = tape.grad(vars[i]);
        Tensor& p = *ptrs[i];
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= eta * g[j];
    }
}

}  // namespace detail

struct LeaderStepResult {
    ModelParams params;
    LossLParts loss;  // evaluated after the last update
};

namespace detail {

// Non-finite values during a game step mean the descent diverged; report them
// as divergence rather than a generic numeric failure.
[[noreturn]] inline void rethrow_as_divergence(const NumericError& e, const char* component) {
    if (std::string(e.what()).find("non-finite") != std::string::npos) {
        throw DivergenceError(std::string(component) + ": " + e.what());
    }
    throw e;
}

}  // namespace detail

// Algorithm of the unlearning module: epochs_leader descent steps on Loss_L
// with respect to the unlearned parameters. Gradients are full-batch by
// default; when leader_batch is set, the error term runs over d_r minibatches
// (the small d_third stays full) with a shuffle order derived from the seed.
inline LeaderStepResult leader_step(const ModelParams& omega_u, const ModelParams& m_r_alt,
                                    const SplitBundle& bundle, double eta, int epochs,
                                    std::size_t batch = 0, std::uint64_t shuffle_seed = 0) {
    ModelParams m = omega_u;
    try {
        std::mt19937_64 shuffle_rng(shuffle_seed);
        std::vector<std::size_t> order(bundle.d_r.size());
        std::iota(order.begin(), order.end(), 0);
        for (int e = 0; e < epochs; ++e) {
            if (batch == 0 || batch >= bundle.d_r.size()) {
                GradTape tape;
                TapedModel tm = lift(tape, m);
                LossLVars loss = loss_l_on_tape(tape, tm, m_r_alt, bundle.d_third, bundle.d_r);
                if (!std::isfinite(tape.value(loss.total).item())) {
                    throw DivergenceError("loss_L non-finite (leader epoch " +
                                          std::to_string(e) + ")");
                }
                tape.backward(loss.total);
                detail::apply_update(m, tape, tm, eta);
                continue;
            }
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            for (std::size_t start = 0; start < order.size(); start += batch) {
                const std::size_t end = std::min(start + batch, order.size());
                std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
                Dataset chunk = subset(bundle.d_r, idx);
                GradTape tape;
                TapedModel tm = lift(tape, m);
                LossLVars loss = loss_l_on_tape(tape, tm, m_r_alt, bundle.d_third, chunk);
                if (!std::isfinite(tape.value(loss.total).item())) {
                    throw DivergenceError("loss_L non-finite (leader epoch " +
                                          std::to_string(e) + ")");
                }
                tape.backward(loss.total);
                detail::apply_update(m, tape, tm, eta);
            }
        }
        LossLParts after = loss_l(m, m_r_alt, bundle.d_third, bundle.d_r);
        if (!std::isfinite(after.total)) {
            throw DivergenceError("loss_L non-finite after leader step");
        }
        return LeaderStepResult{std::move(m), after};
    } catch (const NumericError& e) {
        detail::rethrow_as_divergence(e, "loss_L");
    }
}

struct FollowerStepResult {
    ModelParams params;
    double loss = 0.0;         // evaluated after the last update
    double attack_prob = 0.0;  // likewise
};

// Algorithm of the privacy module: epochs_follower descent steps on Loss_F.
// Only the unlearned parameters move; the attack model stays frozen.
inline FollowerStepResult follower_step(const ModelParams& omega_u, const AttackModel& m_a,
                                        const ModelParams& m_o, const Dataset& d_f, double lambda,
                                        double eta, int epochs, double smooth_eps = 1e-6) {
    ModelParams m = omega_u;
    try {
        for (int e = 0; e < epochs; ++e) {
            GradTape tape;
            TapedModel tm = lift(tape, m);
            Var loss = loss_f_on_tape(tape, m_a, m_o, tm, d_f, lambda, smooth_eps);
            if (!std::isfinite(tape.value(loss).item())) {
                throw DivergenceError("loss_F non-finite (follower epoch " + std::to_string(e) +
                                      ")");
            }
            tape.backward(loss);
            detail::apply_update(m, tape, tm, eta);
        }
        FollowerStepResult res;
        res.attack_prob = attack_prob(m_a, m_o, m, d_f);
        res.loss = std::sqrt((res.attack_prob - lambda) * (res.attack_prob - lambda) +
                             smooth_eps * smooth_eps) -
                   smooth_eps;
        if (!std::isfinite(res.loss)) {
            throw DivergenceError("loss_F non-finite after follower step");
        }
        res.params = std::move(m);
        return res;
    } catch (const NumericError& e) {
        detail::rethrow_as_divergence(e, "loss_F");
    }
}

// The Stackelberg loop: leader then follower each round, both adjusting the
// same parameter vector, until the per-round deltas of both losses stay below
// tol for `window` consecutive rounds or the round budget runs out. The final
// follower parameters are the unlearned model.
inline EquilibriumResult play(const ModelParams& omega_o, const SplitBundle& bundle,
                              const ModelParams& m_r_alt, const AttackModel& m_a,
                              const GameConfig& cfg) {
    cfg.validate();
    EquilibriumResult result;
    ModelParams m_u = omega_o;  // first round starts from the original parameters

    int stable_rounds = 0;
    double prev_loss_l = 0.0, prev_loss_f = 0.0;
    for (int round = 1; round <= cfg.rounds; ++round) {
        try {
            LeaderStepResult lead = leader_step(
                m_u, m_r_alt, bundle, cfg.eta_leader, cfg.epochs_leader, cfg.leader_batch,
                substream_seed(cfg.seed, "leader-shuffle", static_cast<std::uint64_t>(round)));
            m_u = std::move(lead.params);
            FollowerStepResult follow =
                follower_step(m_u, m_a, omega_o, bundle.d_f, cfg.lambda, cfg.eta_follower,
                              cfg.epochs_follower, cfg.smooth_eps);
            m_u = std::move(follow.params);

            // Trace records the state at the end of the round.
            LossLParts l = loss_l(m_u, m_r_alt, bundle.d_third, bundle.d_r);
            TraceRow row;
            row.round = round;
            row.loss_L = l.total;
            row.dis_term = l.dis;
            row.error_term = l.error;
            row.loss_F = follow.loss;
            row.priaa = std::abs(follow.attack_prob - 0.5);
            if (!std::isfinite(row.loss_L)) {
                throw DivergenceError("loss_L non-finite in trace");
            }
            result.trace.rows.push_back(row);

            if (round > 1 && std::abs(row.loss_L - prev_loss_l) < cfg.tol &&
                std::abs(row.loss_F - prev_loss_f) < cfg.tol) {
                ++stable_rounds;
            } else {
                stable_rounds = 0;
            }
            prev_loss_l = row.loss_L;
            prev_loss_f = row.loss_F;
            if (stable_rounds >= cfg.window) {
                result.converged = true;
                break;
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError("round " + std::to_string(round) + ": " + e.what());
        }
    }
    result.unlearned = std::move(m_u);
    result.rounds_used = static_cast<int>(result.trace.rows.size());
    return result;
}

}  // namespace unlearn
