#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "unlearn/errors.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

class GradTape;

// Handle to a node on a GradTape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
    std::size_t node = 0;
};

// Reverse-mode automatic differentiation over Tensor values.
//
// Nodes are appended in evaluation order, and every operand precedes its
// result, so walking the node list backwards is a reverse topological replay.
// Leaves created via input() are the differentiable parameters; after
// backward(scalar) their adjoints are available through grad(). Leaves that do
// not influence the output keep an exactly-zero gradient.
//
// A tape is single-threaded; independent tapes can live on different threads.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    Var input(Tensor value) {
        nodes_.push_back(Node{std::move(value), nullptr});
        return Var{nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.node].value; }

    std::size_t node_count() const { return nodes_.size(); }

    // ---- primitives ------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
            throw NumericError("matmul: incompatible shapes " + A.shape_string() +
                               " and " + B.shape_string());
        }
        const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        Tensor out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A.at(i, p);
                for (std::size_t j = 0; j < n; ++j) {
                    out.at(i, j) += aip * B.at(p, j);
                }
            }
        }
        return push(std::move(out), [a, b, m, k, n](GradTape& t, const Tensor& g) {
            const Tensor& A = t.val(a);
            const Tensor& B = t.val(b);
            Tensor& ga = t.grads_[a.node];
            Tensor& gb = t.grads_[b.node];
            // dA = g * B^T, dB = A^T * g
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double gij = g.at(i, j);
                    for (std::size_t p = 0; p < k; ++p) {
                        ga.at(i, p) += gij * B.at(p, j);
                        gb.at(p, j) += A.at(i, p) * gij;
                    }
                }
            }
        });
    }

    // Elementwise add; also accepts matrix + row vector (bias broadcast).
    Var add(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.same_shape(B)) {
            Tensor out = A;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
            return push(std::move(out), [a, b](GradTape& t, const Tensor& g) {
                Tensor& ga = t.grads_[a.node];
                Tensor& gb = t.grads_[b.node];
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
            });
        }
        if (A.rank() == 2 && B.rank() == 1 && B.size() == A.cols()) {
            Tensor out = A;
            for (std::size_t r = 0; r < A.rows(); ++r)
                for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) += B[c];
            return push(std::move(out), [a, b](GradTape& t, const Tensor& g) {
                Tensor& ga = t.grads_[a.node];
                Tensor& gb = t.grads_[b.node];
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) {
                        ga.at(r, c) += g.at(r, c);
                        gb[c] += g.at(r, c);
                    }
            });
        }
        throw NumericError("add: incompatible shapes " + A.shape_string() + " and " +
                           B.shape_string());
    }

    Var mul(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (!A.same_shape(B)) {
            throw NumericError("mul: shape mismatch " + A.shape_string() + " vs " +
                               B.shape_string());
        }
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
        return push(std::move(out), [a, b](GradTape& t, const Tensor& g) {
            const Tensor& A = t.val(a);
            const Tensor& B = t.val(b);
            Tensor& ga = t.grads_[a.node];
            Tensor& gb = t.grads_[b.node];
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * B[i];
                gb[i] += g[i] * A[i];
            }
        });
    }

    // Elementwise scale * x + shift.
    Var affine(Var a, double scale, double shift) {
        Tensor out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * out[i] + shift;
        return push(std::move(out), [a, scale](GradTape& t, const Tensor& g) {
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
        });
    }

    Var sub(Var a, Var b) { return add(a, affine(b, -1.0, 0.0)); }

    Var relu(Var a) {
        Tensor out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            // max() would quietly turn NaN into 0 and hide a divergence
            if (std::isnan(out[i])) {
                throw NumericError("relu: non-finite input");
            }
            out[i] = std::max(0.0, out[i]);
        }
        return push(std::move(out), [a](GradTape& t, const Tensor& g) {
            const Tensor& A = t.val(a);
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (A[i] > 0.0) ga[i] += g[i];
        });
    }

    // Row-wise softmax (rank-1 input is treated as a single row). Shift by the
    // row max so exp never overflows; each output row sums to 1.
    Var softmax_rows(Var a) {
        const Tensor& A = val(a);
        const std::size_t rows = A.rows(), cols = A.cols();
        Tensor out = A;
        for (std::size_t r = 0; r < rows; ++r) {
            double mx = out[r * cols];
            for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, out[r * cols + c]);
            if (!std::isfinite(mx)) {
                throw NumericError("softmax: non-finite input in row " + std::to_string(r));
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                double e = std::exp(out[r * cols + c] - mx);
                out[r * cols + c] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= sum;
        }
        Var res = push(std::move(out), nullptr);
        nodes_[res.node].backward = [a, res, rows, cols](GradTape& t, const Tensor& g) {
            const Tensor& Y = t.val(res);
            Tensor& ga = t.grads_[a.node];
            // dx = y * (g - <g, y>) per row
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c)
                    dot += g[r * cols + c] * Y[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c)
                    ga[r * cols + c] += Y[r * cols + c] * (g[r * cols + c] - dot);
            }
        };
        return res;
    }

    // Natural log with the argument clamped below at kLogClamp, so
    // cross-entropy stays finite on fully confident predictions.
    static constexpr double kLogClamp = 1e-12;

    Var log(Var a) {
        Tensor out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = std::log(std::max(out[i], kLogClamp));
        return push(std::move(out), [a](GradTape& t, const Tensor& g) {
            const Tensor& A = t.val(a);
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (A[i] > kLogClamp) ga[i] += g[i] / A[i];
        });
    }

    Var square(Var a) {
        Tensor out = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
        return push(std::move(out), [a](GradTape& t, const Tensor& g) {
            const Tensor& A = t.val(a);
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * A[i] * g[i];
        });
    }

    // Elementwise sqrt; x must be >= 0. The adjoint at exactly 0 is taken as 0
    // (subgradient convention) instead of dividing by zero.
    Var sqrt(Var a) {
        const Tensor& A = val(a);
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i] < 0.0) {
                throw NumericError("sqrt: negative input " + std::to_string(out[i]));
            }
            out[i] = std::sqrt(out[i]);
        }
        Var res = push(std::move(out), nullptr);
        nodes_[res.node].backward = [a, res](GradTape& t, const Tensor& g) {
            const Tensor& Y = t.val(res);
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (Y[i] > 0.0) ga[i] += g[i] / (2.0 * Y[i]);
        };
        return res;
    }

    Var sum(Var a) {
        const Tensor& A = val(a);
        double s = 0.0;
        for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
        return push(Tensor::scalar(s), [a](GradTape& t, const Tensor& g) {
            Tensor& ga = t.grads_[a.node];
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        });
    }

    Var mean(Var a) {
        const std::size_t n = val(a).size();
        return affine(sum(a), 1.0 / static_cast<double>(n), 0.0);
    }

    // Row sums of a matrix: [r x c] -> vector of length r.
    Var sum_rows(Var a) {
        const Tensor& A = val(a);
        if (A.rank() != 2) {
            throw NumericError("sum_rows: expected rank-2 tensor, got " + A.shape_string());
        }
        Tensor out({A.rows()});
        for (std::size_t r = 0; r < A.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < A.cols(); ++c) s += A.at(r, c);
            out[r] = s;
        }
        const std::size_t cols = A.cols();
        return push(std::move(out), [a, cols](GradTape& t, const Tensor& g) {
            Tensor& ga = t.grads_[a.node];
            for (std::size_t r = 0; r < g.size(); ++r)
                for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
        });
    }

    // Column-wise concatenation of two matrices with equal row counts.
    Var concat_cols(Var a, Var b) {
        const Tensor& A = val(a);
        const Tensor& B = val(b);
        if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows()) {
            throw NumericError("concat_cols: incompatible shapes " + A.shape_string() +
                               " and " + B.shape_string());
        }
        const std::size_t rows = A.rows(), ca = A.cols(), cb = B.cols();
        Tensor out({rows, ca + cb});
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = A.at(r, c);
            for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = B.at(r, c);
        }
        return push(std::move(out), [a, b, rows, ca, cb](GradTape& t, const Tensor& g) {
            Tensor& ga = t.grads_[a.node];
            Tensor& gb = t.grads_[b.node];
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g.at(r, c);
                for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g.at(r, ca + c);
            }
        });
    }

    // Smooth replacement for |x|: sqrt(x^2 + eps^2) - eps. Differentiable
    // everywhere, even at 0, and within eps of |x| once |x| >> eps.
    Var smooth_abs(Var x, double eps) {
        if (eps <= 0.0) {
            throw NumericError("smooth_abs: eps must be positive, got " + std::to_string(eps));
        }
        return affine(sqrt(affine(square(x), 1.0, eps * eps)), 1.0, -eps);
    }

    // ---- reverse pass ------------------------------------------------------

    // Replays adjoints from a scalar output back to every leaf. May be called
    // repeatedly on the same tape; gradients are reset each time.
    void backward(Var output) {
        const Tensor& out = val(output);
        if (!out.is_scalar()) {
            throw NumericError("backward: output must be scalar, got shape " +
                               out.shape_string());
        }
        grads_.clear();
        grads_.reserve(nodes_.size());
        for (const Node& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape()));
        grads_[output.node][0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this, grads_[i]);
        }
        has_grads_ = true;
    }

    const Tensor& grad(Var v) const {
        if (!has_grads_) {
            throw NumericError("grad: backward() has not been run on this tape");
        }
        return grads_[v.node];
    }

private:
    struct Node {
        Tensor value;
        std::function<void(GradTape&, const Tensor&)> backward;  // null for leaves
    };

    const Tensor& val(Var v) const { return nodes_[v.node].value; }

    Var push(Tensor value, std::function<void(GradTape&, const Tensor&)> bw) {
        nodes_.push_back(Node{std::move(value), std::move(bw)});
        return Var{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool has_grads_ = false;
};

}  // namespace unlearn
