#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffad/tensor.hpp"

namespace diffad {

using NodeId = std::size_t;

// Gradients produced by Tape::backward, addressable by node id. Nodes that
// did not participate in the loss have no entry.
class Gradients {
public:
    explicit Gradients(std::size_t n) : grads_(n) {}

    bool has(NodeId id) const { return id < grads_.size() && !grads_[id].empty(); }

    const Tensor& wrt(NodeId id) const {
        if (!has(id)) throw ContractError("no gradient recorded for node " + std::to_string(id));
        return grads_[id];
    }

    std::vector<Tensor>& raw() { return grads_; }

private:
    std::vector<Tensor> grads_;
};

// Reverse-mode automatic differentiation over an explicitly recorded
// computation tape. Node ids are topologically ordered by construction:
// every parent id is smaller than its consumer's id, so one reverse sweep
// applies the chain rule visiting each node exactly once.
//
// A tape is single-threaded; independent computations use independent tapes.
class Tape {
public:
    struct Node {
        const char* op;
        std::vector<NodeId> parents;
        Tensor value;
        // Accumulates parent gradients given this node's upstream gradient.
        std::function<void(const Tape&, const Tensor&, std::vector<Tensor>&)> backward;
    };

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }

    const Node& node(NodeId id) const { return nodes_[id]; }

    NodeId leaf(Tensor v) { return push("leaf", {}, std::move(v), nullptr); }

    // ------------------------------------------------------------------
    // Recorded operations
    // ------------------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        Tensor out = diffad::matmul(value(a), value(b));
        return push("matmul", {a, b}, std::move(out),
                    [a, b](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, diffad::matmul(g, diffad::transpose(t.value(b))));
                        accumulate(sink, b, diffad::matmul(diffad::transpose(t.value(a)), g));
                    });
    }

    NodeId add(NodeId a, NodeId b) { return binary(a, b, Binary::Add); }
    NodeId sub(NodeId a, NodeId b) { return binary(a, b, Binary::Sub); }
    NodeId mul(NodeId a, NodeId b) { return binary(a, b, Binary::Mul); }

    NodeId scale(NodeId a, double c) {
        return push("scale", {a}, diffad::scale(value(a), c),
                    [a, c](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, diffad::scale(g, c));
                    });
    }

    NodeId relu(NodeId a) {
        return push("relu", {a}, diffad::relu(value(a)),
                    [a](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor d = g;
                        const Tensor& x = t.value(a);
                        for (std::size_t i = 0; i < d.size(); ++i)
                            if (x[i] <= 0.0) d[i] = 0.0;
                        accumulate(sink, a, d);
                    });
    }

    NodeId gelu(NodeId a) {
        return push("gelu", {a}, diffad::gelu(value(a)),
                    [a](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor d = g;
                        const Tensor& x = t.value(a);
                        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gelu_grad_scalar(x[i]);
                        accumulate(sink, a, d);
                    });
    }

    NodeId softmax(NodeId a) {
        return push("softmax", {a}, diffad::softmax(value(a)),
                    [a, id = nodes_.size()](const Tape& t, const Tensor& g,
                                            std::vector<Tensor>& sink) {
                        const Tensor& y = t.value(id);
                        const std::size_t r = y.rows(), c = y.cols();
                        Tensor d = g;
                        for (std::size_t i = 0; i < r; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < c; ++j)
                                dot += g[i * c + j] * y[i * c + j];
                            for (std::size_t j = 0; j < c; ++j)
                                d[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                        }
                        accumulate(sink, a, d);
                    });
    }

    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
        Tensor out = diffad::layer_norm(value(x), value(gain), value(bias), eps);
        return push(
            "layer_norm", {x, gain, bias}, std::move(out),
            [x, gain, bias, eps](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                const Tensor& xv = t.value(x);
                const Tensor& gv = t.value(gain);
                const std::size_t r = xv.rows(), d = xv.cols();
                Tensor dx = xv, dgain({d}), dbias({d});
                for (std::size_t i = 0; i < r; ++i) {
                    double mean = 0.0;
                    for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
                    mean /= static_cast<double>(d);
                    double var = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dv = xv[i * d + j] - mean;
                        var += dv * dv;
                    }
                    var /= static_cast<double>(d);
                    const double rstd = 1.0 / std::sqrt(var + eps);
                    double hmean = 0.0, hxmean = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xhat = (xv[i * d + j] - mean) * rstd;
                        const double h = g[i * d + j] * gv[j];
                        hmean += h;
                        hxmean += h * xhat;
                        dgain[j] += g[i * d + j] * xhat;
                        dbias[j] += g[i * d + j];
                    }
                    hmean /= static_cast<double>(d);
                    hxmean /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double xhat = (xv[i * d + j] - mean) * rstd;
                        const double h = g[i * d + j] * gv[j];
                        dx[i * d + j] = rstd * (h - hmean - xhat * hxmean);
                    }
                }
                accumulate(sink, x, dx);
                accumulate(sink, gain, dgain);
                accumulate(sink, bias, dbias);
            });
    }

    NodeId transpose(NodeId a) {
        return push("transpose", {a}, diffad::transpose(value(a)),
                    [a](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, diffad::transpose(g));
                    });
    }

    NodeId reshape(NodeId a, std::vector<std::size_t> shape) {
        Tensor out(std::move(shape), value(a).data());
        const std::vector<std::size_t> back = value(a).shape();
        return push("reshape", {a}, std::move(out),
                    [a, back](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, Tensor(back, g.data()));
                    });
    }

    NodeId concat_cols(NodeId a, NodeId b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row counts differ");
        const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
        Tensor out({r, ca + cb});
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
            for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
        }
        return push("concat_cols", {a, b}, std::move(out),
                    [a, b, r, ca, cb](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor da({r, ca}), db({r, cb});
                        for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < ca; ++j) da(i, j) = g(i, j);
                            for (std::size_t j = 0; j < cb; ++j) db(i, j) = g(i, ca + j);
                        }
                        accumulate(sink, a, da);
                        accumulate(sink, b, db);
                    });
    }

    NodeId slice_rows(NodeId a, std::size_t r0, std::size_t n) {
        const Tensor& av = value(a);
        const std::size_t c = av.cols();
        if (r0 + n > av.rows()) throw ShapeError("slice_rows out of range");
        Tensor out({n, c});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) out(i, j) = av(r0 + i, j);
        const std::size_t rows = av.rows();
        return push("slice_rows", {a}, std::move(out),
                    [a, r0, n, rows, c](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor da({rows, c});
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < c; ++j) da(r0 + i, j) = g(i, j);
                        accumulate(sink, a, da);
                    });
    }

    NodeId slice_cols(NodeId a, std::size_t c0, std::size_t n) {
        const Tensor& av = value(a);
        const std::size_t r = av.rows(), c = av.cols();
        if (c0 + n > c) throw ShapeError("slice_cols out of range");
        Tensor out({r, n});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, c0 + j);
        return push("slice_cols", {a}, std::move(out),
                    [a, c0, n, r, c](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor da({r, c});
                        for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < n; ++j) da(i, c0 + j) = g(i, j);
                        accumulate(sink, a, da);
                    });
    }

    // Vertical concatenation of equally wide blocks.
    NodeId stack_rows(std::span<const NodeId> parts) {
        if (parts.empty()) throw ContractError("stack_rows: no parts");
        const std::size_t c = value(parts[0]).cols();
        std::size_t r = 0;
        for (NodeId p : parts) {
            if (value(p).cols() != c) throw ShapeError("stack_rows: column counts differ");
            r += value(p).rows();
        }
        Tensor out({r, c});
        std::size_t row = 0;
        std::vector<NodeId> parents(parts.begin(), parts.end());
        std::vector<std::size_t> offsets;
        for (NodeId p : parts) {
            offsets.push_back(row);
            const Tensor& pv = value(p);
            for (std::size_t i = 0; i < pv.rows(); ++i)
                for (std::size_t j = 0; j < c; ++j) out(row + i, j) = pv(i, j);
            row += pv.rows();
        }
        return push("stack_rows", parents, std::move(out),
                    [parents, offsets, c](const Tape& t, const Tensor& g,
                                          std::vector<Tensor>& sink) {
                        for (std::size_t k = 0; k < parents.size(); ++k) {
                            const std::size_t pr = t.value(parents[k]).rows();
                            Tensor dp({pr, c});
                            for (std::size_t i = 0; i < pr; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                    dp(i, j) = g(offsets[k] + i, j);
                            accumulate(sink, parents[k], dp);
                        }
                    });
    }

    // Each row of `a` repeated `times` consecutive times.
    NodeId repeat_rows(NodeId a, std::size_t times) {
        const Tensor& av = value(a);
        const std::size_t r = av.rows(), c = av.cols();
        Tensor out({r * times, c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < times; ++k)
                for (std::size_t j = 0; j < c; ++j) out(i * times + k, j) = av(i, j);
        return push("repeat_rows", {a}, std::move(out),
                    [a, r, c, times](const Tape&, const Tensor& g, std::vector<Tensor>& sink) {
                        Tensor da({r, c});
                        for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t k = 0; k < times; ++k)
                                for (std::size_t j = 0; j < c; ++j)
                                    da(i, j) += g(i * times + k, j);
                        accumulate(sink, a, da);
                    });
    }

    NodeId sum_all(NodeId a) {
        return push("sum_all", {a}, Tensor::scalar(diffad::sum_all(value(a))),
                    [a](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, Tensor::full(t.value(a).shape(), g[0]));
                    });
    }

    NodeId mean_all(NodeId a) {
        const double n = static_cast<double>(value(a).size());
        return push("mean_all", {a}, Tensor::scalar(diffad::sum_all(value(a)) / n),
                    [a, n](const Tape& t, const Tensor& g, std::vector<Tensor>& sink) {
                        accumulate(sink, a, Tensor::full(t.value(a).shape(), g[0] / n));
                    });
    }

    // ------------------------------------------------------------------
    // Reverse sweep
    // ------------------------------------------------------------------

    // Chain rule from a scalar loss node back to every participating node.
    Gradients backward(NodeId loss) const {
        if (value(loss).size() != 1) {
            throw ContractError("backward: loss node must be scalar, got " +
                                value(loss).shape_str());
        }
        std::vector<char> reachable(nodes_.size(), 0);
        std::vector<NodeId> stack{loss};
        reachable[loss] = 1;
        while (!stack.empty()) {
            const NodeId id = stack.back();
            stack.pop_back();
            for (NodeId p : nodes_[id].parents) {
                if (!reachable[p]) {
                    reachable[p] = 1;
                    stack.push_back(p);
                }
            }
        }
        Gradients grads(nodes_.size());
        grads.raw()[loss] = Tensor::scalar(1.0);
        for (NodeId id = loss + 1; id-- > 0;) {
            if (!reachable[id] || !nodes_[id].backward) continue;
            nodes_[id].backward(*this, grads.raw()[id], grads.raw());
        }
        return grads;
    }

private:
    enum class Binary { Add, Sub, Mul };

    NodeId binary(NodeId a, NodeId b, Binary kind) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        const bool bcast =
            detail::binary_mode(av, bv, kind == Binary::Add ? "add"
                                        : kind == Binary::Sub ? "sub"
                                                              : "mul") ==
            detail::Broadcast::RowVector;
        Tensor out = kind == Binary::Add ? diffad::add(av, bv)
                     : kind == Binary::Sub ? diffad::sub(av, bv)
                                           : diffad::mul(av, bv);
        const char* name = kind == Binary::Add ? "add" : kind == Binary::Sub ? "sub" : "mul";
        return push(name, {a, b}, std::move(out),
                    [a, b, kind, bcast](const Tape& t, const Tensor& g,
                                        std::vector<Tensor>& sink) {
                        const Tensor& av = t.value(a);
                        const Tensor& bv = t.value(b);
                        Tensor da = g, db_full = g;
                        if (kind == Binary::Mul) {
                            const std::size_t c = bcast ? av.cols() : 0;
                            for (std::size_t i = 0; i < da.size(); ++i) {
                                da[i] = g[i] * (bcast ? bv[i % c] : bv[i]);
                                db_full[i] = g[i] * av[i];
                            }
                        } else if (kind == Binary::Sub) {
                            for (auto& v : db_full.data()) v = -v;
                        }
                        accumulate(sink, a, da);
                        accumulate(sink, b, bcast ? colsum(db_full) : db_full);
                    });
    }

    NodeId push(const char* op, std::vector<NodeId> parents, Tensor value,
                std::function<void(const Tape&, const Tensor&, std::vector<Tensor>&)> bw) {
        const NodeId id = nodes_.size();
        for (NodeId p : parents) {
            if (p >= id) throw ContractError("tape parents must precede their consumer");
        }
        nodes_.push_back(Node{op, std::move(parents), std::move(value), std::move(bw)});
        return id;
    }

    static void accumulate(std::vector<Tensor>& sink, NodeId id, const Tensor& delta) {
        if (sink[id].empty()) {
            sink[id] = delta;
        } else {
            for (std::size_t i = 0; i < delta.size(); ++i) sink[id][i] += delta[i];
        }
    }

    std::vector<Node> nodes_;
};

} // namespace diffad
