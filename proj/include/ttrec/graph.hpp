#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ttrec/param_store.hpp"
#include "ttrec/stp.hpp"
#include "ttrec/tensor.hpp"

namespace ttrec {

using NodeId = int;

enum class OpKind {
    kConstant,
    kParam,
    kMatMul,
    kStp,
    kTranspose,
    kReshape,
    kPermute,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRowBroadcast,
    kConcat,
    kConcatCols,
    kRowGather,
    kMeanRows,
    kSum,
    kDot,
    kSoftmax,
    kLogSoftmax,
    kLogSumExp,
    kSoftmaxRowsCausal,
    kSigmoid,
    kRelu,
    kLog,
    kExp,
    kClamp,
    kLayerNormRows,
    kDropout,
    kCosineSim,
};

/// Single-use reverse-mode compute graph. Construction is eager: every
/// builder computes and caches its forward value immediately. backward()
/// walks the nodes once in reverse creation order (creation order is a
/// topological order by construction) and accumulates parameter gradients
/// into the bound ParamStore slots. A second backward() without rebuilding
/// the graph is rejected.
template <typename Real>
class Graph {
public:
    explicit Graph(bool training = false, Rng* rng = nullptr) : training_(training), rng_(rng) {}

    bool training() const { return training_; }

    // ---- leaves ----------------------------------------------------------

    NodeId constant(Tensor<Real> v) {
        Node n;
        n.op = OpKind::kConstant;
        n.value = std::move(v);
        return push(std::move(n));
    }

    NodeId scalar_const(Real v) { return constant(Tensor<Real>::scalar(v)); }

    /// Trainable leaf. Repeated requests for the same parameter return the
    /// same node, so gradients from all uses accumulate in one place.
    NodeId param(ParamStore<Real>& store, const std::string& name) {
        int pid = store.id_of(name);
        auto key = std::make_pair(static_cast<const void*>(&store), pid);
        auto it = param_nodes_.find(key);
        if (it != param_nodes_.end()) return it->second;
        Node n;
        n.op = OpKind::kParam;
        n.value = store.entry(pid).value;
        n.needs_grad = true;
        n.store = &store;
        n.param_id = pid;
        NodeId id = push(std::move(n));
        param_nodes_[key] = id;
        return id;
    }

    /// Read-only leaf over a parameter (frozen model): no gradient ever
    /// reaches the store.
    NodeId frozen(const ParamStore<Real>& store, const std::string& name) {
        return constant(store.value(name));
    }

    // ---- linear algebra --------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.rank() != 2 || (bv.rank() != 2 && bv.rank() != 1))
            shape_error("matmul", av, bv);
        if (bv.rank() == 2 && av.extent(1) != bv.extent(0)) shape_error("matmul", av, bv);
        if (bv.rank() == 1 && av.extent(1) != bv.extent(0)) shape_error("matmul", av, bv);

        Node n;
        n.op = OpKind::kMatMul;
        n.in = {a, b};
        const std::int64_t m = av.extent(0), k = av.extent(1);
        if (bv.rank() == 2) {
            const std::int64_t c = bv.extent(1);
            n.value = Tensor<Real>(Extents{m, c});
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t p = 0; p < k; ++p) {
                    const Real aip = av.at(i, p);
                    if (aip == Real(0)) continue;
                    const Real* brow = bv.data() + p * c;
                    Real* crow = n.value.data() + i * c;
                    for (std::int64_t j = 0; j < c; ++j) crow[j] += aip * brow[j];
                }
        } else {
            n.value = Tensor<Real>(Extents{m});
            for (std::int64_t i = 0; i < m; ++i) {
                Real acc = 0;
                const Real* arow = av.data() + i * k;
                for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * bv[p];
                n.value[i] = acc;
            }
        }
        return push(std::move(n));
    }

    NodeId stp_op(NodeId a, NodeId b, std::int64_t block) {
        Node n;
        n.op = OpKind::kStp;
        n.in = {a, b};
        n.iarg = block;
        n.value = stp(val(a), val(b), block);
        return push(std::move(n));
    }

    NodeId transpose(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 2) shape_error("transpose", av);
        Node n;
        n.op = OpKind::kTranspose;
        n.in = {a};
        n.value = Tensor<Real>(Extents{av.extent(1), av.extent(0)});
        for (std::int64_t i = 0; i < av.extent(0); ++i)
            for (std::int64_t j = 0; j < av.extent(1); ++j) n.value.at(j, i) = av.at(i, j);
        return push(std::move(n));
    }

    NodeId reshape(NodeId a, Extents extents) {
        const auto& av = val(a);
        if (extents_product(extents) != av.size())
            throw ConfigError("reshape: cannot view " + extents_str(av.extents()) + " as " +
                              extents_str(extents));
        Node n;
        n.op = OpKind::kReshape;
        n.in = {a};
        n.value = av;
        Tensor<Real> out(extents);
        for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i];
        n.value = std::move(out);
        return push(std::move(n));
    }

    /// out[t] = in[map[t]]. The map is any precomputed index rearrangement;
    /// backward scatter-adds through it.
    NodeId permute(NodeId a, std::vector<std::int64_t> map, Extents out_extents) {
        const auto& av = val(a);
        if (static_cast<std::int64_t>(map.size()) != extents_product(out_extents))
            throw ConfigError("permute: map size does not match output extents");
        Node n;
        n.op = OpKind::kPermute;
        n.in = {a};
        n.value = Tensor<Real>(std::move(out_extents));
        for (std::size_t t = 0; t < map.size(); ++t) n.value[static_cast<std::int64_t>(t)] = av[map[t]];
        n.imap = std::move(map);
        return push(std::move(n));
    }

    // ---- pointwise and broadcast -----------------------------------------

    NodeId add(NodeId a, NodeId b) { return binary(OpKind::kAdd, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(OpKind::kSub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(OpKind::kMul, a, b); }

    NodeId scale(NodeId a, double c) {
        Node n;
        n.op = OpKind::kScale;
        n.in = {a};
        n.darg0 = c;
        n.value = val(a);
        for (std::int64_t i = 0; i < n.value.size(); ++i)
            n.value[i] = static_cast<Real>(c * static_cast<double>(n.value[i]));
        return push(std::move(n));
    }

    /// matrix (l x n) + vector (n), added to every row.
    NodeId add_row_broadcast(NodeId mat, NodeId vec) {
        const auto& mv = val(mat);
        const auto& vv = val(vec);
        if (mv.rank() != 2 || vv.rank() != 1 || mv.extent(1) != vv.extent(0))
            shape_error("add_row_broadcast", mv, vv);
        Node n;
        n.op = OpKind::kAddRowBroadcast;
        n.in = {mat, vec};
        n.value = mv;
        for (std::int64_t i = 0; i < mv.extent(0); ++i)
            for (std::int64_t j = 0; j < mv.extent(1); ++j) n.value.at(i, j) += vv[j];
        return push(std::move(n));
    }

    NodeId concat(const std::vector<NodeId>& parts) {
        std::int64_t total = 0;
        for (NodeId p : parts) {
            if (val(p).rank() != 1) shape_error("concat", val(p));
            total += val(p).size();
        }
        Node n;
        n.op = OpKind::kConcat;
        n.in = parts;
        n.value = Tensor<Real>(Extents{total});
        std::int64_t off = 0;
        for (NodeId p : parts) {
            const auto& pv = val(p);
            for (std::int64_t i = 0; i < pv.size(); ++i) n.value[off + i] = pv[i];
            off += pv.size();
        }
        return push(std::move(n));
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        const std::int64_t rows = val(parts.front()).extent(0);
        std::int64_t cols = 0;
        for (NodeId p : parts) {
            if (val(p).rank() != 2 || val(p).extent(0) != rows) shape_error("concat_cols", val(p));
            cols += val(p).extent(1);
        }
        Node n;
        n.op = OpKind::kConcatCols;
        n.in = parts;
        n.value = Tensor<Real>(Extents{rows, cols});
        std::int64_t off = 0;
        for (NodeId p : parts) {
            const auto& pv = val(p);
            for (std::int64_t i = 0; i < rows; ++i)
                for (std::int64_t j = 0; j < pv.extent(1); ++j) n.value.at(i, off + j) = pv.at(i, j);
            off += pv.extent(1);
        }
        return push(std::move(n));
    }

    NodeId row_gather(NodeId table, std::vector<std::int64_t> rows) {
        const auto& tv = val(table);
        if (tv.rank() != 2) shape_error("row_gather", tv);
        for (auto r : rows)
            if (r < 0 || r >= tv.extent(0))
                throw std::out_of_range("row_gather: row " + std::to_string(r) +
                                        " outside table " + extents_str(tv.extents()));
        Node n;
        n.op = OpKind::kRowGather;
        n.in = {table};
        n.value = Tensor<Real>(Extents{static_cast<std::int64_t>(rows.size()), tv.extent(1)});
        for (std::size_t t = 0; t < rows.size(); ++t)
            for (std::int64_t j = 0; j < tv.extent(1); ++j)
                n.value.at(static_cast<std::int64_t>(t), j) = tv.at(rows[t], j);
        n.imap = std::move(rows);
        return push(std::move(n));
    }

    // ---- reductions --------------------------------------------------------

    NodeId mean_rows(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 2) shape_error("mean_rows", av);
        Node n;
        n.op = OpKind::kMeanRows;
        n.in = {a};
        n.value = Tensor<Real>(Extents{av.extent(1)});
        for (std::int64_t i = 0; i < av.extent(0); ++i)
            for (std::int64_t j = 0; j < av.extent(1); ++j) n.value[j] += av.at(i, j);
        for (std::int64_t j = 0; j < av.extent(1); ++j)
            n.value[j] /= static_cast<Real>(av.extent(0));
        return push(std::move(n));
    }

    NodeId sum(NodeId a) {
        Node n;
        n.op = OpKind::kSum;
        n.in = {a};
        Real acc = 0;
        for (std::int64_t i = 0; i < val(a).size(); ++i) acc += val(a)[i];
        n.value = Tensor<Real>::scalar(acc);
        return push(std::move(n));
    }

    NodeId dot(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.rank() != 1 || bv.rank() != 1 || av.size() != bv.size()) shape_error("dot", av, bv);
        Node n;
        n.op = OpKind::kDot;
        n.in = {a, b};
        Real acc = 0;
        for (std::int64_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
        n.value = Tensor<Real>::scalar(acc);
        return push(std::move(n));
    }

    // ---- nonlinearities ----------------------------------------------------

    NodeId softmax(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 1) shape_error("softmax", av);
        Node n;
        n.op = OpKind::kSoftmax;
        n.in = {a};
        n.value = Tensor<Real>(av.extents());
        softmax_fill(av.data(), n.value.data(), av.size());
        return push(std::move(n));
    }

    NodeId log_softmax(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 1) shape_error("log_softmax", av);
        Node n;
        n.op = OpKind::kLogSoftmax;
        n.in = {a};
        n.value = Tensor<Real>(av.extents());
        Real mx = av[0];
        for (std::int64_t i = 1; i < av.size(); ++i) mx = std::max(mx, av[i]);
        Real lse = 0;
        for (std::int64_t i = 0; i < av.size(); ++i) lse += std::exp(av[i] - mx);
        lse = mx + std::log(lse);
        for (std::int64_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - lse;
        return push(std::move(n));
    }

    NodeId log_sum_exp(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 1) shape_error("log_sum_exp", av);
        Node n;
        n.op = OpKind::kLogSumExp;
        n.in = {a};
        Real mx = av[0];
        for (std::int64_t i = 1; i < av.size(); ++i) mx = std::max(mx, av[i]);
        Real s = 0;
        for (std::int64_t i = 0; i < av.size(); ++i) s += std::exp(av[i] - mx);
        n.value = Tensor<Real>::scalar(mx + std::log(s));
        return push(std::move(n));
    }

    /// Row-wise softmax over an l x l score matrix with a causal mask:
    /// row i attends to columns 0..i, later columns get exactly zero weight.
    NodeId softmax_rows_causal(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 2 || av.extent(0) != av.extent(1)) shape_error("softmax_rows_causal", av);
        Node n;
        n.op = OpKind::kSoftmaxRowsCausal;
        n.in = {a};
        n.value = Tensor<Real>(av.extents());
        const std::int64_t l = av.extent(0);
        for (std::int64_t i = 0; i < l; ++i)
            softmax_fill(av.data() + i * l, n.value.data() + i * l, i + 1);
        return push(std::move(n));
    }

    NodeId sigmoid(NodeId a) { return unary(OpKind::kSigmoid, a, [](Real x) {
        return x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                            : std::exp(x) / (Real(1) + std::exp(x));
    }); }

    NodeId relu(NodeId a) { return unary(OpKind::kRelu, a, [](Real x) { return x > Real(0) ? x : Real(0); }); }
    NodeId log_op(NodeId a) { return unary(OpKind::kLog, a, [](Real x) { return std::log(x); }); }
    NodeId exp_op(NodeId a) { return unary(OpKind::kExp, a, [](Real x) { return std::exp(x); }); }

    NodeId clamp(NodeId a, double lo, double hi) {
        Node n;
        n.op = OpKind::kClamp;
        n.in = {a};
        n.darg0 = lo;
        n.darg1 = hi;
        n.value = val(a);
        for (std::int64_t i = 0; i < n.value.size(); ++i)
            n.value[i] = static_cast<Real>(
                std::min(hi, std::max(lo, static_cast<double>(n.value[i]))));
        return push(std::move(n));
    }

    /// Per-row normalization to zero mean, unit variance. A constant row maps
    /// to the zero row (the 1e-12 variance guard keeps it finite).
    NodeId layer_norm_rows(NodeId a) {
        const auto& av = val(a);
        if (av.rank() != 2) shape_error("layer_norm_rows", av);
        Node n;
        n.op = OpKind::kLayerNormRows;
        n.in = {a};
        n.value = Tensor<Real>(av.extents());
        const std::int64_t rows = av.extent(0), cols = av.extent(1);
        for (std::int64_t i = 0; i < rows; ++i) {
            double mu = 0;
            for (std::int64_t j = 0; j < cols; ++j) mu += static_cast<double>(av.at(i, j));
            mu /= static_cast<double>(cols);
            double var = 0;
            for (std::int64_t j = 0; j < cols; ++j) {
                double d = static_cast<double>(av.at(i, j)) - mu;
                var += d * d;
            }
            var /= static_cast<double>(cols);
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            for (std::int64_t j = 0; j < cols; ++j)
                n.value.at(i, j) = static_cast<Real>((static_cast<double>(av.at(i, j)) - mu) * inv);
        }
        return push(std::move(n));
    }

    /// Inverted dropout. Active only when the graph is in training mode;
    /// otherwise an exact identity, so evaluation is deterministic.
    NodeId dropout(NodeId a, double p, bool enabled = true) {
        Node n;
        n.op = OpKind::kDropout;
        n.in = {a};
        n.darg0 = p;
        const bool active = enabled && training_ && p > 0.0;
        if (active && rng_ == nullptr)
            throw ConfigError("dropout in training mode requires a graph RNG");
        n.value = val(a);
        if (active) {
            n.mask = Tensor<Real>(n.value.extents());
            const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
            for (std::int64_t i = 0; i < n.value.size(); ++i) {
                n.mask[i] = rng_->uniform() >= p ? keep_scale : Real(0);
                n.value[i] *= n.mask[i];
            }
        }
        return push(std::move(n));
    }

    /// Cosine similarity with a 1e-8 norm guard in the denominator.
    NodeId cosine_sim(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.rank() != 1 || bv.rank() != 1 || av.size() != bv.size())
            shape_error("cosine_sim", av, bv);
        Node n;
        n.op = OpKind::kCosineSim;
        n.in = {a, b};
        double dotv = 0, na = 0, nb = 0;
        for (std::int64_t i = 0; i < av.size(); ++i) {
            dotv += static_cast<double>(av[i]) * static_cast<double>(bv[i]);
            na += static_cast<double>(av[i]) * static_cast<double>(av[i]);
            nb += static_cast<double>(bv[i]) * static_cast<double>(bv[i]);
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        const double ga = std::max(na, kCosineEps), gb = std::max(nb, kCosineEps);
        n.value = Tensor<Real>::scalar(static_cast<Real>(dotv / (ga * gb)));
        return push(std::move(n));
    }

    // ---- access ------------------------------------------------------------

    const Tensor<Real>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Real scalar(NodeId id) const { return value(id)[0]; }
    std::size_t node_count() const { return nodes_.size(); }

    const Tensor<Real>& grad(NodeId id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.size() == 0)
            throw std::logic_error("gradient not available; run backward() first");
        return n.grad;
    }

    // ---- reverse pass --------------------------------------------------------

    void backward(NodeId loss) {
        if (backward_done_)
            throw std::logic_error("backward() called twice on the same graph; rebuild the forward pass first");
        backward_done_ = true;
        Node& root = nodes_[static_cast<std::size_t>(loss)];
        if (root.value.size() != 1)
            throw ConfigError("backward: loss must be a scalar, got " + extents_str(root.value.extents()));
        ensure_grad(root);
        root.grad[0] = Real(1);

        for (std::int64_t i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || n.grad.size() == 0) continue;
            if (n.op == OpKind::kParam) {
                auto& slot = n.store->entry(n.param_id).grad;
                for (std::int64_t t = 0; t < slot.size(); ++t) slot[t] += n.grad[t];
                continue;
            }
            propagate(n);
        }
    }

private:
    struct Node {
        OpKind op = OpKind::kConstant;
        std::vector<NodeId> in;
        Tensor<Real> value;
        Tensor<Real> grad;
        Tensor<Real> mask;
        std::vector<std::int64_t> imap;
        double darg0 = 0.0, darg1 = 0.0;
        std::int64_t iarg = 0;
        bool needs_grad = false;
        ParamStore<Real>* store = nullptr;
        int param_id = -1;
    };

    static constexpr double kLayerNormEps = 1e-12;
    static constexpr double kCosineEps = 1e-8;

    bool training_;
    Rng* rng_;
    bool backward_done_ = false;
    std::vector<Node> nodes_;
    std::map<std::pair<const void*, int>, NodeId> param_nodes_;

    const Tensor<Real>& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    NodeId push(Node n) {
        if (n.op != OpKind::kParam && n.op != OpKind::kConstant)
            for (NodeId i : n.in)
                if (nodes_[static_cast<std::size_t>(i)].needs_grad) {
                    n.needs_grad = true;
                    break;
                }
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId binary(OpKind op, NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (!av.same_extents(bv)) shape_error("elementwise op", av, bv);
        Node n;
        n.op = op;
        n.in = {a, b};
        n.value = av;
        for (std::int64_t i = 0; i < av.size(); ++i) {
            switch (op) {
                case OpKind::kAdd: n.value[i] = av[i] + bv[i]; break;
                case OpKind::kSub: n.value[i] = av[i] - bv[i]; break;
                default: n.value[i] = av[i] * bv[i]; break;
            }
        }
        return push(std::move(n));
    }

    template <typename F>
    NodeId unary(OpKind op, NodeId a, F f) {
        Node n;
        n.op = op;
        n.in = {a};
        n.value = val(a);
        for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = f(n.value[i]);
        return push(std::move(n));
    }

    static void softmax_fill(const Real* x, Real* y, std::int64_t len) {
        Real mx = x[0];
        for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, x[i]);
        Real s = 0;
        for (std::int64_t i = 0; i < len; ++i) {
            y[i] = std::exp(x[i] - mx);
            s += y[i];
        }
        for (std::int64_t i = 0; i < len; ++i) y[i] /= s;
    }

    [[noreturn]] static void shape_error(const char* op, const Tensor<Real>& a) {
        throw ConfigError(std::string(op) + ": unsupported operand extents " + extents_str(a.extents()));
    }
    [[noreturn]] static void shape_error(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
        throw ConfigError(std::string(op) + ": incompatible extents " + extents_str(a.extents()) +
                          " and " + extents_str(b.extents()));
    }

    void ensure_grad(Node& n) {
        if (n.grad.size() == 0) n.grad = Tensor<Real>(n.value.extents());
    }

    Tensor<Real>* input_grad(NodeId id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad) return nullptr;
        ensure_grad(n);
        return &n.grad;
    }

    void propagate(Node& n) {
        const Tensor<Real>& g = n.grad;
        switch (n.op) {
            case OpKind::kConstant:
            case OpKind::kParam:
                break;

            case OpKind::kMatMul: {
                const auto& av = val(n.in[0]);
                const auto& bv = val(n.in[1]);
                Tensor<Real>* da = input_grad(n.in[0]);
                Tensor<Real>* db = input_grad(n.in[1]);
                const std::int64_t m = av.extent(0), k = av.extent(1);
                if (bv.rank() == 2) {
                    const std::int64_t c = bv.extent(1);
                    if (da)
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t p = 0; p < k; ++p) {
                                Real acc = 0;
                                const Real* grow = g.data() + i * c;
                                const Real* brow = bv.data() + p * c;
                                for (std::int64_t j = 0; j < c; ++j) acc += grow[j] * brow[j];
                                da->at(i, p) += acc;
                            }
                    if (db)
                        for (std::int64_t p = 0; p < k; ++p)
                            for (std::int64_t i = 0; i < m; ++i) {
                                const Real aip = av.at(i, p);
                                if (aip == Real(0)) continue;
                                const Real* grow = g.data() + i * c;
                                Real* brow = db->data() + p * c;
                                for (std::int64_t j = 0; j < c; ++j) brow[j] += aip * grow[j];
                            }
                } else {
                    if (da)
                        for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t p = 0; p < k; ++p) da->at(i, p) += g[i] * bv[p];
                    if (db)
                        for (std::int64_t p = 0; p < k; ++p) {
                            Real acc = 0;
                            for (std::int64_t i = 0; i < m; ++i) acc += av.at(i, p) * g[i];
                            (*db)[p] += acc;
                        }
                }
                break;
            }

            case OpKind::kStp: {
                const auto& av = val(n.in[0]);
                const auto& bv = val(n.in[1]);
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    Tensor<Real> d = stp_grad_left(g, bv, n.iarg);
                    for (std::int64_t i = 0; i < d.size(); ++i) (*da)[i] += d[i];
                }
                if (Tensor<Real>* db = input_grad(n.in[1])) {
                    Tensor<Real> d = stp_grad_right(av, g, n.iarg);
                    for (std::int64_t i = 0; i < d.size(); ++i) (*db)[i] += d[i];
                }
                break;
            }

            case OpKind::kTranspose: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < g.extent(0); ++i)
                        for (std::int64_t j = 0; j < g.extent(1); ++j) da->at(j, i) += g.at(i, j);
                break;
            }

            case OpKind::kReshape: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
                break;
            }

            case OpKind::kPermute: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::size_t t = 0; t < n.imap.size(); ++t)
                        (*da)[n.imap[t]] += g[static_cast<std::int64_t>(t)];
                break;
            }

            case OpKind::kAdd:
            case OpKind::kSub:
            case OpKind::kMul: {
                Tensor<Real>* da = input_grad(n.in[0]);
                Tensor<Real>* db = input_grad(n.in[1]);
                const auto& av = val(n.in[0]);
                const auto& bv = val(n.in[1]);
                for (std::int64_t i = 0; i < g.size(); ++i) {
                    if (da) (*da)[i] += n.op == OpKind::kMul ? g[i] * bv[i] : g[i];
                    if (db)
                        (*db)[i] += n.op == OpKind::kAdd ? g[i]
                                  : n.op == OpKind::kSub ? -g[i]
                                                         : g[i] * av[i];
                }
                break;
            }

            case OpKind::kScale: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < g.size(); ++i)
                        (*da)[i] += static_cast<Real>(n.darg0) * g[i];
                break;
            }

            case OpKind::kAddRowBroadcast: {
                Tensor<Real>* da = input_grad(n.in[0]);
                Tensor<Real>* db = input_grad(n.in[1]);
                for (std::int64_t i = 0; i < g.extent(0); ++i)
                    for (std::int64_t j = 0; j < g.extent(1); ++j) {
                        if (da) da->at(i, j) += g.at(i, j);
                        if (db) (*db)[j] += g.at(i, j);
                    }
                break;
            }

            case OpKind::kConcat: {
                std::int64_t off = 0;
                for (NodeId p : n.in) {
                    const std::int64_t len = val(p).size();
                    if (Tensor<Real>* dp = input_grad(p))
                        for (std::int64_t i = 0; i < len; ++i) (*dp)[i] += g[off + i];
                    off += len;
                }
                break;
            }

            case OpKind::kConcatCols: {
                std::int64_t off = 0;
                for (NodeId p : n.in) {
                    const std::int64_t cols = val(p).extent(1);
                    if (Tensor<Real>* dp = input_grad(p))
                        for (std::int64_t i = 0; i < g.extent(0); ++i)
                            for (std::int64_t j = 0; j < cols; ++j) dp->at(i, j) += g.at(i, off + j);
                    off += cols;
                }
                break;
            }

            case OpKind::kRowGather: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::size_t t = 0; t < n.imap.size(); ++t)
                        for (std::int64_t j = 0; j < g.extent(1); ++j)
                            da->at(n.imap[t], j) += g.at(static_cast<std::int64_t>(t), j);
                break;
            }

            case OpKind::kMeanRows: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const Real inv = Real(1) / static_cast<Real>(da->extent(0));
                    for (std::int64_t i = 0; i < da->extent(0); ++i)
                        for (std::int64_t j = 0; j < da->extent(1); ++j) da->at(i, j) += g[j] * inv;
                }
                break;
            }

            case OpKind::kSum: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < da->size(); ++i) (*da)[i] += g[0];
                break;
            }

            case OpKind::kDot: {
                const auto& av = val(n.in[0]);
                const auto& bv = val(n.in[1]);
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < av.size(); ++i) (*da)[i] += g[0] * bv[i];
                if (Tensor<Real>* db = input_grad(n.in[1]))
                    for (std::int64_t i = 0; i < bv.size(); ++i) (*db)[i] += g[0] * av[i];
                break;
            }

            case OpKind::kSoftmax: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    Real gy = 0;
                    for (std::int64_t i = 0; i < g.size(); ++i) gy += g[i] * n.value[i];
                    for (std::int64_t i = 0; i < g.size(); ++i)
                        (*da)[i] += n.value[i] * (g[i] - gy);
                }
                break;
            }

            case OpKind::kLogSoftmax: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    Real gs = 0;
                    for (std::int64_t i = 0; i < g.size(); ++i) gs += g[i];
                    for (std::int64_t i = 0; i < g.size(); ++i)
                        (*da)[i] += g[i] - std::exp(n.value[i]) * gs;
                }
                break;
            }

            case OpKind::kLogSumExp: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const auto& av = val(n.in[0]);
                    for (std::int64_t i = 0; i < av.size(); ++i)
                        (*da)[i] += g[0] * std::exp(av[i] - n.value[0]);
                }
                break;
            }

            case OpKind::kSoftmaxRowsCausal: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const std::int64_t l = n.value.extent(0);
                    for (std::int64_t i = 0; i < l; ++i) {
                        Real gy = 0;
                        for (std::int64_t j = 0; j <= i; ++j) gy += g.at(i, j) * n.value.at(i, j);
                        for (std::int64_t j = 0; j <= i; ++j)
                            da->at(i, j) += n.value.at(i, j) * (g.at(i, j) - gy);
                    }
                }
                break;
            }

            case OpKind::kSigmoid: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < g.size(); ++i)
                        (*da)[i] += g[i] * n.value[i] * (Real(1) - n.value[i]);
                break;
            }

            case OpKind::kRelu: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const auto& av = val(n.in[0]);
                    for (std::int64_t i = 0; i < g.size(); ++i)
                        if (av[i] > Real(0)) (*da)[i] += g[i];
                }
                break;
            }

            case OpKind::kLog: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const auto& av = val(n.in[0]);
                    for (std::int64_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] / av[i];
                }
                break;
            }

            case OpKind::kExp: {
                if (Tensor<Real>* da = input_grad(n.in[0]))
                    for (std::int64_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.value[i];
                break;
            }

            case OpKind::kClamp: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const auto& av = val(n.in[0]);
                    for (std::int64_t i = 0; i < g.size(); ++i) {
                        const double x = static_cast<double>(av[i]);
                        if (x > n.darg0 && x < n.darg1) (*da)[i] += g[i];
                    }
                }
                break;
            }

            case OpKind::kLayerNormRows: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    const auto& av = val(n.in[0]);
                    const std::int64_t rows = av.extent(0), cols = av.extent(1);
                    for (std::int64_t i = 0; i < rows; ++i) {
                        double mu = 0;
                        for (std::int64_t j = 0; j < cols; ++j) mu += static_cast<double>(av.at(i, j));
                        mu /= static_cast<double>(cols);
                        double var = 0;
                        for (std::int64_t j = 0; j < cols; ++j) {
                            double d = static_cast<double>(av.at(i, j)) - mu;
                            var += d * d;
                        }
                        var /= static_cast<double>(cols);
                        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                        double gmean = 0, gymean = 0;
                        for (std::int64_t j = 0; j < cols; ++j) {
                            gmean += static_cast<double>(g.at(i, j));
                            gymean += static_cast<double>(g.at(i, j)) * static_cast<double>(n.value.at(i, j));
                        }
                        gmean /= static_cast<double>(cols);
                        gymean /= static_cast<double>(cols);
                        for (std::int64_t j = 0; j < cols; ++j) {
                            const double y = static_cast<double>(n.value.at(i, j));
                            da->at(i, j) += static_cast<Real>(
                                inv * (static_cast<double>(g.at(i, j)) - gmean - y * gymean));
                        }
                    }
                }
                break;
            }

            case OpKind::kDropout: {
                if (Tensor<Real>* da = input_grad(n.in[0])) {
                    if (n.mask.size() == 0) {
                        for (std::int64_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
                    } else {
                        for (std::int64_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.mask[i];
                    }
                }
                break;
            }

            case OpKind::kCosineSim: {
                const auto& av = val(n.in[0]);
                const auto& bv = val(n.in[1]);
                double na = 0, nb = 0;
                for (std::int64_t i = 0; i < av.size(); ++i) {
                    na += static_cast<double>(av[i]) * static_cast<double>(av[i]);
                    nb += static_cast<double>(bv[i]) * static_cast<double>(bv[i]);
                }
                na = std::sqrt(na);
                nb = std::sqrt(nb);
                const double ga = std::max(na, kCosineEps), gb = std::max(nb, kCosineEps);
                const double c = static_cast<double>(n.value[0]);
                const double gscale = static_cast<double>(g[0]);
                Tensor<Real>* da = input_grad(n.in[0]);
                Tensor<Real>* db = input_grad(n.in[1]);
                for (std::int64_t i = 0; i < av.size(); ++i) {
                    if (da) {
                        double d = static_cast<double>(bv[i]) / (ga * gb);
                        if (na > kCosineEps) d -= c * static_cast<double>(av[i]) / (ga * ga);
                        (*da)[i] += static_cast<Real>(gscale * d);
                    }
                    if (db) {
                        double d = static_cast<double>(av[i]) / (ga * gb);
                        if (nb > kCosineEps) d -= c * static_cast<double>(bv[i]) / (gb * gb);
                        (*db)[i] += static_cast<Real>(gscale * d);
                    }
                }
                break;
            }
        }
    }
};

} // namespace ttrec
