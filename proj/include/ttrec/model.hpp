#pragma once

#include <string>
#include <vector>

#include "ttrec/graph.hpp"
#include "ttrec/provider.hpp"

namespace ttrec {

struct ModelConfig {
    std::int64_t num_items = 0;
    std::int64_t embed_dim = 0;
    std::int64_t max_seq_len = 50;
    int num_layers = 1;
    int num_heads = 1;
    double dropout_p = 0.0;
    EmbeddingMode mode = EmbeddingMode::kDense;
    FactorizedShape shape; // used when mode is compressed

    void validate() const {
        if (num_items <= 0) throw ConfigError("model.num_items: must be positive");
        if (embed_dim <= 0) throw ConfigError("model.embed_dim: must be positive");
        if (max_seq_len < 1) throw ConfigError("model.max_seq_len: must be at least 1");
        if (num_layers < 1) throw ConfigError("model.num_layers: must be at least 1");
        if (num_heads < 1 || embed_dim % num_heads != 0)
            throw ConfigError("model.num_heads: embed_dim " + std::to_string(embed_dim) +
                              " must be divisible by num_heads " + std::to_string(num_heads));
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ConfigError("model.dropout_p: must lie in [0, 1)");
        if (mode != EmbeddingMode::kDense) {
            FactorizedShape s = shape;
            s.num_items = num_items;
            s.embed_dim = embed_dim;
            s.validate(mode == EmbeddingMode::kTtd);
        }
    }
};

/// Self-attention next-item model. The same architecture serves as the dense
/// teacher and the compressed student; only the embedding provider differs.
template <typename Real>
struct SeqModel {
    ModelConfig cfg;
    ParamStore<Real> store;
    EmbeddingProvider<Real> provider;

    static SeqModel create(ModelConfig cfg, std::uint64_t seed) {
        cfg.validate();
        SeqModel m;
        m.cfg = cfg;
        Rng rng(seed);

        if (cfg.mode == EmbeddingMode::kDense) {
            m.store.add("item.table",
                        Tensor<Real>::uniform(Extents{cfg.num_items, cfg.embed_dim}, rng,
                                              Real(-0.1), Real(0.1)));
            m.provider = EmbeddingProvider<Real>::dense("item.table", cfg.num_items, cfg.embed_dim);
        } else {
            FactorizedShape shape = cfg.shape;
            shape.num_items = cfg.num_items;
            shape.embed_dim = cfg.embed_dim;
            auto set = init_cores<Real>(shape, cfg.mode, rng.next_u64());
            for (std::size_t k = 0; k < set.cores.size(); ++k)
                m.store.add("item.core" + std::to_string(k), std::move(set.cores[k]));
            m.provider = EmbeddingProvider<Real>::factorized("item.core", shape, cfg.mode);
        }

        m.store.add_uniform("pos.table", Extents{cfg.max_seq_len, cfg.embed_dim}, rng);
        const std::int64_t head_dim = cfg.embed_dim / cfg.num_heads;
        for (int a = 0; a < cfg.num_layers; ++a) {
            const std::string la = "attn" + std::to_string(a);
            for (int h = 0; h < cfg.num_heads; ++h) {
                const std::string lh = la + ".h" + std::to_string(h);
                m.store.add_uniform(lh + ".wq", Extents{cfg.embed_dim, head_dim}, rng);
                m.store.add_uniform(lh + ".wk", Extents{cfg.embed_dim, head_dim}, rng);
                m.store.add_uniform(lh + ".wv", Extents{cfg.embed_dim, head_dim}, rng);
            }
            m.store.add_uniform(la + ".wo", Extents{cfg.embed_dim, cfg.embed_dim}, rng);
            const std::string lf = "ffn" + std::to_string(a);
            m.store.add_uniform(lf + ".w1", Extents{cfg.embed_dim, cfg.embed_dim}, rng);
            m.store.add_uniform(lf + ".b1", Extents{cfg.embed_dim}, rng);
            m.store.add_uniform(lf + ".w2", Extents{cfg.embed_dim, cfg.embed_dim}, rng);
            m.store.add_uniform(lf + ".b2", Extents{cfg.embed_dim}, rng);
        }
        m.store.add_uniform("read.w1", Extents{cfg.embed_dim, cfg.embed_dim}, rng);
        m.store.add_uniform("read.w2", Extents{cfg.embed_dim, cfg.embed_dim}, rng);
        m.store.add_uniform("read.c", Extents{cfg.embed_dim}, rng);
        m.store.add_uniform("read.f", Extents{cfg.embed_dim}, rng);
        return m;
    }

    /// Reassemble a model from checkpointed parameters.
    static SeqModel from_parts(ModelConfig cfg, ParamStore<Real> store) {
        cfg.validate();
        SeqModel m;
        m.cfg = cfg;
        m.store = std::move(store);
        if (cfg.mode == EmbeddingMode::kDense) {
            m.provider = EmbeddingProvider<Real>::dense("item.table", cfg.num_items, cfg.embed_dim);
        } else {
            FactorizedShape shape = cfg.shape;
            shape.num_items = cfg.num_items;
            shape.embed_dim = cfg.embed_dim;
            m.provider = EmbeddingProvider<Real>::factorized("item.core", shape, cfg.mode);
        }
        if (cfg.mode == EmbeddingMode::kDense) {
            if (!m.store.has("item.table"))
                throw ConfigError("checkpoint is missing the dense item table");
        } else {
            for (const auto& name : m.provider.core_names())
                if (!m.store.has(name)) throw ConfigError("checkpoint is missing core '" + name + "'");
        }
        if (!m.store.has("pos.table") || !m.store.has("read.f"))
            throw ConfigError("checkpoint is missing model parameters");
        return m;
    }

    std::vector<Real> lookup(std::int64_t item) const { return provider.lookup(store, item); }
    Tensor<Real> materialized_table() const { return provider.materialize_rows(store); }

    /// Keep the most recent max_seq_len items.
    std::vector<std::int64_t> truncate(const std::vector<std::int64_t>& items) const {
        if (static_cast<std::int64_t>(items.size()) <= cfg.max_seq_len) return items;
        return std::vector<std::int64_t>(items.end() - cfg.max_seq_len, items.end());
    }
};

/// Where a builder should read item embeddings from: a graph node (training,
/// gradients flow) or a precomputed dense view (evaluation).
template <typename Real>
struct TableHandle {
    NodeId node = -1;
    const Tensor<Real>* dense = nullptr;
};

namespace model_ops {

template <typename Real>
NodeId leaf(Graph<Real>& g, const SeqModel<Real>& m, const std::string& name, bool frozen) {
    return frozen ? g.frozen(m.store, name) : g.param(const_cast<ParamStore<Real>&>(m.store), name);
}

/// Whole-table node for the model (parameter node for dense, differentiable
/// core chain otherwise).
template <typename Real>
NodeId build_table(Graph<Real>& g, const SeqModel<Real>& m, bool frozen) {
    return m.provider.build_table_node(g, const_cast<ParamStore<Real>&>(m.store), frozen);
}

/// Item rows + position rows for one session (session already truncated and
/// nonempty, ids validated by the gather).
template <typename Real>
NodeId build_embedded(Graph<Real>& g, const SeqModel<Real>& m, const TableHandle<Real>& table,
                      const std::vector<std::int64_t>& items, bool frozen) {
    NodeId x;
    if (table.node >= 0) {
        x = g.row_gather(table.node, items);
    } else {
        const std::int64_t n = m.cfg.embed_dim;
        Tensor<Real> rows(Extents{static_cast<std::int64_t>(items.size()), n});
        for (std::size_t t = 0; t < items.size(); ++t) {
            if (items[t] < 0 || items[t] >= m.cfg.num_items)
                throw std::out_of_range("item id " + std::to_string(items[t]) + " outside catalog");
            for (std::int64_t j = 0; j < n; ++j)
                rows.at(static_cast<std::int64_t>(t), j) = table.dense->at(items[t], j);
        }
        x = g.constant(std::move(rows));
    }
    std::vector<std::int64_t> positions(items.size());
    for (std::size_t t = 0; t < items.size(); ++t) positions[t] = static_cast<std::int64_t>(t);
    NodeId pos = g.row_gather(leaf(g, m, "pos.table", frozen), positions);
    return g.add(x, pos);
}

/// One causal self-attention block followed by the position-wise
/// feed-forward. Residual, dropout and layer normalization wrap each
/// sub-layer.
template <typename Real>
NodeId build_block(Graph<Real>& g, const SeqModel<Real>& m, NodeId x, int layer, bool frozen) {
    const std::string la = "attn" + std::to_string(layer);
    const std::int64_t head_dim = m.cfg.embed_dim / m.cfg.num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<NodeId> heads;
    for (int h = 0; h < m.cfg.num_heads; ++h) {
        const std::string lh = la + ".h" + std::to_string(h);
        NodeId q = g.matmul(x, leaf(g, m, lh + ".wq", frozen));
        NodeId k = g.matmul(x, leaf(g, m, lh + ".wk", frozen));
        NodeId v = g.matmul(x, leaf(g, m, lh + ".wv", frozen));
        NodeId scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt);
        NodeId attn = g.softmax_rows_causal(scores);
        heads.push_back(g.matmul(attn, v));
    }
    NodeId merged = heads.size() == 1 ? heads[0] : g.concat_cols(heads);
    NodeId out = g.matmul(merged, leaf(g, m, la + ".wo", frozen));
    NodeId h1 = g.layer_norm_rows(g.add(x, g.dropout(out, m.cfg.dropout_p, !frozen)));

    const std::string lf = "ffn" + std::to_string(layer);
    NodeId inner = g.relu(g.add_row_broadcast(g.matmul(h1, leaf(g, m, lf + ".w1", frozen)),
                                              leaf(g, m, lf + ".b1", frozen)));
    NodeId ff = g.add_row_broadcast(g.matmul(inner, leaf(g, m, lf + ".w2", frozen)),
                                    leaf(g, m, lf + ".b2", frozen));
    return g.layer_norm_rows(g.add(h1, g.dropout(ff, m.cfg.dropout_p, !frozen)));
}

/// Soft-attention readout over the transformed rows: every position gets a
/// scalar coefficient f' sigmoid(W1 x* + W2 x_t + c) against the session
/// mean x*, and the representation is the coefficient-weighted row sum. The
/// coefficients are used as computed, without renormalization.
template <typename Real>
NodeId build_readout(Graph<Real>& g, const SeqModel<Real>& m, NodeId rows, bool frozen) {
    NodeId mean = g.mean_rows(rows);
    NodeId shift = g.add(g.matmul(leaf(g, m, "read.w1", frozen), mean), leaf(g, m, "read.c", frozen));
    NodeId per_row = g.matmul(rows, g.transpose(leaf(g, m, "read.w2", frozen)));
    NodeId gate = g.sigmoid(g.add_row_broadcast(per_row, shift));
    NodeId alpha = g.matmul(gate, leaf(g, m, "read.f", frozen));
    return g.matmul(g.transpose(rows), alpha);
}

/// Session representation theta for (possibly a subset of) a session.
template <typename Real>
NodeId build_theta(Graph<Real>& g, const SeqModel<Real>& m, const TableHandle<Real>& table,
                   const std::vector<std::int64_t>& items, bool frozen) {
    NodeId x = build_embedded(g, m, table, m.truncate(items), frozen);
    x = g.dropout(x, m.cfg.dropout_p, !frozen);
    for (int a = 0; a < m.cfg.num_layers; ++a) x = build_block(g, m, x, a, frozen);
    return build_readout(g, m, x, frozen);
}

/// Inner-product scores of theta against every item embedding, as a
/// full-catalog probability vector.
template <typename Real>
NodeId build_probs(Graph<Real>& g, NodeId table, NodeId theta) {
    return g.softmax(g.matmul(table, theta));
}

/// Cross entropy over the whole catalog: the positive term on the label plus
/// the (1 - y) log(1 - p) mass on every other item, probabilities clamped to
/// [1e-8, 1 - 1e-8] before the logs.
template <typename Real>
NodeId build_rec_loss(Graph<Real>& g, NodeId probs, std::int64_t label) {
    const std::int64_t v = g.value(probs).size();
    if (label < 0 || label >= v)
        throw std::out_of_range("label " + std::to_string(label) + " outside catalog of " +
                                std::to_string(v));
    Tensor<Real> one_hot(Extents{v});
    one_hot[label] = Real(1);
    Tensor<Real> ones(Extents{v}, Real(1));
    Tensor<Real> inv_hot(Extents{v}, Real(1));
    inv_hot[label] = Real(0);

    NodeId p = g.clamp(probs, 1e-8, 1.0 - 1e-8);
    NodeId pos = g.dot(g.log_op(p), g.constant(std::move(one_hot)));
    NodeId neg = g.dot(g.log_op(g.sub(g.constant(std::move(ones)), p)), g.constant(std::move(inv_hot)));
    return g.scale(g.add(pos, neg), -1.0);
}

} // namespace model_ops

/// Evaluation-time forward pass: reconstructs theta through an inference
/// graph (dropout off) and scores against a precomputed dense table view.
/// Returns raw inner-product scores; softmax is monotone so the ranking
/// matches the probability vector.
template <typename Real>
std::vector<double> score_session(const SeqModel<Real>& model, const Tensor<Real>& table,
                                  const std::vector<std::int64_t>& items) {
    Graph<Real> g(false);
    TableHandle<Real> th;
    th.dense = &table;
    NodeId theta = model_ops::build_theta(g, model, th, items, /*frozen=*/true);
    const Tensor<Real>& tv = g.value(theta);
    std::vector<double> scores(static_cast<std::size_t>(table.extent(0)));
    for (std::int64_t i = 0; i < table.extent(0); ++i) {
        double acc = 0;
        const Real* row = table.data() + i * table.extent(1);
        for (std::int64_t j = 0; j < table.extent(1); ++j)
            acc += static_cast<double>(row[j]) * static_cast<double>(tv[j]);
        scores[static_cast<std::size_t>(i)] = acc;
    }
    return scores;
}

} // namespace ttrec
