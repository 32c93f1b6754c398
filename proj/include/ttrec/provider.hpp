#pragma once

#include <string>
#include <vector>

#include "ttrec/core_set.hpp"
#include "ttrec/graph.hpp"
#include "ttrec/param_store.hpp"

namespace ttrec {

/// Item-embedding access for a model: either a dense table parameter or a
/// factorized core set living in the model's ParamStore. Provides both a
/// value-level per-item lookup (the deployment path) and a graph-level
/// whole-table reconstruction (the training path, differentiable through the
/// cores). Holds only names and shapes, so the owning model stays movable.
template <typename Real>
class EmbeddingProvider {
public:
    EmbeddingProvider() = default;

    static EmbeddingProvider dense(std::string table_name, std::int64_t num_items,
                                   std::int64_t embed_dim) {
        EmbeddingProvider p;
        p.mode_ = EmbeddingMode::kDense;
        p.table_name_ = std::move(table_name);
        p.num_items_ = num_items;
        p.embed_dim_ = embed_dim;
        return p;
    }

    static EmbeddingProvider factorized(std::string name_prefix, const FactorizedShape& shape,
                                        EmbeddingMode mode) {
        shape.validate(mode == EmbeddingMode::kTtd);
        EmbeddingProvider p;
        p.mode_ = mode;
        p.shape_ = shape;
        p.num_items_ = shape.num_items;
        p.embed_dim_ = shape.embed_dim;
        for (std::size_t k = 0; k < shape.depth(); ++k)
            p.core_names_.push_back(name_prefix + std::to_string(k));
        return p;
    }

    EmbeddingMode mode() const { return mode_; }
    std::int64_t num_items() const { return num_items_; }
    std::int64_t embed_dim() const { return embed_dim_; }
    const FactorizedShape& shape() const { return shape_; }
    const std::vector<std::string>& core_names() const { return core_names_; }

    /// Reconstruct one item row (for a dense table, just reads it).
    std::vector<Real> lookup(const ParamStore<Real>& store, std::int64_t item) const {
        if (mode_ == EmbeddingMode::kDense) {
            if (item < 0 || item >= num_items_)
                throw std::out_of_range("item index " + std::to_string(item) + " outside [0, " +
                                        std::to_string(num_items_) + ")");
            const auto& t = store.value(table_name_);
            std::vector<Real> out(static_cast<std::size_t>(embed_dim_));
            for (std::int64_t j = 0; j < embed_dim_; ++j) out[static_cast<std::size_t>(j)] = t.at(item, j);
            return out;
        }
        std::vector<const Tensor<Real>*> cores;
        for (const auto& n : core_names_) cores.push_back(&store.value(n));
        return mode_ == EmbeddingMode::kTtd ? tt_lookup(cores, shape_, item)
                                            : sttd_lookup(cores, shape_, item);
    }

    /// Full dense view built row by row through lookup(). Used for scoring at
    /// evaluation time; training reconstructs through the graph instead.
    Tensor<Real> materialize_rows(const ParamStore<Real>& store) const {
        Tensor<Real> out(Extents{num_items_, embed_dim_});
        for (std::int64_t i = 0; i < num_items_; ++i) {
            auto row = lookup(store, i);
            for (std::int64_t j = 0; j < embed_dim_; ++j)
                out.at(i, j) = row[static_cast<std::size_t>(j)];
        }
        return out;
    }

    /// Whole-table node: the semi-tensor chain over full (unsliced) cores,
    /// rearranged after every product so rows interleave (i_k, j_k) pairs,
    /// with a final rearrangement to (item, dim) that also drops padding
    /// rows. Gradients flow into every core.
    NodeId build_table_node(Graph<Real>& g, ParamStore<Real>& store, bool frozen = false) const {
        if (mode_ == EmbeddingMode::kDense)
            return frozen ? g.frozen(store, table_name_) : g.param(store, table_name_);

        const std::size_t d = shape_.depth();
        const std::int64_t r = shape_.rank;
        const std::int64_t n = mode_ == EmbeddingMode::kSttd ? shape_.stp_divisor : 1;
        auto leaf = [&](std::size_t k) {
            return frozen ? g.frozen(store, core_names_[k]) : g.param(store, core_names_[k]);
        };

        NodeId acc = leaf(0);
        if (mode_ == EmbeddingMode::kTtd)
            acc = g.reshape(acc, Extents{shape_.item_factors[0] * shape_.dim_factors[0], r});
        std::int64_t rows = shape_.item_factors[0] * shape_.dim_factors[0];

        for (std::size_t k = 1; k + 1 < d; ++k) {
            const std::int64_t nk = shape_.item_factors[k] * shape_.dim_factors[k];
            NodeId m = g.reshape(leaf(k), Extents{r / n, (nk / n) * r});
            NodeId t = g.stp_op(acc, m, n);
            acc = g.permute(t, middle_map(k, rows), Extents{rows * nk, r});
            rows *= nk;
        }

        const std::int64_t nd = shape_.item_factors[d - 1] * shape_.dim_factors[d - 1];
        NodeId m = g.reshape(leaf(d - 1), Extents{r / n, nd / n});
        NodeId t = g.stp_op(acc, m, n);
        return g.permute(t, final_map(), Extents{num_items_, embed_dim_});
    }

private:
    EmbeddingMode mode_ = EmbeddingMode::kDense;
    std::string table_name_;
    std::vector<std::string> core_names_;
    FactorizedShape shape_;
    std::int64_t num_items_ = 0;
    std::int64_t embed_dim_ = 0;

    // Rearranges the raw semi-tensor product output, whose columns are
    // ((i_k, g), r, e), into rows (prefix, i_k, g*n + e) by columns r.
    std::vector<std::int64_t> middle_map(std::size_t k, std::int64_t prefix_rows) const {
        const std::int64_t ik = shape_.item_factors[k], jk = shape_.dim_factors[k];
        const std::int64_t r = shape_.rank;
        const std::int64_t n = mode_ == EmbeddingMode::kSttd ? shape_.stp_divisor : 1;
        const std::int64_t groups = jk / n;
        const std::int64_t nk = ik * jk;
        std::vector<std::int64_t> map(static_cast<std::size_t>(prefix_rows * nk * r));
        std::size_t t = 0;
        for (std::int64_t pre = 0; pre < prefix_rows; ++pre)
            for (std::int64_t i = 0; i < ik; ++i)
                for (std::int64_t gg = 0; gg < groups; ++gg)
                    for (std::int64_t e = 0; e < n; ++e)
                        for (std::int64_t c = 0; c < r; ++c)
                            map[t++] = pre * (nk * r) + ((i * groups + gg) * r + c) * n + e;
        return map;
    }

    // Maps the fully interleaved (i_1, j_1, ..., i_d, j_d) layout onto the
    // (item, dim) table, skipping padded item rows beyond num_items.
    std::vector<std::int64_t> final_map() const {
        const std::size_t d = shape_.depth();
        const std::int64_t n = mode_ == EmbeddingMode::kSttd ? shape_.stp_divisor : 1;
        const std::int64_t nd = shape_.item_factors[d - 1] * shape_.dim_factors[d - 1];
        const std::int64_t jd = shape_.dim_factors[d - 1];
        std::vector<std::int64_t> map(static_cast<std::size_t>(num_items_ * embed_dim_));
        std::size_t t = 0;
        for (std::int64_t item = 0; item < num_items_; ++item) {
            const auto ii = factorize_index(item, shape_.item_factors);
            for (std::int64_t dim = 0; dim < embed_dim_; ++dim) {
                const auto jj = factorize_index(dim, shape_.dim_factors);
                std::int64_t row = 0;
                for (std::size_t k = 0; k + 1 < d; ++k)
                    row = (row * shape_.item_factors[k] + ii[k]) * shape_.dim_factors[k] + jj[k];
                const std::int64_t col = (ii[d - 1] * (jd / n) + jj[d - 1] / n) * n + jj[d - 1] % n;
                map[t++] = row * nd + col;
            }
        }
        return map;
    }
};

} // namespace ttrec
