#pragma once

#include <vector>

#include "ttrec/shape.hpp"
#include "ttrec/tensor.hpp"

namespace ttrec {

/// Core tensor extents for a compression plan.
///
/// Semi-tensor layout: core 0 is (I_1*J_1, R) with rows ordered i_1*J_1 + j_1;
/// middle cores are (R/n, I_k*J_k/n, R) with the middle extent ordered
/// i_k*(J_k/n) + g, where g indexes length-n groups of j_k; the last core is
/// (R/n, I_d*J_d/n) ordered the same way. Plain tensor-train cores are
/// (R_{k-1}, I_k*J_k, R_k) with boundary ranks 1. Dense mode is the single
/// (num_items, N) table.
inline std::vector<Extents> core_extents(const FactorizedShape& shape, EmbeddingMode mode) {
    shape.validate(mode == EmbeddingMode::kTtd);
    if (mode == EmbeddingMode::kDense) return {Extents{shape.num_items, shape.embed_dim}};

    const std::size_t d = shape.depth();
    const std::int64_t r = shape.rank;
    std::vector<Extents> out;
    if (mode == EmbeddingMode::kTtd) {
        out.push_back(Extents{1, shape.item_factors[0] * shape.dim_factors[0], r});
        for (std::size_t k = 1; k + 1 < d; ++k)
            out.push_back(Extents{r, shape.item_factors[k] * shape.dim_factors[k], r});
        out.push_back(Extents{r, shape.item_factors[d - 1] * shape.dim_factors[d - 1], 1});
    } else {
        const std::int64_t n = shape.stp_divisor;
        out.push_back(Extents{shape.item_factors[0] * shape.dim_factors[0], r});
        for (std::size_t k = 1; k + 1 < d; ++k)
            out.push_back(Extents{r / n, shape.item_factors[k] * shape.dim_factors[k] / n, r});
        out.push_back(Extents{r / n, shape.item_factors[d - 1] * shape.dim_factors[d - 1] / n});
    }
    return out;
}

/// The learnable replacement for a dense embedding table.
template <typename Real>
struct CoreSet {
    EmbeddingMode mode = EmbeddingMode::kDense;
    FactorizedShape shape;
    std::vector<Tensor<Real>> cores;

    std::int64_t parameter_count() const {
        std::int64_t total = 0;
        for (const auto& c : cores) total += c.size();
        return total;
    }
};

/// Deterministic U(-0.1, 0.1) initialization of every core entry.
template <typename Real>
CoreSet<Real> init_cores(const FactorizedShape& shape, EmbeddingMode mode, std::uint64_t seed) {
    CoreSet<Real> set;
    set.mode = mode;
    set.shape = shape;
    Rng rng(seed);
    for (auto& e : core_extents(shape, mode))
        set.cores.push_back(Tensor<Real>::uniform(std::move(e), rng, Real(-0.1), Real(0.1)));
    return set;
}

namespace detail {

template <typename Real>
void check_item(const FactorizedShape& shape, std::int64_t item) {
    if (item < 0 || item >= shape.num_items)
        throw std::out_of_range("item index " + std::to_string(item) + " outside [0, " +
                                std::to_string(shape.num_items) + ")");
}

} // namespace detail

/// Tensor-train row reconstruction: the chain of per-item core slices of
/// Eq.-style matrix products, flattened row-major over (j_1..j_d).
template <typename Real>
std::vector<Real> tt_lookup(const std::vector<const Tensor<Real>*>& cores,
                            const FactorizedShape& shape, std::int64_t item) {
    detail::check_item<Real>(shape, item);
    const auto idx = factorize_index(item, shape.item_factors);
    const std::size_t d = shape.depth();
    const std::int64_t r = shape.rank;

    const std::int64_t j0 = shape.dim_factors[0];
    std::vector<Real> acc(static_cast<std::size_t>(j0 * r));
    for (std::int64_t j = 0; j < j0; ++j)
        for (std::int64_t c = 0; c < r; ++c)
            acc[static_cast<std::size_t>(j * r + c)] = cores[0]->at(0, idx[0] * j0 + j, c);
    std::int64_t rows = j0;

    for (std::size_t k = 1; k + 1 < d; ++k) {
        const std::int64_t jk = shape.dim_factors[k];
        std::vector<Real> next(static_cast<std::size_t>(rows * jk * r));
        for (std::int64_t row = 0; row < rows; ++row)
            for (std::int64_t j = 0; j < jk; ++j)
                for (std::int64_t c2 = 0; c2 < r; ++c2) {
                    Real s = 0;
                    for (std::int64_t c1 = 0; c1 < r; ++c1)
                        s += acc[static_cast<std::size_t>(row * r + c1)] *
                             cores[k]->at(c1, idx[k] * jk + j, c2);
                    next[static_cast<std::size_t>((row * jk + j) * r + c2)] = s;
                }
        acc = std::move(next);
        rows *= jk;
    }

    const std::int64_t jd = shape.dim_factors[d - 1];
    std::vector<Real> out(static_cast<std::size_t>(rows * jd));
    for (std::int64_t row = 0; row < rows; ++row)
        for (std::int64_t j = 0; j < jd; ++j) {
            Real s = 0;
            for (std::int64_t c = 0; c < r; ++c)
                s += acc[static_cast<std::size_t>(row * r + c)] *
                     cores[d - 1]->at(c, idx[d - 1] * jd + j, 0);
            out[static_cast<std::size_t>(row * jd + j)] = s;
        }
    return out;
}

/// Semi-tensor row reconstruction. The running block L keeps extents
/// (J_1...J_k) x R; each step contracts the length-n column groups of L with
/// the item slice of the next core, so j_k splits as g*n + e with e selecting
/// the intra-group lane. With n = 1 this reduces exactly to tt_lookup.
template <typename Real>
std::vector<Real> sttd_lookup(const std::vector<const Tensor<Real>*>& cores,
                              const FactorizedShape& shape, std::int64_t item) {
    detail::check_item<Real>(shape, item);
    const auto idx = factorize_index(item, shape.item_factors);
    const std::size_t d = shape.depth();
    const std::int64_t r = shape.rank;
    const std::int64_t n = shape.stp_divisor;
    const std::int64_t rn = r / n;

    const std::int64_t j0 = shape.dim_factors[0];
    std::vector<Real> acc(static_cast<std::size_t>(j0 * r));
    for (std::int64_t j = 0; j < j0; ++j)
        for (std::int64_t c = 0; c < r; ++c)
            acc[static_cast<std::size_t>(j * r + c)] = cores[0]->at(idx[0] * j0 + j, c);
    std::int64_t rows = j0;

    for (std::size_t k = 1; k + 1 < d; ++k) {
        const std::int64_t jk = shape.dim_factors[k];
        const std::int64_t groups = jk / n;
        std::vector<Real> next(static_cast<std::size_t>(rows * jk * r));
        for (std::int64_t row = 0; row < rows; ++row)
            for (std::int64_t g = 0; g < groups; ++g)
                for (std::int64_t e = 0; e < n; ++e)
                    for (std::int64_t c2 = 0; c2 < r; ++c2) {
                        Real s = 0;
                        for (std::int64_t p = 0; p < rn; ++p)
                            s += acc[static_cast<std::size_t>(row * r + p * n + e)] *
                                 cores[k]->at(p, idx[k] * groups + g, c2);
                        next[static_cast<std::size_t>((row * jk + g * n + e) * r + c2)] = s;
                    }
        acc = std::move(next);
        rows *= jk;
    }

    const std::int64_t jd = shape.dim_factors[d - 1];
    const std::int64_t groups = jd / n;
    std::vector<Real> out(static_cast<std::size_t>(rows * jd));
    for (std::int64_t row = 0; row < rows; ++row)
        for (std::int64_t g = 0; g < groups; ++g)
            for (std::int64_t e = 0; e < n; ++e) {
                Real s = 0;
                for (std::int64_t p = 0; p < rn; ++p)
                    s += acc[static_cast<std::size_t>(row * r + p * n + e)] *
                         cores[d - 1]->at(p, idx[d - 1] * groups + g);
                out[static_cast<std::size_t>(row * jd + g * n + e)] = s;
            }
    return out;
}

template <typename Real>
std::vector<Real> core_lookup(const CoreSet<Real>& set, std::int64_t item) {
    std::vector<const Tensor<Real>*> view;
    for (const auto& c : set.cores) view.push_back(&c);
    switch (set.mode) {
        case EmbeddingMode::kDense: {
            detail::check_item<Real>(set.shape, item);
            std::vector<Real> out(static_cast<std::size_t>(set.shape.embed_dim));
            for (std::int64_t j = 0; j < set.shape.embed_dim; ++j) out[static_cast<std::size_t>(j)] =
                set.cores[0].at(item, j);
            return out;
        }
        case EmbeddingMode::kTtd: return tt_lookup(view, set.shape, item);
        default: return sttd_lookup(view, set.shape, item);
    }
}

namespace detail {

// Entrywise evaluation of the full core chain by explicit nested summation.
// This shares no slicing code with the lookup routines above, which is what
// makes it usable as an oracle against them.
template <typename Real>
double tt_entry(const CoreSet<Real>& set, const std::vector<std::int64_t>& ii,
                const std::vector<std::int64_t>& jj, std::size_t k, std::int64_t left) {
    const std::size_t d = set.shape.depth();
    const std::int64_t m = ii[k] * set.shape.dim_factors[k] + jj[k];
    if (k + 1 == d) return static_cast<double>(set.cores[k].at(left, m, 0));
    double s = 0;
    for (std::int64_t c = 0; c < set.shape.rank; ++c)
        s += static_cast<double>(set.cores[k].at(left, m, c)) * tt_entry(set, ii, jj, k + 1, c);
    return s;
}

template <typename Real>
double sttd_tail(const CoreSet<Real>& set, const std::vector<std::int64_t>& ii,
                 const std::vector<std::int64_t>& jj, std::size_t k, std::int64_t p) {
    const std::size_t d = set.shape.depth();
    const std::int64_t n = set.shape.stp_divisor;
    const std::int64_t m = ii[k] * (set.shape.dim_factors[k] / n) + jj[k] / n;
    if (k + 1 == d) return static_cast<double>(set.cores[k].at(p, m));
    const std::int64_t lane = jj[k + 1] % n;
    double s = 0;
    for (std::int64_t q = 0; q < set.shape.rank / n; ++q)
        s += static_cast<double>(set.cores[k].at(p, m, q * n + lane)) * sttd_tail(set, ii, jj, k + 1, q);
    return s;
}

} // namespace detail

/// Brute-force reconstruction of the whole table, row i equal to the
/// corresponding lookup by construction. Computed entry by entry through the
/// closed-form chain sums (an independent code path from the lookups).
template <typename Real>
Tensor<double> materialize_table(const CoreSet<Real>& set) {
    const auto& shape = set.shape;
    if (set.mode == EmbeddingMode::kDense) {
        Tensor<double> out(Extents{shape.num_items, shape.embed_dim});
        for (std::int64_t i = 0; i < shape.num_items; ++i)
            for (std::int64_t j = 0; j < shape.embed_dim; ++j)
                out.at(i, j) = static_cast<double>(set.cores[0].at(i, j));
        return out;
    }

    const std::size_t d = shape.depth();
    const std::int64_t n = shape.stp_divisor;
    Tensor<double> out(Extents{shape.num_items, shape.embed_dim});
    for (std::int64_t i = 0; i < shape.num_items; ++i) {
        const auto ii = factorize_index(i, shape.item_factors);
        for (std::int64_t j = 0; j < shape.embed_dim; ++j) {
            const auto jj = factorize_index(j, shape.dim_factors);
            double v = 0;
            if (set.mode == EmbeddingMode::kTtd) {
                const std::int64_t m0 = ii[0] * shape.dim_factors[0] + jj[0];
                for (std::int64_t c = 0; c < shape.rank; ++c)
                    v += static_cast<double>(set.cores[0].at(0, m0, c)) *
                         detail::tt_entry(set, ii, jj, 1, c);
            } else {
                const std::int64_t row0 = ii[0] * shape.dim_factors[0] + jj[0];
                const std::int64_t lane = jj[1] % n;
                for (std::int64_t p = 0; p < shape.rank / n; ++p)
                    v += static_cast<double>(set.cores[0].at(row0, p * n + lane)) *
                         detail::sttd_tail(set, ii, jj, 1, p);
            }
            out.at(i, j) = v;
        }
    }
    return out;
}

} // namespace ttrec
