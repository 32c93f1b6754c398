#pragma once

#include <string>
#include <vector>

#include "ttrec/errors.hpp"

namespace ttrec {

enum class EmbeddingMode { kDense, kTtd, kSttd };

inline const char* mode_name(EmbeddingMode m) {
    switch (m) {
        case EmbeddingMode::kDense: return "dense";
        case EmbeddingMode::kTtd: return "ttd";
        default: return "sttd";
    }
}

inline EmbeddingMode mode_from_name(const std::string& s) {
    if (s == "dense") return EmbeddingMode::kDense;
    if (s == "ttd") return EmbeddingMode::kTtd;
    if (s == "sttd") return EmbeddingMode::kSttd;
    throw ConfigError("unknown embedding mode '" + s + "' (expected dense, ttd or sttd)");
}

/// The compression plan for an item embedding table: how the row count and
/// the embedding dimension factorize, the shared intermediate rank R, and
/// the semi-tensor block width n (n = 1 for plain tensor-train).
struct FactorizedShape {
    std::vector<std::int64_t> item_factors; // I_1..I_d
    std::vector<std::int64_t> dim_factors;  // J_1..J_d
    std::int64_t rank = 1;                  // R
    std::int64_t stp_divisor = 1;           // n
    std::int64_t num_items = 0;             // |V|
    std::int64_t embed_dim = 0;             // N

    std::size_t depth() const { return item_factors.size(); }

    std::int64_t padded_items() const {
        std::int64_t p = 1;
        for (auto f : item_factors) p *= f;
        return p;
    }

    /// Field-precise validation of every structural constraint.
    void validate(bool ttd_mode = false) const {
        if (item_factors.size() < 2 || item_factors.size() != dim_factors.size())
            throw ConfigError("shape.item_factors/dim_factors: need equal lengths of at least 2, got " +
                              std::to_string(item_factors.size()) + " and " +
                              std::to_string(dim_factors.size()));
        for (auto f : item_factors)
            if (f <= 0) throw ConfigError("shape.item_factors: factors must be positive");
        for (auto f : dim_factors)
            if (f <= 0) throw ConfigError("shape.dim_factors: factors must be positive");
        if (num_items <= 0) throw ConfigError("shape.num_items: must be positive");
        if (embed_dim <= 0) throw ConfigError("shape.embed_dim: must be positive");
        if (rank <= 0) throw ConfigError("shape.rank: must be positive");
        if (stp_divisor <= 0) throw ConfigError("shape.stp_divisor: must be positive");
        if (padded_items() < num_items)
            throw ConfigError("shape.item_factors: product " + std::to_string(padded_items()) +
                              " is smaller than num_items " + std::to_string(num_items));
        std::int64_t dim_prod = 1;
        for (auto f : dim_factors) dim_prod *= f;
        if (dim_prod != embed_dim)
            throw ConfigError("shape.dim_factors: product " + std::to_string(dim_prod) +
                              " must equal embed_dim " + std::to_string(embed_dim));
        if (ttd_mode && stp_divisor != 1)
            throw ConfigError("shape.stp_divisor: must be 1 in ttd mode, got " +
                              std::to_string(stp_divisor));
        if (rank % stp_divisor != 0)
            throw ConfigError("shape.rank: " + std::to_string(rank) + " is not divisible by stp_divisor " +
                              std::to_string(stp_divisor));
        for (std::size_t k = 1; k < dim_factors.size(); ++k)
            if (dim_factors[k] % stp_divisor != 0)
                throw ConfigError("shape.dim_factors[" + std::to_string(k) + "]: " +
                                  std::to_string(dim_factors[k]) + " is not divisible by stp_divisor " +
                                  std::to_string(stp_divisor));
    }
};

/// Mixed-radix decomposition of a row index, first factor most significant:
/// i = sum_k i_k * prod_{m>k} I_m.
inline std::vector<std::int64_t> factorize_index(std::int64_t i,
                                                 const std::vector<std::int64_t>& factors) {
    std::int64_t box = 1;
    for (auto f : factors) box *= f;
    if (i < 0 || i >= box)
        throw std::out_of_range("index " + std::to_string(i) + " outside [0, " + std::to_string(box) + ")");
    std::vector<std::int64_t> out(factors.size());
    for (std::size_t k = factors.size(); k-- > 0;) {
        out[k] = i % factors[k];
        i /= factors[k];
    }
    return out;
}

/// Parameter accounting for a compression plan. Two numerators are kept: the
/// exact table size |V| * N, and the padded grid size prod(I_k * J_k) that
/// the closed-form rate formula uses. They coincide whenever the item count
/// factorizes exactly.
struct CompressionReport {
    std::int64_t params_original = 0;    // |V| * N
    std::int64_t params_grid = 0;        // prod I_k J_k
    std::int64_t params_compressed = 0;
    double rate = 0.0;                   // params_original / params_compressed
    double rate_grid = 0.0;              // params_grid / params_compressed
    std::vector<std::int64_t> per_core_sizes;
};

inline CompressionReport compression_report(const FactorizedShape& shape, EmbeddingMode mode) {
    shape.validate(mode == EmbeddingMode::kTtd);
    const std::size_t d = shape.depth();
    const std::int64_t r = shape.rank;
    const std::int64_t n = mode == EmbeddingMode::kSttd ? shape.stp_divisor : 1;

    CompressionReport rep;
    rep.params_original = shape.num_items * shape.embed_dim;
    rep.params_grid = 1;
    for (std::size_t k = 0; k < d; ++k) rep.params_grid *= shape.item_factors[k] * shape.dim_factors[k];

    if (mode == EmbeddingMode::kDense) {
        rep.per_core_sizes = {rep.params_original};
    } else {
        rep.per_core_sizes.push_back(shape.item_factors[0] * shape.dim_factors[0] * r);
        for (std::size_t k = 1; k + 1 < d; ++k)
            rep.per_core_sizes.push_back(shape.item_factors[k] * shape.dim_factors[k] * r * r / (n * n));
        rep.per_core_sizes.push_back(shape.item_factors[d - 1] * shape.dim_factors[d - 1] * r / (n * n));
    }
    rep.params_compressed = 0;
    for (auto s : rep.per_core_sizes) rep.params_compressed += s;
    rep.rate = static_cast<double>(rep.params_original) / static_cast<double>(rep.params_compressed);
    rep.rate_grid = static_cast<double>(rep.params_grid) / static_cast<double>(rep.params_compressed);
    return rep;
}

} // namespace ttrec
