#pragma once

#include <vector>

#include "ttrec/shape.hpp"

namespace ttrec {

/// Built-in student compression plans for the two benchmark catalogs, with
/// the rounded compression-rate reference column they are checked against.
struct ReferenceStudentConfig {
    const char* dataset;
    const char* label;
    std::vector<std::int64_t> item_factors;
    std::vector<std::int64_t> dim_factors;
    std::int64_t rank;
    std::int64_t stp_divisor;
    std::int64_t num_items;
    std::int64_t embed_dim;
    int reference_cr;
    // The reference column lists a value that disagrees with rounding the
    // exact ratio to the nearest integer (truncated instead). Flagged so
    // checks can assert the exact ratio for these two entries.
    bool rounding_anomaly = false;

    FactorizedShape shape() const {
        FactorizedShape s;
        s.item_factors = item_factors;
        s.dim_factors = dim_factors;
        s.rank = rank;
        s.stp_divisor = stp_divisor;
        s.num_items = num_items;
        s.embed_dim = embed_dim;
        return s;
    }
};

inline const std::vector<ReferenceStudentConfig>& reference_student_configs() {
    static const std::vector<ReferenceStudentConfig> configs = {
        // tmall catalog: 40728 items, 128 dims
        {"tmall", "stu1-r60-n2", {169, 241}, {16, 8}, 60, 2, 40728, 128, 27},
        {"tmall", "stu2-r60-n2", {169, 241}, {32, 4}, 60, 2, 40728, 128, 15},
        {"tmall", "stu3-r60-n2", {13, 13, 241}, {8, 4, 4}, 60, 2, 40728, 128, 77},
        {"tmall", "stu4-r60-n2", {13, 13, 241}, {8, 8, 2}, 60, 2, 40728, 128, 49},
        {"tmall", "stu1-r20-n2", {169, 241}, {16, 8}, 20, 2, 40728, 128, 82},
        {"tmall", "stu1-r40-n2", {169, 241}, {16, 8}, 40, 2, 40728, 128, 41},
        {"tmall", "stu3-r80-n2", {13, 13, 241}, {8, 4, 4}, 80, 2, 40728, 128, 47},
        {"tmall", "stu3-r100-n2", {13, 13, 241}, {8, 4, 4}, 100, 2, 40728, 128, 32},
        {"tmall", "stu1-r40-n4", {169, 241}, {16, 8}, 40, 4, 40728, 128, 46},
        {"tmall", "stu1-r60-n4", {169, 241}, {16, 8}, 60, 4, 40728, 128, 31},
        // retailrocket catalog: 36968 items, 256 dims
        {"retailrocket", "stu1-r100-n2", {117, 316}, {16, 16}, 100, 2, 36968, 256, 30},
        {"retailrocket", "stu2-r100-n2", {117, 316}, {32, 8}, 100, 2, 36968, 256, 22},
        {"retailrocket", "stu3-r100-n2", {18, 26, 79}, {8, 8, 4}, 100, 2, 36968, 256, 17},
        {"retailrocket", "stu4-r100-n2", {18, 26, 79}, {16, 4, 4}, 100, 2, 36968, 256, 32},
        {"retailrocket", "stu1-r40-n2", {117, 316}, {16, 16}, 40, 2, 36968, 256, 75},
        {"retailrocket", "stu1-r60-n2", {117, 316}, {16, 16}, 60, 2, 36968, 256, 50},
        {"retailrocket", "stu1-r80-n2", {117, 316}, {16, 16}, 80, 2, 36968, 256, 38},
        {"retailrocket", "stu3-r40-n2", {18, 26, 79}, {8, 8, 4}, 40, 2, 36968, 256, 102, true},
        {"retailrocket", "stu3-r60-n2", {18, 26, 79}, {8, 8, 4}, 60, 2, 36968, 256, 47},
        {"retailrocket", "stu3-r80-n2", {18, 26, 79}, {8, 8, 4}, 80, 2, 36968, 256, 26, true},
        {"retailrocket", "stu1-r40-n4", {117, 316}, {16, 16}, 40, 4, 36968, 256, 108},
        {"retailrocket", "stu1-r60-n4", {117, 316}, {16, 16}, 60, 4, 36968, 256, 72},
    };
    return configs;
}

/// The size-analytics example: 20000 items as 10x10x25x8, 128 dims as
/// 4x4x4x2, n = 2, with the expected core-set sizes and rounded rates for
/// plain and semi-tensor decompositions at three ranks.
struct ReferenceSizeRow {
    std::int64_t rank;
    std::int64_t ttd_size;
    int ttd_rate;
    std::int64_t sttd_size;
    int sttd_rate;
};

inline FactorizedShape reference_size_shape(std::int64_t rank, std::int64_t n) {
    FactorizedShape s;
    s.item_factors = {10, 10, 25, 8};
    s.dim_factors = {4, 4, 4, 2};
    s.rank = rank;
    s.stp_divisor = n;
    s.num_items = 20000;
    s.embed_dim = 128;
    return s;
}

inline const std::vector<ReferenceSizeRow>& reference_size_rows() {
    static const std::vector<ReferenceSizeRow> rows = {
        {4, 2464, 1039, 736, 3478},
        {8, 9408, 272, 2592, 988},
        {16, 36736, 70, 9664, 265},
    };
    return rows;
}

} // namespace ttrec
