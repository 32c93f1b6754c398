#pragma once

#include <functional>

#include "ttrec/session_types.hpp"

namespace ttrec {

/// Ranking quality in percent. MRR@K never exceeds P@K and both grow with K.
struct MetricTable {
    double p5 = 0.0;
    double mrr5 = 0.0;
    double p10 = 0.0;
    double mrr10 = 0.0;
    std::int64_t instances = 0;
};

/// Popularity-stratified view of P@5: the top 5% most-clicked items versus
/// the long tail. per-bucket precision plus each bucket's share of all hits.
struct LongTailReport {
    std::int64_t popular_items = 0;
    std::int64_t tail_items = 0;
    std::int64_t popular_instances = 0;
    std::int64_t tail_instances = 0;
    double popular_p5 = 0.0;     // hits with popular labels / popular instances
    double tail_p5 = 0.0;        // hits with tail labels / tail instances
    double popular_share = 0.0;  // popular hits / all instances (summing to overall P@5)
    double tail_share = 0.0;
};

/// Scores the full catalog for one session prefix.
using Scorer = std::function<std::vector<double>(const std::vector<std::int64_t>&)>;

/// 1-based rank of the label under descending score, ties broken by
/// ascending item id.
std::int64_t rank_of_label(const std::vector<double>& scores, std::int64_t label);

MetricTable evaluate(const Scorer& scorer, const std::vector<TrainInstance>& instances);

LongTailReport long_tail_report(const Scorer& scorer, const std::vector<TrainInstance>& instances,
                                const std::vector<std::int64_t>& popularity,
                                double popular_fraction = 0.05);

/// Median wall time, over the given repetitions, of scoring-and-ranking 100
/// sessions sequentially on one thread. Fewer than 100 sessions wrap around.
/// One untimed warm-up pass runs first.
double latency_benchmark(const Scorer& scorer, const std::vector<TrainInstance>& instances,
                         int repetitions);

} // namespace ttrec
