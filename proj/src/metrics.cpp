#include "ttrec/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ttrec/errors.hpp"
#include "ttrec/kd.hpp"

namespace ttrec {

std::int64_t rank_of_label(const std::vector<double>& scores, std::int64_t label) {
    const double ls = scores[static_cast<std::size_t>(label)];
    std::int64_t rank = 1;
    for (std::size_t v = 0; v < scores.size(); ++v) {
        if (scores[v] > ls) ++rank;
        else if (scores[v] == ls && static_cast<std::int64_t>(v) < label) ++rank;
    }
    return rank;
}

MetricTable evaluate(const Scorer& scorer, const std::vector<TrainInstance>& instances) {
    if (instances.empty()) throw ConfigError("evaluate: no test instances");
    MetricTable m;
    m.instances = static_cast<std::int64_t>(instances.size());
    for (const auto& inst : instances) {
        const auto scores = scorer(inst.prefix);
        const std::int64_t rank = rank_of_label(scores, inst.label);
        if (rank <= 5) {
            m.p5 += 1.0;
            m.mrr5 += 1.0 / static_cast<double>(rank);
        }
        if (rank <= 10) {
            m.p10 += 1.0;
            m.mrr10 += 1.0 / static_cast<double>(rank);
        }
    }
    const double scale = 100.0 / static_cast<double>(m.instances);
    m.p5 *= scale;
    m.mrr5 *= scale;
    m.p10 *= scale;
    m.mrr10 *= scale;
    return m;
}

LongTailReport long_tail_report(const Scorer& scorer, const std::vector<TrainInstance>& instances,
                                const std::vector<std::int64_t>& popularity,
                                double popular_fraction) {
    if (instances.empty()) throw ConfigError("long_tail_report: no test instances");
    // top popular_fraction of the catalog by clicks, same tie rule as the
    // hot/cold partition
    const auto part = partition_hot_cold(popularity, popular_fraction);

    LongTailReport r;
    r.popular_items = static_cast<std::int64_t>(part.hot.size());
    r.tail_items = static_cast<std::int64_t>(part.cold.size());
    std::int64_t popular_hits = 0, tail_hits = 0;
    for (const auto& inst : instances) {
        const bool popular = part.is_hot[static_cast<std::size_t>(inst.label)] != 0;
        (popular ? r.popular_instances : r.tail_instances) += 1;
        const auto scores = scorer(inst.prefix);
        if (rank_of_label(scores, inst.label) <= 5) (popular ? popular_hits : tail_hits) += 1;
    }
    const double total = static_cast<double>(instances.size());
    if (r.popular_instances > 0)
        r.popular_p5 = 100.0 * static_cast<double>(popular_hits) / static_cast<double>(r.popular_instances);
    if (r.tail_instances > 0)
        r.tail_p5 = 100.0 * static_cast<double>(tail_hits) / static_cast<double>(r.tail_instances);
    r.popular_share = 100.0 * static_cast<double>(popular_hits) / total;
    r.tail_share = 100.0 * static_cast<double>(tail_hits) / total;
    return r;
}

double latency_benchmark(const Scorer& scorer, const std::vector<TrainInstance>& instances,
                         int repetitions) {
    if (instances.empty()) throw ConfigError("latency_benchmark: no sessions");
    if (repetitions < 1) throw ConfigError("latency_benchmark: repetitions must be positive");
    using Clock = std::chrono::steady_clock;

    auto run_block = [&](std::size_t offset) {
        for (std::size_t t = 0; t < 100; ++t) {
            const auto& inst = instances[(offset + t) % instances.size()];
            const auto scores = scorer(inst.prefix);
            // top-10 extraction is part of the measured work
            std::vector<std::int64_t> top(std::min<std::size_t>(10, scores.size()));
            std::vector<std::int64_t> ids(scores.size());
            for (std::size_t v = 0; v < ids.size(); ++v) ids[v] = static_cast<std::int64_t>(v);
            std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top.size()),
                              ids.end(), [&](std::int64_t a, std::int64_t b) {
                                  if (scores[static_cast<std::size_t>(a)] !=
                                      scores[static_cast<std::size_t>(b)])
                                      return scores[static_cast<std::size_t>(a)] >
                                             scores[static_cast<std::size_t>(b)];
                                  return a < b;
                              });
        }
    };

    run_block(0); // warm-up, untimed
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repetitions));
    for (int rep = 0; rep < repetitions; ++rep) {
        const auto start = Clock::now();
        run_block(static_cast<std::size_t>(rep) * 100);
        times.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

} // namespace ttrec
