#pragma once

#include <chrono>
#include <memory>
#include <ostream>

#include "ttrec/config.hpp"
#include "ttrec/data.hpp"
#include "ttrec/kd.hpp"
#include "ttrec/metrics.hpp"
#include "ttrec/model.hpp"

namespace ttrec {

struct EpochRecord {
    int epoch = 0;
    double l_rec = 0, l_cl = 0, l_pred = 0, l_soft = 0, total = 0;
    double val_p5 = -1; // -1 when no validation data
    double wall_s = 0;
};

struct TrainRunLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_p5 = -1;
    bool diverged = false;
};

inline void write_log_header(std::ostream& os) {
    os << "epoch\tl_rec\tl_cl\tl_pred\tl_soft\ttotal\tval_p5\twall_s\n";
}

inline void write_log_record(std::ostream& os, const EpochRecord& r) {
    os << r.epoch << '\t' << r.l_rec << '\t' << r.l_cl << '\t' << r.l_pred << '\t' << r.l_soft
       << '\t' << r.total << '\t' << r.val_p5 << '\t' << r.wall_s << '\n';
    os.flush();
}

/// Full-catalog scorer over a frozen view of the model (table materialized
/// once at construction).
inline Scorer make_scorer(const SeqModel<float>& model) {
    auto table = std::make_shared<Tensor<float>>(model.materialized_table());
    const SeqModel<float>* m = &model;
    return [m, table](const std::vector<std::int64_t>& prefix) {
        return score_session(*m, *table, prefix);
    };
}

namespace train_detail {

inline std::vector<Tensor<float>> snapshot_values(const ParamStore<float>& store) {
    std::vector<Tensor<float>> out;
    for (std::size_t i = 0; i < store.count(); ++i) out.push_back(store.entry(static_cast<int>(i)).value);
    return out;
}

inline void restore_values(ParamStore<float>& store, const std::vector<Tensor<float>>& snap) {
    for (std::size_t i = 0; i < snap.size(); ++i) store.entry(static_cast<int>(i)).value = snap[i];
}

inline double capped_val_p5(const SeqModel<float>& model,
                            const std::vector<TrainInstance>& instances, std::int64_t cap) {
    if (instances.empty()) return -1;
    const auto scorer = make_scorer(model);
    if (static_cast<std::int64_t>(instances.size()) <= cap) return evaluate(scorer, instances).p5;
    std::vector<TrainInstance> subset(instances.begin(), instances.begin() + cap);
    return evaluate(scorer, subset).p5;
}

} // namespace train_detail

/// Teacher training: plain cross-entropy, Adam, early stopping on validation
/// P@5 with the configured patience. The best-validation parameters are
/// restored before returning. A non-finite batch loss stops the run with the
/// last good parameters in place and the diverged flag set.
inline TrainRunLog train_teacher(SeqModel<float>& model, const DatasetBundle& data,
                                 const TrainConfig& tc, std::ostream* sink = nullptr) {
    tc.validate();
    if (data.train_instances.empty()) throw ConfigError("train: no training instances in bundle");
    Rng rng(tc.seed);
    TrainRunLog log;
    if (sink) write_log_header(*sink);

    std::vector<Tensor<float>> best = train_detail::snapshot_values(model.store);
    int stale = 0;

    std::vector<std::size_t> order(data.train_instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double loss_sum = 0;
        std::int64_t seen = 0;
        bool bad = false;
        for (std::size_t start = 0; start < order.size() && !bad; start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            Graph<float> g(true, &rng);
            TableHandle<float> table;
            table.node = model_ops::build_table(g, model, false);
            NodeId batch_sum = -1;
            for (std::size_t t = start; t < stop; ++t) {
                const auto& inst = data.train_instances[order[t]];
                NodeId theta = model_ops::build_theta(g, model, table, inst.prefix, false);
                NodeId probs = model_ops::build_probs<float>(g, table.node, theta);
                NodeId rec = model_ops::build_rec_loss<float>(g, probs, inst.label);
                batch_sum = batch_sum < 0 ? rec : g.add(batch_sum, rec);
            }
            NodeId batch_loss = g.scale(batch_sum, 1.0 / static_cast<double>(stop - start));
            const double lv = static_cast<double>(g.scalar(batch_loss));
            if (!std::isfinite(lv)) {
                bad = true;
                break;
            }
            loss_sum += lv * static_cast<double>(stop - start);
            seen += static_cast<std::int64_t>(stop - start);
            model.store.zero_grads();
            g.backward(batch_loss);
            try {
                model.store.adam_step(tc.lr, 0.9, 0.999, 1e-8, tc.l2);
            } catch (const NumericalError&) {
                bad = true;
            }
        }
        if (bad) {
            train_detail::restore_values(model.store, best);
            log.diverged = true;
            break;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.l_rec = loss_sum / static_cast<double>(seen);
        rec.total = rec.l_rec;
        rec.val_p5 = train_detail::capped_val_p5(model, data.val_instances, tc.val_cap);
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(rec);
        if (sink) write_log_record(*sink, rec);

        if (rec.val_p5 > log.best_val_p5) {
            log.best_val_p5 = rec.val_p5;
            log.best_epoch = epoch;
            best = train_detail::snapshot_values(model.store);
            stale = 0;
        } else if (rec.val_p5 >= 0 && ++stale >= tc.patience) {
            break;
        }
    }
    if (log.best_epoch > 0) train_detail::restore_values(model.store, best);
    return log;
}

/// Distillation: optimizes the joint objective over the student while the
/// teacher contributes frozen forward passes only. Runs the configured
/// number of epochs (no early stopping), logging every loss component.
inline TrainRunLog distill(SeqModel<float>& student, const SeqModel<float>& teacher,
                           const DatasetBundle& data, const KDConfig& kd, const TrainConfig& tc,
                           const KdTasks& tasks = {}, std::ostream* sink = nullptr) {
    kd.validate();
    tc.validate();
    if (teacher.cfg.embed_dim != student.cfg.embed_dim)
        throw ConfigError("distill: teacher embed_dim " + std::to_string(teacher.cfg.embed_dim) +
                          " does not match student embed_dim " + std::to_string(student.cfg.embed_dim));
    if (teacher.cfg.num_items != student.cfg.num_items)
        throw ConfigError("distill: teacher and student catalog sizes differ");
    if (data.train_instances.empty()) throw ConfigError("distill: no training instances in bundle");

    Rng rng(tc.seed);
    ensure_kd_heads(student.store, student.cfg.embed_dim, rng);
    const auto partition = partition_hot_cold(data.popularity, kd.hot_fraction);

    TrainRunLog log;
    if (sink) write_log_header(*sink);
    std::vector<std::size_t> order(data.train_instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor<float>> last_good = train_detail::snapshot_values(student.store);

    for (int epoch = 1; epoch <= kd.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double rec_sum = 0, cl_sum = 0, pred_sum = 0, soft_sum = 0, total_sum = 0;
        std::int64_t seen = 0;
        bool bad = false;
        for (std::size_t start = 0; start < order.size() && !bad; start += static_cast<std::size_t>(kd.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(kd.batch_size));
            std::vector<TrainInstance> batch;
            batch.reserve(stop - start);
            for (std::size_t t = start; t < stop; ++t) batch.push_back(data.train_instances[order[t]]);

            Graph<float> g(true, &rng);
            const auto parts = build_joint_loss<float>(g, teacher, student, batch, partition, kd, tasks);
            if (!std::isfinite(parts.total)) {
                bad = true;
                break;
            }
            const double w = static_cast<double>(batch.size());
            rec_sum += parts.rec * w;
            cl_sum += parts.cl * w;
            pred_sum += parts.pred * w;
            soft_sum += parts.soft * w;
            total_sum += parts.total * w;
            seen += static_cast<std::int64_t>(batch.size());

            student.store.zero_grads();
            g.backward(parts.joint);
            try {
                student.store.adam_step(kd.learning_rate, 0.9, 0.999, 1e-8, tc.l2);
            } catch (const NumericalError&) {
                bad = true;
            }
        }
        if (bad) {
            train_detail::restore_values(student.store, last_good);
            log.diverged = true;
            break;
        }
        last_good = train_detail::snapshot_values(student.store);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.l_rec = rec_sum / static_cast<double>(seen);
        rec.l_cl = cl_sum / static_cast<double>(seen);
        rec.l_pred = pred_sum / static_cast<double>(seen);
        rec.l_soft = soft_sum / static_cast<double>(seen);
        rec.total = total_sum / static_cast<double>(seen);
        rec.val_p5 = train_detail::capped_val_p5(student, data.val_instances, tc.val_cap);
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(rec);
        if (sink) write_log_record(*sink, rec);
        if (rec.val_p5 > log.best_val_p5) {
            log.best_val_p5 = rec.val_p5;
            log.best_epoch = epoch;
        }
    }
    return log;
}

} // namespace ttrec
