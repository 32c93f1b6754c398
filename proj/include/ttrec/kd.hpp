#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ttrec/model.hpp"
#include "ttrec/session_types.hpp"

namespace ttrec {

/// Distillation coefficients and loop settings. beta1/beta2/beta3 weight the
/// contrastive, predictive and soft-target terms; the recommendation term
/// keeps weight 1 - beta3.
struct KDConfig {
    double beta1 = 0.1;
    double beta2 = 0.001;
    double beta3 = 0.8;
    double tau = 0.2;
    double hot_fraction = 0.2;
    int batch_size = 100;
    int epochs = 30;
    double learning_rate = 1e-3;

    void validate() const {
        if (beta1 < 0) throw ConfigError("kd.beta1: must be nonnegative");
        if (beta2 < 0) throw ConfigError("kd.beta2: must be nonnegative");
        if (beta3 < 0 || beta3 >= 1.0)
            throw ConfigError("kd.beta3: must lie in [0, 1) so the recommendation term keeps positive weight");
        if (tau <= 0) throw ConfigError("kd.tau: must be positive");
        if (hot_fraction <= 0 || hot_fraction >= 1)
            throw ConfigError("kd.hot_fraction: must lie in (0, 1)");
        if (batch_size < 1) throw ConfigError("kd.batch_size: must be at least 1");
        if (epochs < 0) throw ConfigError("kd.epochs: must be nonnegative");
        if (learning_rate <= 0) throw ConfigError("kd.learning_rate: must be positive");
    }
};

/// Popularity split of the catalog: the round(fraction * |V|) most popular
/// items are hot, ties broken by ascending id.
struct HotColdPartition {
    std::vector<std::uint8_t> is_hot;
    std::vector<std::int64_t> hot;
    std::vector<std::int64_t> cold;
    std::vector<std::int64_t> popularity;
};

inline HotColdPartition partition_hot_cold(const std::vector<std::int64_t>& popularity,
                                           double hot_fraction) {
    const std::int64_t v = static_cast<std::int64_t>(popularity.size());
    if (v == 0) throw ConfigError("partition_hot_cold: empty catalog");
    if (hot_fraction <= 0 || hot_fraction >= 1)
        throw ConfigError("kd.hot_fraction: must lie in (0, 1)");
    std::vector<std::int64_t> order(static_cast<std::size_t>(v));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        if (popularity[static_cast<std::size_t>(a)] != popularity[static_cast<std::size_t>(b)])
            return popularity[static_cast<std::size_t>(a)] > popularity[static_cast<std::size_t>(b)];
        return a < b;
    });
    const std::int64_t k = std::llround(hot_fraction * static_cast<double>(v));
    HotColdPartition p;
    p.popularity = popularity;
    p.is_hot.assign(static_cast<std::size_t>(v), 0);
    for (std::int64_t i = 0; i < v; ++i) {
        if (i < k) {
            p.is_hot[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
            p.hot.push_back(order[static_cast<std::size_t>(i)]);
        } else {
            p.cold.push_back(order[static_cast<std::size_t>(i)]);
        }
    }
    std::sort(p.hot.begin(), p.hot.end());
    std::sort(p.cold.begin(), p.cold.end());
    return p;
}

/// Order-preserving split of a session into its hot-only and cold-only
/// subsequences.
struct SessionSplit {
    std::vector<std::int64_t> hot;
    std::vector<std::int64_t> cold;
};

inline SessionSplit split_by_partition(const std::vector<std::int64_t>& items,
                                       const HotColdPartition& p) {
    SessionSplit s;
    for (auto it : items) {
        if (it < 0 || it >= static_cast<std::int64_t>(p.is_hot.size()))
            throw std::out_of_range("item id " + std::to_string(it) + " outside partition");
        (p.is_hot[static_cast<std::size_t>(it)] ? s.hot : s.cold).push_back(it);
    }
    return s;
}

namespace kd_ops {

/// Hot/cold sub-session representations; -1 marks an empty side.
struct SubReps {
    NodeId hot = -1;
    NodeId cold = -1;
};

template <typename Real>
SubReps build_sub_reps(Graph<Real>& g, const SeqModel<Real>& m, const TableHandle<Real>& table,
                       const SessionSplit& split, bool frozen) {
    SubReps r;
    if (!split.hot.empty()) r.hot = model_ops::build_theta(g, m, table, split.hot, frozen);
    if (!split.cold.empty()) r.cold = model_ops::build_theta(g, m, table, split.cold, frozen);
    return r;
}

/// Cross-model recombination: mixed sessions swap cold halves between
/// teacher and student; single-type sessions swap the same-type
/// representations across the two models.
template <typename Real>
std::pair<NodeId, NodeId> build_recombined(Graph<Real>& g, const SubReps& tea, const SubReps& stu) {
    const bool has_hot = tea.hot >= 0;
    const bool has_cold = tea.cold >= 0;
    if ((stu.hot >= 0) != has_hot || (stu.cold >= 0) != has_cold)
        throw ConfigError("recombine: teacher and student saw different session splits");
    if (!has_hot && !has_cold) throw ConfigError("recombine: both sides of the session are empty");
    if (has_hot && has_cold)
        return {g.concat({tea.hot, stu.cold}), g.concat({stu.hot, tea.cold})};
    if (has_hot) return {g.concat({tea.hot, stu.hot}), g.concat({stu.hot, tea.hot})};
    return {g.concat({tea.cold, stu.cold}), g.concat({stu.cold, tea.cold})};
}

/// In-batch contrastive objective over recombined pairs. For every session,
/// the projected teacher view is the anchor, its own student view the
/// positive, every other student view in the batch a negative:
///   sum_s [ logsumexp_j cos(u_s, v_j)/tau - cos(u_s, v_s)/tau ].
/// A batch of one contributes exactly zero.
template <typename Real>
NodeId build_contrastive_loss(Graph<Real>& g, const std::vector<std::pair<NodeId, NodeId>>& pairs,
                              NodeId w_t, NodeId w_s, double tau) {
    if (pairs.empty()) throw ConfigError("contrastive loss: empty batch");
    const std::size_t b = pairs.size();
    std::vector<NodeId> u(b), v(b);
    for (std::size_t s = 0; s < b; ++s) {
        u[s] = g.matmul(w_t, pairs[s].first);
        v[s] = g.matmul(w_s, pairs[s].second);
    }
    NodeId total = -1;
    for (std::size_t s = 0; s < b; ++s) {
        std::vector<NodeId> cos_row(b);
        for (std::size_t j = 0; j < b; ++j) cos_row[j] = g.cosine_sim(u[s], v[j]);
        NodeId lse = g.log_sum_exp(g.scale(g.concat(cos_row), 1.0 / tau));
        NodeId term = g.sub(lse, g.scale(cos_row[s], 1.0 / tau));
        total = total < 0 ? term : g.add(total, term);
    }
    return total;
}

/// Two full-catalog cross entropies, one per recombined view: the teacher
/// view scores against the teacher's item table, the student view against
/// the student's. Gradients reach the student through both views (the
/// teacher view carries the student's cold half); the frozen teacher's own
/// parameters see none.
template <typename Real>
NodeId build_predictive_loss(Graph<Real>& g, NodeId z_tea, NodeId z_stu, std::int64_t label,
                             NodeId table_tea, NodeId table_stu, NodeId w_tea, NodeId w_stu) {
    NodeId probs_tea = model_ops::build_probs<Real>(g, table_tea, g.matmul(w_tea, z_tea));
    NodeId probs_stu = model_ops::build_probs<Real>(g, table_stu, g.matmul(w_stu, z_stu));
    return g.add(model_ops::build_rec_loss<Real>(g, probs_tea, label),
                 model_ops::build_rec_loss<Real>(g, probs_stu, label));
}

/// KL divergence from the student's full-catalog distribution to the
/// teacher's, the teacher side entering as data. Both sides go through
/// log-softmax, so no clamping is needed.
template <typename Real>
NodeId build_soft_target_loss(Graph<Real>& g, NodeId theta_tea, NodeId theta_stu,
                              NodeId table_tea, NodeId table_stu) {
    NodeId logits_tea = g.matmul(table_tea, theta_tea);
    NodeId logits_stu = g.matmul(table_stu, theta_stu);
    NodeId p_tea = g.softmax(logits_tea);
    NodeId logp_tea = g.log_softmax(logits_tea);
    NodeId logp_stu = g.log_softmax(logits_stu);
    return g.dot(p_tea, g.sub(logp_tea, logp_stu));
}

} // namespace kd_ops

/// Which distillation tasks are active (ablation switches).
struct KdTasks {
    bool contrastive = true;
    bool predictive = true;
    bool soft_targets = true;
};

/// Component values of one joint-loss evaluation (batch means; the
/// contrastive term is the in-batch sum divided by the batch size).
struct JointLossParts {
    NodeId joint = -1;
    double rec = 0.0, cl = 0.0, pred = 0.0, soft = 0.0, total = 0.0;
};

/// The full training objective on one mini-batch:
///   (1 - beta3) L_rec + beta1 L_cl + beta2 L_pred + beta3 L_soft,
/// averaged per session. Terms with a zero coefficient (or disabled tasks)
/// are skipped entirely, so with all betas zero the graph node is the plain
/// recommendation loss.
template <typename Real>
JointLossParts build_joint_loss(Graph<Real>& g, const SeqModel<Real>& teacher,
                                const SeqModel<Real>& student,
                                const std::vector<TrainInstance>& batch,
                                const HotColdPartition& partition, const KDConfig& cfg,
                                const KdTasks& tasks = {}) {
    if (batch.empty()) throw ConfigError("joint loss: empty batch");
    const bool use_cl = tasks.contrastive && cfg.beta1 > 0;
    const bool use_pred = tasks.predictive && cfg.beta2 > 0;
    const bool use_soft = tasks.soft_targets && cfg.beta3 > 0;
    const bool need_teacher = use_cl || use_pred || use_soft;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    TableHandle<Real> stu_table;
    stu_table.node = model_ops::build_table(g, student, false);
    TableHandle<Real> tea_table;
    if (need_teacher) tea_table.node = model_ops::build_table(g, teacher, true);

    NodeId rec_sum = -1, pred_sum = -1, soft_sum = -1;
    std::vector<std::pair<NodeId, NodeId>> z_pairs;
    NodeId w_t = -1, w_s = -1, w_tea = -1, w_stu = -1;
    if (use_cl) {
        w_t = model_ops::leaf(g, student, "kd.wt", false);
        w_s = model_ops::leaf(g, student, "kd.ws", false);
    }
    if (use_pred) {
        w_tea = model_ops::leaf(g, student, "kd.wtea", false);
        w_stu = model_ops::leaf(g, student, "kd.wstu", false);
    }

    for (const auto& inst : batch) {
        NodeId theta_stu = model_ops::build_theta(g, student, stu_table, inst.prefix, false);
        NodeId probs_stu = model_ops::build_probs<Real>(g, stu_table.node, theta_stu);
        NodeId rec = model_ops::build_rec_loss<Real>(g, probs_stu, inst.label);
        rec_sum = rec_sum < 0 ? rec : g.add(rec_sum, rec);

        if (!need_teacher) continue;
        NodeId theta_tea = model_ops::build_theta(g, teacher, tea_table, inst.prefix, true);

        if (use_soft) {
            NodeId soft = kd_ops::build_soft_target_loss<Real>(g, theta_tea, theta_stu,
                                                               tea_table.node, stu_table.node);
            soft_sum = soft_sum < 0 ? soft : g.add(soft_sum, soft);
        }
        if (use_cl || use_pred) {
            SessionSplit split = split_by_partition(student.truncate(inst.prefix), partition);
            auto tea_reps = kd_ops::build_sub_reps(g, teacher, tea_table, split, true);
            auto stu_reps = kd_ops::build_sub_reps(g, student, stu_table, split, false);
            auto [z_tea, z_stu] = kd_ops::build_recombined(g, tea_reps, stu_reps);
            if (use_cl) z_pairs.emplace_back(z_tea, z_stu);
            if (use_pred) {
                NodeId pred = kd_ops::build_predictive_loss<Real>(
                    g, z_tea, z_stu, inst.label, tea_table.node, stu_table.node, w_tea, w_stu);
                pred_sum = pred_sum < 0 ? pred : g.add(pred_sum, pred);
            }
        }
    }

    JointLossParts parts;
    NodeId rec_mean = batch.size() == 1 ? rec_sum : g.scale(rec_sum, inv_b);
    parts.rec = static_cast<double>(g.scalar(rec_mean));

    NodeId joint = cfg.beta3 > 0 ? g.scale(rec_mean, 1.0 - cfg.beta3) : rec_mean;
    if (use_cl) {
        NodeId cl = kd_ops::build_contrastive_loss<Real>(g, z_pairs, w_t, w_s, cfg.tau);
        NodeId cl_mean = batch.size() == 1 ? cl : g.scale(cl, inv_b);
        parts.cl = static_cast<double>(g.scalar(cl_mean));
        joint = g.add(joint, g.scale(cl_mean, cfg.beta1));
    }
    if (use_pred) {
        NodeId pred_mean = batch.size() == 1 ? pred_sum : g.scale(pred_sum, inv_b);
        parts.pred = static_cast<double>(g.scalar(pred_mean));
        joint = g.add(joint, g.scale(pred_mean, cfg.beta2));
    }
    if (use_soft) {
        NodeId soft_mean = batch.size() == 1 ? soft_sum : g.scale(soft_sum, inv_b);
        parts.soft = static_cast<double>(g.scalar(soft_mean));
        joint = g.add(joint, g.scale(soft_mean, cfg.beta3));
    }
    parts.joint = joint;
    parts.total = static_cast<double>(g.scalar(joint));
    return parts;
}

/// Projection heads used only during distillation (contrastive and
/// predictive tasks map the 2N recombined views back to N).
template <typename Real>
void ensure_kd_heads(ParamStore<Real>& store, std::int64_t embed_dim, Rng& rng) {
    if (!store.has("kd.wt")) store.add_uniform("kd.wt", Extents{embed_dim, 2 * embed_dim}, rng);
    if (!store.has("kd.ws")) store.add_uniform("kd.ws", Extents{embed_dim, 2 * embed_dim}, rng);
    if (!store.has("kd.wtea")) store.add_uniform("kd.wtea", Extents{embed_dim, 2 * embed_dim}, rng);
    if (!store.has("kd.wstu")) store.add_uniform("kd.wstu", Extents{embed_dim, 2 * embed_dim}, rng);
}

} // namespace ttrec
