#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "sdcl/data.hpp"
#include "sdcl/distill.hpp"
#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/nn.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

/// Knobs of the continual segmentation loop. alpha weighs output
/// distillation, beta the per-layer subspace drift penalty.
struct CSSConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double alpha = 10.0;
    double beta = 0.01;
    std::size_t batch = 4;
    std::size_t epochs_per_task = 1;
    SDConfig sd;
    std::uint64_t seed = 0;
    bool bg_inclusive = true;

    void validate() const {
        if (lr <= 0.0) throw ContractViolation("CSSConfig: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ContractViolation("CSSConfig: momentum must lie in [0, 1)");
        if (alpha < 0.0 || beta < 0.0)
            throw ContractViolation("CSSConfig: alpha and beta must be nonnegative");
        if (batch < 1) throw ContractViolation("CSSConfig: batch must be >= 1");
        if (epochs_per_task < 1)
            throw ContractViolation("CSSConfig: epochs_per_task must be >= 1");
        sd.validate();
    }
};

/// Square pixel counts over background + every class seen so far; rows are
/// ground truth, columns predictions.
struct ConfusionMatrix {
    std::size_t n = 0;
    std::vector<std::uint64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes) : n(classes), counts(classes * classes, 0) {}

    std::uint64_t& at(std::size_t truth, std::size_t pred) {
        if (truth >= n || pred >= n)
            throw DimensionError("ConfusionMatrix: index out of range");
        return counts[truth * n + pred];
    }
    std::uint64_t at(std::size_t truth, std::size_t pred) const {
        if (truth >= n || pred >= n)
            throw DimensionError("ConfusionMatrix: index out of range");
        return counts[truth * n + pred];
    }
    void add(std::size_t truth, std::size_t pred) { ++at(truth, pred); }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t c : counts) t += c;
        return t;
    }
};

struct IouReport {
    std::map<int, double> per_class; // only classes that entered the mean
    double mean = 0.0;
};

/// Intersection-over-union per class: TP / (TP + FP + FN), in exact integer
/// arithmetic until the final division. Classes never predicted and never
/// present carry no evidence and stay out of the mean.
inline IouReport iou(const ConfusionMatrix& conf, const std::set<int>& class_subset) {
    IouReport rep;
    double sum = 0.0;
    for (int c : class_subset) {
        if (c < 0 || static_cast<std::size_t>(c) >= conf.n)
            throw ContractViolation("iou: class " + std::to_string(c) +
                                    " outside the confusion matrix");
        const std::size_t ci = static_cast<std::size_t>(c);
        const std::uint64_t tp = conf.at(ci, ci);
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < conf.n; ++j) {
            row += conf.at(ci, j);
            col += conf.at(j, ci);
        }
        const std::uint64_t denom = row + col - tp; // TP + FP + FN
        if (denom == 0) continue;
        const double v = static_cast<double>(tp) / static_cast<double>(denom);
        rep.per_class[c] = v;
        sum += v;
    }
    rep.mean = rep.per_class.empty() ? 0.0 : sum / static_cast<double>(rep.per_class.size());
    return rep;
}

/// Per-step loss components; the overall objective is
/// ce + alpha*kd + beta*sd and must be re-assemblable from these.
struct CssStepLog {
    double total = 0.0;
    double ce = 0.0;
    double kd = 0.0;
    double sd = 0.0;
};

namespace detail {

inline void scatter_pixel_grad(Matrix& grad_logits, std::size_t sample, const Matrix& gmap,
                               std::size_t hw, double scale) {
    double* row = grad_logits.row_ptr(sample);
    for (std::size_t c = 0; c < gmap.cols(); ++c)
        for (std::size_t pix = 0; pix < hw; ++pix)
            row[c * hw + pix] += scale * gmap(pix, c);
}

} // namespace detail

/// One task of continual segmentation training. Per batch: pixelwise
/// background-shift-aware cross entropy, plus — when an old model exists —
/// output distillation against its per-pixel predictions (alpha) and the
/// subspace penalty between old and new feature maps at every conv tap
/// (beta, averaged over taps). With alpha and beta both zero the old model is
/// never consulted, so the run is the fine-tuning baseline bit for bit.
inline void train_css_task(Network& net, Network* old_net, const SegTask& task,
                           const CSSConfig& cfg, Rng& order_rng,
                           std::vector<CssStepLog>* step_log = nullptr) {
    cfg.validate();
    const std::size_t n = task.train.size();
    if (n == 0) throw ContractViolation("train_css_task: task has no training examples");
    const std::size_t h = net.in_h, w = net.in_w, hw = h * w;
    if (hw == 0) throw ContractViolation("train_css_task: network has no spatial dims");
    const std::size_t in_width = task.train.front().image.size();
    if (task.train.front().mask.size() != hw)
        throw DimensionError("train_css_task: mask size != network h*w");

    // Channel bookkeeping: channel index == class id (background 0 first,
    // shape classes introduced in order).
    for (std::size_t j = 0; j < net.head.class_ids.size(); ++j)
        if (net.head.class_ids[j] != static_cast<int>(j))
            throw ContractViolation("train_css_task: head channels must be id-ordered");
    const std::set<int>& current = task.classes;
    std::set<int> old_classes;
    for (int c : task.seen_classes)
        if (!current.count(c)) old_classes.insert(c);

    const bool use_old = old_net != nullptr && (cfg.alpha > 0.0 || cfg.beta > 0.0);
    const std::size_t n_ch = net.head.class_ids.size();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
        for (std::size_t i = n; i-- > 1;)
            std::swap(order[i], order[order_rng.uniform_index(i + 1)]);

        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t b = std::min(cfg.batch, n - start);
            Matrix x(b, in_width);
            for (std::size_t s = 0; s < b; ++s) {
                const SegExample& ex = task.train[order[start + s]];
                if (ex.image.size() != in_width || ex.mask.size() != hw)
                    throw DimensionError("train_css_task: example size drift");
                for (std::size_t j = 0; j < in_width; ++j) x(s, j) = ex.image[j];
            }

            ForwardResult fr = net.forward(x);
            std::optional<ForwardResult> fo;
            if (use_old) {
                fo = old_net->forward(x);
                if (fo->taps.size() != fr.taps.size())
                    throw ContractViolation("train_css_task: old/new tap count drift");
            }

            CssStepLog log;
            Matrix grad_logits(b, fr.logits.cols());
            std::map<std::size_t, Matrix> tap_grads;
            const double invb = 1.0 / static_cast<double>(b);
            const std::size_t n_taps = fr.taps.size();

            for (std::size_t s = 0; s < b; ++s) {
                const SegExample& ex = task.train[order[start + s]];
                const Matrix lmap = feature_map_of_sample(fr.logits, s, n_ch);

                LossResult ce = ce_css(lmap, ex.mask, current, old_classes, cfg.bg_inclusive);
                log.ce += ce.value * invb;
                detail::scatter_pixel_grad(grad_logits, s, ce.grads.at("logits"), hw, invb);

                if (use_old && cfg.alpha > 0.0) {
                    const std::size_t old_ch = old_net->head.class_ids.size();
                    const Matrix omap = feature_map_of_sample(fo->logits, s, old_ch);
                    LossResult kd = kd_css(lmap, softmax_rows(omap), old_classes, current,
                                           cfg.bg_inclusive);
                    log.kd += kd.value * invb;
                    detail::scatter_pixel_grad(grad_logits, s, kd.grads.at("logits"), hw,
                                               cfg.alpha * invb);
                }
                if (use_old && cfg.beta > 0.0) {
                    const double tap_scale = cfg.beta * invb / static_cast<double>(n_taps);
                    for (std::size_t l = 0; l < n_taps; ++l) {
                        const Layer& conv = net.layers[fr.taps[l].layer_index];
                        const Matrix fnew =
                            feature_map_of_sample(fr.taps[l].captured, s, conv.out_ch);
                        const Layer& oconv = old_net->layers[fo->taps[l].layer_index];
                        const Matrix fold =
                            feature_map_of_sample(fo->taps[l].captured, s, oconv.out_ch);
                        if (!fnew.same_shape(fold))
                            throw ContractViolation(
                                "train_css_task: tap shape drift at layer " +
                                std::to_string(fr.taps[l].layer_index));
                        LossResult sd = sd_loss_css(fnew, fold, cfg.sd);
                        log.sd += sd.value * invb / static_cast<double>(n_taps);
                        if (!sd.grads.count("fmap_new")) continue;
                        auto it = tap_grads
                                      .try_emplace(fr.taps[l].layer_index,
                                                   Matrix(b, fr.taps[l].captured.cols()))
                                      .first;
                        detail::scatter_pixel_grad(it->second, s, sd.grads.at("fmap_new"),
                                                   hw, tap_scale);
                    }
                }
            }

            log.total = log.ce + cfg.alpha * log.kd + cfg.beta * log.sd;
            net.backward(grad_logits, tap_grads);
            net.sgd_step(cfg.lr, cfg.momentum);
            if (step_log) step_log->push_back(log);
        }
    }
}

/// Pixel confusion of `net` over the test splits of the given tasks.
inline ConfusionMatrix evaluate_css(Network& net, const std::vector<const SegTask*>& tasks,
                                    std::size_t eval_batch = 8) {
    const std::size_t hw = net.in_h * net.in_w;
    const std::size_t n_ch = net.head.class_ids.size();
    ConfusionMatrix conf(n_ch);
    for (const SegTask* task : tasks) {
        const std::size_t n = task->test.size();
        for (std::size_t start = 0; start < n; start += eval_batch) {
            const std::size_t b = std::min(eval_batch, n - start);
            Matrix x(b, task->test.front().image.size());
            for (std::size_t s = 0; s < b; ++s) {
                const SegExample& ex = task->test[start + s];
                for (std::size_t j = 0; j < ex.image.size(); ++j) x(s, j) = ex.image[j];
            }
            ForwardResult fr = net.forward(x);
            for (std::size_t s = 0; s < b; ++s) {
                const SegExample& ex = task->test[start + s];
                const double* row = fr.logits.row_ptr(s);
                for (std::size_t pix = 0; pix < hw; ++pix) {
                    std::size_t best = 0;
                    for (std::size_t c = 1; c < n_ch; ++c)
                        if (row[c * hw + pix] > row[best * hw + pix]) best = c;
                    conf.add(static_cast<std::size_t>(ex.mask[pix]), best);
                }
            }
        }
    }
    return conf;
}

/// One evaluation snapshot: mean IOU of the first task's classes (base), of
/// everything introduced later (novel), and of background + all classes
/// (all), taken after `step` optimization steps.
struct CssEvalPoint {
    std::size_t step = 0;
    double base = 0.0;
    double novel = 0.0;
    double all = 0.0;
    bool has_novel = false;
};

struct CssMetrics {
    std::vector<CssEvalPoint> points;
    std::vector<double> wall_time_sec;
    std::map<int, double> final_per_class;
};

/// Whole-stream driver for continual segmentation: grows the per-pixel head
/// each task, trains with the configured distillation weights, snapshots the
/// model between tasks, and evaluates IOU groups after each task.
inline CssMetrics run_css_experiment(
    const std::vector<SegTask>& tasks, const CSSConfig& cfg,
    const std::vector<std::size_t>& channels = {8, 8}, Network* final_net = nullptr,
    std::vector<CssStepLog>* step_log = nullptr,
    const std::function<void(const CssMetrics&)>& on_task = {}) {
    cfg.validate();
    if (tasks.empty()) throw ContractViolation("run_css_experiment: no tasks");
    if (tasks.front().train.empty())
        throw ContractViolation("run_css_experiment: first task has no training data");
    const std::size_t hw = tasks.front().train.front().mask.size();
    const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(
        static_cast<double>(hw))));
    if (side * side != hw)
        throw ContractViolation("run_css_experiment: non-square images");

    Rng init_rng(cfg.seed, 1), order_rng(cfg.seed, 2);
    Network net = make_conv_net(3, side, side, channels, init_rng);
    std::optional<Network> old_net;
    CssMetrics metrics;

    std::set<int> base_group, novel_group, all_group{0};
    std::vector<const SegTask*> seen;
    std::size_t steps_done = 0;

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const SegTask& task = tasks[t];
        std::vector<int> grow;
        if (t == 0) grow.push_back(0);
        grow.insert(grow.end(), task.classes.begin(), task.classes.end());
        net.expand_head(grow);
        seen.push_back(&task);
        for (int c : task.classes) {
            (t == 0 ? base_group : novel_group).insert(c);
            all_group.insert(c);
        }
        if (t == 0) base_group.insert(0);

        std::vector<CssStepLog> local_log;
        const auto t0 = std::chrono::steady_clock::now();
        train_css_task(net, old_net ? &*old_net : nullptr, task, cfg, order_rng,
                       &local_log);
        const auto t1 = std::chrono::steady_clock::now();
        metrics.wall_time_sec.push_back(std::chrono::duration<double>(t1 - t0).count());
        steps_done += local_log.size();
        if (step_log)
            step_log->insert(step_log->end(), local_log.begin(), local_log.end());

        old_net = net.snapshot();
        const ConfusionMatrix conf = evaluate_css(net, seen);
        CssEvalPoint point;
        point.step = steps_done;
        point.base = iou(conf, base_group).mean;
        point.has_novel = !novel_group.empty();
        point.novel = point.has_novel ? iou(conf, novel_group).mean : 0.0;
        const IouReport all_rep = iou(conf, all_group);
        point.all = all_rep.mean;
        metrics.points.push_back(point);
        if (t + 1 == tasks.size()) metrics.final_per_class = all_rep.per_class;
        if (on_task) on_task(metrics);
    }
    if (final_net) *final_net = std::move(net);
    return metrics;
}

/// Long-form IOU log: one row per (evaluation step, class group). The novel
/// group appears once later tasks introduce classes beyond the base set.
inline void write_css_csv(std::ostream& os, const CssMetrics& metrics) {
    os << "step,class_group,miou\n";
    for (const CssEvalPoint& p : metrics.points) {
        os << p.step << ",base," << p.base << '\n';
        if (p.has_novel) os << p.step << ",novel," << p.novel << '\n';
        os << p.step << ",all," << p.all << '\n';
    }
}

} // namespace sdcl
