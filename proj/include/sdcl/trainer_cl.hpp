#pragma once

#include <algorithm>
#include <chrono>
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
#include "sdcl/replay.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

enum class CLMethod { sgd, er, der, sd, der_plus_sd };
enum class EvalMode { class_il, task_il };

inline std::string to_string(CLMethod m) {
    switch (m) {
        case CLMethod::sgd: return "sgd";
        case CLMethod::er: return "er";
        case CLMethod::der: return "der";
        case CLMethod::sd: return "sd";
        case CLMethod::der_plus_sd: return "der_plus_sd";
    }
    return "?";
}

inline std::string to_string(EvalMode m) {
    return m == EvalMode::class_il ? "class_il" : "task_il";
}

inline CLMethod parse_method(const std::string& s) {
    if (s == "sgd") return CLMethod::sgd;
    if (s == "er") return CLMethod::er;
    if (s == "der") return CLMethod::der;
    if (s == "sd") return CLMethod::sd;
    if (s == "der_plus_sd") return CLMethod::der_plus_sd;
    throw ParseError("unknown method '" + s + "'");
}

inline EvalMode parse_eval_mode(const std::string& s) {
    if (s == "class_il") return EvalMode::class_il;
    if (s == "task_il") return EvalMode::task_il;
    throw ParseError("unknown eval mode '" + s + "'");
}

/// Knobs of the class-incremental loop. alpha weighs the memory
/// cross-entropy, beta the drift penalty (subspace distance, or logit
/// matching for the der variants).
struct CLConfig {
    double lr = 0.1;
    double alpha = 1.0;
    double beta = 0.1;
    std::size_t stream_batch = 32;
    std::size_t memory_batch = 32;
    std::size_t epochs_per_task = 1;
    std::size_t buffer_capacity = 500;
    SDConfig sd;
    std::uint64_t seed = 0;
    CLMethod method = CLMethod::sd;
    EvalMode eval_mode = EvalMode::class_il;

    void validate() const {
        if (lr <= 0.0) throw ContractViolation("CLConfig: lr must be positive");
        if (alpha < 0.0 || beta < 0.0)
            throw ContractViolation("CLConfig: alpha and beta must be nonnegative");
        if (stream_batch < 1 || memory_batch < 1)
            throw ContractViolation("CLConfig: batch sizes must be >= 1");
        if (epochs_per_task < 1)
            throw ContractViolation("CLConfig: epochs_per_task must be >= 1");
        sd.validate();
    }
};

/// Per-step loss components, recorded so the overall objective can be
/// re-assembled and checked from logs.
struct CLStepLog {
    double total = 0.0;
    double ce_stream = 0.0;
    double ce_memory = 0.0;
    double sd_value = 0.0;
    double der_value = 0.0;
};

/// Accuracy triangles (row t holds accuracies on tasks 0..t after finishing
/// task t) for both evaluation modes, plus per-task averages and timings.
struct MetricsRecord {
    std::vector<std::vector<double>> acc_class_il;
    std::vector<std::vector<double>> acc_task_il;
    std::vector<double> avg_acc_class_il;
    std::vector<double> avg_acc_task_il;
    std::vector<double> wall_time_sec;

    const std::vector<std::vector<double>>& acc(EvalMode mode) const {
        return mode == EvalMode::class_il ? acc_class_il : acc_task_il;
    }
    const std::vector<double>& avg_acc(EvalMode mode) const {
        return mode == EvalMode::class_il ? avg_acc_class_il : avg_acc_task_il;
    }
};

/// Mean over tasks i < T of [best accuracy ever achieved on i] - [final
/// accuracy on i]. Zero when nothing degrades; single-task runs have nothing
/// to forget.
inline double forgetting_from_acc(const std::vector<std::vector<double>>& acc) {
    if (acc.size() < 2) return 0.0;
    const std::size_t T = acc.size();
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < T; ++i) {
        double best = 0.0;
        for (std::size_t j = i; j < T; ++j) best = std::max(best, acc[j][i]);
        sum += best - acc[T - 1][i];
    }
    return sum / static_cast<double>(T - 1);
}

inline double forgetting(const MetricsRecord& metrics, EvalMode mode = EvalMode::class_il) {
    return forgetting_from_acc(metrics.acc(mode));
}

namespace detail {

inline std::map<int, std::size_t> head_column_of(const Network& net) {
    std::map<int, std::size_t> cols;
    for (std::size_t j = 0; j < net.head.class_ids.size(); ++j)
        cols[net.head.class_ids[j]] = j;
    return cols;
}

inline std::size_t column_for_label(const std::map<int, std::size_t>& cols, int label) {
    auto it = cols.find(label);
    if (it == cols.end())
        throw ContractViolation("label " + std::to_string(label) +
                                " has no head column (head not expanded?)");
    return it->second;
}

} // namespace detail

/// One task of Algorithm-style class-incremental training. Per batch: stream
/// cross entropy, plus — once an old model exists and the buffer holds
/// anything — memory cross entropy (alpha) and a drift term (beta): subspace
/// distance between old/new features of the memory batch for the sd methods,
/// logit matching against stored logits for the der methods. The same memory
/// draw feeds all memory terms. Stream samples enter the reservoir after
/// their batch's step, once per epoch pass.
inline void train_task(Network& net, Network* old_net, const Task& task,
                       ReplayBuffer& buffer, const CLConfig& cfg, Rng& order_rng,
                       Rng& mem_rng, std::vector<CLStepLog>* step_log = nullptr) {
    cfg.validate();
    const std::size_t n = task.train_y.size();
    if (n == 0) throw ContractViolation("train_task: task has no training examples");
    if (net.taps.empty())
        throw ContractViolation("train_task: network needs a feature tap for distillation");

    const std::map<int, std::size_t> cols = detail::head_column_of(net);
    const std::size_t tap_idx = net.taps.back();
    const bool store_logits =
        cfg.method == CLMethod::der || cfg.method == CLMethod::der_plus_sd;
    const bool use_sd = cfg.method == CLMethod::sd || cfg.method == CLMethod::der_plus_sd;
    const bool use_der = store_logits;
    const bool use_memory = cfg.method != CLMethod::sgd;

    const std::size_t dim = net.layers.front().kind == LayerKind::linear
                                ? net.layers.front().in_dim
                                : task.train_x.cols();

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
        for (std::size_t i = n; i-- > 1;)
            std::swap(order[i], order[order_rng.uniform_index(i + 1)]);

        for (std::size_t start = 0; start < n; start += cfg.stream_batch) {
            const std::size_t b = std::min(cfg.stream_batch, n - start);
            Matrix x(b, dim);
            std::vector<std::size_t> targets(b);
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t src = order[start + r];
                for (std::size_t j = 0; j < dim; ++j) x(r, j) = task.train_x(src, j);
                targets[r] = detail::column_for_label(cols, task.train_y[src]);
            }

            CLStepLog log;
            ForwardResult fr = net.forward(x);
            Matrix grad_logits;
            log.ce_stream = cross_entropy(fr.logits, targets, &grad_logits);
            log.total = log.ce_stream;
            net.backward(grad_logits);
            const Matrix stream_logits = fr.logits; // pre-update, for der storage

            if (use_memory && old_net != nullptr && !buffer.empty()) {
                auto batch = buffer.sample(cfg.memory_batch, mem_rng);
                const std::size_t mb = batch->size();
                Matrix xm(mb, dim);
                std::vector<std::size_t> mem_targets(mb);
                std::vector<int> mem_labels(mb);
                for (std::size_t r = 0; r < mb; ++r) {
                    const MemoryItem& it = (*batch)[r];
                    if (it.input.size() != dim)
                        throw DimensionError("train_task: stored input width mismatch");
                    for (std::size_t j = 0; j < dim; ++j) xm(r, j) = it.input[j];
                    mem_targets[r] = detail::column_for_label(cols, it.label);
                    mem_labels[r] = it.label;
                }

                ForwardResult fm = net.forward(xm);
                Matrix mem_grad(fm.logits.rows(), fm.logits.cols());
                if (cfg.alpha > 0.0) {
                    Matrix g;
                    log.ce_memory = cross_entropy(fm.logits, mem_targets, &g);
                    g *= cfg.alpha;
                    mem_grad += g;
                    log.total += cfg.alpha * log.ce_memory;
                }
                if (use_der && cfg.beta > 0.0) {
                    // Stored logits keep their storage-time width, which
                    // varies across tasks; match each row against its own
                    // stored prefix.
                    double value = 0.0;
                    const double invb = 1.0 / static_cast<double>(mb);
                    for (std::size_t r = 0; r < mb; ++r) {
                        const std::vector<double>& stored = (*batch)[r].logits;
                        if (stored.empty()) continue;
                        if (stored.size() > fm.logits.cols())
                            throw DimensionError("train_task: stored logits wider than head");
                        const double invw = 1.0 / static_cast<double>(stored.size());
                        for (std::size_t j = 0; j < stored.size(); ++j) {
                            const double diff = fm.logits(r, j) - stored[j];
                            value += diff * diff * invw * invb;
                            mem_grad(r, j) += cfg.beta * 2.0 * diff * invw * invb;
                        }
                    }
                    log.der_value = value;
                    log.total += cfg.beta * value;
                }

                std::map<std::size_t, Matrix> tap_grads;
                if (use_sd && cfg.beta > 0.0) {
                    ForwardResult fo = old_net->forward(xm);
                    const Matrix feats_new = features_as_columns(fm.taps.back().captured);
                    const Matrix feats_old = features_as_columns(fo.taps.back().captured);
                    LossResult sd = sd_loss_cl(feats_new, feats_old, mem_labels, cfg.sd);
                    log.sd_value = sd.value;
                    log.total += cfg.beta * sd.value;
                    if (sd.grads.count("feats_new")) {
                        const Matrix& g = sd.grads.at("feats_new"); // fdim x mb
                        Matrix tg(mb, g.rows());
                        for (std::size_t r = 0; r < mb; ++r)
                            for (std::size_t i = 0; i < g.rows(); ++i)
                                tg(r, i) = cfg.beta * g(i, r);
                        tap_grads.emplace(tap_idx, std::move(tg));
                    }
                }
                net.backward(mem_grad, tap_grads);
            }

            net.sgd_step(cfg.lr);

            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t src = order[start + r];
                MemoryItem item;
                item.input.resize(dim);
                for (std::size_t j = 0; j < dim; ++j) item.input[j] = task.train_x(src, j);
                item.label = task.train_y[src];
                if (store_logits) {
                    item.logits.resize(stream_logits.cols());
                    for (std::size_t j = 0; j < stream_logits.cols(); ++j)
                        item.logits[j] = stream_logits(r, j);
                }
                buffer.insert(std::move(item));
            }
            if (step_log) step_log->push_back(log);
        }
    }
}

/// Accuracy on each seen task's test split. class_il takes the argmax over
/// every class the head knows; task_il first masks the logits down to the
/// evaluated task's own classes.
inline std::vector<double> evaluate(Network& net, const std::vector<const Task*>& tasks_seen,
                                    EvalMode mode, std::size_t eval_batch = 256) {
    std::vector<double> out;
    const std::size_t dim =
        net.layers.front().kind == LayerKind::linear ? net.layers.front().in_dim : 0;
    for (const Task* task : tasks_seen) {
        const std::size_t n = task->test_y.size();
        std::size_t hits = 0;
        for (std::size_t start = 0; start < n; start += eval_batch) {
            const std::size_t b = std::min(eval_batch, n - start);
            const std::size_t width = dim ? dim : task->test_x.cols();
            Matrix x(b, width);
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t j = 0; j < width; ++j) x(r, j) = task->test_x(start + r, j);
            ForwardResult fr = net.forward(x);
            const Matrix logits = mode == EvalMode::task_il
                                      ? mask_logits(fr.logits, net.head.class_ids,
                                                    task->classes)
                                      : fr.logits;
            for (std::size_t r = 0; r < b; ++r) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < logits.cols(); ++j)
                    if (logits(r, j) > logits(r, best)) best = j;
                hits += net.head.class_ids[best] == task->test_y[start + r];
            }
        }
        out.push_back(n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n));
    }
    return out;
}

/// Whole-stream driver: grows the head per task, trains with the configured
/// method, snapshots the model between tasks, and fills the accuracy
/// triangles for both evaluation modes.
inline MetricsRecord run_cl_experiment(
    const TaskStream& stream, const CLConfig& cfg,
    const std::vector<std::size_t>& hidden = {100, 100}, Network* final_net = nullptr,
    std::vector<CLStepLog>* step_log = nullptr,
    const std::function<void(const MetricsRecord&)>& on_task = {}) {
    cfg.validate();
    if (stream.tasks.empty()) throw ContractViolation("run_cl_experiment: empty stream");

    Rng init_rng(cfg.seed, 1), order_rng(cfg.seed, 2), mem_rng(cfg.seed, 3);
    const std::size_t in_dim = stream.tasks.front().train_x.cols();
    Network net = make_mlp(in_dim, hidden, init_rng);
    net.taps.push_back(net.layers.size() - 1); // final ReLU: the feature the head reads

    ReplayBuffer buffer(cfg.buffer_capacity, cfg.seed);
    std::optional<Network> old_net;
    MetricsRecord metrics;

    std::vector<const Task*> seen;
    for (const Task& task : stream.tasks) {
        std::vector<int> new_classes(task.classes.begin(), task.classes.end());
        net.expand_head(new_classes);
        seen.push_back(&task);

        const auto t0 = std::chrono::steady_clock::now();
        train_task(net, old_net ? &*old_net : nullptr, task, buffer, cfg, order_rng,
                   mem_rng, step_log);
        const auto t1 = std::chrono::steady_clock::now();
        metrics.wall_time_sec.push_back(std::chrono::duration<double>(t1 - t0).count());

        old_net = net.snapshot();
        metrics.acc_class_il.push_back(evaluate(net, seen, EvalMode::class_il));
        metrics.acc_task_il.push_back(evaluate(net, seen, EvalMode::task_il));
        const auto row_mean = [](const std::vector<double>& row) {
            double s = 0.0;
            for (double a : row) s += a;
            return s / static_cast<double>(row.size());
        };
        metrics.avg_acc_class_il.push_back(row_mean(metrics.acc_class_il.back()));
        metrics.avg_acc_task_il.push_back(row_mean(metrics.acc_task_il.back()));
        if (on_task) on_task(metrics);
    }
    if (final_net) *final_net = std::move(net);
    return metrics;
}

/// Long-form metrics dump, one row per (task, eval_task, mode). Tasks are
/// 1-based in the file.
inline void write_metrics_csv(std::ostream& os, const MetricsRecord& metrics,
                              const std::string& method, std::uint64_t seed) {
    os << "method,seed,task,eval_task,mode,accuracy\n";
    for (EvalMode mode : {EvalMode::class_il, EvalMode::task_il}) {
        const auto& acc = metrics.acc(mode);
        for (std::size_t t = 0; t < acc.size(); ++t)
            for (std::size_t i = 0; i < acc[t].size(); ++i)
                os << method << ',' << seed << ',' << (t + 1) << ',' << (i + 1) << ','
                   << to_string(mode) << ',' << acc[t][i] << '\n';
    }
}

} // namespace sdcl
