// Command-line front door: experiment runner, gradient-check harness, and
// micro-benchmark.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "sdcl/bench.hpp"
#include "sdcl/data.hpp"
#include "sdcl/gradcheck.hpp"
#include "sdcl/trainer_cl.hpp"
#include "sdcl/trainer_css.hpp"

namespace fs = std::filesystem;
using sdcl::cli::ExperimentConfig;
using json = nlohmann::json;

namespace {

int run_gradcheck_cmd(std::uint64_t seed) {
    sdcl::GradCheckReport report = sdcl::run_gradcheck(seed);
    for (const auto& s : report.sizes) {
        std::printf("gradcheck d=%zu p=%zu m=%zu: max rel err %.3e over %d instances",
                    s.d, s.p, s.m, s.max_rel_err, s.checked);
        if (s.skipped > 0) std::printf(" (%d skipped as degenerate)", s.skipped);
        std::printf(" -> %s\n",
                    (s.checked > 0 && s.max_rel_err < report.tolerance) ? "ok" : "FAIL");
    }
    return report.passed() ? 0 : 1;
}

int run_bench_cmd() {
    std::vector<sdcl::BenchRow> rows = sdcl::run_bench();
    sdcl::write_bench_csv(std::cout, rows);
    std::fprintf(stderr, "combined log-log slope vs d: %.3f\n",
                 sdcl::bench_combined_slope(rows));
    return 0;
}

/// Resolve one MNIST file: explicit config path wins, otherwise look for the
/// conventional name (or its .gz) under SDCL_DATA_DIR.
std::string resolve_mnist_file(const std::string& explicit_path, const char* name) {
    if (!explicit_path.empty()) return explicit_path;
    const char* env = std::getenv("SDCL_DATA_DIR");
    if (env == nullptr)
        throw sdcl::ParseError(std::string("mnist: data.paths not given and SDCL_DATA_DIR "
                                           "is unset (needed for ") +
                               name + ")");
    fs::path p = fs::path(env) / name;
    if (fs::exists(p)) return p.string();
    fs::path gz = p;
    gz += ".gz";
    if (fs::exists(gz)) return gz.string();
    throw sdcl::ParseError("mnist: neither " + p.string() + " nor its .gz exists");
}

sdcl::TaskStream build_cl_stream(const ExperimentConfig& cfg) {
    if (cfg.data.kind == "mnist") {
        const sdcl::Dataset train = sdcl::load_mnist_idx(
            resolve_mnist_file(cfg.data.paths.train_images, "train-images-idx3-ubyte"),
            resolve_mnist_file(cfg.data.paths.train_labels, "train-labels-idx1-ubyte"));
        const sdcl::Dataset test = sdcl::load_mnist_idx(
            resolve_mnist_file(cfg.data.paths.test_images, "t10k-images-idx3-ubyte"),
            resolve_mnist_file(cfg.data.paths.test_labels, "t10k-labels-idx1-ubyte"));
        return sdcl::split_class_incremental(train, test, cfg.data.classes_per_task,
                                             cfg.data.order_seed);
    }
    if (cfg.data.kind == "synth_gaussian")
        return sdcl::synth_gaussian_tasks(cfg.data.n_classes, cfg.data.dim,
                                          cfg.data.n_per_class, cfg.data.sep, cfg.cl.seed,
                                          cfg.data.classes_per_task);
    throw sdcl::ParseError("train-cl: data.kind '" + cfg.data.kind +
                           "' is not a classification dataset");
}

/// Shared preflight: refuse a non-empty output dir without --force, create it,
/// and drop a byte-for-byte copy of the input config inside.
int prepare_output_dir(const std::string& config_path, const std::string& output_dir,
                       bool force) {
    fs::path out(output_dir);
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) {
            std::fprintf(stderr, "error: output_dir %s exists and is not a directory\n",
                         output_dir.c_str());
            return 2;
        }
        if (!fs::is_empty(out) && !force) {
            std::fprintf(stderr,
                         "error: output_dir %s already contains files; pass --force to "
                         "reuse it\n",
                         output_dir.c_str());
            return 2;
        }
    }
    fs::create_directories(out);
    std::ifstream src(config_path, std::ios::binary);
    std::ofstream dst(out / "config.json", std::ios::binary);
    dst << src.rdbuf();
    if (!dst) {
        std::fprintf(stderr, "error: cannot write %s\n", (out / "config.json").c_str());
        return 2;
    }
    return 0;
}

int cmd_train_cl(const std::string& config_path, bool seed_given, std::uint64_t seed,
                 bool force) {
    ExperimentConfig cfg;
    sdcl::TaskStream stream;
    try {
        cfg = ExperimentConfig::load_file(config_path);
        if (seed_given) cfg.cl.seed = seed;
        cfg.cl.method = sdcl::parse_method(cfg.method);
        stream = build_cl_stream(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    const int rc = prepare_output_dir(config_path, cfg.output_dir, force);
    if (rc != 0) return rc;
    const fs::path out(cfg.output_dir);

    const auto write_outputs = [&](const sdcl::MetricsRecord& m) {
        std::ofstream csv(out / "metrics.csv");
        sdcl::write_metrics_csv(csv, m, cfg.method, cfg.cl.seed);

        json s;
        s["method"] = cfg.method;
        s["seed"] = cfg.cl.seed;
        s["eval_mode"] = sdcl::to_string(cfg.cl.eval_mode);
        s["tasks_completed"] = m.avg_acc_class_il.size();
        s["avg_acc"] = m.avg_acc(cfg.cl.eval_mode);
        s["avg_acc_class_il"] = m.avg_acc_class_il;
        s["avg_acc_task_il"] = m.avg_acc_task_il;
        s["final_forgetting"] = sdcl::forgetting(m, cfg.cl.eval_mode);
        s["final_forgetting_class_il"] = sdcl::forgetting(m, sdcl::EvalMode::class_il);
        s["final_forgetting_task_il"] = sdcl::forgetting(m, sdcl::EvalMode::task_il);
        s["wall_time_sec"] = m.wall_time_sec;
        s["config"] = cfg.to_json();
        std::ofstream js(out / "summary.json");
        js << s.dump(2) << '\n';
    };

    try {
        sdcl::Network net;
        const sdcl::MetricsRecord metrics = sdcl::run_cl_experiment(
            stream, cfg.cl, cfg.model.hidden, &net, nullptr, write_outputs);
        sdcl::save_checkpoint(net, (out / "checkpoint.sdckpt").string());
        for (std::size_t t = 0; t < metrics.avg_acc_class_il.size(); ++t)
            std::printf("task %zu: avg acc class-IL %.4f task-IL %.4f (%.1fs)\n", t + 1,
                        metrics.avg_acc_class_il[t], metrics.avg_acc_task_il[t],
                        metrics.wall_time_sec[t]);
        std::printf("final forgetting (class-IL): %.4f\n",
                    sdcl::forgetting(metrics, sdcl::EvalMode::class_il));
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: run failed: %s (partial metrics kept in %s)\n",
                     e.what(), cfg.output_dir.c_str());
        return 3;
    }
}

int cmd_train_css(const std::string& config_path, bool force) {
    ExperimentConfig cfg;
    std::vector<sdcl::SegTask> tasks;
    try {
        cfg = ExperimentConfig::load_file(config_path);
        if (cfg.method != "css" && cfg.method != "finetune")
            throw sdcl::ParseError("train-css: method must be 'css' or 'finetune', got '" +
                                   cfg.method + "'");
        if (cfg.data.kind != "synth_seg")
            throw sdcl::ParseError("train-css: data.kind must be synth_seg");
        tasks = sdcl::synth_seg_tasks(cfg.data.n_shape_classes, cfg.data.image_size,
                                      cfg.data.per_task, cfg.css.seed,
                                      cfg.data.classes_per_task);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    const int rc = prepare_output_dir(config_path, cfg.output_dir, force);
    if (rc != 0) return rc;
    const fs::path out(cfg.output_dir);

    const auto write_outputs = [&](const sdcl::CssMetrics& m) {
        std::ofstream csv(out / "metrics.csv");
        sdcl::write_css_csv(csv, m);

        json s;
        s["method"] = cfg.method;
        s["seed"] = cfg.css.seed;
        s["points"] = json::array();
        for (const sdcl::CssEvalPoint& p : m.points) {
            json row{{"step", p.step}, {"base", p.base}, {"all", p.all}};
            if (p.has_novel) row["novel"] = p.novel;
            s["points"].push_back(row);
        }
        if (!m.points.empty()) {
            const sdcl::CssEvalPoint& last = m.points.back();
            s["final"] = {{"base", last.base}, {"all", last.all}};
            if (last.has_novel) s["final"]["novel"] = last.novel;
        }
        json per_class = json::object();
        for (const auto& [c, v] : m.final_per_class) per_class[std::to_string(c)] = v;
        s["per_class_iou"] = per_class;
        s["wall_time_sec"] = m.wall_time_sec;
        s["config"] = cfg.to_json();
        std::ofstream js(out / "summary.json");
        js << s.dump(2) << '\n';
    };

    try {
        sdcl::Network net;
        const sdcl::CssMetrics metrics = sdcl::run_css_experiment(
            tasks, cfg.css, cfg.model.channels, &net, nullptr, write_outputs);
        sdcl::save_checkpoint(net, (out / "checkpoint.sdckpt").string());
        for (const sdcl::CssEvalPoint& p : metrics.points) {
            std::printf("step %zu: base mIoU %.4f", p.step, p.base);
            if (p.has_novel) std::printf(" novel %.4f", p.novel);
            std::printf(" all %.4f\n", p.all);
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: run failed: %s (partial metrics kept in %s)\n",
                     e.what(), cfg.output_dir.c_str());
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"subspace-distillation continual learning toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool force = false;

    CLI::App* train_cl = app.add_subcommand("train-cl", "class-incremental training run");
    train_cl->add_option("--config", config_path, "experiment config (JSON)")->required();
    train_cl->add_option("--seed", seed, "override the config's seed")
        ->each([&](const std::string&) { seed_given = true; });
    train_cl->add_flag("--force", force, "allow reuse of an existing output directory");

    CLI::App* train_css = app.add_subcommand("train-css", "continual segmentation run");
    train_css->add_option("--config", config_path, "experiment config (JSON)")->required();
    train_css->add_flag("--force", force, "allow reuse of an existing output directory");

    std::uint64_t gc_seed = 7;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "compare analytic subspace-loss gradients with finite differences");
    gradcheck->add_option("--seed", gc_seed, "base seed for the random instances");

    CLI::App* bench = app.add_subcommand("bench", "time the SVD forward/backward kernels");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) return run_gradcheck_cmd(gc_seed);
        if (bench->parsed()) return run_bench_cmd();
        if (train_cl->parsed()) return cmd_train_cl(config_path, seed_given, seed, force);
        if (train_css->parsed()) return cmd_train_css(config_path, force);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
