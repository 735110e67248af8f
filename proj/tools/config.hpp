#pragma once

// Experiment configuration: a strict JSON document. Unknown keys anywhere are
// rejected so a typo cannot silently fall back to a default.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcl/errors.hpp"
#include "sdcl/trainer_cl.hpp"
#include "sdcl/trainer_css.hpp"

namespace sdcl::cli {

using nlohmann::json;

namespace detail {

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ParseError(where + ": unknown key '" + it.key() + "'");
    }
}

inline SDConfig parse_sd(const json& j, const std::string& where, SDConfig base) {
    check_keys(j, where, {"m", "group_size", "eps", "min_samples_per_class"});
    base.m = j.value("m", base.m);
    base.group_size = j.value("group_size", base.group_size);
    base.eps = j.value("eps", base.eps);
    base.min_samples_per_class = j.value("min_samples_per_class", base.min_samples_per_class);
    return base;
}

} // namespace detail

struct MnistPaths {
    std::string train_images, train_labels, test_images, test_labels;
    bool any() const {
        return !(train_images.empty() && train_labels.empty() && test_images.empty() &&
                 test_labels.empty());
    }
};

struct DataConfig {
    std::string kind; // "mnist" | "synth_gaussian" | "synth_seg"
    MnistPaths paths;
    // task construction
    std::size_t classes_per_task = 2;
    std::uint64_t order_seed = 0;
    // synth_gaussian
    std::size_t n_classes = 4;
    std::size_t dim = 16;
    std::size_t n_per_class = 100;
    double sep = 3.0;
    // synth_seg
    std::size_t n_shape_classes = 2;
    std::size_t image_size = 16;
    std::size_t per_task = 24;
};

struct ModelConfig {
    std::vector<std::size_t> hidden{100, 100}; // MLP body (train-cl)
    std::vector<std::size_t> channels{6, 6};   // conv body (train-css)
};

struct ExperimentConfig {
    DataConfig data;
    ModelConfig model;
    std::string method = "sd"; // CL method, or "css"/"finetune" for train-css
    CLConfig cl;
    CSSConfig css;
    std::string output_dir;

    static ExperimentConfig from_json(const json& j) {
        detail::check_keys(j, "config",
                           {"data", "model", "method", "cl", "css", "output_dir"});
        ExperimentConfig cfg;

        if (!j.contains("data")) throw ParseError("config: missing 'data' section");
        const json& jd = j.at("data");
        detail::check_keys(jd, "data", {"kind", "paths", "tasks"});
        cfg.data.kind = jd.value("kind", "");
        if (cfg.data.kind != "mnist" && cfg.data.kind != "synth_gaussian" &&
            cfg.data.kind != "synth_seg")
            throw ParseError("data.kind must be one of mnist, synth_gaussian, synth_seg");
        if (jd.contains("paths")) {
            const json& jp = jd.at("paths");
            detail::check_keys(jp, "data.paths",
                               {"train_images", "train_labels", "test_images", "test_labels"});
            cfg.data.paths.train_images = jp.value("train_images", "");
            cfg.data.paths.train_labels = jp.value("train_labels", "");
            cfg.data.paths.test_images = jp.value("test_images", "");
            cfg.data.paths.test_labels = jp.value("test_labels", "");
        }
        if (jd.contains("tasks")) {
            const json& jt = jd.at("tasks");
            if (cfg.data.kind == "mnist") {
                detail::check_keys(jt, "data.tasks", {"classes_per_task", "order_seed"});
                cfg.data.classes_per_task = jt.value("classes_per_task", cfg.data.classes_per_task);
                cfg.data.order_seed = jt.value("order_seed", cfg.data.order_seed);
            } else if (cfg.data.kind == "synth_gaussian") {
                detail::check_keys(jt, "data.tasks",
                                   {"n_classes", "dim", "n_per_class", "sep",
                                    "classes_per_task"});
                cfg.data.n_classes = jt.value("n_classes", cfg.data.n_classes);
                cfg.data.dim = jt.value("dim", cfg.data.dim);
                cfg.data.n_per_class = jt.value("n_per_class", cfg.data.n_per_class);
                cfg.data.sep = jt.value("sep", cfg.data.sep);
                cfg.data.classes_per_task =
                    jt.value("classes_per_task", cfg.data.classes_per_task);
            } else {
                detail::check_keys(jt, "data.tasks",
                                   {"n_shape_classes", "image_size", "per_task",
                                    "classes_per_task"});
                cfg.data.n_shape_classes =
                    jt.value("n_shape_classes", cfg.data.n_shape_classes);
                cfg.data.image_size = jt.value("image_size", cfg.data.image_size);
                cfg.data.per_task = jt.value("per_task", cfg.data.per_task);
                cfg.data.classes_per_task =
                    jt.value("classes_per_task", std::size_t{1});
            }
        }

        if (j.contains("model")) {
            const json& jm = j.at("model");
            detail::check_keys(jm, "model", {"hidden", "channels"});
            if (jm.contains("hidden"))
                cfg.model.hidden = jm.at("hidden").get<std::vector<std::size_t>>();
            if (jm.contains("channels"))
                cfg.model.channels = jm.at("channels").get<std::vector<std::size_t>>();
        }

        cfg.method = j.value("method", cfg.method);

        if (j.contains("cl")) {
            const json& jc = j.at("cl");
            detail::check_keys(jc, "cl",
                               {"lr", "alpha", "beta", "stream_batch", "memory_batch",
                                "epochs_per_task", "buffer_capacity", "sd", "seed",
                                "eval_mode"});
            cfg.cl.lr = jc.value("lr", cfg.cl.lr);
            cfg.cl.alpha = jc.value("alpha", cfg.cl.alpha);
            cfg.cl.beta = jc.value("beta", cfg.cl.beta);
            cfg.cl.stream_batch = jc.value("stream_batch", cfg.cl.stream_batch);
            cfg.cl.memory_batch = jc.value("memory_batch", cfg.cl.memory_batch);
            cfg.cl.epochs_per_task = jc.value("epochs_per_task", cfg.cl.epochs_per_task);
            cfg.cl.buffer_capacity = jc.value("buffer_capacity", cfg.cl.buffer_capacity);
            cfg.cl.seed = jc.value("seed", cfg.cl.seed);
            if (jc.contains("sd")) cfg.cl.sd = detail::parse_sd(jc.at("sd"), "cl.sd", cfg.cl.sd);
            if (jc.contains("eval_mode"))
                cfg.cl.eval_mode = parse_eval_mode(jc.at("eval_mode").get<std::string>());
        }

        if (j.contains("css")) {
            const json& jc = j.at("css");
            detail::check_keys(jc, "css",
                               {"lr", "momentum", "alpha", "beta", "batch",
                                "epochs_per_task", "sd", "seed", "bg_inclusive"});
            cfg.css.lr = jc.value("lr", cfg.css.lr);
            cfg.css.momentum = jc.value("momentum", cfg.css.momentum);
            cfg.css.alpha = jc.value("alpha", cfg.css.alpha);
            cfg.css.beta = jc.value("beta", cfg.css.beta);
            cfg.css.batch = jc.value("batch", cfg.css.batch);
            cfg.css.epochs_per_task = jc.value("epochs_per_task", cfg.css.epochs_per_task);
            cfg.css.seed = jc.value("seed", cfg.css.seed);
            cfg.css.bg_inclusive = jc.value("bg_inclusive", cfg.css.bg_inclusive);
            if (jc.contains("sd"))
                cfg.css.sd = detail::parse_sd(jc.at("sd"), "css.sd", cfg.css.sd);
        }

        if (!j.contains("output_dir"))
            throw ParseError("config: missing 'output_dir'");
        cfg.output_dir = j.at("output_dir").get<std::string>();
        if (cfg.output_dir.empty()) throw ParseError("config: output_dir must be nonempty");

        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ParseError("config: cannot open " + path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw ParseError("config " + path + ": " + e.what());
        }
        return from_json(j);
    }

    void validate() const {
        static const std::set<std::string> known{"sgd", "er",  "der",     "sd",
                                                "der_plus_sd", "css", "finetune"};
        if (!known.count(method))
            throw ContractViolation("config: unknown method '" + method + "'");
        if (method == "finetune" && (css.alpha != 0.0 || css.beta != 0.0))
            throw ContractViolation(
                "config: method 'finetune' requires css.alpha and css.beta to be 0");
        cl.validate();
        css.validate();
    }

    json to_json() const {
        json j;
        j["data"]["kind"] = data.kind;
        if (data.paths.any()) {
            j["data"]["paths"] = {{"train_images", data.paths.train_images},
                                  {"train_labels", data.paths.train_labels},
                                  {"test_images", data.paths.test_images},
                                  {"test_labels", data.paths.test_labels}};
        }
        if (data.kind == "mnist") {
            j["data"]["tasks"] = {{"classes_per_task", data.classes_per_task},
                                  {"order_seed", data.order_seed}};
        } else if (data.kind == "synth_gaussian") {
            j["data"]["tasks"] = {{"n_classes", data.n_classes},
                                  {"dim", data.dim},
                                  {"n_per_class", data.n_per_class},
                                  {"sep", data.sep},
                                  {"classes_per_task", data.classes_per_task}};
        } else {
            j["data"]["tasks"] = {{"n_shape_classes", data.n_shape_classes},
                                  {"image_size", data.image_size},
                                  {"per_task", data.per_task},
                                  {"classes_per_task", data.classes_per_task}};
        }
        j["model"] = {{"hidden", model.hidden}, {"channels", model.channels}};
        j["method"] = method;
        j["cl"] = {{"lr", cl.lr},
                   {"alpha", cl.alpha},
                   {"beta", cl.beta},
                   {"stream_batch", cl.stream_batch},
                   {"memory_batch", cl.memory_batch},
                   {"epochs_per_task", cl.epochs_per_task},
                   {"buffer_capacity", cl.buffer_capacity},
                   {"seed", cl.seed},
                   {"eval_mode", to_string(cl.eval_mode)},
                   {"sd",
                    {{"m", cl.sd.m},
                     {"group_size", cl.sd.group_size},
                     {"eps", cl.sd.eps},
                     {"min_samples_per_class", cl.sd.min_samples_per_class}}}};
        j["css"] = {{"lr", css.lr},
                    {"momentum", css.momentum},
                    {"alpha", css.alpha},
                    {"beta", css.beta},
                    {"batch", css.batch},
                    {"epochs_per_task", css.epochs_per_task},
                    {"seed", css.seed},
                    {"bg_inclusive", css.bg_inclusive},
                    {"sd",
                     {{"m", css.sd.m},
                      {"group_size", css.sd.group_size},
                      {"eps", css.sd.eps},
                      {"min_samples_per_class", css.sd.min_samples_per_class}}}};
        j["output_dir"] = output_dir;
        return j;
    }
};

} // namespace sdcl::cli
