#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

/// Flat labeled dataset: one row per example. For image data rows are pixels
/// scaled to [0,1] (no mean/std normalization); `img_rows`/`img_cols` record
/// the spatial shape when there is one.
struct Dataset {
    Matrix images{1, 1};
    std::vector<int> labels;
    std::size_t img_rows = 0;
    std::size_t img_cols = 0;

    std::size_t size() const { return labels.size(); }
};

/// One continual-learning task: its class set plus train/test examples
/// restricted to those classes.
struct Task {
    std::set<int> classes;
    Matrix train_x{1, 1};
    std::vector<int> train_y;
    Matrix test_x{1, 1};
    std::vector<int> test_y;
};

/// Ordered task sequence under one global class order. The same stream object
/// is shared by every method in an experiment so comparisons see identical
/// splits.
struct TaskStream {
    std::vector<Task> tasks;
    std::vector<int> class_order;
};

namespace detail {

inline std::vector<unsigned char> read_binary_file(const std::string& path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw ParseError("cannot open " + path);
        std::vector<unsigned char> out;
        unsigned char chunk[1 << 16];
        int got;
        while ((got = gzread(gz, chunk, sizeof chunk)) > 0)
            out.insert(out.end(), chunk, chunk + got);
        const bool bad = got < 0;
        gzclose(gz);
        if (bad) throw ParseError("gzip decompression failed for " + path);
        return out;
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                      std::istreambuf_iterator<char>());
}

inline std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t off,
                          const std::string& path) {
    if (off + 4 > buf.size()) throw ParseError("truncated IDX header in " + path);
    return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
           (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

} // namespace detail

/// Parse a big-endian IDX image/label file pair (the standard MNIST
/// distribution format), gzip-decompressed transparently when the path ends
/// in .gz. Pixels are scaled to [0,1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<unsigned char> ib = detail::read_binary_file(images_path);
    if (detail::be32(ib, 0, images_path) != 0x00000803u)
        throw ParseError("bad IDX image magic in " + images_path);
    const std::size_t n = detail::be32(ib, 4, images_path);
    const std::size_t rows = detail::be32(ib, 8, images_path);
    const std::size_t cols = detail::be32(ib, 12, images_path);
    if (n == 0 || rows == 0 || cols == 0)
        throw ParseError("degenerate IDX dimensions in " + images_path);
    if (ib.size() != 16 + n * rows * cols)
        throw ParseError("truncated IDX image payload in " + images_path);

    const std::vector<unsigned char> lb = detail::read_binary_file(labels_path);
    if (detail::be32(lb, 0, labels_path) != 0x00000801u)
        throw ParseError("bad IDX label magic in " + labels_path);
    const std::size_t nl = detail::be32(lb, 4, labels_path);
    if (lb.size() != 8 + nl) throw ParseError("truncated IDX label payload in " + labels_path);
    if (nl != n)
        throw ParseError("IDX count mismatch: " + std::to_string(n) + " images in " +
                         images_path + " vs " + std::to_string(nl) + " labels in " +
                         labels_path);

    Dataset ds;
    ds.img_rows = rows;
    ds.img_cols = cols;
    ds.images = Matrix(n, rows * cols);
    for (std::size_t i = 0; i < n; ++i) {
        double* dst = ds.images.row_ptr(i);
        const unsigned char* src = ib.data() + 16 + i * rows * cols;
        for (std::size_t p = 0; p < rows * cols; ++p)
            dst[p] = static_cast<double>(src[p]) / 255.0;
    }
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(lb[8 + i]);
    return ds;
}

namespace detail {

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx) {
    Matrix out(std::max<std::size_t>(idx.size(), 1), src.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(idx[r], c);
    return out;
}

} // namespace detail

/// Partition train/test datasets into a class-incremental task sequence.
/// order_seed 0 keeps the natural ascending label order (the standard
/// split-MNIST convention); any other value permutes the class order
/// deterministically.
inline TaskStream split_class_incremental(const Dataset& train, const Dataset& test,
                                          std::size_t classes_per_task,
                                          std::uint64_t order_seed = 0) {
    if (classes_per_task == 0)
        throw ContractViolation("split_class_incremental: classes_per_task must be >= 1");

    std::set<int> class_set(train.labels.begin(), train.labels.end());
    class_set.insert(test.labels.begin(), test.labels.end());
    std::vector<int> order(class_set.begin(), class_set.end());
    if (order_seed != 0) {
        Rng rng(order_seed, /*stream=*/0xC1A55);
        for (std::size_t i = order.size(); i-- > 1;)
            std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }

    TaskStream stream;
    stream.class_order = order;
    for (std::size_t at = 0; at < order.size(); at += classes_per_task) {
        Task task;
        const std::size_t hi = std::min(at + classes_per_task, order.size());
        for (std::size_t k = at; k < hi; ++k) task.classes.insert(order[k]);

        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < train.labels.size(); ++i)
            if (task.classes.count(train.labels[i])) tr.push_back(i);
        for (std::size_t i = 0; i < test.labels.size(); ++i)
            if (task.classes.count(test.labels[i])) te.push_back(i);

        task.train_x = detail::gather_rows(train.images, tr);
        task.train_y.reserve(tr.size());
        for (std::size_t i : tr) task.train_y.push_back(train.labels[i]);
        task.test_x = detail::gather_rows(test.images, te);
        task.test_y.reserve(te.size());
        for (std::size_t i : te) task.test_y.push_back(test.labels[i]);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

/// Check the stream's structural invariants: pairwise-disjoint class sets
/// whose union is exactly `expected` (when nonempty), and labels confined to
/// their task's class set.
inline void validate_task_stream(const TaskStream& stream, const std::set<int>& expected = {}) {
    std::set<int> seen;
    for (const Task& t : stream.tasks) {
        for (int c : t.classes)
            if (!seen.insert(c).second)
                throw ContractViolation("task stream: class " + std::to_string(c) +
                                        " appears in two tasks");
        for (int y : t.train_y)
            if (!t.classes.count(y))
                throw ContractViolation("task stream: train label outside task classes");
        for (int y : t.test_y)
            if (!t.classes.count(y))
                throw ContractViolation("task stream: test label outside task classes");
    }
    if (!expected.empty() && seen != expected)
        throw ContractViolation("task stream: class union differs from the dataset's classes");
}

/// Gaussian blob stream for fast CI-scale experiments: class means sit on a
/// centered simplex with pairwise distance `sep`, noise is unit isotropic.
/// Produces n_per_class train and n_per_class test examples per class.
inline TaskStream synth_gaussian_tasks(std::size_t n_classes, std::size_t dim,
                                       std::size_t n_per_class, double sep,
                                       std::uint64_t seed,
                                       std::size_t classes_per_task = 2) {
    if (n_classes < 1) throw ContractViolation("synth_gaussian_tasks: need >= 1 class");
    if (dim < n_classes)
        throw DimensionError("synth_gaussian_tasks: dim must be >= n_classes for the simplex");

    const double c = sep / std::sqrt(2.0);
    Matrix means(n_classes, dim);
    for (std::size_t k = 0; k < n_classes; ++k)
        for (std::size_t j = 0; j < dim; ++j) {
            const double e = (j == k) ? 1.0 : 0.0;
            means(k, j) = c * (e - 1.0 / static_cast<double>(n_classes));
        }

    Rng rng(seed, /*stream=*/0x6A55);
    auto draw_split = [&](Dataset& ds) {
        ds.images = Matrix(n_classes * n_per_class, dim);
        ds.labels.resize(n_classes * n_per_class);
        std::size_t at = 0;
        for (std::size_t k = 0; k < n_classes; ++k)
            for (std::size_t i = 0; i < n_per_class; ++i, ++at) {
                for (std::size_t j = 0; j < dim; ++j)
                    ds.images(at, j) = means(k, j) + rng.normal();
                ds.labels[at] = static_cast<int>(k);
            }
    };
    Dataset train, test;
    draw_split(train);
    draw_split(test);
    return split_class_incremental(train, test, classes_per_task, 0);
}

// --------------------------------------------------------------------------
// Synthetic segmentation scenes with scripted background shift.

/// One scene: image channels are stored channel-major (c*h*w, matching the
/// conv stack's input layout), the mask holds one class id per pixel with 0
/// for background. `fg_total` counts every shape pixel in the scene;
/// `fg_relabeled` counts those the phase's label policy pushed to background.
struct SegExample {
    std::vector<double> image;
    std::vector<int> mask;
    int fg_total = 0;
    int fg_relabeled = 0;
};

/// One segmentation task: scenes drawn from the same world, with train masks
/// keeping only this task's classes and test masks keeping everything seen so
/// far.
struct SegTask {
    std::set<int> classes;      // introduced this task
    std::set<int> seen_classes; // cumulative, for evaluation
    std::vector<SegExample> train;
    std::vector<SegExample> test;
};

namespace detail {

struct ScenePalette {
    static constexpr double colors[8][3] = {
        {0.95, 0.25, 0.20}, {0.20, 0.85, 0.30}, {0.25, 0.35, 0.95}, {0.95, 0.85, 0.20},
        {0.85, 0.25, 0.90}, {0.20, 0.85, 0.90}, {0.95, 0.55, 0.15}, {0.75, 0.95, 0.40},
    };
};

/// Pixels covered by one shape instance. Kind cycles disk/square/triangle.
inline std::vector<std::size_t> shape_pixels(int kind, std::size_t s, long cx, long cy,
                                             long r) {
    std::vector<std::size_t> px;
    for (long y = cy - r; y <= cy + r; ++y) {
        if (y < 0 || y >= static_cast<long>(s)) continue;
        for (long x = cx - r; x <= cx + r; ++x) {
            if (x < 0 || x >= static_cast<long>(s)) continue;
            const long dx = x - cx, dy = y - cy;
            bool in = false;
            switch (kind) {
                case 0: in = dx * dx + dy * dy <= r * r; break;
                case 1: in = std::abs(dx) <= (r * 4) / 5 && std::abs(dy) <= (r * 4) / 5; break;
                default: in = std::abs(dx) * 2 <= (y - (cy - r)); break; // upright triangle
            }
            if (in) px.push_back(static_cast<std::size_t>(y) * s + static_cast<std::size_t>(x));
        }
    }
    return px;
}

/// Paint one scene containing shapes of random classes from 1..n_classes.
/// Returns the full (unshifted) mask; `out` gets the textured image.
inline std::vector<int> paint_scene(std::size_t s, std::size_t n_classes, Rng& rng,
                                    std::vector<double>* out) {
    const std::size_t hw = s * s;
    out->assign(3 * hw, 0.0);
    // textured background: per-image sinusoid + pixel noise
    const double fx = rng.uniform(0.15, 0.6), fy = rng.uniform(0.15, 0.6);
    double phase[3];
    for (int ch = 0; ch < 3; ++ch) phase[ch] = rng.uniform(0.0, 6.28318);
    for (int ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x)
                (*out)[static_cast<std::size_t>(ch) * hw + y * s + x] =
                    0.25 + 0.10 * std::sin(fx * static_cast<double>(x) +
                                           fy * static_cast<double>(y) + phase[ch]) +
                    0.04 * (rng.uniform() - 0.5);

    std::vector<int> mask(hw, 0);
    const std::size_t n_shapes = 1 + rng.uniform_index(3);
    for (std::size_t k = 0; k < n_shapes; ++k) {
        const int cls = 1 + static_cast<int>(rng.uniform_index(n_classes));
        const int kind = (cls - 1) % 3;
        for (int attempt = 0; attempt < 25; ++attempt) {
            const long r = static_cast<long>(s / 8 + rng.uniform_index(std::max<std::uint64_t>(
                                                         1, s / 5 - s / 8 + 1)));
            const long cx = static_cast<long>(rng.uniform_index(s));
            const long cy = static_cast<long>(rng.uniform_index(s));
            const std::vector<std::size_t> px = shape_pixels(kind, s, cx, cy, r);
            if (px.size() < 6) continue;
            std::size_t overlap = 0;
            for (std::size_t p : px) overlap += mask[p] != 0;
            if (static_cast<double>(overlap) > 0.15 * static_cast<double>(px.size()))
                continue; // too much of an existing shape would be buried
            const double* col = ScenePalette::colors[(cls - 1) % 8];
            for (std::size_t p : px) {
                mask[p] = cls;
                for (int ch = 0; ch < 3; ++ch)
                    (*out)[static_cast<std::size_t>(ch) * hw + p] =
                        std::clamp(col[ch] + 0.03 * (rng.uniform() - 0.5), 0.0, 1.0);
            }
            break;
        }
    }
    return mask;
}

inline SegExample relabel_scene(const std::vector<double>& image,
                                const std::vector<int>& full_mask,
                                const std::set<int>& keep) {
    SegExample ex;
    ex.image = image;
    ex.mask.resize(full_mask.size());
    for (std::size_t p = 0; p < full_mask.size(); ++p) {
        const int c = full_mask[p];
        if (c != 0) ++ex.fg_total;
        if (c != 0 && !keep.count(c)) {
            ex.mask[p] = 0;
            ++ex.fg_relabeled;
        } else {
            ex.mask[p] = c;
        }
    }
    return ex;
}

} // namespace detail

/// Scenes of colored geometric shapes on a textured background, split into a
/// class-incremental sequence. Scenes mix shapes of every class throughout;
/// what shifts between tasks is the labeling: train masks keep only the
/// task's own classes (everything else becomes background), test masks keep
/// all classes seen so far.
inline std::vector<SegTask> synth_seg_tasks(std::size_t n_shape_classes,
                                            std::size_t image_size, std::size_t per_task,
                                            std::uint64_t seed,
                                            std::size_t classes_per_task = 1) {
    if (n_shape_classes < 1) throw ContractViolation("synth_seg_tasks: need >= 1 class");
    if (image_size < 12)
        throw ContractViolation("synth_seg_tasks: image_size too small for shapes");
    if (classes_per_task == 0)
        throw ContractViolation("synth_seg_tasks: classes_per_task must be >= 1");

    Rng rng(seed, /*stream=*/0x5E6);
    std::vector<SegTask> tasks;
    std::set<int> seen;
    for (std::size_t at = 0; at < n_shape_classes; at += classes_per_task) {
        SegTask task;
        const std::size_t hi = std::min(at + classes_per_task, n_shape_classes);
        for (std::size_t c = at; c < hi; ++c) task.classes.insert(static_cast<int>(c) + 1);
        seen.insert(task.classes.begin(), task.classes.end());
        task.seen_classes = seen;

        for (std::size_t i = 0; i < per_task; ++i) {
            std::vector<double> image;
            const std::vector<int> full = detail::paint_scene(image_size, n_shape_classes,
                                                              rng, &image);
            task.train.push_back(detail::relabel_scene(image, full, task.classes));
        }
        for (std::size_t i = 0; i < per_task; ++i) {
            std::vector<double> image;
            const std::vector<int> full = detail::paint_scene(image_size, n_shape_classes,
                                                              rng, &image);
            task.test.push_back(detail::relabel_scene(image, full, task.seen_classes));
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

} // namespace sdcl
