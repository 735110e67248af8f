#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/io.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/rng.hpp"

namespace sdcl {

enum class LayerKind : std::uint8_t { linear = 0, relu = 1, conv2d = 2, flatten = 3 };

/// One body layer. Linear weights are stored in x out; conv2d kernels are
/// 3x3, pad 1, stride 1, stored out_ch x (in_ch*9) with column layout
/// (ic*3 + dy)*3 + dx.
struct Layer {
    LayerKind kind;
    Matrix w, gw, mw;                  // parameters, gradients, momentum
    std::vector<double> b, gb, mb;
    std::size_t in_dim = 0, out_dim = 0;   // linear
    std::size_t in_ch = 0, out_ch = 0;     // conv2d

    static Layer linear(std::size_t in, std::size_t out, Rng& rng) {
        Layer l;
        l.kind = LayerKind::linear;
        l.in_dim = in;
        l.out_dim = out;
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        l.w = Matrix(in, out);
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < out; ++j) l.w(i, j) = rng.uniform(-limit, limit);
        l.gw = Matrix(in, out);
        l.b.assign(out, 0.0);
        l.gb.assign(out, 0.0);
        return l;
    }

    static Layer relu() {
        Layer l;
        l.kind = LayerKind::relu;
        return l;
    }

    static Layer flatten() {
        Layer l;
        l.kind = LayerKind::flatten;
        return l;
    }

    static Layer conv2d(std::size_t in_ch, std::size_t out_ch, Rng& rng) {
        Layer l;
        l.kind = LayerKind::conv2d;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        const double limit = std::sqrt(6.0 / static_cast<double>(in_ch * 9));
        l.w = Matrix(out_ch, in_ch * 9);
        for (std::size_t i = 0; i < out_ch; ++i)
            for (std::size_t j = 0; j < in_ch * 9; ++j) l.w(i, j) = rng.uniform(-limit, limit);
        l.gw = Matrix(out_ch, in_ch * 9);
        l.b.assign(out_ch, 0.0);
        l.gb.assign(out_ch, 0.0);
        return l;
    }

    bool has_params() const {
        return kind == LayerKind::linear || kind == LayerKind::conv2d;
    }
};

/// The single classifier head over every class seen so far. Starts with no
/// classes; expand_head appends zero-initialized output columns. In pixelwise
/// mode the same weights act as a 1x1 conv producing per-pixel logits.
struct Head {
    Matrix w, gw, mw;          // in_dim x n_classes
    std::vector<double> b, gb, mb;
    std::size_t in_dim = 0;
    bool pixelwise = false;
    std::vector<int> class_ids; // column order of the logits

    std::size_t n_classes() const { return class_ids.size(); }
};

/// Activations captured at a registered layer, in the layer's native batch
/// layout (one row per sample). Helpers below reshape to the forms the
/// distillation losses want: features as columns, or per-sample maps with one
/// row per pixel and one column per channel.
struct FeatureTap {
    std::size_t layer_index;
    Matrix captured;
};

struct ForwardResult {
    Matrix logits;                // b x C, or b x (C*h*w) for pixelwise heads
    std::vector<FeatureTap> taps;
};

/// d x b view of a tap from a flat (non-conv) layer: one column per sample.
inline Matrix features_as_columns(const Matrix& captured) { return captured.transpose(); }

/// (h*w) x C map for one sample of a conv tap whose rows are channel-major.
inline Matrix feature_map_of_sample(const Matrix& captured, std::size_t sample,
                                    std::size_t channels) {
    if (captured.cols() % channels != 0)
        throw DimensionError("feature_map_of_sample: row width not divisible by channels");
    const std::size_t hw = captured.cols() / channels;
    Matrix out(hw, channels);
    const double* row = captured.row_ptr(sample);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t pix = 0; pix < hw; ++pix) out(pix, c) = row[c * hw + pix];
    return out;
}

class Network {
  public:
    std::vector<Layer> layers;
    Head head;
    std::vector<std::size_t> taps; // layer indices whose outputs are exposed
    std::size_t in_h = 0, in_w = 0; // spatial dims, conv bodies only

    ForwardResult forward(const Matrix& x) {
        if (head.n_classes() == 0)
            throw ContractViolation("Network::forward: head has no classes yet");
        cache_.input = x;
        cache_.acts.clear();
        cache_.acts.reserve(layers.size());

        const Matrix* cur = &cache_.input;
        std::size_t h = in_h, w = in_w;
        for (const Layer& l : layers) {
            cache_.acts.push_back(layer_forward(l, *cur, h, w));
            cur = &cache_.acts.back();
        }
        cache_.valid = true;

        ForwardResult out;
        out.logits = head_forward(*cur, h, w);
        cache_.logits_rows = out.logits.rows();
        for (std::size_t idx : taps) {
            if (idx >= layers.size())
                throw ContractViolation("Network: tap index out of range");
            out.taps.push_back({idx, cache_.acts[idx]});
        }
        return out;
    }

    /// Accumulates parameter gradients for the batch of the last forward call.
    /// tap_grads are keyed by layer index, shaped like the captured
    /// activations, and added to the flowing gradient at their layer.
    void backward(const Matrix& grad_logits,
                  const std::map<std::size_t, Matrix>& tap_grads = {}) {
        if (!cache_.valid)
            throw ContractViolation("Network::backward: no fresh forward cache");
        if (grad_logits.rows() != cache_.logits_rows)
            throw DimensionError("Network::backward: grad_logits batch mismatch");
        cache_.valid = false;

        const Matrix& head_in = layers.empty() ? cache_.input : cache_.acts.back();
        Matrix g = head_backward(head_in, grad_logits);

        for (std::size_t i = layers.size(); i-- > 0;) {
            auto it = tap_grads.find(i);
            if (it != tap_grads.end()) {
                if (!it->second.same_shape(cache_.acts[i]))
                    throw DimensionError("Network::backward: tap grad shape mismatch at layer " +
                                         std::to_string(i));
                g += it->second;
            }
            const Matrix& in = (i == 0) ? cache_.input : cache_.acts[i - 1];
            g = layer_backward(layers[i], in, cache_.acts[i], g);
        }
    }

    /// SGD update (optionally with classical momentum); zeroes the gradients.
    void sgd_step(double lr, double momentum = 0.0) {
        cache_.valid = false;
        for (Layer& l : layers)
            if (l.has_params())
                apply_update(l.w, l.gw, l.mw, l.b, l.gb, l.mb, lr, momentum);
        if (head.n_classes() > 0)
            apply_update(head.w, head.gw, head.mw, head.b, head.gb, head.mb, lr, momentum);
    }

    void zero_grads() {
        for (Layer& l : layers)
            if (l.has_params()) {
                l.gw *= 0.0;
                std::fill(l.gb.begin(), l.gb.end(), 0.0);
            }
        if (head.n_classes() > 0) {
            head.gw *= 0.0;
            std::fill(head.gb.begin(), head.gb.end(), 0.0);
        }
    }

    /// Appends zero-initialized head columns for the new classes, leaving the
    /// logits of previously known classes bit-identical.
    void expand_head(const std::vector<int>& new_classes) {
        for (int c : new_classes)
            if (std::find(head.class_ids.begin(), head.class_ids.end(), c) !=
                head.class_ids.end())
                throw ContractViolation("expand_head: class " + std::to_string(c) +
                                        " already present");
        const std::size_t old_n = head.n_classes();
        const std::size_t new_n = old_n + new_classes.size();
        if (new_classes.empty()) return;

        Matrix w(head.in_dim, new_n), gw(head.in_dim, new_n);
        Matrix mw = head.mw.size() > 0 ? Matrix(head.in_dim, new_n) : Matrix();
        for (std::size_t i = 0; i < head.in_dim; ++i)
            for (std::size_t j = 0; j < old_n; ++j) {
                w(i, j) = head.w(i, j);
                gw(i, j) = head.gw(i, j);
                if (mw.size() > 0) mw(i, j) = head.mw(i, j);
            }
        head.w = std::move(w);
        head.gw = std::move(gw);
        head.mw = std::move(mw);
        head.b.resize(new_n, 0.0);
        head.gb.resize(new_n, 0.0);
        if (!head.mb.empty()) head.mb.resize(new_n, 0.0);
        head.class_ids.insert(head.class_ids.end(), new_classes.begin(), new_classes.end());
        cache_.valid = false;
    }

    /// Frozen deep copy for use as the previous-task model.
    Network snapshot() const {
        Network copy = *this;
        copy.cache_ = Cache{};
        return copy;
    }

  private:
    struct Cache {
        Matrix input;
        std::vector<Matrix> acts;
        std::size_t logits_rows = 0;
        bool valid = false;
    };
    Cache cache_;

    static void apply_update(Matrix& w, Matrix& gw, Matrix& mw, std::vector<double>& b,
                             std::vector<double>& gb, std::vector<double>& mb, double lr,
                             double momentum) {
        if (momentum > 0.0) {
            if (mw.size() == 0) mw = Matrix(w.rows(), w.cols());
            if (mb.size() != b.size()) mb.assign(b.size(), 0.0);
            for (std::size_t i = 0; i < w.size(); ++i) {
                mw.data()[i] = momentum * mw.data()[i] + gw.data()[i];
                w.data()[i] -= lr * mw.data()[i];
            }
            for (std::size_t i = 0; i < b.size(); ++i) {
                mb[i] = momentum * mb[i] + gb[i];
                b[i] -= lr * mb[i];
            }
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * gw.data()[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
        }
        gw *= 0.0;
        std::fill(gb.begin(), gb.end(), 0.0);
    }

    Matrix layer_forward(const Layer& l, const Matrix& x, std::size_t h, std::size_t w) {
        switch (l.kind) {
            case LayerKind::linear: {
                if (x.cols() != l.in_dim)
                    throw DimensionError("linear forward: input width " +
                                         std::to_string(x.cols()) + " != " +
                                         std::to_string(l.in_dim));
                Matrix out = x * l.w;
                for (std::size_t i = 0; i < out.rows(); ++i)
                    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += l.b[j];
                return out;
            }
            case LayerKind::relu: {
                Matrix out = x;
                for (std::size_t i = 0; i < out.size(); ++i)
                    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
                return out;
            }
            case LayerKind::flatten:
                return x; // rows are already flat
            case LayerKind::conv2d:
                return conv_forward(l, x, h, w);
        }
        throw ContractViolation("layer_forward: unknown kind");
    }

    Matrix conv_forward(const Layer& l, const Matrix& x, std::size_t h, std::size_t w) {
        if (h == 0 || w == 0)
            throw ContractViolation("conv forward: network has no spatial dims");
        const std::size_t hw = h * w;
        if (x.cols() != l.in_ch * hw)
            throw DimensionError("conv forward: input width " + std::to_string(x.cols()) +
                                 " != in_ch*h*w = " + std::to_string(l.in_ch * hw));
        Matrix out(x.rows(), l.out_ch * hw);
        for (std::size_t s = 0; s < x.rows(); ++s) {
            const double* in = x.row_ptr(s);
            double* outp = out.row_ptr(s);
            for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
                double* ochan = outp + oc * hw;
                for (std::size_t i = 0; i < hw; ++i) ochan[i] = l.b[oc];
                for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                    const double* ichan = in + ic * hw;
                    for (std::size_t dy = 0; dy < 3; ++dy) {
                        const std::size_t y0 = dy == 0 ? 1 : 0;
                        const std::size_t y1 = dy == 2 ? h - 1 : h;
                        for (std::size_t dx = 0; dx < 3; ++dx) {
                            const double wv = l.w(oc, (ic * 3 + dy) * 3 + dx);
                            if (wv == 0.0) continue;
                            const std::size_t x0 = dx == 0 ? 1 : 0;
                            const std::size_t x1 = dx == 2 ? w - 1 : w;
                            const std::ptrdiff_t shift =
                                static_cast<std::ptrdiff_t>(dx) - 1;
                            for (std::size_t y = y0; y < y1; ++y) {
                                const double* irow = ichan + (y + dy - 1) * w;
                                double* orow = ochan + y * w;
                                for (std::size_t xx = x0; xx < x1; ++xx)
                                    orow[xx] += wv * irow[static_cast<std::ptrdiff_t>(xx) +
                                                          shift];
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Matrix layer_backward(Layer& l, const Matrix& in, const Matrix& out, const Matrix& g) {
        switch (l.kind) {
            case LayerKind::linear: {
                // gw += in' g ; gb += column sums ; returns g w'
                l.gw += in.transpose() * g;
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) l.gb[j] += g(i, j);
                return g * l.w.transpose();
            }
            case LayerKind::relu: {
                Matrix gx = g;
                for (std::size_t i = 0; i < gx.size(); ++i)
                    if (out.data()[i] <= 0.0) gx.data()[i] = 0.0;
                return gx;
            }
            case LayerKind::flatten:
                return g;
            case LayerKind::conv2d:
                return conv_backward(l, in, g);
        }
        throw ContractViolation("layer_backward: unknown kind");
    }

    Matrix conv_backward(Layer& l, const Matrix& in, const Matrix& g) {
        const std::size_t h = in_h, w = in_w, hw = h * w;
        Matrix gin(in.rows(), in.cols());
        for (std::size_t s = 0; s < in.rows(); ++s) {
            const double* inp = in.row_ptr(s);
            const double* gp = g.row_ptr(s);
            double* ginp = gin.row_ptr(s);
            for (std::size_t oc = 0; oc < l.out_ch; ++oc) {
                const double* gchan = gp + oc * hw;
                for (std::size_t i = 0; i < hw; ++i) l.gb[oc] += gchan[i];
                for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                    const double* ichan = inp + ic * hw;
                    double* gichan = ginp + ic * hw;
                    for (std::size_t dy = 0; dy < 3; ++dy) {
                        const std::size_t y0 = dy == 0 ? 1 : 0;
                        const std::size_t y1 = dy == 2 ? h - 1 : h;
                        for (std::size_t dx = 0; dx < 3; ++dx) {
                            const std::size_t x0 = dx == 0 ? 1 : 0;
                            const std::size_t x1 = dx == 2 ? w - 1 : w;
                            const std::ptrdiff_t shift =
                                static_cast<std::ptrdiff_t>(dx) - 1;
                            const double wv = l.w(oc, (ic * 3 + dy) * 3 + dx);
                            double acc = 0.0;
                            for (std::size_t y = y0; y < y1; ++y) {
                                const double* irow = ichan + (y + dy - 1) * w;
                                double* girow = gichan + (y + dy - 1) * w;
                                const double* grow = gchan + y * w;
                                for (std::size_t xx = x0; xx < x1; ++xx) {
                                    const std::ptrdiff_t xi =
                                        static_cast<std::ptrdiff_t>(xx) + shift;
                                    acc += grow[xx] * irow[xi];
                                    girow[xi] += wv * grow[xx];
                                }
                            }
                            l.gw(oc, (ic * 3 + dy) * 3 + dx) += acc;
                        }
                    }
                }
            }
        }
        return gin;
    }

    Matrix head_forward(const Matrix& x, std::size_t h, std::size_t w) {
        const std::size_t c = head.n_classes();
        if (!head.pixelwise) {
            if (x.cols() != head.in_dim)
                throw DimensionError("head forward: input width " + std::to_string(x.cols()) +
                                     " != " + std::to_string(head.in_dim));
            Matrix out = x * head.w;
            for (std::size_t i = 0; i < out.rows(); ++i)
                for (std::size_t j = 0; j < c; ++j) out(i, j) += head.b[j];
            return out;
        }
        const std::size_t hw = h * w;
        if (x.cols() != head.in_dim * hw)
            throw DimensionError("pixelwise head: input width mismatch");
        Matrix out(x.rows(), c * hw);
        for (std::size_t s = 0; s < x.rows(); ++s) {
            const double* inp = x.row_ptr(s);
            double* outp = out.row_ptr(s);
            for (std::size_t co = 0; co < c; ++co) {
                double* ochan = outp + co * hw;
                for (std::size_t i = 0; i < hw; ++i) ochan[i] = head.b[co];
                for (std::size_t ci = 0; ci < head.in_dim; ++ci) {
                    const double wv = head.w(ci, co);
                    const double* ichan = inp + ci * hw;
                    for (std::size_t i = 0; i < hw; ++i) ochan[i] += wv * ichan[i];
                }
            }
        }
        return out;
    }

    Matrix head_backward(const Matrix& head_in, const Matrix& g) {
        if (!head.pixelwise) {
            head.gw += head_in.transpose() * g;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) head.gb[j] += g(i, j);
            return g * head.w.transpose();
        }
        const std::size_t c = head.n_classes();
        const std::size_t hw = head_in.cols() / head.in_dim;
        Matrix gin(head_in.rows(), head_in.cols());
        for (std::size_t s = 0; s < head_in.rows(); ++s) {
            const double* inp = head_in.row_ptr(s);
            const double* gp = g.row_ptr(s);
            double* ginp = gin.row_ptr(s);
            for (std::size_t co = 0; co < c; ++co) {
                const double* gchan = gp + co * hw;
                for (std::size_t i = 0; i < hw; ++i) head.gb[co] += gchan[i];
                for (std::size_t ci = 0; ci < head.in_dim; ++ci) {
                    const double* ichan = inp + ci * hw;
                    double* gichan = ginp + ci * hw;
                    const double wv = head.w(ci, co);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < hw; ++i) {
                        acc += gchan[i] * ichan[i];
                        gichan[i] += wv * gchan[i];
                    }
                    head.gw(ci, co) += acc;
                }
            }
        }
        return gin;
    }
};

/// 784 -> hidden -> hidden MLP body with ReLU; the head starts empty and
/// grows via expand_head.
inline Network make_mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
    Network net;
    std::size_t cur = in_dim;
    for (std::size_t hdim : hidden) {
        net.layers.push_back(Layer::linear(cur, hdim, rng));
        net.layers.push_back(Layer::relu());
        cur = hdim;
    }
    net.head.in_dim = cur;
    return net;
}

/// Small conv body for the segmentation toy: 3x3 conv+ReLU stages and a
/// per-pixel (1x1) head. Taps sit on the conv outputs.
inline Network make_conv_net(std::size_t in_ch, std::size_t h, std::size_t w,
                             const std::vector<std::size_t>& channels, Rng& rng) {
    Network net;
    net.in_h = h;
    net.in_w = w;
    std::size_t cur = in_ch;
    for (std::size_t ch : channels) {
        net.taps.push_back(net.layers.size());
        net.layers.push_back(Layer::conv2d(cur, ch, rng));
        net.layers.push_back(Layer::relu());
        cur = ch;
    }
    net.head.in_dim = cur;
    net.head.pixelwise = true;
    return net;
}

/// Logits outside `allowed` are forced to -inf so softmax/argmax see only the
/// permitted classes.
inline Matrix mask_logits(const Matrix& logits, const std::vector<int>& column_ids,
                          const std::set<int>& allowed) {
    if (allowed.empty()) throw ContractViolation("mask_logits: empty class set");
    if (logits.cols() != column_ids.size())
        throw DimensionError("mask_logits: column/id count mismatch");
    Matrix out = logits;
    for (std::size_t j = 0; j < column_ids.size(); ++j) {
        if (allowed.count(column_ids[j])) continue;
        for (std::size_t i = 0; i < out.rows(); ++i)
            out(i, j) = -std::numeric_limits<double>::infinity();
    }
    return out;
}

/// Row-wise softmax, stable under -inf entries (fully masked rows are an
/// error upstream, not here).
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < p.cols(); ++j) mx = std::max(mx, p(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double e = std::exp(p(i, j) - mx);
            p(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= sum;
    }
    return p;
}

/// Mean cross-entropy over the batch; targets are column indices into the
/// logits. Returns the loss and fills grad (d loss / d logits, including the
/// 1/batch factor).
inline double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& targets,
                            Matrix* grad = nullptr) {
    if (targets.size() != logits.rows())
        throw DimensionError("cross_entropy: target count != batch size");
    Matrix p = softmax_rows(logits);
    const double invb = 1.0 / static_cast<double>(logits.rows());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (targets[i] >= logits.cols())
            throw ContractViolation("cross_entropy: target column out of range");
        loss -= std::log(std::max(p(i, targets[i]), 1e-300));
    }
    loss *= invb;
    if (grad) {
        *grad = p;
        for (std::size_t i = 0; i < logits.rows(); ++i) (*grad)(i, targets[i]) -= 1.0;
        *grad *= invb;
    }
    return loss;
}

// --- checkpoint serialization -----------------------------------------------
// Versioned little-endian binary: magic "SDCKPT01", then layer count and per
// layer a kind tag + shape + raw 64-bit reals, then the head section and the
// network's tap/spatial metadata.

inline void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("checkpoint: cannot open " + path + " for writing");
    detail::put_magic(os);
    detail::put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& l : net.layers) {
        os.put(static_cast<char>(l.kind));
        switch (l.kind) {
            case LayerKind::linear:
                detail::put_u32(os, static_cast<std::uint32_t>(l.in_dim));
                detail::put_u32(os, static_cast<std::uint32_t>(l.out_dim));
                detail::put_doubles(os, l.w.data(), l.w.size());
                detail::put_doubles(os, l.b.data(), l.b.size());
                break;
            case LayerKind::conv2d:
                detail::put_u32(os, static_cast<std::uint32_t>(l.in_ch));
                detail::put_u32(os, static_cast<std::uint32_t>(l.out_ch));
                detail::put_doubles(os, l.w.data(), l.w.size());
                detail::put_doubles(os, l.b.data(), l.b.size());
                break;
            case LayerKind::relu:
            case LayerKind::flatten:
                break;
        }
    }
    // head section
    detail::put_u32(os, static_cast<std::uint32_t>(net.head.in_dim));
    detail::put_u32(os, static_cast<std::uint32_t>(net.head.n_classes()));
    os.put(net.head.pixelwise ? 1 : 0);
    for (int c : net.head.class_ids) detail::put_u32(os, static_cast<std::uint32_t>(c));
    if (net.head.n_classes() > 0) {
        detail::put_doubles(os, net.head.w.data(), net.head.w.size());
        detail::put_doubles(os, net.head.b.data(), net.head.b.size());
    }
    // taps + spatial dims
    detail::put_u32(os, static_cast<std::uint32_t>(net.taps.size()));
    for (std::size_t t : net.taps) detail::put_u32(os, static_cast<std::uint32_t>(t));
    detail::put_u32(os, static_cast<std::uint32_t>(net.in_h));
    detail::put_u32(os, static_cast<std::uint32_t>(net.in_w));
    if (!os) throw ParseError("checkpoint: write failed for " + path);
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("checkpoint: cannot open " + path);
    detail::check_magic(is, "checkpoint " + path);

    Network net;
    const std::uint32_t n_layers = detail::get_u32(is);
    if (n_layers > 100000)
        throw ParseError("checkpoint: implausible layer count in " + path +
                         " (is this a replay buffer dump?)");
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        int kind = is.get();
        if (kind < 0) throw ParseError("checkpoint: truncated (layer kind)");
        Layer l;
        l.kind = static_cast<LayerKind>(kind);
        switch (l.kind) {
            case LayerKind::linear: {
                l.in_dim = detail::get_u32(is);
                l.out_dim = detail::get_u32(is);
                l.w = Matrix(l.in_dim, l.out_dim);
                detail::get_doubles(is, l.w.data(), l.w.size());
                l.b.resize(l.out_dim);
                detail::get_doubles(is, l.b.data(), l.b.size());
                l.gw = Matrix(l.in_dim, l.out_dim);
                l.gb.assign(l.out_dim, 0.0);
                break;
            }
            case LayerKind::conv2d: {
                l.in_ch = detail::get_u32(is);
                l.out_ch = detail::get_u32(is);
                l.w = Matrix(l.out_ch, l.in_ch * 9);
                detail::get_doubles(is, l.w.data(), l.w.size());
                l.b.resize(l.out_ch);
                detail::get_doubles(is, l.b.data(), l.b.size());
                l.gw = Matrix(l.out_ch, l.in_ch * 9);
                l.gb.assign(l.out_ch, 0.0);
                break;
            }
            case LayerKind::relu:
            case LayerKind::flatten:
                break;
            default:
                throw ParseError("checkpoint: unknown layer kind " + std::to_string(kind));
        }
        net.layers.push_back(std::move(l));
    }
    net.head.in_dim = detail::get_u32(is);
    const std::uint32_t n_classes = detail::get_u32(is);
    const int pix = is.get();
    if (pix < 0) throw ParseError("checkpoint: truncated (head)");
    net.head.pixelwise = pix != 0;
    for (std::uint32_t i = 0; i < n_classes; ++i)
        net.head.class_ids.push_back(static_cast<int>(detail::get_u32(is)));
    if (n_classes > 0) {
        net.head.w = Matrix(net.head.in_dim, n_classes);
        detail::get_doubles(is, net.head.w.data(), net.head.w.size());
        net.head.b.resize(n_classes);
        detail::get_doubles(is, net.head.b.data(), net.head.b.size());
        net.head.gw = Matrix(net.head.in_dim, n_classes);
        net.head.gb.assign(n_classes, 0.0);
    }
    const std::uint32_t n_taps = detail::get_u32(is);
    for (std::uint32_t i = 0; i < n_taps; ++i) net.taps.push_back(detail::get_u32(is));
    net.in_h = detail::get_u32(is);
    net.in_w = detail::get_u32(is);
    return net;
}

} // namespace sdcl
