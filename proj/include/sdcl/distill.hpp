#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdcl/errors.hpp"
#include "sdcl/matrix.hpp"
#include "sdcl/nn.hpp"
#include "sdcl/subspace.hpp"
#include "sdcl/svd.hpp"
#include "sdcl/svd_backprop.hpp"

namespace sdcl {

struct LossDiagnostics {
    std::vector<double> distances; ///< per included class / channel group
    int degenerate_pairs = 0;      ///< spectral pairs clamped in the backward pass
    int truncation_warnings = 0;   ///< near-equal singular values at the subspace cut
    int skipped_classes = 0;       ///< below the sample threshold, or rank-collapsed
    bool empty = false;            ///< nothing qualified; value 0, no grads
};

struct LossResult {
    double value = 0.0;
    std::map<std::string, Matrix> grads; ///< keyed by input tensor role
    LossDiagnostics diagnostics;
};

/// Knobs for the subspace losses. `eps` is a relative degeneracy threshold:
/// the absolute clamp is eps * max(1, s0^2) per decomposition.
struct SDConfig {
    std::size_t m = 5;
    std::size_t group_size = 32;
    double eps = 1e-8;
    int min_samples_per_class = 2;

    void validate() const {
        if (m < 1) throw ContractViolation("SDConfig: m must be >= 1");
        if (group_size < m)
            throw ContractViolation("SDConfig: group_size must be >= m");
        if (eps <= 0.0) throw ContractViolation("SDConfig: eps must be positive");
    }
};

namespace detail {

/// Distance between top-m subspaces of two feature blocks plus the gradient
/// with respect to the new block. Returns false (and skips) when the new
/// block's top-m spectrum has collapsed below the clamping threshold.
inline bool subspace_block_term(const Matrix& f_new, const Matrix& f_old, std::size_t m,
                                double eps_rel, double* dist, Matrix* grad,
                                LossDiagnostics* diag) {
    ThinSvd svd_new = thin_svd(f_new);
    const double eps = eps_rel * std::max(1.0, svd_new.s[0] * svd_new.s[0]);
    for (std::size_t i = 0; i < m; ++i)
        if (svd_new.s[i] < eps) return false;

    const std::size_t r = svd_new.s.size();
    if (m < r && svd_new.s[m - 1] - svd_new.s[m] < 1e-10) ++diag->truncation_warnings;

    Subspace p_new{svd_new.u.first_cols(m)};
    Subspace p_old = top_m_subspace(f_old, m);
    if (p_old.degenerate_truncation) ++diag->truncation_warnings;

    *dist = projection_distance_sq(p_new, p_old);
    Matrix gp = grad_wrt_basis(p_new, p_old);
    int clamped = 0;
    *grad = svd_vjp(f_new, svd_new, gp, m, eps, &clamped);
    diag->degenerate_pairs += clamped;
    return true;
}

} // namespace detail

/// Class-wise subspace distillation for the classification track. Features
/// are column-per-sample (d x b), aligned between the new and old model; the
/// loss is the mean projection-metric distance between per-class subspaces,
/// over classes with enough samples in the batch. Gradient flows to
/// feats_new only.
inline LossResult sd_loss_cl(const Matrix& feats_new, const Matrix& feats_old,
                             const std::vector<int>& labels, const SDConfig& cfg) {
    cfg.validate();
    if (!feats_new.same_shape(feats_old))
        throw DimensionError("sd_loss_cl: feature shapes differ");
    if (labels.size() != feats_new.cols())
        throw DimensionError("sd_loss_cl: label count != feature columns");

    const std::size_t d = feats_new.rows();
    const std::size_t threshold =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::max(0, cfg.min_samples_per_class)));

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    LossResult res;
    Matrix grad(feats_new.rows(), feats_new.cols());
    int included = 0;
    for (const auto& [cls, cols] : by_class) {
        (void)cls;
        if (cols.size() < threshold) {
            ++res.diagnostics.skipped_classes;
            continue;
        }
        // d >= p is required downstream; an over-full class keeps its first d
        // columns (never hit with realistic batch sizes).
        const std::size_t take = std::min(cols.size(), d);
        const std::size_t m_k = std::min(cfg.m, take);

        Matrix f_new(d, take), f_old(d, take);
        for (std::size_t j = 0; j < take; ++j)
            for (std::size_t i = 0; i < d; ++i) {
                f_new(i, j) = feats_new(i, cols[j]);
                f_old(i, j) = feats_old(i, cols[j]);
            }

        double dist = 0.0;
        Matrix gblock;
        bool ok = false;
        try {
            ok = detail::subspace_block_term(f_new, f_old, m_k, cfg.eps, &dist, &gblock,
                                             &res.diagnostics);
        } catch (const NumericError&) {
            ok = false; // collapsed class spectrum: skip rather than kill training
        }
        if (!ok) {
            ++res.diagnostics.skipped_classes;
            continue;
        }
        ++included;
        res.value += dist;
        res.diagnostics.distances.push_back(dist);
        for (std::size_t j = 0; j < take; ++j)
            for (std::size_t i = 0; i < d; ++i) grad(i, cols[j]) += gblock(i, j);
    }

    if (included == 0) {
        res.value = 0.0;
        res.diagnostics.empty = true;
        return res;
    }
    const double inv = 1.0 / static_cast<double>(included);
    res.value *= inv;
    grad *= inv;
    res.grads["feats_new"] = std::move(grad);
    return res;
}

/// Channel-group subspace distillation for the segmentation track. Feature
/// maps are (h*w) x C, one row per pixel; channels are cut into groups of
/// cfg.group_size (the last group may be narrower, with m clipped to its
/// width), and the loss is the mean per-group subspace distance. Gradient to
/// fmap_new only.
inline LossResult sd_loss_css(const Matrix& fmap_new, const Matrix& fmap_old,
                              const SDConfig& cfg) {
    cfg.validate();
    if (!fmap_new.same_shape(fmap_old))
        throw DimensionError("sd_loss_css: feature map shapes differ");
    const std::size_t d = fmap_new.rows(); // pixels
    const std::size_t c = fmap_new.cols(); // channels
    if (d < cfg.m)
        throw DimensionError("sd_loss_css: pixel count " + std::to_string(d) +
                             " below subspace dim " + std::to_string(cfg.m));

    const std::size_t groups = (c + cfg.group_size - 1) / cfg.group_size;
    LossResult res;
    Matrix grad(d, c);
    int included = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t c0 = g * cfg.group_size;
        const std::size_t width = std::min(cfg.group_size, c - c0);
        const std::size_t m_g = std::min(cfg.m, width);

        Matrix f_new(d, width), f_old(d, width);
        for (std::size_t j = 0; j < width; ++j)
            for (std::size_t i = 0; i < d; ++i) {
                f_new(i, j) = fmap_new(i, c0 + j);
                f_old(i, j) = fmap_old(i, c0 + j);
            }

        double dist = 0.0;
        Matrix gblock;
        bool ok = false;
        try {
            ok = detail::subspace_block_term(f_new, f_old, m_g, cfg.eps, &dist, &gblock,
                                             &res.diagnostics);
        } catch (const NumericError&) {
            ok = false;
        }
        if (!ok) {
            ++res.diagnostics.skipped_classes;
            continue;
        }
        ++included;
        res.value += dist;
        res.diagnostics.distances.push_back(dist);
        for (std::size_t j = 0; j < width; ++j)
            for (std::size_t i = 0; i < d; ++i) grad(i, c0 + j) = gblock(i, j);
    }

    if (included == 0) {
        res.value = 0.0;
        res.diagnostics.empty = true;
        return res;
    }
    // Mean over all groups, not just the surviving ones: a group skipped for
    // rank collapse contributes zero rather than inflating the others.
    const double inv = 1.0 / static_cast<double>(groups);
    res.value *= inv;
    grad *= inv;
    res.grads["fmap_new"] = std::move(grad);
    return res;
}

/// Output distillation against the previous model's predictive distribution.
/// Teacher arrives as probabilities over the columns listed in `class_cols`
/// (student logit column indices); the student distribution is the softmax
/// over those same columns. Optional temperature smooths both sides.
inline LossResult output_kd(const Matrix& logits_new, const Matrix& probs_old,
                            const std::vector<std::size_t>& class_cols,
                            double temperature = 1.0) {
    const std::size_t b = logits_new.rows();
    const std::size_t k = class_cols.size();
    if (probs_old.rows() != b || probs_old.cols() != k)
        throw DimensionError("output_kd: teacher shape mismatch");
    if (temperature <= 0.0) throw ContractViolation("output_kd: temperature must be > 0");
    for (std::size_t c : class_cols)
        if (c >= logits_new.cols())
            throw ContractViolation("output_kd: class column out of range");

    Matrix teacher = probs_old;
    for (std::size_t i = 0; i < b; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += probs_old(i, j);
        if (std::abs(sum - 1.0) > 1e-6)
            throw ContractViolation("output_kd: teacher row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
        if (temperature != 1.0) {
            double tsum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                teacher(i, j) = std::pow(std::max(probs_old(i, j), 1e-300), 1.0 / temperature);
                tsum += teacher(i, j);
            }
            for (std::size_t j = 0; j < k; ++j) teacher(i, j) /= tsum;
        }
    }

    Matrix sel(b, k);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j) sel(i, j) = logits_new(i, class_cols[j]) / temperature;
    Matrix p = softmax_rows(sel);

    LossResult res;
    Matrix grad(logits_new.rows(), logits_new.cols());
    const double invb = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            res.value -= teacher(i, j) * std::log(std::max(p(i, j), 1e-300));
            grad(i, class_cols[j]) = invb / temperature * (p(i, j) - teacher(i, j));
        }
    res.value *= invb;
    res.grads["logits"] = std::move(grad);
    return res;
}

/// Mean absolute feature drift: (1/b) sum over samples of the L1 distance
/// between old and new features (column-per-sample). Subgradient
/// sign(new - old)/b, with sign(0) = 0.
inline LossResult l1_feature_distill(const Matrix& f_new, const Matrix& f_old) {
    if (!f_new.same_shape(f_old))
        throw DimensionError("l1_feature_distill: shapes differ");
    const double invb = 1.0 / static_cast<double>(f_new.cols());
    LossResult res;
    Matrix grad(f_new.rows(), f_new.cols());
    for (std::size_t i = 0; i < f_new.rows(); ++i)
        for (std::size_t j = 0; j < f_new.cols(); ++j) {
            const double diff = f_new(i, j) - f_old(i, j);
            res.value += std::abs(diff);
            grad(i, j) = diff > 0.0 ? invb : (diff < 0.0 ? -invb : 0.0);
        }
    res.value *= invb;
    res.grads["f_new"] = std::move(grad);
    return res;
}

/// Logit matching on memory samples: per-sample squared error averaged over
/// the stored width, then over the batch. Stored logits may be narrower than
/// the current head (they keep their storage-time width).
inline LossResult der_logit_loss(const Matrix& logits_new, const Matrix& stored_logits) {
    const std::size_t b = logits_new.rows();
    const std::size_t w = stored_logits.cols();
    if (stored_logits.rows() != b)
        throw DimensionError("der_logit_loss: batch size mismatch");
    if (w > logits_new.cols())
        throw DimensionError("der_logit_loss: stored wider than current head");
    LossResult res;
    Matrix grad(logits_new.rows(), logits_new.cols());
    const double scale = 1.0 / static_cast<double>(b * w);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double diff = logits_new(i, j) - stored_logits(i, j);
            res.value += diff * diff * scale;
            grad(i, j) = 2.0 * diff * scale;
        }
    res.grads["logits"] = std::move(grad);
    return res;
}

/// Per-pixel cross entropy that is aware of background shift: a pixel labeled
/// background is credited the total probability of {background} U old classes
/// (the old content now hiding in the background label), or of the old
/// classes alone in strict mode. Logits are (h*w) x channels; channel 0 is
/// background, then old classes, then current ones. Mask entries are channel
/// indices restricted to {0} U current.
inline LossResult ce_css(const Matrix& logits, const std::vector<int>& mask,
                         const std::set<int>& current_channels,
                         const std::set<int>& old_channels, bool bg_inclusive = true) {
    const std::size_t npix = logits.rows();
    if (mask.size() != npix) throw DimensionError("ce_css: mask size != pixel count");

    std::vector<char> in_bg_set(logits.cols(), 0);
    if (bg_inclusive) in_bg_set[0] = 1;
    for (int c : old_channels) {
        if (c <= 0 || static_cast<std::size_t>(c) >= logits.cols())
            throw ContractViolation("ce_css: old channel out of range");
        in_bg_set[c] = 1;
    }

    Matrix p = softmax_rows(logits);
    LossResult res;
    Matrix grad(logits.rows(), logits.cols());
    const double invn = 1.0 / static_cast<double>(npix);
    for (std::size_t x = 0; x < npix; ++x) {
        const int label = mask[x];
        if (label == 0) {
            double credited = 0.0;
            for (std::size_t j = 0; j < logits.cols(); ++j)
                if (in_bg_set[j]) credited += p(x, j);
            res.value -= std::log(std::max(credited, 1e-300));
            for (std::size_t j = 0; j < logits.cols(); ++j) {
                const double member = in_bg_set[j] ? p(x, j) / std::max(credited, 1e-300) : 0.0;
                grad(x, j) = invn * (p(x, j) - member);
            }
        } else {
            if (label < 0 || static_cast<std::size_t>(label) >= logits.cols() ||
                !current_channels.count(label))
                throw ParseError("ce_css: pixel " + std::to_string(x) + " has label " +
                                 std::to_string(label) + " outside the legal set");
            res.value -= std::log(std::max(p(x, label), 1e-300));
            for (std::size_t j = 0; j < logits.cols(); ++j)
                grad(x, j) = invn * (p(x, j) - (static_cast<int>(j) == label ? 1.0 : 0.0));
        }
    }
    res.value *= invn;
    res.grads["logits"] = std::move(grad);
    return res;
}

/// Output distillation under background shift: the teacher's background
/// probability is matched against the student's total mass on {background} U
/// current classes (current classes alone in strict mode), while old-class
/// channels map one-to-one. Teacher rows cover background + old channels;
/// student logits additionally have the current-task channels.
inline LossResult kd_css(const Matrix& logits_new, const Matrix& probs_old,
                         const std::set<int>& old_channels,
                         const std::set<int>& current_channels, bool bg_inclusive = true) {
    const std::size_t npix = logits_new.rows();
    if (probs_old.rows() != npix) throw DimensionError("kd_css: pixel count mismatch");
    if (probs_old.cols() != old_channels.size() + 1)
        throw DimensionError("kd_css: teacher channel count " +
                             std::to_string(probs_old.cols()) + " != 1 + " +
                             std::to_string(old_channels.size()));

    std::vector<char> absorbs(logits_new.cols(), 0); // channels absorbed into teacher bg
    if (bg_inclusive) absorbs[0] = 1;
    for (int c : current_channels) {
        if (c <= 0 || static_cast<std::size_t>(c) >= logits_new.cols())
            throw ContractViolation("kd_css: current channel out of range");
        absorbs[c] = 1;
    }
    // teacher column j>0 corresponds to the j-th old channel in ascending order
    std::vector<int> old_sorted(old_channels.begin(), old_channels.end());

    Matrix p = softmax_rows(logits_new);
    LossResult res;
    Matrix grad(logits_new.rows(), logits_new.cols());
    const double invn = 1.0 / static_cast<double>(npix);
    for (std::size_t x = 0; x < npix; ++x) {
        double tsum = 0.0;
        for (std::size_t j = 0; j < probs_old.cols(); ++j) tsum += probs_old(x, j);
        if (std::abs(tsum - 1.0) > 1e-6)
            throw ContractViolation("kd_css: teacher pixel " + std::to_string(x) +
                                    " not normalized");

        double s = 0.0; // student mass the teacher's bg channel is matched to
        for (std::size_t j = 0; j < logits_new.cols(); ++j)
            if (absorbs[j]) s += p(x, j);
        const double q_bg = probs_old(x, 0);
        res.value -= q_bg * std::log(std::max(s, 1e-300));
        for (std::size_t t = 0; t < old_sorted.size(); ++t) {
            const double q = probs_old(x, t + 1);
            res.value -= q * std::log(std::max(p(x, old_sorted[t]), 1e-300));
        }

        for (std::size_t j = 0; j < logits_new.cols(); ++j) {
            double g = p(x, j);
            if (absorbs[j]) g -= q_bg * p(x, j) / std::max(s, 1e-300);
            grad(x, j) = g;
        }
        for (std::size_t t = 0; t < old_sorted.size(); ++t)
            grad(x, old_sorted[t]) -= probs_old(x, t + 1);
        for (std::size_t j = 0; j < logits_new.cols(); ++j) grad(x, j) *= invn;
    }
    res.value *= invn;
    res.grads["logits"] = std::move(grad);
    return res;
}

} // namespace sdcl
