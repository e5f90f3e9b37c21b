#include "frito/freq_mask.hpp"

#include <algorithm>
#include <limits>

#include "frito/errors.hpp"

namespace frito {

void FreqMaskSpec::validate() const {
    if (h == 0 || w == 0) throw ConfigError("mask spec requires h >= 1 and w >= 1");
    if (r == 0) throw ConfigError("mask spec requires r >= 1");
    if (v == 0) throw ConfigError("mask spec requires v >= 1");
}

AttentionMask::AttentionMask(std::size_t t, std::size_t k, std::vector<std::uint8_t> visible,
                             std::vector<MaskBlock> blocks)
    : t_(t), k_(k), vis_(std::move(visible)), blocks_(std::move(blocks)),
      additive_f32_({t, t}), additive_f64_({t, t}) {
    if (vis_.size() != t * t) throw ShapeError("visibility matrix size mismatch");
    for (std::size_t i = 0; i < t; ++i) {
        if (!vis_[i * t + i]) throw MaskError("mask diagonal must be visible at " + std::to_string(i));
        for (std::size_t j = 0; j < i; ++j) {
            if (vis_[i * t + j] != vis_[j * t + i]) {
                throw MaskError("mask must be symmetric; differs at (" + std::to_string(i) +
                                "," + std::to_string(j) + ")");
            }
        }
    }
    const float ninf_f = -std::numeric_limits<float>::infinity();
    const double ninf_d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < vis_.size(); ++i) {
        additive_f32_[i] = vis_[i] ? 0.0f : ninf_f;
        additive_f64_[i] = vis_[i] ? 0.0 : ninf_d;
    }
}

std::size_t AttentionMask::zero_count() const {
    return static_cast<std::size_t>(std::count(vis_.begin(), vis_.end(), std::uint8_t(1)));
}

std::string AttentionMask::ascii() const {
    std::string out;
    out.reserve(t_ * (t_ + 1));
    for (std::size_t i = 0; i < t_; ++i) {
        for (std::size_t j = 0; j < t_; ++j) out.push_back(vis_[i * t_ + j] ? '#' : '.');
        out.push_back('\n');
    }
    return out;
}

Tensor<float> AttentionMask::export_tensor() const {
    Tensor<float> out({t_, t_});
    for (std::size_t i = 0; i < vis_.size(); ++i) out[i] = vis_[i] ? 0.0f : -1e9f;
    return out;
}

bool visible(const FreqMaskSpec& spec, std::size_t i, std::size_t j) {
    spec.validate();
    const std::size_t t = spec.seq_len();
    if (i >= t || j >= t) {
        throw ConfigError("mask index out of range: (" + std::to_string(i) + "," +
                          std::to_string(j) + ") for t=" + std::to_string(t));
    }
    if (i < spec.k || j < spec.k) return true;
    const std::size_t row_i = (i - spec.k) / spec.w;
    const std::size_t row_j = (j - spec.k) / spec.w;
    const std::size_t ci = row_i / spec.r;
    const std::size_t cj = row_j / spec.r;
    const std::size_t dist = ci > cj ? ci - cj : cj - ci;
    return dist < spec.v;
}

AttentionMask build_mask(const FreqMaskSpec& spec) {
    spec.validate();
    const std::size_t t = spec.seq_len();
    std::vector<std::uint8_t> vis(t * t, 0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            vis[i * t + j] = visible(spec, i, j) ? 1 : 0;
        }
    }

    std::vector<MaskBlock> blocks;
    if (spec.v == 1) {
        const std::size_t clusters = spec.cluster_count();
        blocks.reserve(clusters);
        for (std::size_t c = 0; c < clusters; ++c) {
            const std::size_t row_begin = c * spec.r;
            const std::size_t row_end = std::min(row_begin + spec.r, spec.h);
            blocks.push_back({spec.k + row_begin * spec.w, (row_end - row_begin) * spec.w});
        }
    }
    return AttentionMask(t, spec.k, std::move(vis), std::move(blocks));
}

AttentionMask oracle_mask(const FreqMaskSpec& spec) {
    spec.validate();
    const std::size_t t = spec.seq_len();
    std::vector<std::uint8_t> vis(t * t, 0);

    // Window of r*v rows starting at each cluster boundary c*r; every pair of
    // patches whose rows both fall in the window sees each other.
    for (std::size_t c = 0; c < spec.cluster_count(); ++c) {
        const std::size_t lo = c * spec.r;
        const std::size_t hi = std::min(lo + spec.r * spec.v, spec.h);
        const std::size_t begin = spec.k + lo * spec.w;
        const std::size_t end = spec.k + hi * spec.w;
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = begin; j < end; ++j) vis[i * t + j] = 1;
        }
    }
    // Global rows and columns.
    for (std::size_t g = 0; g < spec.k; ++g) {
        for (std::size_t j = 0; j < t; ++j) {
            vis[g * t + j] = 1;
            vis[j * t + g] = 1;
        }
    }
    return AttentionMask(t, spec.k, std::move(vis), {});
}

}  // namespace frito
