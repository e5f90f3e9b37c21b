#pragma once

#include <cstddef>
#include <string>

#include "frito/tensor.hpp"

namespace frito {

// Layout of an h x w patch grid over a mel spectrogram, plus the k global
// tokens prefixed to the flattened sequence. Flatten order is frequency-major:
// patch (a, b) with 1-based row a and column b lands at sequence index
// k + (a-1)*w + (b-1), so each frequency row occupies w contiguous slots.
struct PatchGrid {
    std::size_t h = 0;        // patch rows along frequency
    std::size_t w = 0;        // patch columns along time
    std::size_t patch_f = 1;  // mel bins per patch
    std::size_t patch_t = 1;  // frames per patch
    std::size_t k = 1;        // global token count
    std::size_t d = 0;        // embedding width

    std::size_t seq_len() const { return k + h * w; }
    std::size_t patch_dim() const { return patch_f * patch_t; }

    void validate() const {
        if (h == 0 || w == 0) throw ConfigError("patch grid requires h >= 1 and w >= 1");
        if (patch_f == 0 || patch_t == 0) throw ConfigError("patch size must be positive");
        if (d == 0) throw ConfigError("embedding width must be positive");
    }
};

template <class T>
struct PositionalEncoding {
    Tensor<T> freq_table;  // h x d
    Tensor<T> time_table;  // w x d
};

template <class T>
struct PatchProjection {
    Tensor<T> weight;  // (patch_f * patch_t) x d
    Tensor<T> bias;    // d
};

// Sequence index of patch (a, b), rows and columns 1-based.
inline std::size_t seq_index(const PatchGrid& grid, std::size_t a, std::size_t b) {
    if (a < 1 || a > grid.h || b < 1 || b > grid.w) {
        throw ConfigError("patch coordinates (" + std::to_string(a) + "," + std::to_string(b) +
                          ") outside grid " + std::to_string(grid.h) + "x" + std::to_string(grid.w));
    }
    return grid.k + (a - 1) * grid.w + (b - 1);
}

// Frequency row (0-based) of a patch token at sequence index i >= k.
inline std::size_t freq_row(const PatchGrid& grid, std::size_t i) {
    return (i - grid.k) / grid.w;
}

namespace detail {

template <class T>
void check_embed_inputs(const PatchGrid& grid, const Tensor<T>& spec,
                        const PatchProjection<T>& proj, const PositionalEncoding<T>& pos,
                        const Tensor<T>* globals) {
    grid.validate();
    if (spec.ndim() != 2) throw ShapeError("spectrogram must be 2-D (mels x frames)");
    if (grid.h * grid.patch_f > spec.rows() || grid.w * grid.patch_t > spec.cols()) {
        throw ShapeError("spectrogram " + spec.shape_string() + " too small for grid " +
                         std::to_string(grid.h * grid.patch_f) + "x" +
                         std::to_string(grid.w * grid.patch_t));
    }
    if (proj.weight.ndim() != 2 || proj.weight.rows() != grid.patch_dim() ||
        proj.weight.cols() != grid.d) {
        throw ShapeError("patch projection must be " + std::to_string(grid.patch_dim()) + "x" +
                         std::to_string(grid.d) + ", got " + proj.weight.shape_string());
    }
    if (proj.bias.size() != grid.d) throw ShapeError("patch projection bias width mismatch");
    if (pos.freq_table.rows() != grid.h || pos.freq_table.cols() != grid.d) {
        throw ShapeError("freq positional table must be h x d");
    }
    if (pos.time_table.rows() != grid.w || pos.time_table.cols() != grid.d) {
        throw ShapeError("time positional table must be w x d");
    }
    if (grid.k > 0) {
        if (!globals) throw ShapeError("k > 0 requires global embeddings");
        if (globals->rows() != grid.k || globals->cols() != grid.d) {
            throw ShapeError("global embeddings must be k x d");
        }
    }
}

// Copies patch (a, b) (1-based) of the spectrogram into a flat row-major
// (patch_f x patch_t) buffer. Trailing bins/frames beyond the grid are ignored.
template <class T>
void flatten_patch(const PatchGrid& grid, const Tensor<T>& spec, std::size_t a, std::size_t b,
                   T* out) {
    const std::size_t row0 = (a - 1) * grid.patch_f;
    const std::size_t col0 = (b - 1) * grid.patch_t;
    for (std::size_t m = 0; m < grid.patch_f; ++m) {
        const T* src = spec.data() + (row0 + m) * spec.cols() + col0;
        for (std::size_t f = 0; f < grid.patch_t; ++f) out[m * grid.patch_t + f] = src[f];
    }
}

}  // namespace detail

// Token sequence: globals unchanged at indices 0..k-1, then for each patch
// token proj(flatten(patch)) + bias + freq_table[row] + time_table[col].
template <class T>
Tensor<T> embed(const PatchGrid& grid, const Tensor<T>& spec, const PatchProjection<T>& proj,
                const PositionalEncoding<T>& pos, const Tensor<T>* globals) {
    detail::check_embed_inputs(grid, spec, proj, pos, globals);
    const std::size_t t = grid.seq_len();
    const std::size_t d = grid.d;
    const std::size_t pd = grid.patch_dim();
    Tensor<T> out({t, d});

    for (std::size_t g = 0; g < grid.k; ++g) {
        for (std::size_t j = 0; j < d; ++j) out.at(g, j) = globals->at(g, j);
    }

    std::vector<T> flat(pd);
    for (std::size_t a = 1; a <= grid.h; ++a) {
        for (std::size_t b = 1; b <= grid.w; ++b) {
            detail::flatten_patch(grid, spec, a, b, flat.data());
            T* tok = out.data() + seq_index(grid, a, b) * d;
            for (std::size_t j = 0; j < d; ++j) {
                T acc = proj.bias[j];
                for (std::size_t p = 0; p < pd; ++p) acc += flat[p] * proj.weight.at(p, j);
                tok[j] = acc + pos.freq_table.at(a - 1, j) + pos.time_table.at(b - 1, j);
            }
        }
    }
    return out;
}

template <class T>
struct EmbedGrads {
    Tensor<T> proj_weight;
    Tensor<T> proj_bias;
    Tensor<T> freq_table;
    Tensor<T> time_table;
    Tensor<T> globals;  // 1x1 placeholder when k == 0
};

// Gradients of embed() w.r.t. its parameters given upstream d(tokens).
template <class T>
EmbedGrads<T> embed_backward(const PatchGrid& grid, const Tensor<T>& spec,
                             const Tensor<T>& upstream) {
    grid.validate();
    const std::size_t d = grid.d;
    const std::size_t pd = grid.patch_dim();
    if (upstream.ndim() != 2 || upstream.rows() != grid.seq_len() || upstream.cols() != d) {
        throw ShapeError("embed_backward upstream must be t x d");
    }
    EmbedGrads<T> g{Tensor<T>({pd, d}), Tensor<T>({d}), Tensor<T>({grid.h, d}),
                    Tensor<T>({grid.w, d}),
                    Tensor<T>({grid.k > 0 ? grid.k : 1, d})};

    for (std::size_t gi = 0; gi < grid.k; ++gi) {
        for (std::size_t j = 0; j < d; ++j) g.globals.at(gi, j) += upstream.at(gi, j);
    }

    std::vector<T> flat(pd);
    for (std::size_t a = 1; a <= grid.h; ++a) {
        for (std::size_t b = 1; b <= grid.w; ++b) {
            detail::flatten_patch(grid, spec, a, b, flat.data());
            const T* dtok = upstream.data() + seq_index(grid, a, b) * d;
            for (std::size_t j = 0; j < d; ++j) {
                const T dv = dtok[j];
                g.proj_bias[j] += dv;
                g.freq_table.at(a - 1, j) += dv;
                g.time_table.at(b - 1, j) += dv;
                for (std::size_t p = 0; p < pd; ++p) g.proj_weight.at(p, j) += flat[p] * dv;
            }
        }
    }
    return g;
}

}  // namespace frito
