#pragma once

#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "frito/freq_mask.hpp"
#include "frito/tensor.hpp"

namespace frito {

// Cumulative count of attention-score scalars materialized by the attention
// forward paths since the last reset. Drives the memory comparison between
// full and sparse execution; one full forward adds (per-head scalars) * heads.
void score_counter_reset();
std::uint64_t score_counter_scalars();

namespace detail {
void note_score_scalars(std::uint64_t n);
}

template <class T>
struct AttentionParams {
    Tensor<T> wq, wk, wv, wo;  // d x d
    Tensor<T> bq, bk, bv, bo;  // d
    std::size_t heads = 1;

    std::size_t d() const { return wq.rows(); }
    std::size_t head_dim() const { return d() / heads; }

    void validate() const {
        const std::size_t dim = d();
        for (const Tensor<T>* w : {&wq, &wk, &wv, &wo}) {
            if (w->ndim() != 2 || w->rows() != dim || w->cols() != dim) {
                throw ShapeError("attention weight must be d x d, got " + w->shape_string());
            }
        }
        for (const Tensor<T>* b : {&bq, &bk, &bv, &bo}) {
            if (b->ndim() != 1 || b->size() != dim) {
                throw ShapeError("attention bias must have width d");
            }
        }
        if (heads == 0 || dim % heads != 0) {
            throw ConfigError("head count " + std::to_string(heads) +
                              " must divide width " + std::to_string(dim));
        }
    }

    static AttentionParams init(std::size_t d, std::size_t heads, Rng& rng, double sigma = 0.02) {
        AttentionParams p;
        p.wq = Tensor<T>::random_truncated_normal({d, d}, rng, sigma);
        p.wk = Tensor<T>::random_truncated_normal({d, d}, rng, sigma);
        p.wv = Tensor<T>::random_truncated_normal({d, d}, rng, sigma);
        p.wo = Tensor<T>::random_truncated_normal({d, d}, rng, sigma);
        p.bq = Tensor<T>({d});
        p.bk = Tensor<T>({d});
        p.bv = Tensor<T>({d});
        p.bo = Tensor<T>({d});
        p.heads = heads;
        return p;
    }
};

template <class T>
struct AttentionGrads {
    Tensor<T> wq, wk, wv, wo;
    Tensor<T> bq, bk, bv, bo;
    Tensor<T> x;  // t x d
};

namespace detail {

template <class T>
Tensor<T> col_sum(const Tensor<T>& a) {
    Tensor<T> out({a.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a.at(i, j);
    return out;
}

template <class T>
Tensor<T> head_slice(const Tensor<T>& m, std::size_t head, std::size_t dh) {
    return slice(m, 1, head * dh, (head + 1) * dh);
}

template <class T>
void write_head(Tensor<T>& dst, const Tensor<T>& src, std::size_t head, std::size_t dh,
                std::size_t row0 = 0) {
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < dh; ++j) dst.at(row0 + i, head * dh + j) = src.at(i, j);
}

template <class T>
void add_head(Tensor<T>& dst, const Tensor<T>& src, std::size_t head, std::size_t dh) {
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < dh; ++j) dst.at(i, head * dh + j) += src.at(i, j);
}

}  // namespace detail

// Masked multi-head self attention. Per head: softmax(Qh Kh^T / sqrt(dh) + M) Vh,
// heads concatenated, then output-projected. With mask == nullptr the softmax
// is unmasked (vanilla path). Masked positions contribute exactly zero weight.
template <class T>
Tensor<T> attn_full(const Tensor<T>& x, const AttentionParams<T>& params,
                    const AttentionMask* mask) {
    params.validate();
    const std::size_t d = params.d();
    if (x.ndim() != 2 || x.cols() != d) {
        throw ShapeError("attention input must be t x d, got " + x.shape_string());
    }
    const std::size_t t = x.rows();
    if (mask && mask->t() != t) {
        throw ShapeError("mask size " + std::to_string(mask->t()) +
                         " does not match sequence length " + std::to_string(t));
    }
    const std::size_t dh = params.head_dim();
    const T alpha = T(1) / std::sqrt(static_cast<T>(dh));

    const Tensor<T> q = add_row_vector(matmul(x, params.wq), params.bq);
    const Tensor<T> k = add_row_vector(matmul(x, params.wk), params.bk);
    const Tensor<T> v = add_row_vector(matmul(x, params.wv), params.bv);

    Tensor<T> concat_out({t, d});
    for (std::size_t h = 0; h < params.heads; ++h) {
        const Tensor<T> qh = detail::head_slice(q, h, dh);
        const Tensor<T> kh = detail::head_slice(k, h, dh);
        const Tensor<T> vh = detail::head_slice(v, h, dh);

        detail::note_score_scalars(t * t);
        Tensor<T> scores = scale(matmul(qh, transpose(kh)), alpha);
        const Tensor<T> probs =
            mask ? masked_softmax(scores, mask->additive<T>()) : softmax(scores);
        detail::write_head(concat_out, matmul(probs, vh), h, dh);
    }
    return add_row_vector(matmul(concat_out, params.wo), params.bo);
}

// Analytic gradients of attn_full w.r.t. the input and every parameter.
// Recomputes the forward internals rather than caching them.
template <class T>
AttentionGrads<T> attn_full_backward(const Tensor<T>& x, const AttentionParams<T>& params,
                                     const AttentionMask* mask, const Tensor<T>& upstream) {
    params.validate();
    const std::size_t d = params.d();
    const std::size_t t = x.rows();
    if (x.ndim() != 2 || x.cols() != d) {
        throw ShapeError("attention input must be t x d, got " + x.shape_string());
    }
    if (!upstream.same_shape(x)) {
        throw ShapeError("upstream gradient must match input shape " + x.shape_string());
    }
    if (mask && mask->t() != t) throw ShapeError("mask size does not match sequence length");
    const std::size_t dh = params.head_dim();
    const T alpha = T(1) / std::sqrt(static_cast<T>(dh));

    const Tensor<T> q = add_row_vector(matmul(x, params.wq), params.bq);
    const Tensor<T> k = add_row_vector(matmul(x, params.wk), params.bk);
    const Tensor<T> v = add_row_vector(matmul(x, params.wv), params.bv);

    Tensor<T> concat_out({t, d});
    std::vector<Tensor<T>> head_probs;
    head_probs.reserve(params.heads);
    for (std::size_t h = 0; h < params.heads; ++h) {
        const Tensor<T> qh = detail::head_slice(q, h, dh);
        const Tensor<T> kh = detail::head_slice(k, h, dh);
        const Tensor<T> vh = detail::head_slice(v, h, dh);
        Tensor<T> scores = scale(matmul(qh, transpose(kh)), alpha);
        Tensor<T> probs = mask ? masked_softmax(scores, mask->additive<T>()) : softmax(scores);
        detail::write_head(concat_out, matmul(probs, vh), h, dh);
        head_probs.push_back(std::move(probs));
    }

    AttentionGrads<T> g{Tensor<T>({d, d}), Tensor<T>({d, d}), Tensor<T>({d, d}),
                        Tensor<T>({d, d}), Tensor<T>({d}),    Tensor<T>({d}),
                        Tensor<T>({d}),    Tensor<T>({d}),    Tensor<T>({t, d})};

    g.wo = matmul(transpose(concat_out), upstream);
    g.bo = detail::col_sum(upstream);
    const Tensor<T> d_concat = matmul(upstream, transpose(params.wo));

    Tensor<T> dq({t, d}), dk({t, d}), dv({t, d});
    for (std::size_t h = 0; h < params.heads; ++h) {
        const Tensor<T> qh = detail::head_slice(q, h, dh);
        const Tensor<T> kh = detail::head_slice(k, h, dh);
        const Tensor<T> vh = detail::head_slice(v, h, dh);
        const Tensor<T>& probs = head_probs[h];
        const Tensor<T> d_oh = detail::head_slice(d_concat, h, dh);

        const Tensor<T> d_probs = matmul(d_oh, transpose(vh));
        const Tensor<T> d_vh = matmul(transpose(probs), d_oh);

        // Softmax backward per row: dS_ij = P_ij * (dP_ij - sum_l dP_il P_il),
        // then the score scaling folds in. Masked entries have P = 0, so their
        // score gradient vanishes without special handling.
        Tensor<T> d_scores({t, t});
        for (std::size_t i = 0; i < t; ++i) {
            T dot = T(0);
            for (std::size_t j = 0; j < t; ++j) dot += d_probs.at(i, j) * probs.at(i, j);
            for (std::size_t j = 0; j < t; ++j) {
                d_scores.at(i, j) = probs.at(i, j) * (d_probs.at(i, j) - dot) * alpha;
            }
        }

        detail::add_head(dq, matmul(d_scores, kh), h, dh);
        detail::add_head(dk, matmul(transpose(d_scores), qh), h, dh);
        detail::add_head(dv, d_vh, h, dh);
    }

    g.wq = matmul(transpose(x), dq);
    g.wk = matmul(transpose(x), dk);
    g.wv = matmul(transpose(x), dv);
    g.bq = detail::col_sum(dq);
    g.bk = detail::col_sum(dk);
    g.bv = detail::col_sum(dv);
    g.x = add(add(matmul(dq, transpose(params.wq)), matmul(dk, transpose(params.wk))),
              matmul(dv, transpose(params.wv)));
    return g;
}

// Block-local attention: per block full attention over that block only,
// results concatenated in block order. No global tokens, no cross-block score
// is ever materialized.
template <class T>
Tensor<T> attn_sparse_local(const std::vector<Tensor<T>>& x_blocks,
                            const AttentionParams<T>& params,
                            std::optional<T> scale_override = std::nullopt) {
    params.validate();
    if (x_blocks.empty()) throw ConfigError("attn_sparse_local requires at least one block");
    const std::size_t d = params.d();
    for (const auto& b : x_blocks) {
        if (b.ndim() != 2 || b.cols() != d) {
            throw ShapeError("block must be len x d, got " + b.shape_string());
        }
    }
    const std::size_t dh = params.head_dim();
    const T alpha = scale_override.value_or(T(1) / std::sqrt(static_cast<T>(dh)));

    std::vector<Tensor<T>> outs;
    outs.reserve(x_blocks.size());
    for (const auto& xb : x_blocks) {
        const std::size_t len = xb.rows();
        const Tensor<T> q = add_row_vector(matmul(xb, params.wq), params.bq);
        const Tensor<T> k = add_row_vector(matmul(xb, params.wk), params.bk);
        const Tensor<T> v = add_row_vector(matmul(xb, params.wv), params.bv);
        Tensor<T> concat_out({len, d});
        for (std::size_t h = 0; h < params.heads; ++h) {
            const Tensor<T> qh = detail::head_slice(q, h, dh);
            const Tensor<T> kh = detail::head_slice(k, h, dh);
            const Tensor<T> vh = detail::head_slice(v, h, dh);
            detail::note_score_scalars(len * len);
            Tensor<T> scores = scale(matmul(qh, transpose(kh)), alpha);
            detail::write_head(concat_out, matmul(softmax(scores), vh), h, dh);
        }
        outs.push_back(add_row_vector(matmul(concat_out, params.wo), params.bo));
    }
    return concat(std::size_t(0), outs);
}

// Sparse frequency-regularized attention for v = 1. Global tokens attend over
// the whole sequence; each patch block attends over the global tokens plus its
// own block, with values gathered from the same index set as the keys. Equals
// attn_full over build_mask(spec) within dtype tolerance, so full-attention
// weights transfer directly. threads > 1 runs (head, block) tasks in parallel;
// each task writes a disjoint output region, so results do not depend on the
// thread count.
template <class T>
Tensor<T> attn_sparse_frito(const Tensor<T>& x, const AttentionParams<T>& params,
                            const FreqMaskSpec& spec, unsigned threads = 1) {
    params.validate();
    spec.validate();
    if (spec.v != 1) {
        throw ConfigError("sparse execution requires v = 1 (got v = " + std::to_string(spec.v) +
                          "); use attn_full with the built mask instead");
    }
    const std::size_t d = params.d();
    const std::size_t t = spec.seq_len();
    if (x.ndim() != 2 || x.rows() != t || x.cols() != d) {
        throw ShapeError("input must be t x d = " + std::to_string(t) + "x" + std::to_string(d) +
                         ", got " + x.shape_string());
    }
    const std::size_t dh = params.head_dim();
    const std::size_t k = spec.k;
    const T alpha = T(1) / std::sqrt(static_cast<T>(dh));

    // Same blocks build_mask would produce.
    std::vector<MaskBlock> blocks;
    for (std::size_t c = 0; c < spec.cluster_count(); ++c) {
        const std::size_t lo = c * spec.r;
        const std::size_t hi = std::min(lo + spec.r, spec.h);
        blocks.push_back({k + lo * spec.w, (hi - lo) * spec.w});
    }

    const Tensor<T> q = add_row_vector(matmul(x, params.wq), params.bq);
    const Tensor<T> kk = add_row_vector(matmul(x, params.wk), params.bk);
    const Tensor<T> v = add_row_vector(matmul(x, params.wv), params.bv);

    Tensor<T> concat_out({t, d});

    // Task 0 per head handles the global rows; tasks 1..l the patch blocks.
    const std::size_t tasks_per_head = blocks.size() + 1;
    const std::size_t n_tasks = params.heads * tasks_per_head;

    auto run_task = [&](std::size_t task) {
        const std::size_t h = task / tasks_per_head;
        const std::size_t part = task % tasks_per_head;
        const Tensor<T> kh = detail::head_slice(kk, h, dh);
        const Tensor<T> vh = detail::head_slice(v, h, dh);
        if (part == 0) {
            if (k == 0) return;
            const Tensor<T> qg = slice(detail::head_slice(q, h, dh), 0, 0, k);
            detail::note_score_scalars(k * t);
            Tensor<T> scores = scale(matmul(qg, transpose(kh)), alpha);
            detail::write_head(concat_out, matmul(softmax(scores), vh), h, dh, 0);
        } else {
            const MaskBlock& blk = blocks[part - 1];
            const Tensor<T> qb =
                slice(detail::head_slice(q, h, dh), 0, blk.begin, blk.begin + blk.len);
            Tensor<T> k_cat, v_cat;
            if (k > 0) {
                k_cat = concat(std::size_t(0), slice(kh, 0, 0, k),
                               slice(kh, 0, blk.begin, blk.begin + blk.len));
                v_cat = concat(std::size_t(0), slice(vh, 0, 0, k),
                               slice(vh, 0, blk.begin, blk.begin + blk.len));
            } else {
                k_cat = slice(kh, 0, blk.begin, blk.begin + blk.len);
                v_cat = slice(vh, 0, blk.begin, blk.begin + blk.len);
            }
            detail::note_score_scalars(blk.len * (k + blk.len));
            Tensor<T> scores = scale(matmul(qb, transpose(k_cat)), alpha);
            detail::write_head(concat_out, matmul(softmax(scores), v_cat), h, dh, blk.begin);
        }
    };

    if (threads <= 1 || n_tasks <= 1) {
        for (std::size_t task = 0; task < n_tasks; ++task) run_task(task);
    } else {
        const unsigned n_workers = std::min<unsigned>(threads, static_cast<unsigned>(n_tasks));
        std::vector<std::thread> workers;
        workers.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t task = w; task < n_tasks; task += n_workers) run_task(task);
            });
        }
        for (auto& th : workers) th.join();
    }
    return add_row_vector(matmul(concat_out, params.wo), params.bo);
}

// Analytic score-buffer and MAC costs per head. Sparse fields only exist for
// v = 1. MAC counts cover the score and value products (QK^T and attn*V),
// which are the only places the execution schemes differ; d_model scales them
// to a model width (2 * scores * d_model total across heads).
struct ScoreBufferCost {
    std::size_t full_scores = 0;
    std::size_t macs_full = 0;
    std::optional<std::size_t> sparse_scores;
    std::optional<std::size_t> macs_sparse;
};

inline ScoreBufferCost score_buffer_cost(const FreqMaskSpec& spec, std::size_t d_model = 1) {
    spec.validate();
    const std::size_t t = spec.seq_len();
    ScoreBufferCost cost;
    cost.full_scores = t * t;
    cost.macs_full = 2 * cost.full_scores * d_model;
    if (spec.v == 1) {
        std::size_t sparse = spec.k * t;
        for (std::size_t c = 0; c < spec.cluster_count(); ++c) {
            const std::size_t lo = c * spec.r;
            const std::size_t hi = std::min(lo + spec.r, spec.h);
            const std::size_t len = (hi - lo) * spec.w;
            sparse += len * (spec.k + len);
        }
        cost.sparse_scores = sparse;
        cost.macs_sparse = 2 * sparse * d_model;
    }
    return cost;
}

}  // namespace frito
