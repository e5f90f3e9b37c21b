#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "frito/attention.hpp"
#include "frito/freq_mask.hpp"
#include "frito/patch_grid.hpp"
#include "frito/tensor.hpp"
#include "frito/tensor_io.hpp"

namespace frito {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr int kCheckpointVersion = 1;

enum class AttnExec { masked, sparse };

struct EncoderConfig {
    PatchGrid grid;          // token layout; grid.d is the model width
    FreqMaskSpec mask_spec;  // attention restriction; must agree with grid on h, w, k
    std::size_t depth = 2;
    std::size_t heads = 2;
    std::size_t mlp_ratio = 4;
    std::size_t classes = 4;
    std::uint64_t seed = 1;

    std::size_t d() const { return grid.d; }
    std::size_t seq_len() const { return grid.seq_len(); }

    void validate() const {
        grid.validate();
        mask_spec.validate();
        if (mask_spec.h != grid.h || mask_spec.w != grid.w || mask_spec.k != grid.k) {
            throw ConfigError("mask h/w/k must match the patch grid");
        }
        if (heads == 0 || grid.d % heads != 0) {
            throw ConfigError("head count " + std::to_string(heads) + " must divide width " +
                              std::to_string(grid.d));
        }
        if (classes < 2) throw ConfigError("need at least 2 classes");
        if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
    }
};

template <class T>
struct BlockParams {
    Tensor<T> ln1_g, ln1_b;
    AttentionParams<T> attn;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> mlp_w1, mlp_b1;  // d x (mlp_ratio*d), (mlp_ratio*d)
    Tensor<T> mlp_w2, mlp_b2;  // (mlp_ratio*d) x d, d
};

template <class T>
struct ModelParams {
    EncoderConfig cfg;
    PatchProjection<T> patch;
    PositionalEncoding<T> pos;
    std::optional<Tensor<T>> globals;  // k x d, absent when k == 0
    std::vector<BlockParams<T>> blocks;
    Tensor<T> head_w;  // d x classes
    Tensor<T> head_b;  // classes

    // All tensors at their configured shapes, zero-filled.
    static ModelParams shaped(const EncoderConfig& cfg) {
        cfg.validate();
        const std::size_t d = cfg.d();
        const std::size_t hd = cfg.mlp_ratio * d;
        ModelParams p;
        p.cfg = cfg;
        p.patch.weight = Tensor<T>({cfg.grid.patch_dim(), d});
        p.patch.bias = Tensor<T>({d});
        p.pos.freq_table = Tensor<T>({cfg.grid.h, d});
        p.pos.time_table = Tensor<T>({cfg.grid.w, d});
        if (cfg.grid.k > 0) p.globals = Tensor<T>({cfg.grid.k, d});
        p.blocks.resize(cfg.depth);
        for (auto& b : p.blocks) {
            b.ln1_g = Tensor<T>({d});
            b.ln1_b = Tensor<T>({d});
            b.attn.wq = Tensor<T>({d, d});
            b.attn.wk = Tensor<T>({d, d});
            b.attn.wv = Tensor<T>({d, d});
            b.attn.wo = Tensor<T>({d, d});
            b.attn.bq = Tensor<T>({d});
            b.attn.bk = Tensor<T>({d});
            b.attn.bv = Tensor<T>({d});
            b.attn.bo = Tensor<T>({d});
            b.attn.heads = cfg.heads;
            b.ln2_g = Tensor<T>({d});
            b.ln2_b = Tensor<T>({d});
            b.mlp_w1 = Tensor<T>({d, hd});
            b.mlp_b1 = Tensor<T>({hd});
            b.mlp_w2 = Tensor<T>({hd, d});
            b.mlp_b2 = Tensor<T>({d});
        }
        p.head_w = Tensor<T>({d, cfg.classes});
        p.head_b = Tensor<T>({cfg.classes});
        return p;
    }

    static ModelParams init(const EncoderConfig& cfg);
    static ModelParams zeros_like(const ModelParams& other) { return shaped(other.cfg); }
};

// Visits every parameter tensor in one fixed order (the initialization-draw
// and checkpoint order). P is ModelParams<T> or const ModelParams<T>; f is
// called as f(name, tensor).
template <class P, class F>
void for_each_param(P& p, F&& f) {
    f("patch_proj_w", p.patch.weight);
    f("patch_proj_b", p.patch.bias);
    f("pos_freq", p.pos.freq_table);
    f("pos_time", p.pos.time_table);
    if (p.globals) f("globals", *p.globals);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string pre = "blocks." + std::to_string(i) + ".";
        f(pre + "ln1_g", b.ln1_g);
        f(pre + "ln1_b", b.ln1_b);
        f(pre + "wq", b.attn.wq);
        f(pre + "bq", b.attn.bq);
        f(pre + "wk", b.attn.wk);
        f(pre + "bk", b.attn.bk);
        f(pre + "wv", b.attn.wv);
        f(pre + "bv", b.attn.bv);
        f(pre + "wo", b.attn.wo);
        f(pre + "bo", b.attn.bo);
        f(pre + "ln2_g", b.ln2_g);
        f(pre + "ln2_b", b.ln2_b);
        f(pre + "mlp_w1", b.mlp_w1);
        f(pre + "mlp_b1", b.mlp_b1);
        f(pre + "mlp_w2", b.mlp_w2);
        f(pre + "mlp_b2", b.mlp_b2);
    }
    f("head_w", p.head_w);
    f("head_b", p.head_b);
}

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
};

template <class T>
std::vector<NamedParam<T>> collect_params(ModelParams<T>& p) {
    std::vector<NamedParam<T>> out;
    for_each_param(p, [&](const std::string& name, Tensor<T>& t) { out.push_back({name, &t}); });
    return out;
}

// Truncated-normal (sigma 0.02) for matrices, ones for layernorm gains, zeros
// for everything else. Draw order is the for_each_param order, so a seed fixes
// every weight bit-exactly.
template <class T>
ModelParams<T> ModelParams<T>::init(const EncoderConfig& cfg) {
    ModelParams p = shaped(cfg);
    Rng rng(cfg.seed);
    for_each_param(p, [&](const std::string& name, Tensor<T>& t) {
        if (t.ndim() == 2) {
            t = Tensor<T>::random_truncated_normal(t.shape(), rng, 0.02);
        } else if (name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0) {
            t = Tensor<T>::full(t.shape(), T(1));
        }
    });
    return p;
}

namespace detail {

template <class T>
Tensor<T> block_forward(const BlockParams<T>& b, const Tensor<T>& x, const EncoderConfig& cfg,
                        AttnExec exec, const AttentionMask* mask) {
    const T eps = static_cast<T>(kLayerNormEps);
    const Tensor<T> u1 = layernorm(x, b.ln1_g, b.ln1_b, eps);
    const Tensor<T> a = exec == AttnExec::sparse
                            ? attn_sparse_frito(u1, b.attn, cfg.mask_spec)
                            : attn_full(u1, b.attn, mask);
    const Tensor<T> xm = add(x, a);
    const Tensor<T> u2 = layernorm(xm, b.ln2_g, b.ln2_b, eps);
    const Tensor<T> hidden = gelu(add_row_vector(matmul(u2, b.mlp_w1), b.mlp_b1));
    return add(xm, add_row_vector(matmul(hidden, b.mlp_w2), b.mlp_b2));
}

}  // namespace detail

// Token states after embedding and all transformer blocks (t x d). For masked
// execution a prebuilt mask may be passed to skip rebuilding it per call; it
// must match cfg.mask_spec.
template <class T>
Tensor<T> encode(const ModelParams<T>& p, const Tensor<T>& gram, AttnExec exec,
                 const AttentionMask* mask = nullptr) {
    p.cfg.validate();
    if (exec == AttnExec::sparse && p.cfg.mask_spec.v != 1) {
        throw ConfigError("sparse execution requires v = 1, config has v = " +
                          std::to_string(p.cfg.mask_spec.v));
    }
    std::optional<AttentionMask> local_mask;
    if (exec == AttnExec::masked && !mask) {
        local_mask.emplace(build_mask(p.cfg.mask_spec));
        mask = &*local_mask;
    }
    Tensor<T> x = embed(p.cfg.grid, gram, p.patch, p.pos, p.globals ? &*p.globals : nullptr);
    for (const auto& b : p.blocks) x = detail::block_forward(b, x, p.cfg, exec, mask);
    return x;
}

// Class logits: mean of the k global token states through the linear head.
template <class T>
Tensor<T> forward(const ModelParams<T>& p, const Tensor<T>& gram, AttnExec exec,
                  const AttentionMask* mask = nullptr) {
    if (p.cfg.grid.k == 0) {
        throw ConfigError("classification head needs k >= 1 global tokens");
    }
    const Tensor<T> x = encode(p, gram, exec, mask);
    const std::size_t d = p.cfg.d();
    const std::size_t k = p.cfg.grid.k;
    Tensor<T> mean({std::size_t(1), d});
    for (std::size_t g = 0; g < k; ++g)
        for (std::size_t j = 0; j < d; ++j) mean.at(0, j) += x.at(g, j);
    for (std::size_t j = 0; j < d; ++j) mean.at(0, j) /= static_cast<T>(k);
    const Tensor<T> l = add_row_vector(matmul(mean, p.head_w), p.head_b);
    Tensor<T> out({p.cfg.classes});
    for (std::size_t j = 0; j < p.cfg.classes; ++j) out[j] = l.at(0, j);
    return out;
}

template <class T>
struct ForwardBackwardResult {
    T loss = T(0);
    Tensor<T> logits;
    ModelParams<T> grads;
};

// Softmax cross-entropy loss and gradients for every parameter, full-masked
// execution (the training path). Gradient layout mirrors ModelParams.
template <class T>
ForwardBackwardResult<T> forward_backward(const ModelParams<T>& p, const Tensor<T>& gram,
                                          std::size_t label, const AttentionMask* mask = nullptr) {
    p.cfg.validate();
    if (p.cfg.grid.k == 0) throw ConfigError("classification head needs k >= 1 global tokens");
    if (label >= p.cfg.classes) {
        throw ConfigError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(p.cfg.classes) + " classes");
    }
    std::optional<AttentionMask> local_mask;
    if (!mask) {
        local_mask.emplace(build_mask(p.cfg.mask_spec));
        mask = &*local_mask;
    }
    const T eps = static_cast<T>(kLayerNormEps);
    const std::size_t d = p.cfg.d();
    const std::size_t k = p.cfg.grid.k;
    const std::size_t classes = p.cfg.classes;
    const std::size_t depth = p.blocks.size();

    // Forward, caching what the backward pass reuses.
    Tensor<T> x = embed(p.cfg.grid, gram, p.patch, p.pos, p.globals ? &*p.globals : nullptr);
    std::vector<Tensor<T>> xs_in(depth), u1s(depth), xms(depth), u2s(depth), z1s(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        const auto& b = p.blocks[i];
        xs_in[i] = x;
        u1s[i] = layernorm(x, b.ln1_g, b.ln1_b, eps);
        const Tensor<T> a = attn_full(u1s[i], b.attn, mask);
        xms[i] = add(x, a);
        u2s[i] = layernorm(xms[i], b.ln2_g, b.ln2_b, eps);
        z1s[i] = add_row_vector(matmul(u2s[i], b.mlp_w1), b.mlp_b1);
        x = add(xms[i], add_row_vector(matmul(gelu(z1s[i]), b.mlp_w2), b.mlp_b2));
    }

    Tensor<T> mean({std::size_t(1), d});
    for (std::size_t g = 0; g < k; ++g)
        for (std::size_t j = 0; j < d; ++j) mean.at(0, j) += x.at(g, j);
    for (std::size_t j = 0; j < d; ++j) mean.at(0, j) /= static_cast<T>(k);
    const Tensor<T> lrow = add_row_vector(matmul(mean, p.head_w), p.head_b);

    ForwardBackwardResult<T> res{T(0), Tensor<T>({classes}), ModelParams<T>::zeros_like(p)};
    for (std::size_t j = 0; j < classes; ++j) res.logits[j] = lrow.at(0, j);

    // Cross entropy with the usual max shift.
    T lmax = res.logits[0];
    for (std::size_t j = 1; j < classes; ++j) lmax = std::max(lmax, res.logits[j]);
    T lse = T(0);
    for (std::size_t j = 0; j < classes; ++j) lse += std::exp(res.logits[j] - lmax);
    res.loss = std::log(lse) - (res.logits[label] - lmax);

    Tensor<T> dlogits({classes});
    for (std::size_t j = 0; j < classes; ++j) {
        dlogits[j] = std::exp(res.logits[j] - lmax) / lse - (j == label ? T(1) : T(0));
    }

    ModelParams<T>& g = res.grads;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < classes; ++j) g.head_w.at(i, j) = mean.at(0, i) * dlogits[j];
    g.head_b = dlogits;

    Tensor<T> dx({p.cfg.seq_len(), d});
    for (std::size_t gi = 0; gi < k; ++gi) {
        for (std::size_t j = 0; j < d; ++j) {
            T dm = T(0);
            for (std::size_t c = 0; c < classes; ++c) dm += p.head_w.at(j, c) * dlogits[c];
            dx.at(gi, j) = dm / static_cast<T>(k);
        }
    }

    for (std::size_t ii = depth; ii-- > 0;) {
        const auto& b = p.blocks[ii];
        auto& gb = g.blocks[ii];
        // MLP half: x_out = xm + gelu(u2 W1 + b1) W2 + b2.
        const Tensor<T> hidden = gelu(z1s[ii]);
        gb.mlp_w2 = matmul(transpose(hidden), dx);
        gb.mlp_b2 = detail::col_sum(dx);
        const Tensor<T> dhidden = matmul(dx, transpose(b.mlp_w2));
        Tensor<T> dz1 = dhidden;
        {
            const Tensor<T> gg = gelu_grad(z1s[ii]);
            for (std::size_t n = 0; n < dz1.size(); ++n) dz1[n] *= gg[n];
        }
        gb.mlp_w1 = matmul(transpose(u2s[ii]), dz1);
        gb.mlp_b1 = detail::col_sum(dz1);
        const Tensor<T> du2 = matmul(dz1, transpose(b.mlp_w1));
        Tensor<T> dxm = layernorm_backward(xms[ii], b.ln2_g, eps, du2, gb.ln2_g, gb.ln2_b);
        dxm = add(dxm, dx);  // residual
        // Attention half: xm = x_in + attn(ln1(x_in)).
        AttentionGrads<T> ag = attn_full_backward(u1s[ii], b.attn, mask, dxm);
        gb.attn.wq = std::move(ag.wq);
        gb.attn.wk = std::move(ag.wk);
        gb.attn.wv = std::move(ag.wv);
        gb.attn.wo = std::move(ag.wo);
        gb.attn.bq = std::move(ag.bq);
        gb.attn.bk = std::move(ag.bk);
        gb.attn.bv = std::move(ag.bv);
        gb.attn.bo = std::move(ag.bo);
        Tensor<T> dxin = layernorm_backward(xs_in[ii], b.ln1_g, eps, ag.x, gb.ln1_g, gb.ln1_b);
        dx = add(dxin, dxm);  // residual
    }

    EmbedGrads<T> eg = embed_backward(p.cfg.grid, gram, dx);
    g.patch.weight = std::move(eg.proj_weight);
    g.patch.bias = std::move(eg.proj_bias);
    g.pos.freq_table = std::move(eg.freq_table);
    g.pos.time_table = std::move(eg.time_table);
    if (g.globals) *g.globals = std::move(eg.globals);
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint container: a short text manifest (version, dtype, config, tensor
// directory) followed by the concatenated FRT1 payloads.

namespace detail {

inline std::string config_line(const EncoderConfig& c) {
    std::ostringstream os;
    os << "config h=" << c.grid.h << " w=" << c.grid.w << " patch_f=" << c.grid.patch_f
       << " patch_t=" << c.grid.patch_t << " k=" << c.grid.k << " r=" << c.mask_spec.r
       << " v=" << c.mask_spec.v << " d=" << c.grid.d << " depth=" << c.depth
       << " heads=" << c.heads << " mlp_ratio=" << c.mlp_ratio << " classes=" << c.classes
       << " seed=" << c.seed;
    return os.str();
}

inline EncoderConfig parse_config_line(const std::string& line, const std::string& path) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag != "config") throw CorruptError("missing config line in " + path);
    std::map<std::string, std::uint64_t> kv;
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw CorruptError("bad config token '" + tok + "' in " + path);
        try {
            kv[tok.substr(0, eq)] = std::stoull(tok.substr(eq + 1));
        } catch (const std::exception&) {
            throw CorruptError("bad config value '" + tok + "' in " + path);
        }
    }
    auto need = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw CorruptError(std::string("config key '") + key + "' missing in " + path);
        return it->second;
    };
    EncoderConfig c;
    c.grid.h = need("h");
    c.grid.w = need("w");
    c.grid.patch_f = need("patch_f");
    c.grid.patch_t = need("patch_t");
    c.grid.k = need("k");
    c.grid.d = need("d");
    c.mask_spec = {c.grid.h, c.grid.w, c.grid.k, static_cast<std::size_t>(need("r")),
                   static_cast<std::size_t>(need("v"))};
    c.depth = need("depth");
    c.heads = need("heads");
    c.mlp_ratio = need("mlp_ratio");
    c.classes = need("classes");
    c.seed = need("seed");
    return c;
}

template <class T>
constexpr const char* dtype_name() {
    return std::is_same_v<T, float> ? "f32" : "f64";
}

}  // namespace detail

template <class T>
void save_checkpoint(const ModelParams<T>& p, const std::string& path) {
    p.cfg.validate();
    std::vector<std::uint8_t> payload;
    std::ostringstream manifest;
    manifest << "FRITO-CKPT " << kCheckpointVersion << "\n";
    manifest << "dtype " << detail::dtype_name<T>() << "\n";
    manifest << detail::config_line(p.cfg) << "\n";
    for_each_param(p, [&](const std::string& name, const Tensor<T>& t) {
        const auto bytes = tensor_to_bytes(t);
        manifest << "tensor " << name << " " << payload.size() << " " << bytes.size() << "\n";
        payload.insert(payload.end(), bytes.begin(), bytes.end());
    });
    manifest << "payload " << payload.size() << "\n";
    const std::string head = manifest.str();
    std::vector<std::uint8_t> out(head.begin(), head.end());
    out.insert(out.end(), payload.begin(), payload.end());
    write_file_bytes(path, out);
}

template <class T>
ModelParams<T> load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    // The manifest is newline-terminated text; scan it line by line up to the
    // payload marker.
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        if (end == bytes.size()) throw TruncatedError("unterminated manifest line in " + path);
        std::string line(reinterpret_cast<const char*>(bytes.data() + pos), end - pos);
        pos = end + 1;
        return line;
    };

    {
        std::istringstream is(next_line());
        std::string magic;
        int version = -1;
        is >> magic >> version;
        if (magic != "FRITO-CKPT") throw BadMagicError("not a checkpoint file: " + path);
        if (version != kCheckpointVersion) {
            throw VersionError("checkpoint version " + std::to_string(version) +
                               " unsupported (expected " + std::to_string(kCheckpointVersion) +
                               ") in " + path);
        }
    }
    {
        std::istringstream is(next_line());
        std::string tag, dtype;
        is >> tag >> dtype;
        if (tag != "dtype") throw CorruptError("missing dtype line in " + path);
        if (dtype != detail::dtype_name<T>()) {
            throw BadDtypeError("checkpoint dtype " + dtype + " does not match requested " +
                                detail::dtype_name<T>() + " in " + path);
        }
    }
    const EncoderConfig cfg = detail::parse_config_line(next_line(), path);

    struct Entry {
        std::string name;
        std::size_t offset, len;
    };
    std::vector<Entry> entries;
    std::size_t payload_len = 0;
    for (;;) {
        std::istringstream is(next_line());
        std::string tag;
        is >> tag;
        if (tag == "tensor") {
            Entry e;
            is >> e.name >> e.offset >> e.len;
            if (!is) throw CorruptError("bad tensor line in " + path);
            entries.push_back(std::move(e));
        } else if (tag == "payload") {
            is >> payload_len;
            if (!is) throw CorruptError("bad payload line in " + path);
            break;
        } else {
            throw CorruptError("unexpected manifest line '" + tag + "' in " + path);
        }
    }
    const std::size_t avail = bytes.size() - pos;
    if (avail < payload_len) {
        throw TruncatedError("checkpoint payload short: expected " + std::to_string(payload_len) +
                             " bytes, have " + std::to_string(avail) + " in " + path);
    }
    if (avail > payload_len) throw CorruptError("trailing bytes after payload in " + path);

    ModelParams<T> p = ModelParams<T>::shaped(cfg);
    std::size_t idx = 0;
    for_each_param(p, [&](const std::string& name, Tensor<T>& t) {
        if (idx >= entries.size()) {
            throw CorruptError("checkpoint missing tensor '" + name + "' in " + path);
        }
        const Entry& e = entries[idx++];
        if (e.name != name) {
            throw CorruptError("checkpoint tensor order mismatch: expected '" + name + "', found '" +
                               e.name + "' in " + path);
        }
        if (e.offset > payload_len || e.len > payload_len - e.offset) {
            throw CorruptError("tensor '" + name + "' extends past payload in " + path);
        }
        Tensor<T> loaded = tensor_from_bytes<T>(bytes.data() + pos + e.offset, e.len,
                                                path + ":" + name);
        if (!loaded.same_shape(t)) {
            throw ShapeError("tensor '" + name + "' has shape " + loaded.shape_string() +
                             ", config requires " + t.shape_string() + " in " + path);
        }
        t = std::move(loaded);
    });
    if (idx != entries.size()) {
        throw CorruptError("checkpoint has " + std::to_string(entries.size() - idx) +
                           " unexpected extra tensor(s), first '" + entries[idx].name + "' in " +
                           path);
    }
    return p;
}

}  // namespace frito
