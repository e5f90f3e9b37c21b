#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "frito/attention.hpp"
#include "frito/rng.hpp"

using namespace frito;

namespace {

// Independent scalar-loop reference: no matmul helpers, explicit visible-entry
// softmax per row. Deliberately structured differently from the library path.
Tensor<double> ref_attention(const Tensor<double>& x, const AttentionParams<double>& p,
                             const AttentionMask* mask) {
    const std::size_t t = x.rows(), d = p.d(), nh = p.heads, dh = d / nh;
    const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));

    auto project = [&](const Tensor<double>& w, const Tensor<double>& b) {
        Tensor<double> out({t, d});
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double acc = b[j];
                for (std::size_t c = 0; c < d; ++c) acc += x.at(i, c) * w.at(c, j);
                out.at(i, j) = acc;
            }
        return out;
    };
    const auto q = project(p.wq, p.bq), k = project(p.wk, p.bk), v = project(p.wv, p.bv);

    Tensor<double> mixed({t, d});
    for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t i = 0; i < t; ++i) {
            std::vector<std::size_t> vis;
            std::vector<double> s;
            for (std::size_t j = 0; j < t; ++j) {
                if (mask && !mask->visible(i, j)) continue;
                double dot = 0;
                for (std::size_t c = 0; c < dh; ++c)
                    dot += q.at(i, h * dh + c) * k.at(j, h * dh + c);
                vis.push_back(j);
                s.push_back(dot * alpha);
            }
            double mx = s[0];
            for (double e : s) mx = std::max(mx, e);
            double z = 0;
            for (double& e : s) {
                e = std::exp(e - mx);
                z += e;
            }
            for (std::size_t n = 0; n < vis.size(); ++n) {
                const double w8 = s[n] / z;
                for (std::size_t c = 0; c < dh; ++c)
                    mixed.at(i, h * dh + c) += w8 * v.at(vis[n], h * dh + c);
            }
        }
    }

    Tensor<double> y({t, d});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = p.bo[j];
            for (std::size_t c = 0; c < d; ++c) acc += mixed.at(i, c) * p.wo.at(c, j);
            y.at(i, j) = acc;
        }
    return y;
}

}  // namespace

TEST_CASE("attn_full matches the scalar reference, masked and unmasked") {
    for (const FreqMaskSpec spec : {FreqMaskSpec{2, 2, 1, 1, 1}, FreqMaskSpec{3, 2, 0, 1, 2},
                                    FreqMaskSpec{4, 1, 2, 2, 1}}) {
        const auto mask = build_mask(spec);
        const std::size_t t = spec.seq_len();
        for (std::size_t heads : {std::size_t(1), std::size_t(2)}) {
            Rng rng(100 + t + heads);
            const std::size_t d = 6;
            const auto p = AttentionParams<double>::init(d, heads, rng, 0.5);
            const auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);

            CHECK(max_abs_diff(attn_full(x, p, &mask), ref_attention(x, p, &mask)) < 1e-10);
            CHECK(max_abs_diff(attn_full(x, p, nullptr), ref_attention(x, p, nullptr)) < 1e-10);
        }
    }
}

TEST_CASE("an all-visible mask reproduces the vanilla path exactly") {
    const FreqMaskSpec spec{3, 2, 1, 3, 1};  // single cluster: nothing hidden
    const auto mask = build_mask(spec);
    Rng rng(7);
    const auto p = AttentionParams<double>::init(6, 2, rng, 0.3);
    const auto x = Tensor<double>::random_normal({spec.seq_len(), 6}, rng, 1.0);
    CHECK(max_abs_diff(attn_full(x, p, &mask), attn_full(x, p, nullptr)) == 0.0);
}

TEST_CASE("gradients match central finite differences") {
    const FreqMaskSpec spec{2, 2, 1, 1, 2};
    const auto mask = build_mask(spec);
    const std::size_t t = spec.seq_len(), d = 6, heads = 2;
    Rng rng(42);
    auto p = AttentionParams<double>::init(d, heads, rng, 0.4);
    auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);
    const auto upstream = Tensor<double>::random_normal({t, d}, rng, 1.0);

    const auto g = attn_full_backward(x, p, &mask, upstream);

    auto loss = [&]() {
        const auto out = attn_full(x, p, &mask);
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
        return s;
    };
    const double h = 1e-5;
    auto check_grad = [&](Tensor<double>& param, const Tensor<double>& grad, const char* name) {
        INFO("parameter: " << name);
        REQUIRE(param.same_shape(grad));
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double keep = param[i];
            param[i] = keep + h;
            const double up = loss();
            param[i] = keep - h;
            const double dn = loss();
            param[i] = keep;
            const double fd = (up - dn) / (2 * h);
            const double rel = std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd));
            CHECK(rel < 1e-6);
        }
    };
    check_grad(p.wq, g.wq, "wq");
    check_grad(p.wk, g.wk, "wk");
    check_grad(p.wv, g.wv, "wv");
    check_grad(p.wo, g.wo, "wo");
    check_grad(p.bq, g.bq, "bq");
    check_grad(p.bk, g.bk, "bk");
    check_grad(p.bv, g.bv, "bv");
    check_grad(p.bo, g.bo, "bo");
    check_grad(x, g.x, "x");
}

TEST_CASE("unmasked gradients also match finite differences") {
    const std::size_t t = 4, d = 4, heads = 2;
    Rng rng(11);
    auto p = AttentionParams<double>::init(d, heads, rng, 0.4);
    auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);
    const auto upstream = Tensor<double>::random_normal({t, d}, rng, 1.0);
    const auto g = attn_full_backward(x, p, nullptr, upstream);

    const double h = 1e-5;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        auto loss = [&]() {
            const auto out = attn_full(x, p, nullptr);
            double s = 0;
            for (std::size_t n = 0; n < out.size(); ++n) s += out[n] * upstream[n];
            return s;
        };
        x[i] = keep + h;
        const double up = loss();
        x[i] = keep - h;
        const double dn = loss();
        x[i] = keep;
        const double fd = (up - dn) / (2 * h);
        CHECK(std::abs(g.x[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-6);
    }
}

TEST_CASE("sparse execution equals masked full attention") {
    const std::vector<FreqMaskSpec> specs = {
        {4, 3, 1, 1, 1}, {5, 2, 1, 3, 1}, {8, 4, 2, 2, 1}, {6, 5, 0, 2, 1}, {7, 3, 3, 4, 1}};
    for (const auto& spec : specs) {
        const auto mask = build_mask(spec);
        const std::size_t t = spec.seq_len(), d = 24;
        for (std::uint64_t seed : {1, 2, 3}) {
            INFO("spec h=" << spec.h << " r=" << spec.r << " k=" << spec.k << " seed=" << seed);
            Rng rng64(5000 + seed);
            const auto p64 = AttentionParams<double>::init(d, 4, rng64, 0.2);
            const auto x64 = Tensor<double>::random_normal({t, d}, rng64, 1.0);
            CHECK(max_abs_diff(attn_sparse_frito(x64, p64, spec),
                               attn_full(x64, p64, &mask)) < 1e-10);

            Rng rng32(6000 + seed);
            const auto p32 = AttentionParams<float>::init(d, 4, rng32, 0.2);
            const auto x32 = Tensor<float>::random_normal({t, d}, rng32, 1.0);
            CHECK(max_abs_diff(attn_sparse_frito(x32, p32, spec),
                               attn_full(x32, p32, &mask)) < 1e-5);
        }
    }
}

TEST_CASE("attn_sparse_local matches full attention block by block") {
    // 5x1 grid, no globals, r=3: blocks are rows 0-2 and 3-4.
    const FreqMaskSpec spec{5, 1, 0, 3, 1};
    const auto mask = build_mask(spec);
    Rng rng(21);
    const std::size_t d = 8;
    const auto p = AttentionParams<double>::init(d, 2, rng, 0.3);
    const auto x = Tensor<double>::random_normal({5, d}, rng, 1.0);

    const std::vector<Tensor<double>> blocks = {slice(x, 0, 0, 3), slice(x, 0, 3, 5)};
    CHECK(max_abs_diff(attn_sparse_local(blocks, p), attn_full(x, p, &mask)) < 1e-10);

    // A single block is plain vanilla attention.
    CHECK(max_abs_diff(attn_sparse_local(std::vector<Tensor<double>>{x}, p),
                       attn_full(x, p, nullptr)) < 1e-12);
    CHECK_THROWS_AS(attn_sparse_local(std::vector<Tensor<double>>{}, p), ConfigError);
}

TEST_CASE("score counter equals the analytic per-head cost times heads") {
    Rng rng(31);
    const std::size_t d = 12, heads = 3;
    const auto p = AttentionParams<double>::init(d, heads, rng, 0.2);

    const FreqMaskSpec spec{5, 1, 1, 2, 1};  // t = 6, blocks of len 2, 2, 1
    const auto mask = build_mask(spec);
    const std::size_t t = spec.seq_len();
    const auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);
    const auto cost = score_buffer_cost(spec);

    score_counter_reset();
    (void)attn_full(x, p, &mask);
    CHECK(score_counter_scalars() == cost.full_scores * heads);
    CHECK(cost.full_scores == t * t);

    score_counter_reset();
    (void)attn_sparse_frito(x, p, spec);
    REQUIRE(cost.sparse_scores.has_value());
    CHECK(score_counter_scalars() == *cost.sparse_scores * heads);
    // k*t + sum len*(k+len) = 6 + 2*3 + 2*3 + 1*2.
    CHECK(*cost.sparse_scores == 20);

    // The counter is cumulative until reset.
    (void)attn_sparse_frito(x, p, spec);
    CHECK(score_counter_scalars() == 2 * *cost.sparse_scores * heads);
}

TEST_CASE("score_buffer_cost reference values") {
    const auto small = score_buffer_cost(FreqMaskSpec{5, 2, 1, 3, 1});
    CHECK(small.full_scores == 121);
    REQUIRE(small.sparse_scores.has_value());
    CHECK(*small.sparse_scores == 73);  // 1*11 + 6*7 + 4*5

    const auto big = score_buffer_cost(FreqMaskSpec{12, 50, 1, 6, 1}, 256);
    CHECK(big.full_scores == 361201);
    REQUIRE(big.sparse_scores.has_value());
    CHECK(*big.sparse_scores == 181201);
    CHECK(big.macs_full == 2 * 361201 * 256);
    CHECK(big.macs_sparse == 2 * 181201 * 256);

    CHECK(!score_buffer_cost(FreqMaskSpec{4, 2, 1, 2, 2}).sparse_scores.has_value());
}

TEST_CASE("tokens outside the receptive field cannot influence the output") {
    // No globals, two blocks; perturbing block 2 must leave block 1 rows
    // untouched in both execution schemes.
    const FreqMaskSpec spec{4, 2, 0, 2, 1};
    const auto mask = build_mask(spec);
    Rng rng(55);
    const std::size_t d = 8, t = spec.seq_len();
    const auto p = AttentionParams<double>::init(d, 2, rng, 0.3);
    const auto x = Tensor<double>::random_normal({t, d}, rng, 1.0);
    auto x2 = x;
    for (std::size_t j = 0; j < d; ++j) x2.at(t - 1, j) += 3.0;

    const auto full_a = attn_full(x, p, &mask), full_b = attn_full(x2, p, &mask);
    const auto sp_a = attn_sparse_frito(x, p, spec), sp_b = attn_sparse_frito(x2, p, spec);
    const std::size_t first_len = mask.blocks()[0].len;
    for (std::size_t i = 0; i < first_len; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(full_a.at(i, j) == full_b.at(i, j));
            CHECK(sp_a.at(i, j) == sp_b.at(i, j));
        }
    }
    // The perturbed block itself does move.
    CHECK(max_abs_diff(full_a, full_b) > 0.0);
}

TEST_CASE("sparse output does not depend on the thread count") {
    const FreqMaskSpec spec{8, 4, 2, 2, 1};
    Rng rng(66);
    const std::size_t d = 16, t = spec.seq_len();
    const auto p = AttentionParams<float>::init(d, 4, rng, 0.2);
    const auto x = Tensor<float>::random_normal({t, d}, rng, 1.0);
    const auto base = attn_sparse_frito(x, p, spec, 1);
    CHECK(max_abs_diff(attn_sparse_frito(x, p, spec, 2), base) == 0.0f);
    CHECK(max_abs_diff(attn_sparse_frito(x, p, spec, 5), base) == 0.0f);
    CHECK(max_abs_diff(attn_sparse_frito(x, p, spec, 64), base) == 0.0f);
}

TEST_CASE("shape and configuration errors") {
    Rng rng(9);
    const auto p = AttentionParams<double>::init(4, 2, rng, 0.2);
    const FreqMaskSpec spec{2, 2, 1, 1, 1};
    const auto mask = build_mask(spec);

    // Input width must match d.
    CHECK_THROWS_AS(attn_full(Tensor<double>({5, 3}), p, &mask), ShapeError);
    // Mask size must match the sequence length.
    CHECK_THROWS_AS(attn_full(Tensor<double>({4, 4}), p, &mask), ShapeError);
    // v != 1 has no sparse path.
    const FreqMaskSpec v2{2, 2, 1, 1, 2};
    CHECK_THROWS_AS(attn_sparse_frito(Tensor<double>({5, 4}), p, v2), ConfigError);
    // Sparse input must be exactly t x d.
    CHECK_THROWS_AS(attn_sparse_frito(Tensor<double>({4, 4}), p, spec), ShapeError);
    // Head count must divide the width.
    auto bad = p;
    bad.heads = 3;
    CHECK_THROWS_AS(attn_full(Tensor<double>({5, 4}), bad, &mask), ConfigError);
    // Backward validates the upstream shape.
    CHECK_THROWS_AS(attn_full_backward(Tensor<double>({5, 4}), p, &mask, Tensor<double>({4, 4})),
                    ShapeError);
}
