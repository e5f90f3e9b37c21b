#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "frito/freq_mask.hpp"

using namespace frito;

namespace {

// Hand-encoded 11x11 reference pattern for the 5x2 grid with one global
// token, r = 1, v = 2: each patch row also sees its directly adjacent rows.
const std::vector<std::string> kGolden_r1_v2 = {
    "###########",  // global token
    "#####......",  // row 0 (tokens 1-2): rows 0-1
    "#####......",
    "#######....",  // row 1 (tokens 3-4): rows 0-2
    "#######....",
    "#..######..",  // row 2 (tokens 5-6): rows 1-3
    "#..######..",
    "#....######",  // row 3 (tokens 7-8): rows 2-4
    "#....######",
    "#......####",  // row 4 (tokens 9-10): rows 3-4
    "#......####",
};

// Same grid with r = 3, v = 1: rows 0-2 form one block, rows 3-4 the other.
const std::vector<std::string> kGolden_r3_v1 = {
    "###########",
    "#######....",  // tokens 1-6: first block plus the global
    "#######....",
    "#######....",
    "#######....",
    "#######....",
    "#######....",
    "#......####",  // tokens 7-10: second block plus the global
    "#......####",
    "#......####",
    "#......####",
};

std::vector<std::uint8_t> bytes_from_rows(const std::vector<std::string>& rows) {
    std::vector<std::uint8_t> out;
    for (const auto& r : rows)
        for (char c : r) out.push_back(c == '#' ? 1 : 0);
    return out;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("5x2 grid, r=1 v=2: bit-exact against the hand-encoded pattern") {
    const FreqMaskSpec spec{5, 2, 1, 1, 2};
    const auto mask = build_mask(spec);
    REQUIRE(mask.t() == 11);
    CHECK(mask.visibility() == bytes_from_rows(kGolden_r1_v2));
    CHECK(split_lines(mask.ascii()) == kGolden_r1_v2);
    CHECK(mask.zero_count() == 73);
}

TEST_CASE("5x2 grid, r=3 v=1: bit-exact against the hand-encoded pattern") {
    const FreqMaskSpec spec{5, 2, 1, 3, 1};
    const auto mask = build_mask(spec);
    REQUIRE(mask.t() == 11);
    CHECK(mask.visibility() == bytes_from_rows(kGolden_r3_v1));
    CHECK(split_lines(mask.ascii()) == kGolden_r3_v1);
    CHECK(mask.zero_count() == 73);
    // Two disjoint blocks: tokens 1-6 and 7-10.
    const auto& blocks = mask.blocks();
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0].begin == 1);
    CHECK(blocks[0].len == 6);
    CHECK(blocks[1].begin == 7);
    CHECK(blocks[1].len == 4);
}

TEST_CASE("6x2 grid with two globals, r=2 v=2: known visible-entry count") {
    const FreqMaskSpec spec{6, 2, 2, 2, 2};
    const auto mask = build_mask(spec);
    REQUIRE(mask.t() == 14);
    CHECK(mask.zero_count() == 164);
}

TEST_CASE("mask is symmetric with a visible diagonal and all-visible globals") {
    for (const FreqMaskSpec spec : {FreqMaskSpec{4, 3, 2, 2, 1}, FreqMaskSpec{7, 2, 0, 3, 2},
                                    FreqMaskSpec{5, 1, 1, 1, 3}}) {
        const auto mask = build_mask(spec);
        const std::size_t t = mask.t();
        for (std::size_t i = 0; i < t; ++i) {
            CHECK(mask.visible(i, i));
            for (std::size_t j = 0; j < i; ++j) CHECK(mask.visible(i, j) == mask.visible(j, i));
        }
        for (std::size_t g = 0; g < spec.k; ++g) {
            for (std::size_t j = 0; j < t; ++j) {
                CHECK(mask.visible(g, j));
                CHECK(mask.visible(j, g));
            }
        }
    }
}

TEST_CASE("r >= h collapses to a single all-visible block") {
    const FreqMaskSpec spec{4, 1, 0, 4, 1};
    const auto mask = build_mask(spec);
    CHECK(mask.zero_count() == 16);
    REQUIRE(mask.blocks().size() == 1);
    CHECK(mask.blocks()[0].begin == 0);
    CHECK(mask.blocks()[0].len == 4);
}

TEST_CASE("build_mask matches the window-enumeration oracle over a parameter grid") {
    std::size_t checked = 0;
    for (std::size_t h = 1; h <= 5; ++h) {
        for (std::size_t w = 1; w <= 4; ++w) {
            for (std::size_t k : {std::size_t(0), std::size_t(2)}) {
                for (std::size_t r = 1; r <= h; ++r) {
                    for (std::size_t v = 1; v <= 3; ++v) {
                        const FreqMaskSpec spec{h, w, k, r, v};
                        const auto a = build_mask(spec);
                        const auto b = oracle_mask(spec);
                        REQUIRE(a.t() == b.t());
                        CHECK(a.visibility() == b.visibility());
                        ++checked;
                    }
                }
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("v=1 blocks partition the patch region; other masks carry none") {
    for (std::size_t h = 1; h <= 6; ++h) {
        for (std::size_t r = 1; r <= h + 1; ++r) {
            const FreqMaskSpec spec{h, 3, 2, r, 1};
            const auto mask = build_mask(spec);
            const auto& blocks = mask.blocks();
            REQUIRE(blocks.size() == spec.cluster_count());
            std::size_t next = spec.k;
            for (const auto& blk : blocks) {
                CHECK(blk.begin == next);
                CHECK(blk.len > 0);
                CHECK(blk.len % spec.w == 0);
                next = blk.begin + blk.len;
            }
            CHECK(next == spec.seq_len());
            // Tokens in different blocks never see each other.
            if (blocks.size() >= 2) {
                CHECK(!mask.visible(blocks[0].begin, blocks[1].begin));
            }
        }
    }
    CHECK(build_mask(FreqMaskSpec{4, 2, 1, 2, 2}).blocks().empty());
    CHECK(oracle_mask(FreqMaskSpec{4, 2, 1, 2, 1}).blocks().empty());
}

TEST_CASE("additive renderings put -inf exactly on hidden entries") {
    const FreqMaskSpec spec{5, 2, 1, 3, 1};
    const auto mask = build_mask(spec);
    const auto& f32 = mask.additive<float>();
    const auto& f64 = mask.additive<double>();
    const auto exported = mask.export_tensor();
    const std::size_t t = mask.t();
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            if (mask.visible(i, j)) {
                CHECK(f32.at(i, j) == 0.0f);
                CHECK(f64.at(i, j) == 0.0);
                CHECK(exported.at(i, j) == 0.0f);
            } else {
                CHECK(std::isinf(f32.at(i, j)));
                CHECK(f32.at(i, j) < 0);
                CHECK(std::isinf(f64.at(i, j)));
                CHECK(f64.at(i, j) < 0);
                CHECK(exported.at(i, j) == -1e9f);
            }
        }
    }
}

TEST_CASE("spec validation and index range checks") {
    CHECK_THROWS_AS(build_mask(FreqMaskSpec{0, 2, 1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(build_mask(FreqMaskSpec{2, 0, 1, 1, 1}), ConfigError);
    CHECK_THROWS_AS(build_mask(FreqMaskSpec{2, 2, 1, 0, 1}), ConfigError);
    CHECK_THROWS_AS(build_mask(FreqMaskSpec{2, 2, 1, 1, 0}), ConfigError);
    const FreqMaskSpec spec{2, 2, 1, 1, 1};
    CHECK_THROWS_AS(visible(spec, 5, 0), ConfigError);
    CHECK_THROWS_AS(visible(spec, 0, 5), ConfigError);
}

TEST_CASE("mask constructor rejects asymmetry and hidden diagonals") {
    // 2x2 with a hidden diagonal entry.
    CHECK_THROWS_AS(AttentionMask(2, 0, {1, 1, 1, 0}, {}), MaskError);
    // Asymmetric off-diagonal pair.
    CHECK_THROWS_AS(AttentionMask(2, 0, {1, 1, 0, 1}, {}), MaskError);
    CHECK_THROWS_AS(AttentionMask(2, 0, {1, 1, 1}, {}), ShapeError);
}
