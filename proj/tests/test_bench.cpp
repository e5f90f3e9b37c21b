#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "json.hpp"

#include "frito/bench.hpp"

using namespace frito;

namespace {

BenchConfig small_config() {
    BenchConfig cfg;
    cfg.spec = {5, 2, 1, 3, 1};
    cfg.d = 16;
    cfg.heads = 2;
    cfg.repeats = 5;
    cfg.warmups = 2;
    cfg.threads = 1;
    cfg.seed = 9;
    return cfg;
}

const BenchVariant* find_variant(const BenchReport& r, const std::string& name) {
    for (const auto& v : r.variants)
        if (v.name == name) return &v;
    return nullptr;
}

}  // namespace

TEST_CASE("counter agrees with the analytic scalar count for every variant") {
    const auto report = run_bench(small_config());
    REQUIRE(report.t == 11);
    REQUIRE(report.variants.size() == 3);
    for (const auto& v : report.variants) {
        INFO("variant " << v.name);
        REQUIRE(!v.skipped);
        CHECK(v.score_scalars_counter == v.score_scalars_analytic);
        CHECK(v.score_scalars_analytic == v.score_scalars_per_head * report.cfg.heads);
        CHECK(v.macs == 2 * v.score_scalars_per_head * report.cfg.d);
        CHECK(v.median_ms > 0.0);
        CHECK(v.p10_ms <= v.median_ms);
        CHECK(v.median_ms <= v.p90_ms);
    }
    const auto* vanilla = find_variant(report, "vanilla");
    const auto* masked = find_variant(report, "masked_full");
    const auto* sparse = find_variant(report, "sparse");
    REQUIRE(vanilla != nullptr);
    REQUIRE(masked != nullptr);
    REQUIRE(sparse != nullptr);
    CHECK(vanilla->score_scalars_per_head == 121);
    CHECK(masked->score_scalars_per_head == 121);
    CHECK(sparse->score_scalars_per_head == 73);
}

TEST_CASE("deltas are measured against the vanilla medians") {
    const auto report = run_bench(small_config());
    const auto* vanilla = find_variant(report, "vanilla");
    const auto* sparse = find_variant(report, "sparse");
    REQUIRE(vanilla != nullptr);
    REQUIRE(sparse != nullptr);
    CHECK(vanilla->speed_delta == 0.0);
    CHECK(vanilla->memory_delta == 0.0);
    // Sparse materializes fewer scalars, so its memory delta is negative.
    CHECK(sparse->memory_delta == doctest::Approx(73.0 / 121.0 - 1.0).epsilon(1e-12));
    CHECK(sparse->memory_delta < 0.0);
    // Speed deltas are consistent with the recorded medians.
    const auto* masked = find_variant(report, "masked_full");
    REQUIRE(masked != nullptr);
    CHECK(masked->speed_delta ==
          doctest::Approx(vanilla->median_ms / masked->median_ms - 1.0).epsilon(1e-9));
}

TEST_CASE("threads > 1 adds a parallel sparse variant with identical costs") {
    auto cfg = small_config();
    cfg.threads = 3;
    const auto report = run_bench(cfg);
    const auto* sparse = find_variant(report, "sparse");
    const auto* par = find_variant(report, "sparse_parallel");
    REQUIRE(sparse != nullptr);
    REQUIRE(par != nullptr);
    CHECK(!par->skipped);
    CHECK(par->score_scalars_analytic == sparse->score_scalars_analytic);
    CHECK(par->score_scalars_counter == sparse->score_scalars_counter);
}

TEST_CASE("v != 1 reports the sparse variant as skipped") {
    auto cfg = small_config();
    cfg.spec = {5, 2, 1, 1, 2};
    const auto report = run_bench(cfg);
    const auto* sparse = find_variant(report, "sparse");
    REQUIRE(sparse != nullptr);
    CHECK(sparse->skipped);
    CHECK(sparse->skip_reason.find("v = 1") != std::string::npos);
    const auto* vanilla = find_variant(report, "vanilla");
    const auto* masked = find_variant(report, "masked_full");
    REQUIRE(vanilla != nullptr);
    REQUIRE(masked != nullptr);
    CHECK(!vanilla->skipped);
    CHECK(!masked->skipped);
}

TEST_CASE("text report carries the protocol and one row per variant") {
    auto cfg = small_config();
    cfg.spec = {5, 2, 1, 1, 2};  // makes sparse a skip row
    const auto report = run_bench(cfg);
    const std::string text = emit_report_text(report);
    CHECK(text.find("attention benchmark: t=11 d=16 heads=2") != std::string::npos);
    CHECK(text.find("5 repeats after 2 warmups") != std::string::npos);
    CHECK(text.find("vanilla") != std::string::npos);
    CHECK(text.find("masked_full") != std::string::npos);
    CHECK(text.find("skipped: ") != std::string::npos);
}

TEST_CASE("jsonl report parses back with the same numbers") {
    const auto report = run_bench(small_config());
    const std::string jsonl = emit_report_jsonl(report);

    std::vector<nlohmann::json> records;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        const auto nl = jsonl.find('\n', pos);
        REQUIRE(nl != std::string::npos);
        records.push_back(nlohmann::json::parse(jsonl.substr(pos, nl - pos)));
        pos = nl + 1;
    }
    REQUIRE(records.size() == 1 + report.variants.size());
    CHECK(records[0].at("record") == "config");
    CHECK(records[0].at("t") == 11);
    CHECK(records[0].at("d") == 16);
    CHECK(records[0].at("seed") == 9);
    for (std::size_t i = 0; i < report.variants.size(); ++i) {
        const auto& v = report.variants[i];
        const auto& rec = records[i + 1];
        CHECK(rec.at("record") == "variant");
        CHECK(rec.at("method") == v.name);
        CHECK(rec.at("skipped") == v.skipped);
        if (!v.skipped) {
            CHECK(rec.at("median_ms").get<double>() == v.median_ms);
            CHECK(rec.at("score_scalars_analytic").get<std::uint64_t>() ==
                  v.score_scalars_analytic);
            CHECK(rec.at("score_scalars_counter").get<std::uint64_t>() == v.score_scalars_counter);
            CHECK(rec.at("macs").get<std::uint64_t>() == v.macs);
        }
    }
}

TEST_CASE("bench configuration validation") {
    auto cfg = small_config();
    cfg.repeats = 4;
    CHECK_THROWS_AS(run_bench(cfg), ConfigError);
    cfg = small_config();
    cfg.warmups = 1;
    CHECK_THROWS_AS(run_bench(cfg), ConfigError);
    cfg = small_config();
    cfg.heads = 3;  // does not divide 16
    CHECK_THROWS_AS(run_bench(cfg), ConfigError);
    cfg = small_config();
    cfg.threads = 0;
    CHECK_THROWS_AS(run_bench(cfg), ConfigError);
}
